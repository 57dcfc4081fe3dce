"""Density-matrix evolution under the GRW master equation.

Averaging a localization over its center ``c`` with weight ``p(c)`` gives

    rho(x, x') -> rho(x, x') * integral dc L(c)(x) L(c)(x')
               =  rho(x, x') * exp(-alpha (x - x')^2 / 4),

so a Poisson rate ``lam`` of such jumps makes coherences at separation ``d``
decay at ``Gamma(d) = lam * (1 - exp(-alpha d^2 / 4))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.constants import hbar

from .errors import AbsorbedAtBoundary, NonDecaying
from .grw import CollapseParams
from .propagator import ESCAPE_FRACTION, ESCAPE_PROBABILITY, Hamiltonian, _check_dt
from .qstate import Grid1D, WaveFunction


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Position-basis density matrix with ``trace(elements) == 1``.

    ``elements[j, k] = rho(x_j, x_k) * dx``, i.e. the matrix in the basis of
    unit-normalized grid samples.
    """

    grid: Grid1D
    elements: np.ndarray
    mass: float

    @classmethod
    def from_state(cls, state: WaveFunction) -> "DensityMatrix":
        if state.n_particles != 1:
            raise ValueError("density matrices are single-particle only")
        v = state.amplitudes * math.sqrt(state.grid.dx)
        return cls(state.grid, np.outer(v, v.conj()), state.masses[0])

    def trace(self) -> float:
        return float(np.trace(self.elements).real)

    def purity(self) -> float:
        return float(np.vdot(self.elements, self.elements).real)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.elements - self.elements.conj().T)))

    def element(self, x1: float, x2: float) -> complex:
        """``rho`` at the grid points nearest to ``x1`` and ``x2`` (matrix units)."""
        j, k = nearest_index(self.grid, x1), nearest_index(self.grid, x2)
        return complex(self.elements[j, k])


def nearest_index(grid: Grid1D, x: float) -> int:
    return int(round((x - grid.x_min) / grid.dx)) % grid.n_points


def decay_kernel(separation, params: CollapseParams):
    """Coherence decay rate (1/s) at position separation ``d`` (m)."""
    d = np.asarray(separation, dtype=float)
    if np.any(d < 0):
        raise ValueError("separation must be non-negative")
    out = -params.lam * np.expm1(-0.25 * params.alpha * d**2)
    return float(out) if out.ndim == 0 else out


def decay_kernel_curvature(params: CollapseParams) -> float:
    """``Gamma''(0) = lam * alpha / 2``."""
    return 0.5 * params.lam * params.alpha


def _separation_matrix(grid: Grid1D) -> np.ndarray:
    x = grid.x
    return np.abs(grid.periodic_offset(x[:, None], x[None, :]))


def trace_distance(a, b) -> float:
    """``||a - b||_1 / 2`` for Hermitian matrices or :class:`DensityMatrix` values."""
    ma = a.elements if isinstance(a, DensityMatrix) else np.asarray(a)
    mb = b.elements if isinstance(b, DensityMatrix) else np.asarray(b)
    diff = ma - mb
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def evolve_density_matrix(rho0: DensityMatrix, h: Hamiltonian, params: CollapseParams,
                          t_final: float, dt: float, sample_times=None,
                          extra_decay_rate: float = 0.0):
    """Integrate the master equation.

    Each step is ``D(dt/2) U(dt) D(dt/2)`` where ``U`` is the split-step
    propagator applied to both indices and ``D`` multiplies ``rho(x, x')`` by
    ``exp(-Gamma(|x - x'|) dt/2)``. ``extra_decay_rate`` adds a constant decay
    of every off-diagonal element (a crude stand-in for environmental
    decoherence).

    Returns the final matrix, or a list of matrices at ``sample_times`` when
    those are given.
    """
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    _check_dt(h, dt)
    grid = rho0.grid
    mass = rho0.mass if h.mass is None else float(h.mass)
    sep = _separation_matrix(grid)
    gamma = decay_kernel(sep, params)
    if extra_decay_rate:
        gamma = gamma + extra_decay_rate * (sep > 0)
    k = grid.k
    edge = grid.edge_mask(ESCAPE_FRACTION)

    cache = {}

    def factors(tau):
        if tau not in cache:
            kin = np.exp(-0.5j * hbar * k**2 * tau / mass)
            v = h.single_particle_potential(grid, mass)
            pot = None if v is None else np.exp(-0.5j * v * tau / hbar)
            cache[tau] = (np.exp(-0.5 * gamma * tau), kin, pot)
        return cache[tau]

    def advance(rho, tau):
        decay, kin, pot = factors(tau)
        rho = rho * decay
        if pot is not None:
            rho = pot[:, None] * rho * pot.conj()[None, :]
        rho = np.fft.ifft(np.fft.fft(rho, axis=0) * kin[:, None], axis=0)
        rho = np.fft.fft(np.fft.ifft(rho, axis=1) * kin.conj()[None, :], axis=1)
        if pot is not None:
            rho = pot[:, None] * rho * pot.conj()[None, :]
        rho = rho * decay
        leaked = float(np.diagonal(rho).real[edge].sum())
        if leaked > ESCAPE_PROBABILITY:
            raise AbsorbedAtBoundary(f"probability {leaked:.3g} reached the grid edge")
        return rho

    def run(rho, duration):
        if duration <= 0:
            return rho
        n_full = int(math.floor(duration / dt))
        rem = duration - n_full * dt
        for _ in range(n_full):
            rho = advance(rho, dt)
        if rem > 1e-12 * dt:
            rho = advance(rho, rem)
        return rho

    rho = rho0.elements.astype(complex)
    if sample_times is None:
        rho = run(rho, t_final)
        return DensityMatrix(grid, rho, rho0.mass)
    out = []
    t = 0.0
    for ts in sorted(float(s) for s in sample_times):
        if ts < t or ts > t_final:
            raise ValueError("sample times must lie in [0, t_final]")
        rho = run(rho, ts - t)
        t = ts
        out.append(DensityMatrix(grid, rho.copy(), rho0.mass))
    return out


class DecayFit(NamedTuple):
    rate: float
    amplitude: float
    residual: float


def fit_decay_rate(times, values) -> DecayFit:
    """Least-squares fit of ``|values| ~ A exp(-rate t)`` on the log scale.

    ``residual`` is the RMS deviation of ``log|values|`` from the fitted line.
    """
    t = np.asarray(times, dtype=float)
    y = np.abs(np.asarray(values))
    if t.size < 5:
        raise ValueError("need at least 5 sample times")
    if np.any(y <= 0):
        raise NonDecaying("coherence vanished at a sample time; cannot take its log")
    design = np.column_stack([np.ones_like(t), -t])
    coef, *_ = np.linalg.lstsq(design, np.log(y), rcond=None)
    resid = np.log(y) - design @ coef
    rate = float(coef[1])
    if rate <= 0:
        raise NonDecaying(f"fitted rate {rate:.3g} is not positive")
    return DecayFit(rate, float(np.exp(coef[0])), float(np.sqrt(np.mean(resid**2))))


def offdiag_decay_fit(times, rhos, x1: float, x2: float) -> DecayFit:
    """Fit the decay rate of ``|rho(x1, x2)|`` along a sampled evolution."""
    if len(rhos) != len(times):
        raise ValueError("times and density matrices differ in length")
    return fit_decay_rate(times, [r.element(x1, x2) for r in rhos])


def branch_coherence(state: WaveFunction, x1: float, x2: float) -> complex:
    """Coherence between configurations "all at x1" and "all at x2".

    For one particle this is ``rho(x1, x2)`` in matrix units; for two it is the
    joint-matrix element between ``(x1, x1)`` and ``(x2, x2)``, i.e. the
    center-of-mass coherence of a rigid pair.
    """
    g = state.grid
    j, k = nearest_index(g, x1), nearest_index(g, x2)
    psi = state.amplitudes
    idx_j = (j,) * state.n_particles
    idx_k = (k,) * state.n_particles
    return complex(psi[idx_j] * np.conj(psi[idx_k]) * state.volume_element)


class EnsembleAccumulator:
    """Running average of ``|psi><psi|`` over single-particle pure states."""

    def __init__(self, grid: Grid1D, mass: float):
        self.grid = grid
        self.mass = mass
        self.total = np.zeros((grid.n_points, grid.n_points), dtype=complex)
        self.count = 0

    def add(self, states) -> None:
        """Add a state, or a stack of amplitude rows of shape ``(B, n)``."""
        if isinstance(states, WaveFunction):
            states = states.amplitudes[None, :]
        v = np.asarray(states) * math.sqrt(self.grid.dx)
        self.total += v.T @ v.conj()
        self.count += v.shape[0]

    def merge(self, other: "EnsembleAccumulator") -> None:
        self.total += other.total
        self.count += other.count

    def density_matrix(self) -> DensityMatrix:
        if not self.count:
            raise ValueError("no states accumulated")
        return DensityMatrix(self.grid, self.total / self.count, self.mass)


def ensemble_density_matrix(states) -> DensityMatrix:
    states = list(states)
    acc = EnsembleAccumulator(states[0].grid, states[0].masses[0])
    acc.add(np.stack([s.amplitudes for s in states]))
    return acc.density_matrix()

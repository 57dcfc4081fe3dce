"""Split-step spectral Schrodinger propagation.

Each step applies ``exp(-iV dt/2hbar) F^-1 exp(-i hbar k^2 dt/2m) F exp(-iV dt/2hbar)``
(Strang ordering). For a free particle the kinetic factor is exact, so any
``dt`` is accurate; ``dt`` then only sets how often the boundary guard runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar

from .errors import AbsorbedAtBoundary, NonPositiveStep, StepTooLarge
from .qstate import Grid1D, WaveFunction

ESCAPE_FRACTION = 0.05
ESCAPE_PROBABILITY = 1e-6


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """``H = sum_i p_i^2/2m_i + V(x_i)``.

    ``kind`` is ``"free"``, ``"harmonic"`` (``V = m w^2 (x - center)^2 / 2``) or
    ``"external"`` (``potential`` sampled on the grid, J). ``mass=None`` means
    "use the masses carried by the state".
    """

    kind: str = "free"
    mass: float | None = None
    omega: float = 0.0
    center: float = 0.0
    potential: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("free", "harmonic", "external"):
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.kind == "harmonic" and not self.omega > 0:
            raise ValueError("harmonic Hamiltonian needs omega > 0")
        if self.kind == "external":
            if self.potential is None:
                raise ValueError("external Hamiltonian needs a potential array")
            pot = np.asarray(self.potential, dtype=float)
            if pot.ndim != 1 or not np.all(np.isfinite(pot)):
                raise ValueError("potential must be a finite 1D array")
            object.__setattr__(self, "potential", pot)

    @classmethod
    def free(cls, mass=None):
        return cls("free", mass)

    @classmethod
    def harmonic(cls, omega, mass=None, center=0.0):
        return cls("harmonic", mass, omega=omega, center=center)

    @classmethod
    def external(cls, potential, mass=None):
        return cls("external", mass, potential=potential)

    def masses_for(self, state: WaveFunction) -> tuple:
        if self.mass is None:
            return state.masses
        return (float(self.mass),) * state.n_particles

    def single_particle_potential(self, grid: Grid1D, mass: float) -> np.ndarray | None:
        if self.kind == "free":
            return None
        if self.kind == "harmonic":
            return 0.5 * mass * self.omega**2 * (grid.x - self.center) ** 2
        if self.potential.shape != (grid.n_points,):
            raise ValueError("potential length does not match the grid")
        return self.potential

    def potential_energy(self, state: WaveFunction) -> float:
        if self.kind == "free":
            return 0.0
        grid = state.grid
        masses = self.masses_for(state)
        total = 0.0
        for i, m in enumerate(masses):
            v = self.single_particle_potential(grid, m)
            total += float(np.sum(v * state.marginal(i)) * grid.dx)
        return total / state.norm()


def energy(state: WaveFunction, h: Hamiltonian) -> float:
    """Total energy expectation (kinetic spectrally, potential by quadrature)."""
    from .qstate import observables

    masses = h.masses_for(state)
    probe = WaveFunction(state.grid, state.amplitudes, masses)
    if state.n_particles == 1:
        kinetic = observables(probe).kinetic_energy
    else:
        kinetic = observables(probe, 0).kinetic_energy + observables(probe, 1).kinetic_energy
    return kinetic + h.potential_energy(state)


class _StepFactors:
    """Phase factors for one (grid, masses, dt); reused across steps."""

    def __init__(self, grid: Grid1D, h: Hamiltonian, masses: tuple, dt: float):
        k = grid.k
        n = len(masses)
        self.kinetic = []
        self.half_potential = []
        for m in masses:
            self.kinetic.append(np.exp(-0.5j * hbar * k**2 * dt / m))
            v = h.single_particle_potential(grid, m)
            self.half_potential.append(None if v is None else np.exp(-0.5j * v * dt / hbar))
        self.n = n
        # joint factors over all coordinates, built once
        self.kin = np.ones((grid.n_points,) * n, dtype=complex)
        for i, f in enumerate(self.kinetic):
            self.kin = self.kin * self._broadcast(f, i)
        self.pot = None
        if any(v is not None for v in self.half_potential):
            self.pot = np.ones((grid.n_points,) * n, dtype=complex)
            for i, v in enumerate(self.half_potential):
                if v is not None:
                    self.pot = self.pot * self._broadcast(v, i)

    def _broadcast(self, factor, axis):
        if self.n == 1:
            return factor
        return factor[:, None] if axis == 0 else factor[None, :]

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Propagate amplitudes whose trailing ``n`` axes are particle coordinates."""
        axes = tuple(range(-self.n, 0))
        if self.pot is not None:
            psi = psi * self.pot
        psi = np.fft.ifftn(np.fft.fftn(psi, axes=axes) * self.kin, axes=axes)
        if self.pot is not None:
            psi *= self.pot
        return psi


def _check_dt(h: Hamiltonian, dt: float) -> None:
    if not dt > 0:
        raise NonPositiveStep(f"time step must be positive, got {dt!r}")
    if h.kind == "harmonic":
        period = 2 * np.pi / h.omega
        if dt > period / 20:
            raise StepTooLarge(
                f"dt={dt:g} s exceeds 1/20 of the oscillator period ({period:g} s)"
            )


def step(state: WaveFunction, h: Hamiltonian, dt: float) -> WaveFunction:
    """One Strang split-step of length ``dt``."""
    _check_dt(h, dt)
    factors = _StepFactors(state.grid, h, h.masses_for(state), dt)
    return state.with_amplitudes(factors.apply(state.amplitudes))


def edge_probability(state: WaveFunction) -> float:
    """Largest per-particle probability inside the outer 5% of the grid."""
    mask = state.grid.edge_mask(ESCAPE_FRACTION)
    dx = state.grid.dx
    return max(float(state.marginal(i)[mask].sum() * dx) for i in range(state.n_particles))


def check_boundary(state: WaveFunction, time: float | None = None) -> None:
    leaked = edge_probability(state)
    if leaked > ESCAPE_PROBABILITY:
        when = "" if time is None else f" at t={time:g} s"
        raise AbsorbedAtBoundary(
            f"probability {leaked:.3g} reached the outer {ESCAPE_FRACTION:.0%} of the grid{when}"
        )


def evolve(state: WaveFunction, h: Hamiltonian, t_total: float, dt: float,
           check_edges: bool = True) -> WaveFunction:
    """Evolve for ``t_total``: ``floor(t_total/dt)`` full steps plus a fractional one.

    Raises :class:`AbsorbedAtBoundary` as soon as more than 1e-6 probability
    sits in the outer 5% of the grid.
    """
    if t_total < 0:
        raise ValueError("t_total must be non-negative")
    _check_dt(h, dt)
    if t_total == 0:
        return state
    n_full = int(math.floor(t_total / dt))
    remainder = t_total - n_full * dt
    # absorb floating-point crumbs instead of taking a vanishing extra step
    if remainder <= 1e-12 * dt:
        remainder = 0.0
    masses = h.masses_for(state)
    psi = state.amplitudes
    if n_full:
        factors = _StepFactors(state.grid, h, masses, dt)
        for i in range(n_full):
            psi = factors.apply(psi)
            if check_edges:
                check_boundary(state.with_amplitudes(psi), (i + 1) * dt)
    if remainder > 0:
        psi = _StepFactors(state.grid, h, masses, remainder).apply(psi)
        if check_edges:
            check_boundary(state.with_amplitudes(psi), t_total)
    return state.with_amplitudes(psi)

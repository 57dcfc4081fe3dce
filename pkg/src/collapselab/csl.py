"""Continuous spontaneous localization as a norm-preserving Ito SDE.

The collapse operators are smeared mass densities, one per grid center ``c``::

    A_c = sum_i s_i * g(q_i - c),   g(u) = (alpha/pi)**(1/4) exp(-alpha u^2 / 2),
    s_i = sqrt(gamma_i * dx),       gamma_i = gamma * (m_i / m_ref)**2  (mass coupling)

and a step is

    dpsi = [-iH dt/hbar + sum_c (A_c - <A_c>) dW_c - 1/2 sum_c (A_c - <A_c>)^2 dt] psi

(Euler-Maruyama, then renormalized). Averaged over the noise this is the
Lindblad equation whose single-particle coherence kernel is
``gamma_i * (1 - exp(-alpha d^2 / 4))``, the GRW kernel with ``lam = gamma_i``.

All stepping code works on amplitude arrays with a leading batch axis so that
ensembles run as one vectorized computation. Each batch row draws its noise
from its own generator, so row ``i`` of an ensemble is bit-identical to a
single run seeded with :func:`collapselab.ensemble.trajectory_seed` ``(seed, i)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import m_u

from .ensemble import trajectory_seed
from .errors import AbsorbedAtBoundary, StepTooLarge
from .grw import CollapseParams, TrajectoryRecord
from .propagator import ESCAPE_FRACTION, ESCAPE_PROBABILITY, Hamiltonian, _check_dt, _StepFactors
from .qstate import Grid1D, WaveFunction

NORM_CORRECTION_LIMIT = 1e-3  # bound on the RMS per-step norm correction
REALIZED_CORRECTION_LIMIT = 0.1  # any single step; beyond this EM has broken down
NOISE_BUDGET = 4_000_000  # standard normals held per noise chunk


@dataclass(frozen=True)
class CslParams:
    """Collapse strength ``gamma`` (1/s), width ``r_c`` (m) and coupling.

    ``coupling="mass_proportional"`` scales a particle's rate by
    ``(m / reference_mass)**2``; ``"number"`` uses ``gamma`` for every particle.
    """

    gamma: float
    r_c: float
    reference_mass: float = m_u
    coupling: str = "mass_proportional"

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma!r}")
        if not self.r_c > 0:
            raise ValueError(f"r_c must be positive, got {self.r_c!r}")
        if self.coupling not in ("mass_proportional", "number"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if not self.reference_mass > 0:
            raise ValueError("reference_mass must be positive")

    @property
    def alpha(self) -> float:
        return 1.0 / self.r_c**2

    def rate_for(self, mass: float) -> float:
        if self.coupling == "number":
            return self.gamma
        return self.gamma * (mass / self.reference_mass) ** 2


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Wiener increments, shape ``(n_steps, n_centers)``, variance ``dt`` each."""

    dt: float
    increments: np.ndarray

    @classmethod
    def sample(cls, rng: np.random.Generator, n_steps: int, n_centers: int, dt: float):
        return cls(dt, math.sqrt(dt) * rng.standard_normal((n_steps, n_centers)))

    def coarsened(self) -> "NoisePath":
        """Same Brownian path at twice the step (pairwise sums)."""
        inc = self.increments
        if inc.shape[0] % 2:
            raise ValueError("need an even number of steps to coarsen")
        return NoisePath(2 * self.dt, inc[0::2] + inc[1::2])


def match_parameters(grw: CollapseParams, particle_mass: float | None = None) -> CslParams:
    """CSL parameters whose single-particle coherence kernel equals GRW's.

    Without ``particle_mass`` the result uses number coupling with
    ``gamma = lam``. With it, the result uses mass-proportional coupling
    (nucleon-mass reference) and ``gamma`` is rescaled so that a particle of
    that mass decoheres exactly like one GRW constituent.
    """
    if particle_mass is None:
        return CslParams(grw.lam, grw.r_c, coupling="number")
    scale = (m_u / particle_mass) ** 2
    return CslParams(grw.lam * scale, grw.r_c, coupling="mass_proportional")


def decay_kernel(separation, params: CslParams, mass: float):
    """Single-particle coherence decay rate implied by the CSL operators."""
    d = np.asarray(separation, dtype=float)
    out = -params.rate_for(mass) * np.expm1(-0.25 * params.alpha * d**2)
    return float(out) if out.ndim == 0 else out


class CslStepper:
    """Precomputed operators for one grid, Hamiltonian, masses and step length."""

    def __init__(self, grid: Grid1D, h: Hamiltonian, params: CslParams, masses: tuple,
                 dt: float):
        _check_dt(h, dt)
        self.grid = grid
        self.dt = dt
        self.n_particles = len(masses)
        self.unitary = _StepFactors(grid, h, masses, dt)
        self._edge = grid.edge_mask(ESCAPE_FRACTION)
        n = grid.n_points
        dx = grid.dx
        offsets = grid.periodic_offset(dx * np.arange(n), 0.0)
        g = (params.alpha / math.pi) ** 0.25 * np.exp(-0.5 * params.alpha * offsets**2)
        self._g_hat = np.fft.rfft(g)
        autocorr = np.fft.irfft(self._g_hat**2, n=n)  # sum_c g(j - c) g(c)
        self.couplings = np.array([math.sqrt(params.rate_for(m) * dx) for m in masses])
        self.active = bool(np.any(self.couplings > 0))
        s = self.couplings
        # sum_c A_c(x)^2, independent of the state
        if self.n_particles == 1:
            self._a_squared = s[0] ** 2 * autocorr[0]
        else:
            j = np.arange(n)
            cross = autocorr[(j[:, None] - j[None, :]) % n]
            self._a_squared = (s[0] ** 2 + s[1] ** 2) * autocorr[0] + 2 * s[0] * s[1] * cross
        # sum_c Var(A_c) <= max_x sum_c A_c(x)^2, and the norm correction of one
        # step has RMS sqrt(2) * dt * sum_c Var(A_c) at most (Gaussian fourth moments)
        predicted = math.sqrt(2) * float(np.max(self._a_squared)) * dt
        if predicted > NORM_CORRECTION_LIMIT:
            raise StepTooLarge(
                f"dt={dt:g} s gives a per-step norm correction up to {predicted:.3g} "
                f"(limit {NORM_CORRECTION_LIMIT:g}); reduce dt"
            )

    def _convolve(self, v: np.ndarray) -> np.ndarray:
        """``(g * v)(x_j) = sum_c g(x_j - c) v_c`` along the last axis."""
        return np.fft.irfft(np.fft.rfft(v, axis=-1) * self._g_hat, n=self.grid.n_points, axis=-1)

    def _along(self, v: np.ndarray, particle: int) -> np.ndarray:
        """Broadcast per-coordinate values ``(B, n)`` onto ``(B, n[, n])``."""
        if self.n_particles == 1:
            return v
        return v[:, :, None] if particle == 0 else v[:, None, :]

    def step(self, psi: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Advance a batch; ``z`` holds standard normals of shape ``(B, n)``."""
        psi = self.unitary.apply(psi)
        dx = self.grid.dx
        dt = self.dt
        dens = psi.real**2 + psi.imag**2
        if self.n_particles == 1:
            marginals = [dens]
        else:
            marginals = [dens.sum(axis=2) * dx, dens.sum(axis=1) * dx]
        leaked = max(float(np.max(m[:, self._edge].sum(axis=-1))) for m in marginals) * dx
        if leaked > ESCAPE_PROBABILITY:
            raise AbsorbedAtBoundary(
                f"probability {leaked:.3g} reached the outer {ESCAPE_FRACTION:.0%} of the grid"
            )
        if not self.active:
            return psi
        s = self.couplings
        mean_a = sum(s[i] * self._convolve(marginals[i]) for i in range(self.n_particles)) * dx
        dw = math.sqrt(dt) * z
        # sum_c g(x - c) (dW_c + <A_c> dt), one convolution by linearity
        kick = self._convolve(dw + dt * mean_a)
        update = -0.5 * dt * self._a_squared
        update = update - 0.5 * dt * np.sum(mean_a**2, axis=-1).reshape((-1,) + (1,) * self.n_particles)
        update = update - np.sum(mean_a * dw, axis=-1).reshape((-1,) + (1,) * self.n_particles)
        for i in range(self.n_particles):
            if s[i]:
                update = update + self._along(s[i] * kick, i)
        update += 1.0
        psi *= update
        axes = tuple(range(1, psi.ndim))
        norm2 = np.sum(psi.real**2 + psi.imag**2, axis=axes) * dx**self.n_particles
        worst = float(np.max(np.abs(norm2 - 1.0)))
        if worst > REALIZED_CORRECTION_LIMIT:
            raise StepTooLarge(f"norm correction {worst:.3g} in a single step; reduce dt")
        return psi / np.sqrt(norm2).reshape((-1,) + (1,) * self.n_particles)


def _segments(stops, dt):
    """Step lengths between consecutive stop times (full steps then remainder)."""
    out = []
    t = 0.0
    for stop in stops:
        seg = []
        span = stop - t
        if span > 0:
            n_full = int(math.floor(span / dt))
            seg = [dt] * n_full
            rem = span - n_full * dt
            if rem > 1e-12 * dt:
                seg.append(rem)
        out.append(seg)
        t = max(t, stop)
    return out


class _NoiseSource:
    """Per-row standard normals drawn in chunks from independent generators."""

    def __init__(self, rngs, n_centers):
        self.rngs = rngs
        self.n = n_centers
        self.chunk = max(1, min(512, NOISE_BUDGET // (len(rngs) * n_centers)))
        self.buffer = None
        self.pos = 0

    def next(self) -> np.ndarray:
        if self.buffer is None or self.pos == self.buffer.shape[1]:
            self.buffer = np.stack([r.standard_normal((self.chunk, self.n)) for r in self.rngs])
            self.pos = 0
        z = self.buffer[:, self.pos]
        self.pos += 1
        return z


def _simulate(state0: WaveFunction, h: Hamiltonian, params: CslParams, t_final: float,
              dt: float, sample_times, rngs, observe):
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    _check_dt(h, dt)
    times = sorted(float(t) for t in sample_times)
    if times and (times[0] < 0 or times[-1] > t_final):
        raise ValueError("sample times must lie in [0, t_final]")
    state0.require_normalized()
    grid = state0.grid
    masses = h.masses_for(state0)
    batch = len(rngs)
    psi = np.broadcast_to(state0.amplitudes, (batch,) + state0.amplitudes.shape).copy()
    noise = _NoiseSource(rngs, grid.n_points)
    steppers = {}
    samples = [[] for _ in range(batch)]
    stops = times + [t_final]
    for k, seg in enumerate(_segments(stops, dt)):
        for tau in seg:
            if tau not in steppers:
                steppers[tau] = CslStepper(grid, h, params, masses, tau)
            psi = steppers[tau].step(psi, noise.next())
        if k < len(times):
            for b in range(batch):
                samples[b].append(observe(state0.with_amplitudes(psi[b])))
    finals = [state0.with_amplitudes(psi[b]) for b in range(batch)]
    return np.asarray(times), samples, finals


def csl_step(state: WaveFunction, h: Hamiltonian, params: CslParams, dt: float,
             rng: np.random.Generator) -> WaveFunction:
    """One stochastic step; identical to ``propagator.step`` when ``gamma == 0``."""
    stepper = CslStepper(state.grid, h, params, h.masses_for(state), dt)
    z = rng.standard_normal((1, state.grid.n_points)) if stepper.active else None
    psi = stepper.step(state.amplitudes[None], z)
    return state.with_amplitudes(psi[0])


def evolve_with_path(state: WaveFunction, h: Hamiltonian, params: CslParams,
                     path: NoisePath) -> WaveFunction:
    """Drive a state with a prescribed noise path (for convergence studies)."""
    stepper = CslStepper(state.grid, h, params, h.masses_for(state), path.dt)
    psi = state.amplitudes[None]
    scale = 1.0 / math.sqrt(path.dt)
    for inc in path.increments:
        psi = stepper.step(psi, (inc * scale)[None])
    return state.with_amplitudes(psi[0])


def run_csl_trajectory(state0: WaveFunction, h: Hamiltonian, params: CslParams,
                       t_final: float, dt: float, sample_times, seed,
                       observe=None) -> TrajectoryRecord:
    observe = observe or (lambda s: s)
    times, samples, finals = _simulate(state0, h, params, t_final, dt, sample_times,
                                       [np.random.default_rng(seed)], observe)
    return TrajectoryRecord(times, samples[0], [], seed, finals[0])


def run_csl_ensemble(state0: WaveFunction, h: Hamiltonian, params: CslParams,
                     t_final: float, dt: float, sample_times, seed: int,
                     n_trajectories: int, observe=None, batch_size: int = 1024,
                     first_index: int = 0) -> list:
    """Trajectories ``first_index .. first_index + n_trajectories - 1``, batched."""
    observe = observe or (lambda s: s)
    records = []
    stop = first_index + n_trajectories
    for start in range(first_index, stop, batch_size):
        idx = range(start, min(start + batch_size, stop))
        rngs = [np.random.default_rng(trajectory_seed(seed, i)) for i in idx]
        times, samples, finals = _simulate(state0, h, params, t_final, dt, sample_times,
                                           rngs, observe)
        for b, i in enumerate(idx):
            records.append(TrajectoryRecord(times, samples[b], [], trajectory_seed(seed, i),
                                            finals[b]))
    return records

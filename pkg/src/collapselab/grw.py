"""GRW spontaneous localization as a piecewise-deterministic jump process.

Every constituent is hit by localizations at the times of an independent
Poisson process of rate ``lam``. A hit multiplies the joint wave function by
the Gaussian ``L(c)`` acting on that constituent's coordinate and renormalizes;
the center ``c`` is drawn from ``p(c) = ||L(c) psi||^2``. Between hits the
state follows the Schrodinger equation.

The kernel is ``(alpha/pi)**(1/4) * exp(-alpha*(x - c)**2/2)`` with the
minimum-image distance of the periodic grid, which makes ``sum_c L(c)^2 dx``
equal to the identity at every grid point, edges included.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import chunked, ordered_map, trajectory_seed
from .errors import EmptyPosterior, NegativeRate, OutOfDomain, ZeroConstituents
from .propagator import Hamiltonian, evolve
from .qstate import Grid1D, WaveFunction

EMPTY_POSTERIOR = 1e-12


@dataclass(frozen=True)
class CollapseParams:
    """Collapse rate per constituent (1/s) and localization width (m)."""

    lam: float
    r_c: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise NegativeRate(f"collapse rate must be >= 0, got {self.lam!r}")
        if not self.r_c > 0:
            raise ValueError(f"r_c must be positive, got {self.r_c!r}")

    @property
    def alpha(self) -> float:
        return 1.0 / self.r_c**2

    @property
    def prefactor(self) -> float:
        """1D normalization ``(alpha/pi)**(1/4)`` fixed by POVM completeness."""
        return (self.alpha / math.pi) ** 0.25


@dataclass(frozen=True)
class CollapseEvent:
    time: float
    particle: int
    center: float


@dataclass(eq=False)
class TrajectoryRecord:
    sample_times: np.ndarray
    samples: list
    events: list = field(default_factory=list)
    seed: object = None
    final_state: WaveFunction | None = None

    @property
    def n_events(self) -> int:
        return len(self.events)


def sample_waiting_time(rate: float, rng: np.random.Generator) -> float:
    """Exponential gap of a Poisson process; ``inf`` when ``rate == 0``."""
    if rate < 0:
        raise NegativeRate(f"rate must be >= 0, got {rate!r}")
    if rate == 0:
        return math.inf
    return float(rng.exponential(1.0 / rate))


def localization_kernel(center: float, params: CollapseParams, grid: Grid1D) -> np.ndarray:
    if not grid.contains(center):
        raise OutOfDomain(f"collapse center {center:g} m lies outside the grid")
    d = grid.periodic_offset(grid.x, center)
    return params.prefactor * np.exp(-0.5 * params.alpha * d**2)


class KernelBank:
    """Offset-indexed kernel for fast center densities on one grid."""

    def __init__(self, grid: Grid1D, params: CollapseParams):
        self.grid = grid
        self.params = params
        offsets = grid.periodic_offset(grid.dx * np.arange(grid.n_points), 0.0)
        self.kernel = params.prefactor * np.exp(-0.5 * params.alpha * offsets**2)
        self._squared_hat = np.fft.rfft(self.kernel**2)

    def center_density(self, marginal: np.ndarray) -> np.ndarray:
        """``p(c_m) = sum_j L(c_m)(x_j)^2 rho_j dx`` for every grid center.

        ``marginal`` may carry leading batch axes.
        """
        n = self.grid.n_points
        p = np.fft.irfft(np.fft.rfft(marginal, axis=-1) * self._squared_hat, n=n, axis=-1)
        return np.clip(p * self.grid.dx, 0.0, None)

    def sample_center(self, marginal: np.ndarray, rng: np.random.Generator) -> int:
        """Inverse-CDF draw of a grid-center index."""
        cdf = np.cumsum(self.center_density(marginal))
        u = rng.random() * cdf[-1]
        return min(int(np.searchsorted(cdf, u, side="right")), self.grid.n_points - 1)


def collapse_probability_density(state: WaveFunction, particle: int,
                                 params: CollapseParams) -> np.ndarray:
    """Density (1/m) of the collapse center for ``particle`` over grid points."""
    state.require_normalized()
    return KernelBank(state.grid, params).center_density(state.marginal(particle))


def _multiply_along(psi: np.ndarray, factor: np.ndarray, particle: int) -> np.ndarray:
    if psi.ndim == 1:
        return psi * factor
    return psi * (factor[:, None] if particle == 0 else factor[None, :])


def apply_collapse(state: WaveFunction, particle: int, center: float,
                   params: CollapseParams) -> WaveFunction:
    """``psi -> L(c) psi / ||L(c) psi||`` on the given constituent.

    The kernel acts on one coordinate only but the whole joint state is
    renormalized. :class:`EmptyPosterior` is raised when ``||L psi||^2`` falls
    below 1e-12 of the kernel's peak density ``sqrt(alpha/pi)``.
    """
    state.require_normalized()
    kern = localization_kernel(center, params, state.grid)
    psi = _multiply_along(state.amplitudes, kern, particle)
    mass = float(np.sum(np.abs(psi) ** 2) * state.volume_element)
    if mass < EMPTY_POSTERIOR * params.prefactor**2:
        raise EmptyPosterior(f"posterior weight {mass:.3g} at center {center:g} m")
    return state.with_amplitudes(psi / math.sqrt(mass))


def effective_rate(n_constituents: int, params: CollapseParams) -> float:
    """Localization rate of an entangled N-constituent system, ``N * lam``."""
    if n_constituents < 1:
        raise ZeroConstituents("need at least one constituent")
    return n_constituents * params.lam


def run_trajectory(state0: WaveFunction, h: Hamiltonian, params: CollapseParams,
                   t_final: float, dt: float, sample_times, seed,
                   observe=None) -> TrajectoryRecord:
    """Simulate one GRW trajectory.

    ``observe`` maps a state to whatever should be stored at each sample time
    (default: the state itself). ``seed`` is anything accepted by
    ``numpy.random.default_rng``.
    """
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    times = np.asarray(sorted(float(t) for t in sample_times), dtype=float)
    if times.size and (times[0] < 0 or times[-1] > t_final):
        raise ValueError("sample times must lie in [0, t_final]")
    state0.require_normalized()
    rng = np.random.default_rng(seed)
    bank = KernelBank(state0.grid, params) if params.lam > 0 else None
    x = state0.grid.x
    n = state0.n_particles
    next_hit = [sample_waiting_time(params.lam, rng) for _ in range(n)]
    events = []
    samples = []
    state = state0
    t = 0.0
    observe = observe or (lambda s: s)

    def advance(target):
        nonlocal state, t
        if target > t:
            state = evolve(state, h, target - t, dt)
            t = target

    for stop in list(times) + [t_final]:
        while min(next_hit) < stop:
            i = int(np.argmin(next_hit))
            advance(next_hit[i])
            idx = bank.sample_center(state.marginal(i), rng)
            state = apply_collapse(state, i, float(x[idx]), params)
            events.append(CollapseEvent(t, i, float(x[idx])))
            next_hit[i] = t + sample_waiting_time(params.lam, rng)
        advance(stop)
        if len(samples) < times.size:
            samples.append(observe(state))
    return TrajectoryRecord(times, samples, events, seed, state)


def _trajectory_chunk(args):
    state0, h, params, t_final, dt, sample_times, seed, indices, observe = args
    return [
        run_trajectory(state0, h, params, t_final, dt, sample_times,
                       trajectory_seed(seed, i), observe)
        for i in indices
    ]


def run_ensemble(state0: WaveFunction, h: Hamiltonian, params: CollapseParams,
                 t_final: float, dt: float, sample_times, seed: int, n_trajectories: int,
                 observe=None, workers: int = 1) -> list:
    """Independent trajectories ``0 .. n-1``, returned in index order.

    Trajectory ``i`` is seeded with ``trajectory_seed(seed, i)``; with
    ``workers > 1`` contiguous index ranges run on a process pool.
    """
    jobs = [
        (state0, h, params, t_final, dt, sample_times, seed, idx, observe)
        for idx in chunked(n_trajectories, max(1, workers) * 4)
    ]
    return [rec for chunk in ordered_map(_trajectory_chunk, jobs, workers) for rec in chunk]

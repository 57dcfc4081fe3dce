"""Discretized wave functions on a periodic 1D grid.

Width convention used by every Gaussian constructor in this package::

    psi(x) ~ exp(-(x - x0)**2 / (2 * width**2))

so that ``|psi|**2`` has variance ``width**2 / 2`` and a packet at rest carries
kinetic energy ``hbar**2 / (4 * m * width**2)``.

Amplitudes of an N-particle state are stored as an N-dimensional array (one
axis per particle) and normalized so that ``sum(|psi|**2) * dx**N == 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.constants import hbar

from .errors import GridTooCoarse, NotNormalized, OutOfDomain

NORM_TOL = 1e-6


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid: ``x_j = x_min + j*dx`` for ``j < n_points``."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        n = int(self.n_points)
        if n < 8 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 8, got {self.n_points}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        object.__setattr__(self, "n_points", n)

    @classmethod
    def centered(cls, half_width: float, n_points: int) -> "Grid1D":
        return cls(-half_width, half_width, n_points)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n_points

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.x_min + self.x_max)

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def contains(self, x: float) -> bool:
        return self.x_min <= x <= self.x_max

    def periodic_offset(self, x, center):
        """Minimum-image displacement ``x - center`` on the periodic domain."""
        d = np.asarray(x) - center
        return d - self.length * np.round(d / self.length)

    def edge_mask(self, fraction: float = 0.05) -> np.ndarray:
        """Boolean mask of the outermost ``fraction`` of points on each side."""
        n_edge = max(1, int(np.ceil(fraction * self.n_points)))
        mask = np.zeros(self.n_points, dtype=bool)
        mask[:n_edge] = True
        mask[-n_edge:] = True
        return mask


@dataclass(frozen=True, eq=False)
class WaveFunction:
    grid: Grid1D
    amplitudes: np.ndarray
    masses: tuple = field(default=())

    def __post_init__(self):
        psi = np.asarray(self.amplitudes, dtype=complex)
        n = psi.ndim
        if n not in (1, 2) or any(s != self.grid.n_points for s in psi.shape):
            raise ValueError(
                f"amplitudes must have shape (n,) or (n, n) with n={self.grid.n_points}, got {psi.shape}"
            )
        masses = tuple(float(m) for m in np.atleast_1d(self.masses))
        if len(masses) == 1 and n == 2:
            masses = masses * 2
        if len(masses) != n:
            raise ValueError(f"need one mass per particle ({n}), got {len(masses)}")
        if any(m <= 0 for m in masses):
            raise ValueError("masses must be positive")
        object.__setattr__(self, "amplitudes", psi)
        object.__setattr__(self, "masses", masses)

    @property
    def n_particles(self) -> int:
        return self.amplitudes.ndim

    @property
    def volume_element(self) -> float:
        return self.grid.dx ** self.n_particles

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.volume_element)

    def normalized(self) -> "WaveFunction":
        nrm = self.norm()
        if nrm <= 0:
            raise NotNormalized("cannot normalize a zero state")
        return self.with_amplitudes(self.amplitudes / np.sqrt(nrm))

    def with_amplitudes(self, amplitudes) -> "WaveFunction":
        return WaveFunction(self.grid, amplitudes, self.masses)

    def marginal(self, particle: int = 0) -> np.ndarray:
        """Position probability density (1/m) of one particle."""
        dens = np.abs(self.amplitudes) ** 2
        if self.n_particles == 2:
            dens = dens.sum(axis=1 - particle) * self.grid.dx
        return dens

    def require_normalized(self, tol: float = NORM_TOL) -> None:
        nrm = self.norm()
        if abs(nrm - 1.0) > tol:
            raise NotNormalized(f"state norm is {nrm!r}, expected 1")

    def fidelity(self, other: "WaveFunction") -> float:
        """``|<self|other>|**2`` for normalized states."""
        overlap = np.vdot(self.amplitudes, other.amplitudes) * self.volume_element
        return float(abs(overlap) ** 2)


@dataclass(frozen=True, eq=False)
class MassDensityField:
    grid: Grid1D
    values: np.ndarray
    time: float = 0.0

    def total_mass(self) -> float:
        return float(np.sum(self.values) * self.grid.dx)


class Observables(NamedTuple):
    norm: float
    mean_x: float
    var_x: float
    mean_p: float
    kinetic_energy: float


def _gaussian(grid: Grid1D, center: float, width: float, momentum: float) -> np.ndarray:
    x = grid.x
    return np.exp(-((x - center) ** 2) / (2 * width**2) + 1j * momentum * (x - center) / hbar)


def _check_packet(grid: Grid1D, center: float, width: float) -> None:
    if width < 4 * grid.dx:
        raise GridTooCoarse(f"width {width:g} m is below 4*dx = {4 * grid.dx:g} m")
    if center - 5 * width < grid.x_min or center + 5 * width > grid.x_max:
        raise OutOfDomain(
            f"packet at {center:g} m with width {width:g} m needs a 5-width margin inside "
            f"[{grid.x_min:g}, {grid.x_max:g}]"
        )


def gaussian_packet(grid: Grid1D, center: float, width: float, momentum: float = 0.0,
                    mass: float = 1.67e-27) -> WaveFunction:
    _check_packet(grid, center, width)
    psi = _gaussian(grid, center, width, momentum)
    return WaveFunction(grid, psi, (mass,)).normalized()


def two_peak_superposition(grid: Grid1D, a: complex, b: complex, separation: float,
                           width: float, mass: float = 1.67e-27) -> WaveFunction:
    """``a|left> + b|right>`` with lobes at ``midpoint -/+ separation/2``.

    ``(a, b)`` is rescaled to unit length first. With non-overlapping lobes the
    probability left of the midpoint is ``|a|**2``.
    """
    if separation < 0:
        raise ValueError("separation must be non-negative")
    weight = np.sqrt(abs(a) ** 2 + abs(b) ** 2)
    if weight == 0:
        raise ValueError("a and b cannot both vanish")
    a, b = a / weight, b / weight
    mid = grid.midpoint
    if separation == 0:
        return gaussian_packet(grid, mid, width, 0.0, mass)
    left, right = mid - separation / 2, mid + separation / 2
    _check_packet(grid, left, width)
    _check_packet(grid, right, width)
    lobe_l = _gaussian(grid, left, width, 0.0)
    lobe_r = _gaussian(grid, right, width, 0.0)
    lobe_l /= np.sqrt(np.sum(np.abs(lobe_l) ** 2) * grid.dx)
    lobe_r /= np.sqrt(np.sum(np.abs(lobe_r) ** 2) * grid.dx)
    return WaveFunction(grid, a * lobe_l + b * lobe_r, (mass,)).normalized()


def product_state(*states: WaveFunction) -> WaveFunction:
    """Joint two-particle state ``psi1(x1) * psi2(x2)``."""
    if len(states) != 2 or any(s.n_particles != 1 for s in states):
        raise ValueError("product_state takes exactly two single-particle states")
    s1, s2 = states
    if s1.grid != s2.grid:
        raise ValueError("states live on different grids")
    return WaveFunction(s1.grid, np.outer(s1.amplitudes, s2.amplitudes), s1.masses + s2.masses)


def rigid_pair_superposition(grid: Grid1D, a: complex, b: complex, separation: float,
                             width: float, masses=(1.67e-27, 1.67e-27)) -> WaveFunction:
    """``a|left, left> + b|right, right>``: two constituents displaced together.

    Both particles share the lobes of :func:`two_peak_superposition`, so the
    pair behaves like one rigid object in a spatial superposition.
    """
    if separation <= 0:
        raise ValueError("separation must be positive")
    weight = np.sqrt(abs(a) ** 2 + abs(b) ** 2)
    if weight == 0:
        raise ValueError("a and b cannot both vanish")
    mid = grid.midpoint
    lobes = []
    for center in (mid - separation / 2, mid + separation / 2):
        _check_packet(grid, center, width)
        lobe = _gaussian(grid, center, width, 0.0)
        lobes.append(lobe / np.sqrt(np.sum(np.abs(lobe) ** 2) * grid.dx))
    psi = (a / weight) * np.outer(lobes[0], lobes[0]) + (b / weight) * np.outer(lobes[1], lobes[1])
    return WaveFunction(grid, psi, tuple(float(m) for m in masses)).normalized()


def left_probability(state: WaveFunction, particle: int = 0) -> float:
    """Probability that ``particle`` sits left of the grid midpoint.

    The midpoint sample itself is split evenly between the halves.
    """
    grid = state.grid
    dens = state.marginal(particle) * grid.dx
    half = grid.n_points // 2
    return float(dens[:half].sum() + 0.5 * dens[half])


def mass_density(state: WaveFunction, time: float = 0.0) -> MassDensityField:
    state.require_normalized()
    values = sum(m * state.marginal(i) for i, m in enumerate(state.masses))
    return MassDensityField(state.grid, values, time)


def _spectral_weights(state: WaveFunction, axis: int) -> np.ndarray:
    """Momentum-space probability of one particle, summed over the other axes."""
    phat = np.abs(np.fft.fft(state.amplitudes, axis=axis)) ** 2
    if state.n_particles == 2:
        phat = phat.sum(axis=1 - axis)
    return phat / phat.sum()


def observables(state: WaveFunction, particle: int | None = None) -> Observables:
    """Norm, position moments, mean momentum and kinetic energy.

    For two-particle states ``particle=None`` reports the center-of-mass
    coordinate and total momentum; the kinetic energy is always the total over
    the selected particles.
    """
    grid = state.grid
    x = grid.x
    k = grid.k
    # the Nyquist mode has no +k partner; leave it out of odd moments
    k_odd = k.copy()
    k_odd[grid.n_points // 2] = 0.0
    norm = state.norm()
    if state.n_particles == 1 or particle is not None:
        idx = 0 if particle is None else particle
        dens = state.marginal(idx) * grid.dx / norm
        mean_x = float(np.sum(x * dens))
        var_x = float(np.sum((x - mean_x) ** 2 * dens))
        w = _spectral_weights(state, idx)
        mean_p = float(hbar * np.sum(k_odd * w))
        ke = float(hbar**2 * np.sum(k**2 * w) / (2 * state.masses[idx]))
        return Observables(norm, mean_x, var_x, mean_p, ke)

    m1, m2 = state.masses
    total = m1 + m2
    dens = np.abs(state.amplitudes) ** 2 * grid.dx**2 / norm
    com = (m1 * x[:, None] + m2 * x[None, :]) / total
    mean_x = float(np.sum(com * dens))
    var_x = float(np.sum((com - mean_x) ** 2 * dens))
    w1, w2 = _spectral_weights(state, 0), _spectral_weights(state, 1)
    mean_p = float(hbar * (np.sum(k_odd * w1) + np.sum(k_odd * w2)))
    ke = float(hbar**2 * (np.sum(k**2 * w1) / (2 * m1) + np.sum(k**2 * w2) / (2 * m2)))
    return Observables(norm, mean_x, var_x, mean_p, ke)


def random_state(grid: Grid1D, rng: np.random.Generator, mass: float = 1.67e-27,
                 n_particles: int = 1) -> WaveFunction:
    """Random normalized state under a centered Gaussian envelope (test helper)."""
    shape = (grid.n_points,) * n_particles
    coeffs = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    env = np.exp(-((grid.x - grid.midpoint) / (0.15 * grid.length)) ** 2)
    psi = coeffs * (env if n_particles == 1 else np.outer(env, env))
    return WaveFunction(grid, psi, (mass,) * n_particles).normalized()

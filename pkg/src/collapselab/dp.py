"""Gravitational self-energy of a superposition and its collapse time.

For two mass densities ``M1`` and ``M2`` with difference ``f = M1 - M2``::

    delta_e = 4 pi G * integral integral f(x) f(y) / |x - y| dx dy

The double integral is a Coulomb energy, so it is evaluated in Fourier space
where the kernel is smooth. For ``f = sum_i q_i F_i(|k|) exp(-i k.c_i)`` the
angular average of ``|f(k)|^2`` is closed-form and

    I = (2/pi) * integral_0^inf dk  sum_ij q_i q_j F_i(k) F_j(k) sinc(k |c_i - c_j|)

with form factors ``3 (sin u - u cos u) / u^3`` (``u = kR``) for a uniform
sphere and ``exp(-k^2 sigma^2 / 2)`` for a Gaussian. The k-integral is done
with composite Gauss-Legendre panels narrow enough to resolve every sinc, and
the cutoff is doubled until the result stops moving.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import G, hbar

from .errors import NegativeEnergy, QuadratureNotConverged

RELATIVE_TOLERANCE = 5e-3
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True, eq=False)
class MassDistribution:
    """A sum of spherically symmetric blobs in 3D.

    Build one with :meth:`uniform_sphere`, :meth:`gaussian` or
    :meth:`point_set`. ``kinds[i]`` is ``"sphere"`` (``scales[i]`` = radius) or
    ``"gaussian"`` (``scales[i]`` = sigma, density ``exp(-r^2/2 sigma^2)``).
    """

    kinds: tuple
    masses: np.ndarray
    centers: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        centers = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        scales = np.asarray(self.scales, dtype=float).reshape(-1)
        if not (len(self.kinds) == masses.size == centers.shape[0] == scales.size):
            raise ValueError("kinds, masses, centers and scales differ in length")
        if masses.size == 0 or np.any(masses <= 0) or not np.all(np.isfinite(masses)):
            raise ValueError("every mass must be positive and finite")
        if np.any(scales <= 0):
            raise ValueError("radius/sigma must be positive")
        if not np.all(np.isfinite(centers)):
            raise ValueError("centers must be finite")
        for kind in self.kinds:
            if kind not in ("sphere", "gaussian"):
                raise ValueError(f"unknown blob kind {kind!r}")
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "scales", scales)

    @classmethod
    def uniform_sphere(cls, mass, radius, center=(0.0, 0.0, 0.0)):
        return cls(("sphere",), [mass], [center], [radius])

    @classmethod
    def gaussian(cls, mass, sigma, center=(0.0, 0.0, 0.0)):
        return cls(("gaussian",), [mass], [center], [sigma])

    @classmethod
    def point_set(cls, masses, positions, radius):
        """Point masses, each smeared into a uniform sphere of ``radius``.

        Exact points have infinite self-energy, so a finite nuclear-scale
        radius is required.
        """
        masses = np.asarray(masses, dtype=float).reshape(-1)
        return cls(("sphere",) * masses.size, masses, positions, [radius] * masses.size)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())


def _form_factor(kind: str, scale: float, k: np.ndarray) -> np.ndarray:
    if kind == "gaussian":
        return np.exp(-0.5 * (k * scale) ** 2)
    u = k * scale
    out = np.ones_like(u)
    big = u > 1e-2
    ub = u[big]
    out[big] = 3.0 * (np.sin(ub) - ub * np.cos(ub)) / ub**3
    us = u[~big] ** 2
    out[~big] = 1.0 - us / 10.0 + us**2 / 280.0
    return out


def _difference_terms(m1: MassDistribution, m2: MassDistribution):
    """Signed blobs of ``m1 - m2`` with identical blobs merged.

    Merging makes the integrand vanish identically when the two inputs
    coincide, rather than only up to rounding.
    """
    merged = {}
    for sign, dist in ((1.0, m1), (-1.0, m2)):
        for kind, q, c, s in zip(dist.kinds, dist.masses, dist.centers, dist.scales):
            key = (kind, float(s), tuple(float(v) for v in c))
            merged[key] = merged.get(key, 0.0) + sign * float(q)
    terms = [(k, q) for k, q in merged.items() if q != 0.0]
    terms.sort()
    return terms


def _panel_integral(terms, k_max: float, panel: float) -> float:
    n_panels = max(1, int(math.ceil(k_max / panel)))
    edges = np.linspace(0.0, k_max, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    k = (mid[:, None] + half[:, None] * _NODES[None, :]).ravel()
    w = (half[:, None] * _WEIGHTS[None, :]).ravel()
    factors = [q * _form_factor(kind, s, k) for (kind, s, _), q in terms]
    centers = [np.array(c) for (_, _, c), _ in terms]
    total = np.zeros_like(k)
    for i in range(len(terms)):
        total += factors[i] ** 2
        for j in range(i + 1, len(terms)):
            d = float(np.linalg.norm(centers[i] - centers[j]))
            # np.sinc(x) = sin(pi x)/(pi x)
            total += 2.0 * factors[i] * factors[j] * np.sinc(k * d / math.pi)
    return float(2.0 / math.pi * np.dot(w, total))


def coulomb_integral(m1: MassDistribution, m2: MassDistribution) -> float:
    """``integral integral f(x) f(y) / |x - y|`` for ``f = m1 - m2`` (kg^2/m)."""
    terms = _difference_terms(m1, m2)
    if not terms:
        return 0.0
    scales = [s for (_, s, _), _ in terms]
    centers = np.array([c for (_, _, c), _ in terms])
    dist = np.linalg.norm(centers[:, None] - centers[None, :], axis=-1)
    spread = float(dist.max())
    nonzero = dist[dist > 0]
    smallest = min(scales)
    # resolve both the form factors and the fastest sinc oscillation
    panel = min(1.0 / smallest, math.pi / spread if spread > 0 else math.inf)
    # a small displacement puts weight out to k ~ 1/d
    k_max = 100.0 / min(smallest, float(nonzero.min()) if nonzero.size else math.inf)
    previous = _panel_integral(terms, k_max, panel)
    for _ in range(4):
        k_max *= 2.0
        panel *= 0.5
        current = _panel_integral(terms, k_max, panel)
        change = abs(current - previous) / max(abs(current), 1e-300)
        if change <= RELATIVE_TOLERANCE:
            return max(current, 0.0)
        previous = current
    raise QuadratureNotConverged(f"successive refinements differ by {change:.2%}")


def delta_e(m1: MassDistribution, m2: MassDistribution) -> float:
    """Energy uncertainty (J) of a superposition of ``m1`` and ``m2``.

    Returned as a non-negative magnitude; symmetric in its arguments.
    """
    return 4.0 * math.pi * G * coulomb_integral(m1, m2)


def collapse_time(energy: float) -> float:
    """``hbar / energy`` in seconds; ``inf`` for zero energy."""
    if energy < 0:
        raise NegativeEnergy(f"energy must be >= 0, got {energy!r}")
    if energy == 0:
        return math.inf
    return hbar / energy

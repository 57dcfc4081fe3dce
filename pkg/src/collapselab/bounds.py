"""Collapse-model predictions for desk-scale experiments and the bounds they imply.

An experiment is summarized by the mass ``m`` of the object, the size ``l`` of
the superposition and the time ``t`` it must survive. A rigid object much
smaller than ``r_c`` is localized coherently by all of its nucleons, so with
``N = m / 1 amu`` the fringe visibility is multiplied by

    V = exp(-N**2 * Gamma(l) * t),    Gamma(l) = lam * (1 - exp(-l**2 / (4 r_c**2)))

(the per-nucleon decay kernel of :mod:`collapselab.master`). All of the mass
scaling lives in :func:`coherent_enhancement`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar, m_u

from .errors import NoExclusion
from .grw import CollapseParams
from .master import decay_kernel, decay_kernel_curvature

LAMBDA_SEARCH = (1e-30, 1e30)
BISECTION_TOLERANCE = 0.01


@dataclass(frozen=True)
class InterferometryExperiment:
    """Mass in amu, superposition size ``separation`` (m), ``duration`` (s)."""

    mass: float
    separation: float
    duration: float
    visibility_floor: float = 0.5

    def __post_init__(self):
        for name in ("mass", "separation", "duration"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not 0 < self.visibility_floor <= 1:
            raise ValueError(f"visibility_floor must lie in (0, 1], got {self.visibility_floor!r}")


@dataclass(frozen=True)
class BoundResult:
    lambda_upper: float
    r_c_assumed: float
    model: str = "GRW-like kernel"
    notes: str = ""


def sphere_mass_amu(diameter: float, density: float) -> float:
    """Mass (amu) of a homogeneous sphere; ``density`` in kg/m^3."""
    return density * math.pi * diameter**3 / 6.0 / m_u


def coherent_enhancement(mass_amu: float) -> float:
    """Rate multiplier ``N**2`` for a rigid object of ``N`` nucleons."""
    return mass_amu**2


def log_visibility(exp: InterferometryExperiment, lam: float, r_c: float) -> float:
    """``ln V``; finite even where ``V`` itself underflows."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    gamma = decay_kernel(exp.separation, CollapseParams(lam, r_c))
    return -coherent_enhancement(exp.mass) * gamma * exp.duration


def visibility(exp: InterferometryExperiment, lam: float, r_c: float) -> float:
    return math.exp(log_visibility(exp, lam, r_c))


def lambda_upper_bound(exp: InterferometryExperiment, r_c: float) -> BoundResult:
    """Smallest ``lam`` that pushes the visibility below the observed floor.

    Bisection in ``log(lam)`` over ``[1e-30, 1e30]`` s^-1 down to a 1% bracket;
    the upper end of the final bracket is returned.
    """
    if not exp.visibility_floor < 1:
        raise ValueError("a visibility floor of 1 excludes nothing")
    target = math.log(exp.visibility_floor)
    lo, hi = LAMBDA_SEARCH
    if log_visibility(exp, hi, r_c) >= target:
        raise NoExclusion(
            f"visibility stays above {exp.visibility_floor:g} for every lambda up to {hi:g} s^-1"
        )
    while hi / lo > 1.0 + BISECTION_TOLERANCE:
        mid = math.sqrt(lo * hi)
        if log_visibility(exp, mid, r_c) < target:
            hi = mid
        else:
            lo = mid
    notes = (
        f"N = {exp.mass:g} nucleons with coherent N^2 enhancement; "
        f"V < {exp.visibility_floor:g} after {exp.duration:g} s at l = {exp.separation:g} m"
    )
    return BoundResult(hi, r_c, notes=notes)


def heating_rate(params: CollapseParams, mass: float, n_constituents: int = 1) -> float:
    """Kinetic-energy growth rate (W) of ``n_constituents`` particles of ``mass``.

    Each localization kicks momentum; in the master equation
    ``d<p^2>/dt = hbar^2 Gamma''(0)`` per constituent, so
    ``dE/dt = n hbar^2 lam alpha / (4 m)``.
    """
    if not mass > 0:
        raise ValueError("mass must be positive")
    if n_constituents < 1:
        raise ValueError("need at least one constituent")
    return n_constituents * hbar**2 * decay_kernel_curvature(params) / (2.0 * mass)


_TABLE = (
    ("Matter-wave interferometry", 1e-5),
    ("Decay of supercurrents (SQUIDS)", 1e-3),
    ("Spontaneous X-ray emission from Ge", 1e-11),
    ("Proton decay", 10.0),
    ("Dissociation of cosmic hydrogen", 1.0),
    ("Heating of intergalactic medium (IGM)", 1e-9),
    ("Heating of interstellar dust grains", 1e-2),
)


def table1_reference() -> list:
    """Published upper bounds on the collapse rate: ``(name, lambda_upper in 1/s)``.

    The first four come from laboratory experiments, the last three from
    cosmological data. Reference values only; none is recomputed here.
    """
    return list(_TABLE)


def reference_bound(name: str) -> float:
    for row, value in _TABLE:
        if row == name:
            return value
    raise KeyError(name)


def sweep_visibility(exp: InterferometryExperiment, lams, r_c: float) -> np.ndarray:
    return np.array([visibility(exp, float(lam), r_c) for lam in lams])

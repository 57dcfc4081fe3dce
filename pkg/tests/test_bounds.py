import math

import numpy as np
import pytest
from scipy.constants import hbar

from collapselab.bounds import (
    InterferometryExperiment,
    lambda_upper_bound,
    heating_rate,
    log_visibility,
    reference_bound,
    sphere_mass_amu,
    sweep_visibility,
    table1_reference,
    visibility,
)
from collapselab.errors import NoExclusion
from collapselab.grw import CollapseParams

from conftest import R_C

MOLECULE = InterferometryExperiment(mass=1e4, separation=100e-9, duration=1e-3)


def test_zero_rate_keeps_full_visibility():
    assert visibility(MOLECULE, 0.0, R_C) == 1.0


def test_tiny_separation_keeps_visibility():
    exp = InterferometryExperiment(mass=1e4, separation=1e-12, duration=1e-3)
    assert visibility(exp, 1e-5, R_C) > 1 - 1e-9


def test_visibility_closed_form():
    lam = 2e-6
    expected = math.exp(-1e8 * lam * (1 - math.exp(-0.25)) * 1e-3)
    assert visibility(MOLECULE, lam, R_C) == pytest.approx(expected, rel=1e-12)


def test_monotonicity_sweep():
    rng = np.random.default_rng(8)
    for _ in range(1000):
        mass = 10 ** rng.uniform(0, 8)
        sep = 10 ** rng.uniform(-9, -5)
        dur = 10 ** rng.uniform(-6, 0)
        lam = 10 ** rng.uniform(-20, 0)
        r_c = 10 ** rng.uniform(-8, -6)
        base = InterferometryExperiment(mass, sep, dur)
        lv = log_visibility(base, lam, r_c)
        assert log_visibility(base, 1.5 * lam, r_c) < lv
        assert log_visibility(InterferometryExperiment(mass, sep, 1.5 * dur), lam, r_c) < lv
        assert log_visibility(InterferometryExperiment(1.5 * mass, sep, dur), lam, r_c) < lv
        assert log_visibility(InterferometryExperiment(mass, 0.5 * sep, dur), lam, r_c) >= lv
        assert 0 < visibility(base, lam, r_c) <= 1 or lv < -700


def test_sweep_is_decreasing():
    v = sweep_visibility(MOLECULE, np.logspace(-8, -3, 50), R_C)
    assert np.all(np.diff(v) < 0)


def test_record_molecule_bound_bracket():
    res = lambda_upper_bound(MOLECULE, R_C)
    assert 1e-7 <= res.lambda_upper <= 1e-3
    assert res.lambda_upper > reference_bound("Spontaneous X-ray emission from Ge")
    assert res.r_c_assumed == R_C
    assert res.model == "GRW-like kernel"
    # the bound sits at the floor to within the bisection tolerance
    assert visibility(MOLECULE, res.lambda_upper, R_C) < 0.5
    assert visibility(MOLECULE, res.lambda_upper / 1.01, R_C) >= 0.5 - 1e-12


def test_record_molecule_bound_value():
    # ln 2 / (N^2 (1 - e^{-1/4}) t) with N = 1e4, l = r_c, t = 1 ms
    exact = math.log(2) / (1e8 * (1 - math.exp(-0.25)) * 1e-3)
    res = lambda_upper_bound(MOLECULE, R_C)
    assert exact <= res.lambda_upper <= exact * 1.01


def test_levitated_particle_is_tighter():
    mass = sphere_mass_amu(10e-9, 2200.0)
    lev = InterferometryExperiment(mass=mass, separation=100e-9, duration=2e-3)
    assert lambda_upper_bound(lev, R_C).lambda_upper < lambda_upper_bound(MOLECULE, R_C).lambda_upper


def test_bound_antitone_in_time_and_mass():
    b = lambda e: lambda_upper_bound(e, R_C).lambda_upper
    assert b(InterferometryExperiment(1e4, 1e-7, 1e-2)) < b(MOLECULE)
    assert b(InterferometryExperiment(1e5, 1e-7, 1e-3)) < b(MOLECULE)


def test_no_exclusion_for_negligible_separation():
    exp = InterferometryExperiment(mass=1.0, separation=1e-20, duration=1e-9)
    with pytest.raises(NoExclusion):
        lambda_upper_bound(exp, R_C)


def test_floor_of_one_is_rejected():
    with pytest.raises(ValueError):
        lambda_upper_bound(InterferometryExperiment(1e4, 1e-7, 1e-3, visibility_floor=1.0), R_C)
    with pytest.raises(ValueError):
        InterferometryExperiment(-1.0, 1e-7, 1e-3)


def test_sphere_mass():
    # 1 um diameter water droplet: 5.236e-16 kg
    assert sphere_mass_amu(1e-6, 1000.0) == pytest.approx(5.235987755982988e-16 / 1.66053906660e-27,
                                                          rel=1e-8)


def test_heating_rate_formula_and_scaling():
    m = 1.67e-27
    p = CollapseParams(1e-16, R_C)
    assert heating_rate(p, m) == pytest.approx(hbar**2 * 1e-16 / (4 * m * R_C**2), rel=1e-12)
    assert heating_rate(CollapseParams(0.0, R_C), m) == 0.0
    assert heating_rate(CollapseParams(1e-16, 2 * R_C), m) == pytest.approx(heating_rate(p, m) / 4)
    assert heating_rate(p, m, n_constituents=7) == pytest.approx(7 * heating_rate(p, m))


def test_table_rows():
    rows = dict(table1_reference())
    assert len(rows) == 7
    assert rows["Spontaneous X-ray emission from Ge"] == 1e-11
    assert rows["Heating of intergalactic medium (IGM)"] == 1e-9
    assert rows["Proton decay"] == 10
    assert rows["Matter-wave interferometry"] == 1e-5
    with pytest.raises(KeyError):
        reference_bound("nonexistent")

"""Command-line experiment runner.

    collapselab run CONFIG.yaml [--seed N] [--out PATH] [--emit-plot-script] [--quiet]

The config names one experiment ``kind``; see the README for every schema.
Trajectories are cut into fixed-size chunks, fanned out to ``workers``
processes and reduced in chunk order, so the output bytes depend only on the
config and the seed.

Exit codes: 0 success, 2 invalid config, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from contextlib import contextmanager
from functools import partial

import numpy as np
from scipy.constants import m_u

from . import __version__, bounds, config as config_mod, csl, dp, grw, master
from .ensemble import default_workers, ordered_map, trajectory_seed
from .errors import CollapseLabError, ConfigInvalid
from .propagator import Hamiltonian
from .qstate import (
    Grid1D,
    gaussian_packet,
    left_probability,
    observables,
    rigid_pair_superposition,
    two_peak_superposition,
)
from .results import ExperimentResult, emit_csv, emit_plot_script

log = logging.getLogger("collapselab")

CHUNK = 256  # trajectories per job; fixed so reductions never depend on `workers`

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


@contextmanager
def _as_config_error(path):
    """Report a state the grid cannot hold as a bad config field."""
    try:
        yield
    except ConfigInvalid:
        raise
    except ValueError as err:
        raise ConfigInvalid(path, str(err)) from None


def _grid(cfg):
    with _as_config_error("grid"):
        return Grid1D.centered(cfg["grid"]["half_width"], cfg["grid"]["n_points"])


def _collapse(cfg):
    return grw.CollapseParams(cfg["collapse"]["lam"], cfg["collapse"]["r_c"])


def _two_lobe_state(cfg, grid):
    st = cfg["state"]
    w = st["weight_left"]
    with _as_config_error("state"):
        return two_peak_superposition(grid, math.sqrt(w), math.sqrt(1 - w), st["separation"],
                                      st["width"], cfg["mass_amu"] * m_u)


def _lobe_centers(grid, separation):
    return grid.midpoint - separation / 2, grid.midpoint + separation / 2


def _chunks(n, size=CHUNK, start=0):
    return [range(a, min(a + size, start + n)) for a in range(start, start + n, size)]


def _amplitudes(state):
    return state.amplitudes


def _kinetic_energy(state):
    return observables(state).kinetic_energy


def _half_population(diag, grid):
    half = grid.n_points // 2
    return float(diag[:half].sum() + 0.5 * diag[half])


# -- chunk workers (module level so that process pools can pickle them) -----

def _born_chunk(job):
    psi, params, t_final, dt, seed, idx = job
    rows = []
    for i in idx:
        rec = grw.run_trajectory(psi, Hamiltonian.free(), params, t_final, dt, [t_final],
                                 trajectory_seed(seed, i), left_probability)
        rows.append((i, rec.n_events, rec.samples[0]))
    return rows


def _outer_sums(amplitude_rows, dx):
    v = np.asarray(amplitude_rows) * math.sqrt(dx)
    return v.T @ v.conj()


def _grw_matrix_chunk(job):
    psi, params, times, dt, seed, idx = job
    recs = [grw.run_trajectory(psi, Hamiltonian.free(), params, times[-1], dt, times,
                               trajectory_seed(seed, i), _amplitudes) for i in idx]
    return [_outer_sums([r.samples[k] for r in recs], psi.grid.dx) for k in range(len(times))]


def _csl_matrix_chunk(job):
    psi, params, times, dt, seed, idx = job
    recs = csl.run_csl_ensemble(psi, Hamiltonian.free(), params, times[-1], dt, times, seed,
                                len(idx), _amplitudes, batch_size=len(idx), first_index=idx.start)
    return [_outer_sums([r.samples[k] for r in recs], psi.grid.dx) for k in range(len(times))]


def _observable_chunk(job):
    psi, params, times, dt, seed, idx, observe = job
    values = np.array([
        grw.run_trajectory(psi, Hamiltonian.free(), params, times[-1], dt, times,
                           trajectory_seed(seed, i), observe).samples
        for i in idx
    ])
    return values.sum(axis=0), (np.abs(values) ** 2).sum(axis=0)


# -- pipelines ---------------------------------------------------------------

def _run_grw_born(cfg, seed, workers):
    grid = _grid(cfg)
    psi = _two_lobe_state(cfg, grid)
    params = _collapse(cfg)
    n = cfg["trajectories"]
    jobs = [(psi, params, cfg["t_final"], cfg["dt"], seed, idx) for idx in _chunks(n)]
    rows = [row for chunk in ordered_map(_born_chunk, jobs, workers) for row in chunk]
    p_left = np.array([r[2] for r in rows])
    outcome = p_left > 0.5
    expected = left_probability(psi)
    sigma = math.sqrt(expected * (1 - expected) / n)
    eps = cfg["resolved_threshold"]
    fraction = float(outcome.mean())
    summary = {
        "trajectories": n,
        "left_fraction": fraction,
        "expected_left": expected,
        "binomial_sigma": sigma,
        "z_score": (fraction - expected) / sigma if sigma > 0 else 0.0,
        "unresolved": int(np.sum((p_left > eps) & (p_left < 1 - eps))),
        "mean_events": float(np.mean([r[1] for r in rows])),
    }
    table = [(i, ev, p, int(o)) for (i, ev, p), o in zip(rows, outcome)]
    return ["trajectory", "n_events", "left_probability", "outcome_left"], table, summary


def _compare_with_master(cfg, seed, workers, stochastic):
    grid = _grid(cfg)
    psi = _two_lobe_state(cfg, grid)
    params = _collapse(cfg)
    times = cfg["sample_times"]
    n = cfg["trajectories"]
    if stochastic == "csl":
        worker = _csl_matrix_chunk
        model = csl.match_parameters(params)
        chunks = _chunks(n, cfg["batch_size"])
    else:
        worker = _grw_matrix_chunk
        model = params
        chunks = _chunks(n)
    jobs = [(psi, model, times, cfg["dt"], seed, idx) for idx in chunks]
    totals = None
    for part in ordered_map(worker, jobs, workers):
        totals = part if totals is None else [a + b for a, b in zip(totals, part)]
    ensemble = [master.DensityMatrix(grid, t / n, psi.masses[0]) for t in totals]
    exact = master.evolve_density_matrix(master.DensityMatrix.from_state(psi), Hamiltonian.free(),
                                         params, times[-1], cfg["master_dt"], times)
    x1, x2 = _lobe_centers(grid, cfg["state"]["separation"])
    rows = []
    for t, a, b in zip(times, ensemble, exact):
        rows.append((t, master.trace_distance(a, b), abs(a.element(x1, x2)), abs(b.element(x1, x2)),
                     _half_population(np.diagonal(a.elements).real, grid),
                     _half_population(np.diagonal(b.elements).real, grid)))
    summary = {
        "trajectories": n,
        "max_trace_distance": max(r[1] for r in rows),
        "kernel_rate": master.decay_kernel(x2 - x1, params),
    }
    if len(times) >= 5:
        summary["ensemble_decay_rate"] = master.offdiag_decay_fit(times, ensemble, x1, x2).rate
        summary["master_decay_rate"] = master.offdiag_decay_fit(times, exact, x1, x2).rate
    columns = ["time", "trace_distance", "ensemble_coherence", "master_coherence",
               "ensemble_left_population", "master_left_population"]
    return columns, rows, summary


def _run_amplification(cfg, seed, workers):
    grid = _grid(cfg)
    params = _collapse(cfg)
    mass = cfg["mass_amu"] * m_u
    sep, width = cfg["state"]["separation"], cfg["state"]["width"]
    with _as_config_error("state"):
        single = two_peak_superposition(grid, 1.0, 1.0, sep, width, mass)
        pair = rigid_pair_superposition(grid, 1.0, 1.0, sep, width, (mass, mass))
    x1, x2 = _lobe_centers(grid, sep)
    observe = partial(master.branch_coherence, x1=x1, x2=x2)
    times = cfg["sample_times"]
    n = cfg["trajectories"]
    means = []
    # pair trajectories take indices n .. 2n-1 so the two ensembles never share noise
    for state, start in ((single, 0), (pair, n)):
        jobs = [(state, params, times, cfg["dt"], seed, idx, observe)
                for idx in _chunks(n, start=start)]
        total = sum(part[0] for part in ordered_map(_observable_chunk, jobs, workers))
        means.append(np.abs(total / n))
    single_fit = master.fit_decay_rate(times, means[0])
    pair_fit = master.fit_decay_rate(times, means[1])
    summary = {
        "trajectories": n,
        "single_rate": single_fit.rate,
        "pair_rate": pair_fit.rate,
        "rate_ratio": pair_fit.rate / single_fit.rate,
        "kernel_rate": master.decay_kernel(sep, params),
        "single_fit_residual": single_fit.residual,
        "pair_fit_residual": pair_fit.residual,
    }
    rows = list(zip(times, means[0].tolist(), means[1].tolist()))
    return ["time", "single_coherence", "pair_coherence"], rows, summary


def _run_energy_growth(cfg, seed, workers):
    grid = _grid(cfg)
    params = _collapse(cfg)
    mass = cfg["mass_amu"] * m_u
    with _as_config_error("state"):
        psi = gaussian_packet(grid, grid.midpoint, cfg["state"]["width"], 0.0, mass)
    times = cfg["sample_times"]
    n = cfg["trajectories"]
    jobs = [(psi, params, times, cfg["dt"], seed, idx, _kinetic_energy) for idx in _chunks(n)]
    parts = ordered_map(_observable_chunk, jobs, workers)
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / n
    stderr = np.sqrt(np.maximum(s2 / n - mean**2, 0.0) / (n - 1))
    t = np.asarray(times)
    slope, intercept = np.polyfit(t, mean, 1)
    predicted = bounds.heating_rate(params, mass)
    summary = {
        "trajectories": n,
        "initial_kinetic_energy": observables(psi).kinetic_energy,
        "fitted_slope": float(slope),
        "fitted_intercept": float(intercept),
        "predicted_slope": predicted,
        "relative_deviation": float(slope / predicted - 1) if predicted else 0.0,
    }
    rows = list(zip(times, mean.tolist(), stderr.tolist()))
    return ["time", "mean_kinetic_energy", "standard_error"], rows, summary


def _distribution(shape, offset):
    if shape["kind"] == "sphere":
        return dp.MassDistribution.uniform_sphere(shape["mass"], shape["radius"], offset)
    if shape["kind"] == "gaussian":
        return dp.MassDistribution.gaussian(shape["mass"], shape["sigma"], offset)
    positions = np.asarray(shape["positions"]) + np.asarray(offset)
    return dp.MassDistribution.point_set(shape["masses"], positions, shape["radius"])


def _run_dp_tau(cfg, seed, workers):
    shape = cfg["shape"]
    direction = np.asarray(cfg["direction"])
    direction = direction / np.linalg.norm(direction)
    base = _distribution(shape, [0.0, 0.0, 0.0])
    rows = []
    for s in cfg["separations"]:
        moved = _distribution(shape, (s * direction).tolist())
        energy = dp.delta_e(base, moved)
        rows.append((s, energy, dp.collapse_time(energy)))
    taus = [r[2] for r in rows]
    summary = {
        "largest_delta_e": max(r[1] for r in rows),
        "shortest_collapse_time": min(taus),
        "longest_collapse_time": max(taus),
    }
    return ["separation", "delta_e", "collapse_time"], rows, summary


def _run_visibility_bound(cfg, seed, workers):
    e = cfg["experiment"]
    exp = bounds.InterferometryExperiment(e["mass_amu"], e["separation"], e["duration"],
                                          e["visibility_floor"])
    result = bounds.lambda_upper_bound(exp, cfg["r_c"])
    lams = cfg["lambdas"]
    if lams is None:
        lams = (result.lambda_upper * np.logspace(-3, 3, 13)).tolist()
    rows = [(lam, bounds.visibility(exp, lam, cfg["r_c"]), bounds.log_visibility(exp, lam, cfg["r_c"]))
            for lam in lams]
    matter = bounds.reference_bound("Matter-wave interferometry")
    xray = bounds.reference_bound("Spontaneous X-ray emission from Ge")
    summary = {
        "lambda_upper": result.lambda_upper,
        "r_c_assumed": result.r_c_assumed,
        "model": result.model,
        "reference_matter_wave": matter,
        "decades_from_reference": math.log10(result.lambda_upper / matter),
        "reference_xray": xray,
        "looser_than_xray": result.lambda_upper > xray,
    }
    return ["lambda", "visibility", "log_visibility"], rows, summary


PIPELINES = {
    "grw_born": _run_grw_born,
    "grw_vs_master": partial(_compare_with_master, stochastic="grw"),
    "csl_vs_master": partial(_compare_with_master, stochastic="csl"),
    "amplification": _run_amplification,
    "energy_growth": _run_energy_growth,
    "dp_tau": _run_dp_tau,
    "visibility_bound": _run_visibility_bound,
}


def _default_output(config_path):
    if config_path is None:
        return None
    base, _ = os.path.splitext(os.fspath(config_path))
    return base + ".csv"


def run(config, seed=None, out=None, emit_plot=False) -> ExperimentResult:
    """Validate ``config`` (a mapping or a YAML path), run it, write the CSV.

    The result is written to ``out``, else to the config's ``output`` field,
    else next to a config file with a ``.csv`` suffix. A mapping without any
    output path is run but not written.
    """
    config_path = None
    if isinstance(config, (str, os.PathLike)):
        config_path = config
        cfg = config_mod.load(config)
    else:
        cfg = config_mod.validate(config)
    if seed is not None:
        cfg["seed"] = config_mod.seed(seed, "seed")
    workers = cfg["workers"] or default_workers()
    log.info("running %s with seed %d on %d worker(s)", cfg["kind"], cfg["seed"], workers)
    columns, rows, summary = PIPELINES[cfg["kind"]](cfg, cfg["seed"], workers)
    echo = {k: v for k, v in cfg.items() if k != "output"}
    result = ExperimentResult(cfg["kind"], echo, cfg["seed"], columns, [list(r) for r in rows],
                              summary)
    target = out
    if target is None and cfg["output"] is not None:
        target = cfg["output"]
        if config_path is not None and not os.path.isabs(target):
            target = os.path.join(os.path.dirname(os.path.abspath(config_path)), target)
    if target is None:
        target = _default_output(config_path)
    if target is not None:
        emit_csv(result, target)
        log.info("wrote %s", target)
        if emit_plot:
            log.info("wrote %s", emit_plot_script(result, target))
    return result


def build_parser():
    parser = argparse.ArgumentParser(prog="collapselab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"collapselab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config", help="YAML experiment config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--emit-plot-script", action="store_true",
                   help="also write a matplotlib script next to the CSV")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s")
    try:
        result = run(args.config, seed=args.seed, out=args.out, emit_plot=args.emit_plot_script)
    except ConfigInvalid as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except CollapseLabError as err:
        print(f"numerical failure ({type(err).__name__}): {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        for key, value in result.summary.items():
            print(f"{key}: {value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

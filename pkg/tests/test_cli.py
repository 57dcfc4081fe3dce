import math
import os
import py_compile

import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st

from collapselab import cli, config, results
from collapselab.errors import ConfigInvalid
from collapselab.results import ExperimentResult, emit_csv, parse_csv, render

BORN = {
    "kind": "grw_born",
    "seed": 5,
    "grid": {"half_width": 1e-6, "n_points": 128},
    "mass_amu": 1e6,
    "state": {"weight_left": 0.5, "separation": 6e-7, "width": 7e-8},
    "collapse": {"lam": 1e3, "r_c": 1e-7},
    "t_final": 1e-2,
    "dt": 1e-3,
    "trajectories": 300,
}


def write_config(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


def test_yaml_scientific_notation_is_float(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("kind: visibility_bound\nseed: 1\nr_c: 1e-7\n"
                 "experiment: {mass_amu: 1.0e4, separation: 1e-7, duration: 1e-3}\n")
    cfg = config.load(p)
    assert cfg["r_c"] == 1e-7
    assert cfg["experiment"]["mass_amu"] == 1e4
    assert cfg["experiment"]["visibility_floor"] == 0.5


@pytest.mark.parametrize("path, value", [
    ("grid.n_points", 100),
    ("grid.half_width", -1.0),
    ("collapse.lam", -1.0),
    ("state.weight_left", 1.5),
    ("trajectories", 0),
    ("seed", -3),
    ("t_final", 0.0),
    ("mass_amu", "heavy"),
    ("resolved_threshold", 1.0),
])
def test_out_of_range_fields_are_named(path, value):
    data = yaml.safe_load(yaml.safe_dump(BORN))
    node = data
    *parents, leaf = path.split(".")
    for key in parents:
        node = node[key]
    node[leaf] = value
    with pytest.raises(ConfigInvalid) as err:
        config.validate(data)
    assert err.value.path == path


@pytest.mark.parametrize("path", ["extra", "grid.extra", "collapse.extra"])
def test_unknown_keys_are_rejected(path):
    data = yaml.safe_load(yaml.safe_dump(BORN))
    node = data
    *parents, leaf = path.split(".")
    for key in parents:
        node = node[key]
    node[leaf] = 1
    with pytest.raises(ConfigInvalid) as err:
        config.validate(data)
    assert err.value.path == path


def test_missing_and_unknown_kind():
    with pytest.raises(ConfigInvalid):
        config.validate({"seed": 1})
    with pytest.raises(ConfigInvalid):
        config.validate({"kind": "nope", "seed": 1})
    with pytest.raises(ConfigInvalid):
        config.validate([1, 2])


def test_dp_shape_fields_checked():
    base = {"kind": "dp_tau", "seed": 0, "separations": [0.0, 1e-9]}
    with pytest.raises(ConfigInvalid) as err:
        config.validate({**base, "shape": {"kind": "sphere", "mass": 1.0}})
    assert err.value.path == "shape.radius"
    with pytest.raises(ConfigInvalid) as err:
        config.validate({**base, "shape": {"kind": "gaussian", "mass": 1.0, "sigma": 1e-9,
                                           "radius": 1e-9}})
    assert err.value.path == "shape.radius"


def test_step_longer_than_horizon_rejected():
    data = {"kind": "energy_growth", "seed": 1, "grid": {"half_width": 1e-6, "n_points": 128},
            "mass_amu": 1e5, "state": {"width": 2e-7}, "collapse": {"lam": 1.0, "r_c": 1e-7},
            "sample_times": [1e-3, 2e-3], "dt": 5e-3, "trajectories": 4}
    with pytest.raises(ConfigInvalid) as err:
        config.validate(data)
    assert err.value.path == "dt"


def test_too_coarse_grid_is_a_config_error():
    data = {**BORN, "state": {**BORN["state"], "width": 1e-8}}
    with pytest.raises(ConfigInvalid) as err:
        cli.run(data)
    assert err.value.path.startswith("state")


def test_balanced_born_run_gives_half():
    res = cli.run({**BORN, "trajectories": 10_000})
    s = res.summary
    assert s["trajectories"] == 10_000
    assert abs(s["left_fraction"] - 0.5) < 3 * math.sqrt(0.25 / 10_000)


def test_identical_spheres_never_collapse():
    res = cli.run({"kind": "dp_tau", "seed": 0, "separations": [0.0],
                   "shape": {"kind": "sphere", "mass": 1e-21, "radius": 5e-9}})
    assert res.summary["longest_collapse_time"] == math.inf
    assert res.rows[0][1] == 0.0


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.run(BORN, out=a)
    cli.run(BORN, out=b)
    assert a.read_bytes() == b.read_bytes()


def test_worker_count_does_not_change_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.run({**BORN, "trajectories": 600, "workers": 1}, out=a)
    cli.run({**BORN, "trajectories": 600, "workers": 2}, out=b)
    # only the echoed worker count may differ
    strip = lambda p: [line for line in p.read_text().splitlines() if "workers" not in line]
    assert strip(a) == strip(b)
    assert parse_csv(a) == parse_csv(b)


def test_more_trajectories_keep_earlier_rows():
    few = cli.run({**BORN, "trajectories": 40})
    many = cli.run({**BORN, "trajectories": 300})
    assert few.rows == many.rows[:40]


def test_seed_override(tmp_path):
    res = cli.run(BORN, seed=99, out=tmp_path / "s.csv")
    assert res.seed == 99
    text = (tmp_path / "s.csv").read_text()
    assert "# seed: 99" in text


def test_output_paths(tmp_path):
    cfg = write_config(tmp_path / "bound.yaml", {
        "kind": "visibility_bound", "seed": 0, "r_c": 1e-7,
        "experiment": {"mass_amu": 1e4, "separation": 1e-7, "duration": 1e-3}})
    cli.run(cfg)
    assert (tmp_path / "bound.csv").exists()
    data = yaml.safe_load(cfg.read_text())
    data["output"] = "sub.csv"
    write_config(cfg, data)
    cli.run(cfg)
    assert (tmp_path / "sub.csv").exists()
    # the output field is not part of the provenance echo
    assert (tmp_path / "sub.csv").read_bytes() == (tmp_path / "bound.csv").read_bytes()


def test_exit_codes(tmp_path, capsys):
    ok = write_config(tmp_path / "ok.yaml", {
        "kind": "visibility_bound", "seed": 0, "r_c": 1e-7,
        "experiment": {"mass_amu": 1e4, "separation": 1e-7, "duration": 1e-3}})
    assert cli.main(["run", str(ok), "--quiet"]) == 0
    assert "lambda_upper" not in capsys.readouterr().out
    assert cli.main(["run", str(ok)]) == 0
    assert "lambda_upper" in capsys.readouterr().out

    bad = write_config(tmp_path / "bad.yaml", {"kind": "visibility_bound", "seed": 0,
                                               "r_c": 1e-7, "surprise": 1})
    assert cli.main(["run", str(bad), "--quiet"]) == 2
    assert "surprise" in capsys.readouterr().err

    broken = tmp_path / "broken.yaml"
    broken.write_text("kind: [unclosed\n")
    assert cli.main(["run", str(broken), "--quiet"]) == 2

    hopeless = write_config(tmp_path / "hopeless.yaml", {
        "kind": "visibility_bound", "seed": 0, "r_c": 1e-7,
        "experiment": {"mass_amu": 1.0, "separation": 1e-20, "duration": 1e-9}})
    assert cli.main(["run", str(hopeless), "--quiet"]) == 3
    assert "NoExclusion" in capsys.readouterr().err

    assert cli.main(["run", str(tmp_path / "missing.yaml"), "--quiet"]) == 4
    assert cli.main(["run", str(ok), "--quiet", "--out", str(tmp_path / "no" / "dir.csv")]) == 4


def test_plot_script_is_emitted(tmp_path):
    out = tmp_path / "born.csv"
    cli.run(BORN, out=out, emit_plot=True)
    script = tmp_path / "born_plot.py"
    assert script.exists()
    py_compile.compile(str(script), doraise=True)
    assert "born.csv" in script.read_text()


def test_csv_shape_for_sample_times(tmp_path):
    res = ExperimentResult("x", {"a": 1}, 3, ["time", "u", "v"],
                           [[1e-3, 0.5, 0.25], [2e-3, 0.4, 0.2], [3e-3, 0.3, 0.1]])
    emit_csv(res, tmp_path / "r.csv")
    summary, cols, rows = parse_csv(tmp_path / "r.csv")
    assert cols == ["time", "u", "v"]
    assert len(rows) == 3 and all(len(r) == 3 for r in rows)


def test_empty_result_is_header_only(tmp_path):
    res = ExperimentResult("x", {}, 0, ["a", "b"], [])
    emit_csv(res, tmp_path / "e.csv")
    body = [line for line in (tmp_path / "e.csv").read_text().splitlines()
            if not line.startswith("#")]
    assert body == ["a,b"]


@given(st.lists(st.floats(allow_nan=False), min_size=1, max_size=20))
def test_floats_round_trip_bit_exactly(values):
    import tempfile
    res = ExperimentResult("x", {}, 0, ["v"], [[v] for v in values], {"s": values[0]})
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "f.csv")
        emit_csv(res, path)
        summary, _, rows = parse_csv(path)
    back = [r[0] for r in rows]
    assert np.array_equal(np.array(back, dtype=float), np.array(values, dtype=float))
    assert float(summary["s"]) == values[0]


def test_cli_run_round_trips(tmp_path):
    out = tmp_path / "born.csv"
    res = cli.run(BORN, out=out)
    summary, cols, rows = parse_csv(out)
    assert cols == res.columns
    assert rows == res.rows
    assert summary["left_fraction"] == res.summary["left_fraction"]


def test_interrupted_write_leaves_target_alone(tmp_path, monkeypatch):
    target = tmp_path / "r.csv"
    target.write_text("previous\n")

    def boom(src, dst):
        raise KeyboardInterrupt

    monkeypatch.setattr(results.os, "replace", boom)
    with pytest.raises(KeyboardInterrupt):
        emit_csv(ExperimentResult("x", {}, 0, ["a"], [[1.0]]), target)
    assert target.read_text() == "previous\n"
    assert os.listdir(tmp_path) == ["r.csv"]


def test_render_matches_file(tmp_path):
    res = ExperimentResult("x", {"k": [1, 2]}, 4, ["a"], [[0.1]], {"m": 2.5})
    emit_csv(res, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == render(res)

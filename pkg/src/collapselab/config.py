"""Validation of experiment configs.

A config is a YAML mapping. Every section is checked against a small schema
before anything runs; unknown keys and out-of-range values raise
:class:`ConfigInvalid` naming the dotted field path.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass

import yaml

from .errors import ConfigInvalid

KINDS = (
    "grw_born",
    "grw_vs_master",
    "csl_vs_master",
    "amplification",
    "energy_growth",
    "dp_tau",
    "visibility_bound",
)

_REQUIRED = object()


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-7`` and ``1.0e4`` as floats.

    Plain YAML 1.1 insists on a dot and a signed exponent, so PyYAML would
    otherwise hand back strings for the way most people write SI values.
    """


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                  |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                  |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                  |[-+]?\.(?:inf|Inf|INF)
                  |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


@dataclass(frozen=True)
class Field:
    check: object  # callable(value, path) -> normalized value
    default: object = _REQUIRED


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigInvalid(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigInvalid(path, "must be finite")
    return value


def positive(value, path):
    value = _number(value, path)
    if not value > 0:
        raise ConfigInvalid(path, f"must be > 0, got {value!r}")
    return value


def non_negative(value, path):
    value = _number(value, path)
    if value < 0:
        raise ConfigInvalid(path, f"must be >= 0, got {value!r}")
    return value


def probability(value, path):
    value = _number(value, path)
    if not 0 <= value <= 1:
        raise ConfigInvalid(path, f"must lie in [0, 1], got {value!r}")
    return value


def open_unit(value, path):
    value = _number(value, path)
    if not 0 < value < 1:
        raise ConfigInvalid(path, f"must lie strictly between 0 and 1, got {value!r}")
    return value


def count(minimum=1):
    def check(value, path):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid(path, f"expected an integer, got {value!r}")
        if value < minimum:
            raise ConfigInvalid(path, f"must be >= {minimum}, got {value}")
        return value
    return check


def power_of_two(value, path):
    value = count(8)(value, path)
    if value & (value - 1):
        raise ConfigInvalid(path, f"must be a power of two, got {value}")
    return value


def seed(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigInvalid(path, f"expected an integer, got {value!r}")
    if not 0 <= value < 2**64:
        raise ConfigInvalid(path, "must be an unsigned 64-bit integer")
    return value


def choice(*options):
    def check(value, path):
        if value not in options:
            raise ConfigInvalid(path, f"must be one of {', '.join(options)}; got {value!r}")
        return value
    return check


def number_list(element=non_negative, min_length=1, increasing=False):
    def check(value, path):
        if not isinstance(value, list) or len(value) < min_length:
            raise ConfigInvalid(path, f"expected a list of at least {min_length} numbers")
        out = [element(v, f"{path}[{i}]") for i, v in enumerate(value)]
        if increasing and any(b <= a for a, b in zip(out, out[1:])):
            raise ConfigInvalid(path, "must be strictly increasing")
        return out
    return check


def vector3(value, path):
    if not isinstance(value, list) or len(value) != 3:
        raise ConfigInvalid(path, "expected a list of three coordinates")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def section(fields):
    def check(value, path):
        return validate_mapping(value, fields, path)
    return check


def validate_mapping(data, fields, path=""):
    where = path or "config"
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigInvalid(where, "expected a mapping")
    prefix = f"{path}." if path else ""
    for key in data:
        if key not in fields:
            raise ConfigInvalid(f"{prefix}{key}", "unknown key")
    out = {}
    for name, spec in fields.items():
        p = f"{prefix}{name}"
        if name in data:
            out[name] = spec.check(data[name], p)
        elif spec.default is _REQUIRED:
            raise ConfigInvalid(p, "required field is missing")
        elif isinstance(spec.default, dict):
            out[name] = spec.check(dict(spec.default), p)
        else:
            out[name] = spec.default
    return out


GRID = Field(section({"half_width": Field(positive), "n_points": Field(power_of_two)}))
COLLAPSE = Field(section({"lam": Field(non_negative), "r_c": Field(positive)}))

_COMMON = {
    "kind": Field(choice(*KINDS)),
    "seed": Field(seed),
    "output": Field(lambda v, p: _path(v, p), None),
    "workers": Field(count(1), None),
}


def _path(value, path):
    if not isinstance(value, str) or not value:
        raise ConfigInvalid(path, "expected a file path")
    return value


def _two_lobe_state(separation_check=positive):
    return Field(section({
        "weight_left": Field(probability, 0.5),
        "separation": Field(separation_check),
        "width": Field(positive),
    }))


_SCHEMAS = {
    "grw_born": {
        "grid": GRID,
        "mass_amu": Field(positive),
        "state": _two_lobe_state(),
        "collapse": COLLAPSE,
        "t_final": Field(positive),
        "dt": Field(positive),
        "trajectories": Field(count(1)),
        "resolved_threshold": Field(open_unit, 0.01),
    },
    "grw_vs_master": {
        "grid": GRID,
        "mass_amu": Field(positive),
        "state": _two_lobe_state(),
        "collapse": COLLAPSE,
        "sample_times": Field(number_list(positive, 1, increasing=True)),
        "dt": Field(positive),
        "master_dt": Field(positive),
        "trajectories": Field(count(1)),
    },
    "csl_vs_master": {
        "grid": GRID,
        "mass_amu": Field(positive),
        "state": _two_lobe_state(),
        "collapse": COLLAPSE,
        "sample_times": Field(number_list(positive, 1, increasing=True)),
        "dt": Field(positive),
        "master_dt": Field(positive),
        "trajectories": Field(count(1)),
        "batch_size": Field(count(1), 1024),
    },
    "amplification": {
        "grid": GRID,
        "mass_amu": Field(positive),
        "state": Field(section({"separation": Field(positive), "width": Field(positive)})),
        "collapse": COLLAPSE,
        "sample_times": Field(number_list(positive, 5, increasing=True)),
        "dt": Field(positive),
        "trajectories": Field(count(1)),
    },
    "energy_growth": {
        "grid": GRID,
        "mass_amu": Field(positive),
        "state": Field(section({"width": Field(positive)})),
        "collapse": COLLAPSE,
        "sample_times": Field(number_list(positive, 2, increasing=True)),
        "dt": Field(positive),
        "trajectories": Field(count(2)),
    },
    "dp_tau": {
        "shape": Field(section({
            "kind": Field(choice("sphere", "gaussian", "point_set")),
            "mass": Field(positive, None),
            "radius": Field(positive, None),
            "sigma": Field(positive, None),
            "masses": Field(number_list(positive, 1), None),
            "positions": Field(lambda v, p: _positions(v, p), None),
        })),
        "separations": Field(number_list(non_negative, 1)),
        "direction": Field(vector3, [1.0, 0.0, 0.0]),
    },
    "visibility_bound": {
        "experiment": Field(section({
            "mass_amu": Field(positive),
            "separation": Field(positive),
            "duration": Field(positive),
            "visibility_floor": Field(open_unit, 0.5),
        })),
        "r_c": Field(positive),
        "lambdas": Field(number_list(non_negative, 1), None),
    },
}


def _positions(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigInvalid(path, "expected a list of [x, y, z] positions")
    return [vector3(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _check_cross_fields(cfg):
    kind = cfg["kind"]
    if "sample_times" in cfg:
        horizon = cfg["sample_times"][-1]
        if cfg["dt"] > horizon:
            raise ConfigInvalid("dt", "must not exceed the last sample time")
    if kind == "dp_tau":
        shape = cfg["shape"]
        needed = {"sphere": ("mass", "radius"), "gaussian": ("mass", "sigma"),
                  "point_set": ("masses", "positions", "radius")}[shape["kind"]]
        for name in needed:
            if shape[name] is None:
                raise ConfigInvalid(f"shape.{name}", f"required for kind {shape['kind']}")
        for name in ("mass", "radius", "sigma", "masses", "positions"):
            if name not in needed and shape[name] is not None:
                raise ConfigInvalid(f"shape.{name}", f"not used by kind {shape['kind']}")
        if shape["kind"] == "point_set" and len(shape["masses"]) != len(shape["positions"]):
            raise ConfigInvalid("shape.positions", "needs one position per mass")
        if all(v == 0 for v in cfg["direction"]):
            raise ConfigInvalid("direction", "must be a non-zero vector")


def validate(data) -> dict:
    """Check a parsed config and return it with defaults filled in."""
    if not isinstance(data, dict):
        raise ConfigInvalid("config", "top level must be a mapping")
    if "kind" not in data:
        raise ConfigInvalid("kind", "required field is missing")
    kind = choice(*KINDS)(data["kind"], "kind")
    cfg = validate_mapping(data, {**_COMMON, **_SCHEMAS[kind]})
    _check_cross_fields(cfg)
    return cfg


def load(path) -> dict:
    """Read and validate a YAML config file.

    Raises ``OSError`` when the file cannot be read and :class:`ConfigInvalid`
    for malformed YAML or invalid contents.
    """
    with open(os.fspath(path), encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as err:
        raise ConfigInvalid("config", f"not valid YAML ({err})") from None
    return validate(data)

"""Experiment results and their CSV form.

A result file is UTF-8 text: a block of ``#`` comment lines (provenance and
summary), one header row, then data rows. Floats are written with 17
significant digits so that :func:`parse_csv` recovers them bit-exactly.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field

import yaml

from . import __version__


@dataclass
class ExperimentResult:
    kind: str
    config: dict
    seed: int
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    version: str = __version__


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    if hasattr(value, "item"):  # numpy scalar
        return format_value(value.item())
    return str(value)


def parse_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def render(result: ExperimentResult) -> str:
    """The exact text :func:`emit_csv` writes."""
    lines = [
        f"# collapselab {result.version}",
        f"# kind: {result.kind}",
        f"# seed: {result.seed}",
        "# config:",
    ]
    echo = yaml.safe_dump(result.config, sort_keys=True, default_flow_style=None)
    lines += [f"#   {line}" for line in echo.splitlines()]
    lines.append("# summary:")
    lines += [f"#   {key}: {format_value(value)}" for key, value in result.summary.items()]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(result.columns)
    for row in result.rows:
        if len(row) != len(result.columns):
            raise ValueError("row length does not match the header")
        writer.writerow([format_value(v) for v in row])
    return "\n".join(lines) + "\n" + buf.getvalue()


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".partial", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_csv(result: ExperimentResult, path) -> None:
    write_atomic(path, render(result))


def parse_csv(path):
    """Read a result file back: ``(summary, columns, rows)``.

    ``summary`` values and row cells are converted to ``int`` or ``float``
    where possible.
    """
    with open(os.fspath(path), encoding="utf-8", newline="") as fh:
        text = fh.read()
    comments, body = [], []
    for line in text.splitlines(keepends=True):
        (comments if line.startswith("#") and not body else body).append(line)
    summary = {}
    in_summary = False
    for line in comments:
        content = line[1:].rstrip("\n")
        if content.strip() == "summary:":
            in_summary = True
        elif in_summary and content.startswith("   "):
            key, _, value = content.strip().partition(": ")
            summary[key] = parse_value(value)
    reader = csv.reader(io.StringIO("".join(body)))
    columns = next(reader, [])
    rows = [[parse_value(cell) for cell in row] for row in reader]
    return summary, columns, rows


PLOT_TEMPLATE = '''"""Plot {csv_name} (written by collapselab; needs matplotlib)."""
import csv
import os
import sys

import matplotlib.pyplot as plt

PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), {csv_name!r})


def main(path=PATH):
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = [[float(v) for v in row] for row in reader]
    x = [r[0] for r in rows]
    fig, axes = plt.subplots(len(header) - 1, 1, sharex=True, squeeze=False,
                             figsize=(6, 2.2 * (len(header) - 1)))
    for j, ax in enumerate(axes[:, 0], start=1):
        ax.plot(x, [r[j] for r in rows], "o-", ms=3)
        ax.set_ylabel(header[j])
    axes[-1, 0].set_xlabel(header[0])
    axes[0, 0].set_title("{kind}")
    fig.tight_layout()
    out = path.rsplit(".", 1)[0] + ".png"
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main(*sys.argv[1:])
'''


def plot_script_path(csv_path) -> str:
    base, _ = os.path.splitext(os.fspath(csv_path))
    return base + "_plot.py"


def emit_plot_script(result: ExperimentResult, csv_path) -> str:
    """Write a standalone matplotlib script next to the CSV; returns its path."""
    target = plot_script_path(csv_path)
    text = PLOT_TEMPLATE.format(csv_name=os.path.basename(os.fspath(csv_path)), kind=result.kind)
    write_atomic(target, text)
    return target

"""
Writing run results to disk.

Layout of an output directory::

    norms.csv            one row per parabolic time level
    snapshots/           step_NNNNNN.csv every ``snapshot_stride`` levels
    report.json          configuration echo, Picard diagnostics, bound reports
    timing.json          wall-clock seconds (kept apart so report.json is reproducible)
    plot/norms.dat       whitespace-separated copy of norms.csv for gnuplot
    plot/u_final.dat     final fields, one ``x [y] value`` row per cell
    plot/w_final.dat

Floats are written with ``repr``, which round-trips exactly and makes the
files byte-identical across repeated runs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .coupling import CoupledRun
from .geometry import Field, discrete_norms

NORM_COLUMNS = ("time", "l1_u", "linf_u", "tv_u", "l1_w", "linf_w", "mass_u", "mass_w")


def _fmt(x) -> str:
    return repr(float(x))


def norm_rows(run: CoupledRun) -> list[tuple[float, ...]]:
    rows = []
    for t, u, w in zip(run.times, run.u_states, run.w_states):
        u, w = Field(run.grid, u), Field(run.grid, w)
        l1u, linfu, tvu = discrete_norms(u)
        l1w, linfw, _ = discrete_norms(w)
        rows.append((t, l1u, linfu, tvu, l1w, linfw, u.mass(), w.mass()))
    return rows


def write_norms(run: CoupledRun, path: Path) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(NORM_COLUMNS)
        for row in norm_rows(run):
            writer.writerow([_fmt(v) for v in row])
    return path


def snapshot_steps(steps: int, stride: int) -> list[int]:
    """Levels ``0, stride, 2 stride, ...`` up to ``steps``."""
    return list(range(0, steps + 1, stride))


def write_snapshot(path: Path, time: float, u: Field, w: Field) -> Path:
    """Long-format CSV: one row per cell, axis 0 running fastest."""
    grid = u.grid
    centers = grid.cell_centers().reshape(-1, grid.dimension, order="F")
    index = np.indices(grid.shape).reshape(grid.dimension, -1, order="F").T
    uf, wf = grid.flatten(u.values), grid.flatten(w.values)
    with open(path, "w", newline="") as fh:
        fh.write(f"# time={_fmt(time)}\n")
        fh.write("# dimension={} cells={} extents={} order=axis0-fastest\n".format(
            grid.dimension, "x".join(map(str, grid.cells_per_axis)),
            "x".join(_fmt(e) for e in grid.extents)))
        writer = csv.writer(fh, lineterminator="\n")
        axes = range(grid.dimension)
        writer.writerow(["index"] + [f"i{a}" for a in axes] + [f"x{a}" for a in axes] + ["u", "w"])
        for k in range(grid.cell_count):
            writer.writerow([k, *index[k].tolist(), *(_fmt(c) for c in centers[k]),
                             _fmt(uf[k]), _fmt(wf[k])])
    return path


def read_snapshot(path) -> tuple[float, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_snapshot` returning ``(time, u_flat, w_flat)``."""
    with open(path) as fh:
        time = float(fh.readline().split("=", 1)[1])
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
    return time, data[:, -2], data[:, -1]


def write_plot_field(path: Path, field: Field) -> Path:
    """gnuplot-friendly columns; rows of a 2D field are separated by blank lines."""
    grid = field.grid
    x = grid.cell_centers()
    with open(path, "w") as fh:
        if grid.dimension == 1:
            for i in range(grid.shape[0]):
                fh.write(f"{_fmt(x[i, 0])} {_fmt(field.values[i])}\n")
        else:
            for i in range(grid.shape[0]):
                for j in range(grid.shape[1]):
                    fh.write(f"{_fmt(x[i, j, 0])} {_fmt(x[i, j, 1])} {_fmt(field.values[i, j])}\n")
                fh.write("\n")
    return path


def build_report(run: CoupledRun, config_echo: dict, model: dict) -> dict:
    reports = [r.to_dict() for r in run.reports]
    failed = [r.name for r in run.reports if not r.passed]
    return {
        "config": config_echo,
        "model": model,
        "grid": {"dimension": run.grid.dimension, "extents": list(run.grid.extents),
                 "cells": list(run.grid.cells_per_axis)},
        "steps": run.steps,
        "final_time": run.times[-1],
        "picard": [d.to_dict() for d in run.diagnostics],
        "reports": reports,
        "summary": {"checks": len(reports), "failed": failed, "passed": not failed},
    }


def write_json(path: Path, payload: dict) -> Path:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def emit_outputs(run: CoupledRun, out_dir, config_echo: dict, model: dict | None = None,
                 snapshot_stride: int = 10, wall_clock: float | None = None) -> list[Path]:
    """Write every output file of a coupled run into ``out_dir``.

    ``model`` is a JSON-ready description of the scenario copied into the
    report; ``wall_clock`` (seconds) goes to ``timing.json``.
    """
    model = {} if model is None else model
    out = Path(out_dir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    (out / "plot").mkdir(exist_ok=True)
    for stale in (out / "snapshots").glob("step_*.csv"):
        stale.unlink()
    written = [write_norms(run, out / "norms.csv")]
    for k in snapshot_steps(run.steps, snapshot_stride):
        written.append(write_snapshot(out / "snapshots" / f"step_{k:06d}.csv", run.times[k],
                                      Field(run.grid, run.u_states[k]),
                                      Field(run.grid, run.w_states[k])))
    written.append(write_json(out / "report.json", build_report(run, config_echo, model)))
    if wall_clock is not None:
        written.append(write_json(out / "timing.json", {"wall_clock_seconds": wall_clock}))
    with open(out / "plot" / "norms.dat", "w") as fh:
        fh.write("# " + " ".join(NORM_COLUMNS) + "\n")
        for row in norm_rows(run):
            fh.write(" ".join(_fmt(v) for v in row) + "\n")
    written.append(out / "plot" / "norms.dat")
    written.append(write_plot_field(out / "plot" / "u_final.dat", run.final.u))
    written.append(write_plot_field(out / "plot" / "w_final.dat", run.final.w))
    return written

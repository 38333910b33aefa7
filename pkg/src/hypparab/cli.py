"""
Command line entry point.

``hypparab run CONFIG``       coupled run, writes the output directory
``hypparab verify CONFIG``    randomized 1D bound suite
``hypparab converge CONFIG``  dyadic refinement study of the configured scenario
``hypparab presets``          list the scenario presets

The exit status is 0 when every enabled check passes, 1 when a check fails
or a solver gives up, and 2 on configuration errors. The environment
variable ``HYPPARAB_OUTPUT_DIR`` overrides ``run.output_dir``.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

from . import presets
from .config import RunConfig, build_scenario, parse_config
from .coupling import run_coupled
from .errors import ConfigurationError, HypParabError
from .geometry import build_grid
from .output import emit_outputs, write_json
from .verify import randomized_bound_suite, refinement_study


def _output_dir(config: RunConfig, override: str | None) -> Path:
    return Path(override) if override else config.resolved_output_dir()


def cmd_run(config: RunConfig, out: Path) -> int:
    scenario = build_scenario(config)
    grid = config.grid()
    start = time.perf_counter()
    run = run_coupled(scenario.u0, scenario.w0, scenario.model, config.T, grid,
                      config.picard, checks=config.checks)
    elapsed = time.perf_counter() - start
    model = {"name": scenario.name, "parameters": scenario.parameters}
    emit_outputs(run, out, config.echo(), model, config.snapshot_stride, elapsed)
    for rep in run.reports:
        print(f"{rep.name:24s} ratio={rep.ratio:.6g} {'pass' if rep.passed else 'FAIL'}")
    passed = all(rep.passed for rep in run.reports)
    print(f"{run.steps} steps in {elapsed:.1f} s, output in {out}")
    return 0 if passed else 1


def cmd_verify(config: RunConfig, out: Path) -> int:
    suite = randomized_bound_suite(config.verify_instances, config.verify_cells,
                                   config.verify_T, config.seed)
    worst: dict[str, float] = {}
    for inst in suite:
        for rep in inst.reports:
            worst[rep.name] = max(worst.get(rep.name, 0.0), rep.ratio)
    failed = [inst.index for inst in suite if not inst.passed]
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "verify.json", {
        "instances": len(suite), "cells": config.verify_cells, "T": config.verify_T,
        "seed": config.seed, "worst_ratio": worst, "failed_instances": failed,
        "passed": not failed})
    for name, ratio in worst.items():
        print(f"{name:32s} worst ratio={ratio:.6g}")
    print(f"{len(suite) - len(failed)}/{len(suite)} instances pass")
    return 0 if not failed else 1


def cmd_converge(config: RunConfig, out: Path) -> int:
    grids, finals = [], []
    for level in range(config.converge_levels):
        cells = [n * 2 ** level for n in config.cells]
        grid = build_grid(config.dimension, config.extents, cells)
        scenario = build_scenario(config, grid)
        run = run_coupled(scenario.u0, scenario.w0, scenario.model, config.T, grid,
                          config.picard, checks=[])
        grids.append(grid)
        finals.append((run.final.u.values, run.final.w.values))
        print(f"cells {'x'.join(map(str, cells))}: done")
    study = refinement_study(finals, grids, config.converge_min_factor)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "converge.json", study.to_dict())
    for cells, diff in zip(study.cells, study.differences):
        print(f"{'x'.join(map(str, cells))} vs next: L1 difference {diff:.6g}")
    for f in study.factors:
        print(f"reduction factor {f:.4g} (need >= {study.min_factor})")
    return 0 if study.passed else 1


def cmd_presets() -> int:
    for name in presets.PRESET_NAMES:
        print(f"{name:10s} {presets.DESCRIPTIONS[name]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypparab", description=__doc__.splitlines()[1])
    parser.add_argument("-v", "--verbose", action="store_true", help="log Picard progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "coupled run"), ("verify", "randomized bound suite"),
                       ("converge", "refinement study")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="TOML configuration file")
        p.add_argument("-o", "--output-dir", help="overrides the configured output directory")
    sub.add_parser("presets", help="list scenario presets")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets":
        return cmd_presets()
    try:
        config, _ = parse_config(args.config)
        out = _output_dir(config, args.output_dir)
        command = {"run": cmd_run, "verify": cmd_verify, "converge": cmd_converge}
        return command[args.command](config, out)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (HypParabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

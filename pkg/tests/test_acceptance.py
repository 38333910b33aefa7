"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records a one-line verdict that is printed in the terminal
summary, so ``pytest tests/test_acceptance.py`` ends with one pass/fail
line per criterion.
"""

import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from hypparab.cli import main
from hypparab.coupling import PicardConfig, run_coupled
from hypparab.geometry import Field, build_grid
from hypparab.parabolic import (DiffusionCoefficients, NeumannKernel1D, diffusion_step,
                                representation_residual, simulate_diffusion)
from hypparab.presets import chase, decoupled, escape
from hypparab.verify import randomized_bound_suite, refinement_study, stability_experiment

pytestmark = pytest.mark.slow

CHASE_CONFIG = """
[grid]
dimension = 2
extents = [1.0, 1.0]
cells = [64, 64]

[run]
T = 1.0
dt_parabolic = 0.01
snapshot_stride = 10

[model]
preset = "chase"
drift = 0.5
horizon = 0.2
"""


def cosine_error(n, dt, T, mu=0.1):
    """Max cell error of the Neumann heat solve against exact cell averages."""
    g = build_grid(1, [1.0], [n])
    f = g.faces(0)
    avg = (np.sin(np.pi * f[1:]) - np.sin(np.pi * f[:-1])) / (np.pi * g.spacing[0])
    traj = simulate_diffusion(Field(g, avg), lambda t: DiffusionCoefficients.zeros(g, mu),
                              T, dt=dt)
    return float(np.abs(traj.final.values - avg * np.exp(-mu * np.pi ** 2 * T)).max())


def test_parabolic_convergence(record_criterion):
    start = time.perf_counter()
    cells = (32, 64, 128, 256)
    space = [cosine_error(n, 0.5 / n ** 2, 0.1) for n in cells]
    dts = (0.02, 0.01, 0.005, 0.0025)
    timing = [cosine_error(256, dt, 0.5) for dt in dts]
    elapsed = time.perf_counter() - start
    p_space = np.log2(np.array(space[:-1]) / space[1:])
    p_time = np.log2(np.array(timing[:-1]) / timing[1:])
    ok = p_space.min() >= 1.9 and p_time.min() >= 0.9 and elapsed < 60
    record_criterion(1, "parabolic convergence", ok,
                     f"spatial orders {np.round(p_space, 3).tolist()}, temporal orders "
                     f"{np.round(p_time, 3).tolist()}, {elapsed:.1f} s")
    assert ok


def test_representation_formula(record_criterion):
    g = build_grid(1, [1.0], [256])
    x = g.centers(0)
    mu = 0.1
    kernel = NeumannKernel1D(1.0, mu, image_terms=20)
    w0 = Field(g, np.cos(np.pi * x))
    residuals = {}
    for amplitude in (0.0, 0.5):
        B = amplitude * np.cos(np.pi * x)
        traj = simulate_diffusion(
            w0, lambda t: DiffusionCoefficients(mu, Field(g, B), Field.zeros(g)), 0.05, dt=1e-4)
        residuals[amplitude] = representation_residual(
            traj, w0, (lambda t: B) if amplitude else None, None, kernel,
            probe_times=[100, 250, 500])
    worst = max(residuals.values())
    ok = worst <= 2e-2
    record_criterion(2, "representation formula", ok,
                     f"max residual B=0: {residuals[0.0]:.2e}, B=0.5cos: {residuals[0.5]:.2e}")
    assert ok


def test_conservation_and_positivity(record_criterion):
    rng = np.random.default_rng(3)
    g = build_grid(2, [1.0, 1.0], [64, 64])
    w = Field(g, rng.uniform(size=g.shape))
    worst_mass = 0.0
    for _ in range(20):
        nxt = diffusion_step(w, DiffusionCoefficients.zeros(g, 0.05), 0.01)
        worst_mass = max(worst_mass, abs(nxt.mass() - w.mass()) / w.mass())
        w = nxt
    minima = {}
    g2 = build_grid(2, [1.0, 1.0], [32, 32])
    for builder in (chase, escape, decoupled):
        p = builder(g2)
        run = run_coupled(p.u0, p.w0, p.model, 1.0, g2)
        minima[p.name] = min(min(float(s.min()) for s in run.u_states),
                             min(float(s.min()) for s in run.w_states),
                             float(np.min(run.transport.states)))
    ok = worst_mass <= 1e-10 and min(minima.values()) >= -1e-12
    record_criterion(3, "conservation and positivity", ok,
                     f"worst relative mass change per step {worst_mass:.1e}, "
                     f"lowest cell value {min(minima.values()):.1e}")
    assert ok


def test_bound_suite(record_criterion):
    start = time.perf_counter()
    suite = randomized_bound_suite(instances=100, cells=32, T=0.5, seed=0)
    elapsed = time.perf_counter() - start
    ratios = [r.ratio for inst in suite for r in inst.reports]
    worst = max(ratios)
    ok = worst <= 1 + 1e-8 and elapsed < 300 and len(suite) == 100
    record_criterion(4, "randomized bound suite", ok,
                     f"{len(ratios)} reports over {len(suite)} instances, worst ratio "
                     f"{worst:.10f}, {elapsed:.1f} s")
    assert ok


@pytest.fixture(scope="module")
def chase_outputs(tmp_path_factory):
    """Two CLI runs of the 64x64 chase preset: default threads and one thread."""
    base = tmp_path_factory.mktemp("chase")
    config = base / "chase.toml"
    config.write_text(CHASE_CONFIG)
    start = time.perf_counter()
    codes = [main(["run", str(config), "-o", str(base / "first")])]
    elapsed = time.perf_counter() - start
    with threadpool_limits(limits=1):
        codes.append(main(["run", str(config), "-o", str(base / "second")]))
    return base, codes, elapsed


def test_picard_contraction(chase_outputs, record_criterion):
    import json
    base, codes, elapsed = chase_outputs
    report = json.loads((base / "first" / "report.json").read_text())
    windows = report["picard"]
    worst_ratio = max(max(w["ratios"]) for w in windows)
    worst_residual = max(w["fixed_point_residual"] for w in windows)
    tol = report["config"]["picard_tol"]
    ok = (worst_ratio <= 0.9 and worst_residual <= 2 * tol and elapsed < 600
          and all(w["converged"] for w in windows))
    record_criterion(5, "Picard contraction", ok,
                     f"{len(windows)} windows, worst ratio {worst_ratio:.3f}, worst re-solve "
                     f"residual {worst_residual:.1e} <= {2 * tol:.0e}, {elapsed:.1f} s")
    assert ok
    assert codes[0] == 0


def test_stability_scaling(record_criterion):
    g = build_grid(2, [1.0, 1.0], [32, 32])
    p = chase(g)
    sizes = [1e-2, 1e-3, 1e-4]
    tables = [stability_experiment(p.model, kind, sizes, p.u0, p.w0, 1.0, PicardConfig())
              for kind in ("initial", "source_a", "source_b")]
    ok = all(t.relative_residual <= 0.05 and t.constant_spread <= 0.2 for t in tables)
    detail = ", ".join(f"{t.kind}: slope {t.slope:.3f} residual {t.relative_residual:.1e} "
                       f"spread {t.constant_spread:.1e}" for t in tables)
    record_criterion(6, "stability scaling", ok, detail)
    assert ok


def test_refinement(record_criterion):
    grids, finals = [], []
    for n in (32, 64, 128):
        g = build_grid(2, [1.0, 1.0], [n, n])
        p = chase(g)
        run = run_coupled(p.u0, p.w0, p.model, 1.0, g, PicardConfig(), checks=[])
        grids.append(g)
        finals.append((run.final.u.values, run.final.w.values))
    study = refinement_study(finals, grids, min_factor=1.5)
    record_criterion(7, "self-consistency under refinement", study.passed,
                     f"L1 differences {[f'{d:.3e}' for d in study.differences]}, "
                     f"reduction factor {study.factors[0]:.3f}")
    assert study.passed


def test_determinism(chase_outputs, record_criterion):
    base, codes, _ = chase_outputs
    same = {name: (base / "first" / name).read_bytes() == (base / "second" / name).read_bytes()
            for name in ("norms.csv", "report.json")}
    ok = all(same.values()) and codes == [0, 0]
    record_criterion(8, "determinism", ok,
                     "byte-identical norms.csv and report.json with default and single "
                     f"BLAS threads: {same}")
    assert ok

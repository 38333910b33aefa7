"""
A-priori and stability estimates evaluated on discrete trajectories.

Every inequality ``lhs <= rhs`` becomes a :class:`BoundReport`. Time
integrals of coefficient norms are left-endpoint sums over the steps, which
matches the coefficients the solvers actually froze at the start of each
step. Where an estimate carries an unspecified constant, the discrete
constant 1 (exact for the monotone schemes used here) is plugged in.
Checks that hold at every time keep the worst time instance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .geometry import Field, Grid, l1_norm, total_variation
from .hyperbolic import TransportTrajectory
from .parabolic import DiffusionTrajectory

SINGLE_TOL = 1e-10
PAIRED_TOL = 1e-8
POSITIVITY_FLOOR = 1e-12

COUPLED_CHECKS = (
    "hyperbolic_l1",
    "hyperbolic_linf",
    "parabolic_l1",
    "parabolic_gradient",
    "positivity_u",
    "positivity_w",
    "picard_contraction",
    "picard_fixed_point",
)


@dataclass(frozen=True)
class BoundReport:
    name: str
    lhs: float
    rhs: float
    ratio: float
    passed: bool
    tolerance: float
    time: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def make_report(name: str, lhs: float, rhs: float, tolerance: float,
                time: float | None = None) -> BoundReport:
    lhs, rhs = float(lhs), float(rhs)
    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = 0.0 if lhs <= 0 else math.inf
    return BoundReport(name, lhs, rhs, ratio, ratio <= 1.0 + tolerance, tolerance,
                       None if time is None else float(time))


def _worst(name, lhs, rhs, times, tolerance) -> BoundReport:
    """Report at the time with the largest ratio.

    The initial time is skipped when later times exist, since there both
    sides coincide by construction and the ratio is trivially one.
    """
    reports = [make_report(name, l, r, tolerance, t) for l, r, t in zip(lhs, rhs, times)]
    if len(reports) > 1:
        reports = reports[1:]
    return max(reports, key=lambda rep: rep.ratio)


def _cumulative(dts: np.ndarray, per_step: np.ndarray) -> np.ndarray:
    """Left-endpoint integrals ``int_0^{t_k}`` at every stored time."""
    return np.concatenate([[0.0], np.cumsum(dts * per_step)])


# -- single trajectories -------------------------------------------------------


def check_hyperbolic_bounds(traj: TransportTrajectory,
                            tolerance: float = SINGLE_TOL) -> list[BoundReport]:
    """L1 and L-infinity a-priori bounds for one transport run."""
    dts = traj.dts
    int_A = _cumulative(dts, traj.A_inf)
    int_a1 = _cumulative(dts, traj.a_l1)
    int_ainf = _cumulative(dts, traj.a_inf)
    int_div = _cumulative(dts, traj.div_inf)
    l1 = traj.l1_norms()
    linf = traj.linf_norms()
    rhs_l1 = (l1[0] + int_a1) * np.exp(int_A)
    rhs_linf = (linf[0] + int_ainf) * np.exp(int_A + int_div)
    return [_worst("hyperbolic_l1", l1, rhs_l1, traj.times, tolerance),
            _worst("hyperbolic_linf", linf, rhs_linf, traj.times, tolerance)]


def check_parabolic_bounds(traj: DiffusionTrajectory,
                           tolerance: float = SINGLE_TOL) -> list[BoundReport]:
    """L1 a-priori bound and the gradient-mass bound for one diffusion run."""
    dts = traj.dts
    int_B = _cumulative(dts, traj.B_inf)
    int_b = _cumulative(dts, traj.b_l1)
    l1 = traj.l1_norms()
    rhs = (l1[0] + int_b) * np.exp(int_B)
    grad = traj.gradient_l1()
    # implicit diffusion acts on the new level of each step
    lhs_grad = traj.mu * float(np.sum(dts * grad[1:]))
    rhs_grad = int_B[-1] * float(l1.max()) + int_b[-1] + l1[0]
    return [_worst("parabolic_l1", l1, rhs, traj.times, tolerance),
            make_report("parabolic_gradient", lhs_grad, rhs_grad, tolerance,
                        traj.times[-1])]


# -- paired runs ---------------------------------------------------------------


def _coefficient_gap(c1, c2, attr: str, norm: str, grid: Grid) -> np.ndarray:
    if c1 is None or c2 is None:
        raise ValueError("paired checks on coefficients need record_coefficients=True")
    out = []
    for x, y in zip(c1, c2):
        diff = getattr(x, attr).values - getattr(y, attr).values
        out.append(float(np.abs(diff).max()) if norm == "inf" else l1_norm(diff, grid))
    return np.array(out)


def _state_gap(t1, t2) -> np.ndarray:
    if len(t1.times) != len(t2.times) or not np.allclose(t1.times, t2.times):
        raise ValueError("paired trajectories must share their time levels")
    return np.array([l1_norm(a - b, t1.grid) for a, b in zip(t1.states, t2.states)])


def check_parabolic_pair(traj1: DiffusionTrajectory, traj2: DiffusionTrajectory,
                         kind: str, tolerance: float = PAIRED_TOL) -> BoundReport:
    """Stability of the diffusion problem for two runs differing in one datum.

    ``kind`` is ``"initial"`` (different initial data), ``"reaction"``
    (different reaction rate ``B``) or ``"source"`` (different ``b``).
    """
    grid = traj1.grid
    dts = traj1.dts
    gap = _state_gap(traj1, traj2)
    if kind == "initial":
        rhs = gap[0] * np.exp(_cumulative(dts, traj1.B_inf))
        name = "parabolic_initial_stability"
    elif kind == "reaction":
        dB = _cumulative(dts, _coefficient_gap(traj1.coefficients, traj2.coefficients,
                                               "B", "inf", grid))
        growth = np.exp(_cumulative(dts, traj1.B_inf) + _cumulative(dts, traj2.B_inf))
        data = l1_norm(traj1.states[0], grid) + _cumulative(dts, traj1.b_l1)
        rhs = growth * data * dB
        name = "parabolic_reaction_stability"
    elif kind == "source":
        db = _cumulative(dts, _coefficient_gap(traj1.coefficients, traj2.coefficients,
                                               "b", "l1", grid))
        rhs = np.exp(_cumulative(dts, traj1.B_inf)) * db
        name = "parabolic_source_stability"
    else:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    return _worst(name, gap, rhs, traj1.times, tolerance)


def check_hyperbolic_pair(traj1: TransportTrajectory, traj2: TransportTrajectory,
                          kind: str, tolerance: float = PAIRED_TOL) -> BoundReport:
    """Stability of the transport problem for two runs with the same velocity.

    ``kind`` is ``"initial"`` (different initial data) or ``"sources"``
    (same initial datum, different ``A`` and ``a``). For ``"sources"`` the
    L-infinity-in-space norm of ``a1`` is converted to L1 with the domain
    volume.
    """
    grid = traj1.grid
    dts = traj1.dts
    gap = _state_gap(traj1, traj2)
    if kind == "initial":
        rhs = gap[0] * np.exp(_cumulative(dts, traj1.A_inf))
        name = "hyperbolic_initial_stability"
    elif kind == "sources":
        int_A1 = _cumulative(dts, traj1.A_inf)
        int_A2 = _cumulative(dts, traj2.A_inf)
        dA = _cumulative(dts, _coefficient_gap(traj1.coefficients, traj2.coefficients,
                                               "A", "inf", grid))
        da = _cumulative(dts, _coefficient_gap(traj1.coefficients, traj2.coefficients,
                                               "a", "l1", grid))
        data = l1_norm(traj1.states[0], grid) + grid.volume * _cumulative(dts, traj1.a_inf)
        rhs = np.exp(np.maximum(int_A1, int_A2)) * data * dA + np.exp(int_A2) * da
        name = "hyperbolic_source_stability"
    else:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    return _worst(name, gap, rhs, traj1.times, tolerance)


# -- coupled runs ----------------------------------------------------------------


def positivity_report(name: str, states: Sequence[np.ndarray], times) -> BoundReport:
    """``max(-min u, 0) <= POSITIVITY_FLOOR`` over all stored states."""
    mins = np.array([float(s.min()) for s in states])
    k = int(np.argmin(mins))
    return make_report(name, max(-mins[k], 0.0) + 0.0, POSITIVITY_FLOOR, 0.0, times[k])


def positivity_applies(model, u0: Field, w0: Field, times) -> bool:
    """Whether the data meet the sign conditions that make both densities nonnegative."""
    return (model.k_beta is not None and float(u0.values.min()) >= 0
            and float(w0.values.min()) >= 0
            and model.sources_nonnegative(u0.grid, times))


def coupled_reports(run, model, u0: Field, w0: Field, config,
                    checks: Sequence[str] | None = None) -> list[BoundReport]:
    """Bound reports for a coupled run, one per selected check."""
    if checks is None:
        checks = [c for c in COUPLED_CHECKS
                  if not c.startswith("positivity")
                  or positivity_applies(model, u0, w0, run.times)]
    unknown = set(checks) - set(COUPLED_CHECKS)
    if unknown:
        raise ValueError(f"unknown checks {sorted(unknown)}")
    out: dict[str, BoundReport] = {}
    if "hyperbolic_l1" in checks or "hyperbolic_linf" in checks:
        for rep in check_hyperbolic_bounds(run.transport):
            out[rep.name] = rep
    if "parabolic_l1" in checks or "parabolic_gradient" in checks:
        for rep in check_parabolic_bounds(run.diffusion):
            out[rep.name] = rep
    out["positivity_u"] = positivity_report("positivity_u", run.transport.states,
                                            run.transport.times)
    out["positivity_w"] = positivity_report("positivity_w", run.diffusion.states,
                                            run.diffusion.times)
    ratios = [r for d in run.diagnostics for r in d.ratios]
    worst_ratio = max(ratios) if ratios else 0.0
    from .coupling import CONTRACTION_THRESHOLD
    out["picard_contraction"] = make_report("picard_contraction", worst_ratio,
                                            CONTRACTION_THRESHOLD, 0.0)
    residuals = [d.fixed_point_residual for d in run.diagnostics
                 if d.fixed_point_residual is not None]
    if "picard_fixed_point" in checks and residuals:
        out["picard_fixed_point"] = make_report("picard_fixed_point", max(residuals),
                                                2.0 * config.picard_tol, 0.0)
    return [out[name] for name in checks if name in out]


# -- stability experiments ------------------------------------------------------------


@dataclass
class StabilityTable:
    kind: str
    sizes: list[float]
    perturbation_norms: list[float]
    distances: list[float]
    constants: list[float]
    slope: float
    relative_residual: float
    constant_spread: float
    linear: bool

    def to_dict(self) -> dict:
        return asdict(self)


PERTURBATION_KINDS = ("initial_u", "initial_w", "initial", "source_a", "source_b")


def default_direction(grid: Grid) -> Field:
    """Smooth nonnegative bump with unit L1 norm, centered in the domain."""
    x = grid.cell_centers()
    center = np.array(grid.extents) / 2
    radius = 0.25 * min(grid.extents)
    r = np.sqrt(np.sum((x - center) ** 2, axis=-1)) / radius
    bump = np.where(r < 1, np.cos(0.5 * np.pi * np.minimum(r, 1.0)) ** 2, 0.0)
    return Field(grid, bump / l1_norm(bump, grid))


def stability_experiment(model, kind: str, sizes: Sequence[float], u0: Field, w0: Field,
                         T: float, config, direction: Field | None = None,
                         linear_tol: float = 0.05, spread_tol: float = 0.2
                         ) -> StabilityTable:
    """Distance between a reference run and runs with perturbed data.

    The perturbation is ``size * direction`` added to the datum selected by
    ``kind``; source perturbations are constant in time. The reported
    distance is the L1 distance of ``(u, w)`` at ``T``, the perturbation
    norm the L1 norm of the perturbation (over ``[0, T] x Omega`` for
    sources), and the slope the least-squares fit ``distance = slope * norm``.
    The scaling counts as linear when the fit's relative residual is at
    most ``linear_tol`` and the implied constants of the two smallest sizes
    differ by at most ``spread_tol``.
    """
    from dataclasses import replace

    from .coupling import run_coupled

    if kind not in PERTURBATION_KINDS:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    sizes = [float(s) for s in sizes]
    if len(sizes) < 3 or any(s < 0 for s in sizes) or any(
            b >= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be at least three decreasing nonnegative values")
    grid = u0.grid
    phi = default_direction(grid) if direction is None else direction
    phi_norm = l1_norm(phi.values, grid)

    def perturbed(delta):
        u, w, m = u0, w0, model
        if kind in ("initial_u", "initial"):
            u = Field(grid, u0.values + delta * phi.values)
        if kind in ("initial_w", "initial"):
            w = Field(grid, w0.values + delta * phi.values)
        if kind == "source_a":
            m = replace(model, a=_shifted(model.a, delta * phi.values))
        if kind == "source_b":
            m = replace(model, b=_shifted(model.b, delta * phi.values))
        return run_coupled(u, w, m, T, grid, config, checks=[]).final

    reference = run_coupled(u0, w0, model, T, grid, config, checks=[]).final
    distances, norms = [], []
    for delta in sizes:
        end = perturbed(delta)
        distances.append(l1_norm(end.u.values - reference.u.values, grid)
                         + l1_norm(end.w.values - reference.w.values, grid))
        scale = 2.0 if kind == "initial" else (T if kind.startswith("source") else 1.0)
        norms.append(delta * phi_norm * scale)
    x = np.array(norms)
    y = np.array(distances)
    slope = float(x @ y / (x @ x)) if x @ x > 0 else 0.0
    resid = float(np.linalg.norm(y - slope * x) / np.linalg.norm(y)) if y.any() else 0.0
    constants = [d / n if n > 0 else 0.0 for d, n in zip(distances, norms)]
    c1, c2 = constants[-2], constants[-1]
    spread = abs(c1 - c2) / max(abs(c1), abs(c2)) if max(abs(c1), abs(c2)) > 0 else 0.0
    return StabilityTable(kind, sizes, norms, distances, constants, slope, resid, spread,
                          resid <= linear_tol and spread <= spread_tol)


def _shifted(fn, extra: np.ndarray):
    def shifted(t, x):
        base = 0.0 if fn is None else fn(t, x)
        return base + extra
    return shifted


# -- randomized bound suite ----------------------------------------------------------


RANDOM_SUITE_CHECKS = (
    "hyperbolic_l1",
    "hyperbolic_linf",
    "hyperbolic_initial_stability",
    "hyperbolic_source_stability",
    "parabolic_l1",
    "parabolic_initial_stability",
    "parabolic_reaction_stability",
    "parabolic_source_stability",
)


@dataclass
class SuiteInstance:
    index: int
    reports: list[BoundReport]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


def _random_profile(rng: np.random.Generator, x: np.ndarray, modes: int = 4) -> np.ndarray:
    """Smooth signed profile with at most unit amplitude."""
    out = np.zeros_like(x)
    for m in range(1, modes + 1):
        a, b = rng.normal(size=2) / m
        out += a * np.cos(m * np.pi * x) + b * np.sin(m * np.pi * x)
    return out / max(float(np.abs(out).max()), 1e-12)


def _random_bv(rng: np.random.Generator, x: np.ndarray) -> np.ndarray:
    """Signed piecewise constant plus a smooth bump."""
    jumps = np.sort(rng.uniform(x.min(), x.max(), size=4))
    levels = rng.normal(size=5)
    out = levels[np.searchsorted(jumps, x)]
    c, r = rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.2)
    out += rng.uniform(0.5, 2.0) * np.where(np.abs(x - c) < r,
                                            np.cos(0.5 * np.pi * (x - c) / r) ** 2, 0.0)
    return out


def random_instance(seed: int, index: int, cells: int = 32, T: float = 0.5,
                    dt_parabolic: float = 0.01, tolerance: float = PAIRED_TOL
                    ) -> SuiteInstance:
    """One randomized 1D transport problem and one diffusion problem with paired runs.

    Transport rates ``A`` are constant in time so that the two runs of the
    source pair have time-constant norms; velocities and sources oscillate
    in time.
    """
    from .geometry import VectorField, build_grid
    from .hyperbolic import TransportCoefficients, simulate_transport
    from .parabolic import DiffusionCoefficients, simulate_diffusion

    rng = np.random.default_rng([seed, index])
    grid = build_grid(1, [1.0], [cells])
    x = grid.centers(0)
    vel = rng.uniform(0.2, 2.0) * _random_profile(rng, x)
    A1 = rng.uniform(0.0, 1.5) * _random_profile(rng, x)
    A2 = A1 + rng.uniform(0.01, 0.3) * _random_profile(rng, x)
    a1 = rng.uniform(0.0, 1.0) * _random_profile(rng, x)
    a2 = a1 + rng.uniform(0.01, 0.3) * _random_profile(rng, x)
    omega = rng.uniform(0.5, 3.0)
    u0 = _random_bv(rng, x)
    du0 = rng.uniform(0.01, 0.5) * _random_bv(rng, x)

    def transport(A, a):
        def provider(t):
            s = 1.0 + 0.5 * np.sin(2 * np.pi * omega * t)
            return TransportCoefficients(VectorField(grid, (s * vel)[:, None]),
                                         Field(grid, A), Field(grid, s * a))
        return provider

    dt_h = 0.5 * grid.spacing[0] / (1.5 * max(float(np.abs(vel).max()), 1e-12))
    run = lambda u, A, a: simulate_transport(Field(grid, u), transport(A, a), T, dt=dt_h,
                                             record_coefficients=True)
    h1 = run(u0, A1, a1)
    reports = check_hyperbolic_bounds(h1, tolerance)
    reports.append(check_hyperbolic_pair(h1, run(u0 + du0, A1, a1), "initial", tolerance))
    reports.append(check_hyperbolic_pair(h1, run(u0, A2, a2), "sources", tolerance))

    mu = rng.uniform(0.01, 0.2)
    B1 = rng.uniform(0.0, 2.0) * _random_profile(rng, x)
    B2 = B1 + rng.uniform(0.01, 0.3) * _random_profile(rng, x)
    b1 = rng.uniform(0.0, 1.0) * _random_profile(rng, x)
    b2 = b1 + rng.uniform(0.01, 0.3) * _random_profile(rng, x)
    w0 = _random_bv(rng, x)
    dw0 = rng.uniform(0.01, 0.5) * _random_bv(rng, x)

    def diffusion(B, b):
        def provider(t):
            s = 1.0 + 0.5 * np.cos(2 * np.pi * omega * t)
            return DiffusionCoefficients(mu, Field(grid, s * B), Field(grid, s * b))
        return provider

    prun = lambda w, B, b: simulate_diffusion(Field(grid, w), diffusion(B, b), T,
                                              dt=dt_parabolic, record_coefficients=True)
    p1 = prun(w0, B1, b1)
    reports.append(check_parabolic_bounds(p1, tolerance)[0])
    reports.append(check_parabolic_pair(p1, prun(w0 + dw0, B1, b1), "initial", tolerance))
    reports.append(check_parabolic_pair(p1, prun(w0, B2, b1), "reaction", tolerance))
    reports.append(check_parabolic_pair(p1, prun(w0, B1, b2), "source", tolerance))
    return SuiteInstance(index, reports)


def randomized_bound_suite(instances: int = 100, cells: int = 32, T: float = 0.5,
                           seed: int = 0, tolerance: float = PAIRED_TOL
                           ) -> list[SuiteInstance]:
    """Run :func:`random_instance` for ``instances`` consecutive indices."""
    return [random_instance(seed, i, cells, T, tolerance=tolerance) for i in range(instances)]


# -- refinement study ------------------------------------------------------------------


def restrict(values: np.ndarray) -> np.ndarray:
    """Average ``2^d`` fine cells onto each coarse cell."""
    out = values
    for axis in range(values.ndim):
        n = out.shape[axis]
        if n % 2:
            raise ValueError("restriction needs an even number of cells per axis")
        lo = np.take(out, np.arange(0, n, 2), axis=axis)
        hi = np.take(out, np.arange(1, n, 2), axis=axis)
        out = 0.5 * (lo + hi)
    return out


@dataclass
class RefinementStudy:
    cells: list[tuple[int, ...]]
    differences: list[float]
    factors: list[float]
    min_factor: float

    @property
    def passed(self) -> bool:
        return all(f >= self.min_factor for f in self.factors)

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def refinement_study(finals: Sequence[tuple[np.ndarray, np.ndarray]], grids: Sequence[Grid],
                     min_factor: float = 1.5) -> RefinementStudy:
    """L1 distance at the final time between consecutive dyadic resolutions.

    ``finals`` holds ``(u, w)`` cell arrays on ``grids``, each grid twice as
    fine as the previous one. The finer solution is restricted onto the
    coarser grid before the distance ``|u_c - R u_f|_1 + |w_c - R w_f|_1``
    is taken; ``factors`` are the ratios of consecutive distances.
    """
    diffs = []
    for (uc, wc), (uf, wf), g in zip(finals, finals[1:], grids):
        diffs.append(l1_norm(uc - restrict(uf), g) + l1_norm(wc - restrict(wf), g))
    factors = [a / b if b > 0 else math.inf for a, b in zip(diffs, diffs[1:])]
    return RefinementStudy([tuple(g.cells_per_axis) for g in grids], diffs, factors,
                           min_factor)

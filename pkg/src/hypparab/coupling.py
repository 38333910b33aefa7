"""
Picard iteration for the coupled predator-prey system on time windows.

Within a window the hyperbolic and parabolic problems are decoupled: the
transport velocity and growth rate are frozen from the previous iterate's
parabolic density, the parabolic reaction rate from the previous iterate's
pair. The first iterate solves the source-only problems (no transport, no
reaction). Iterates are compared in the sup-in-time L1 distance; when two
consecutive distance ratios exceed 0.9 the window is halved and the
iteration restarts.

Both sub-solvers share the parabolic time levels ``t0 + k*dt``; the
hyperbolic solver subdivides each parabolic step into ``r`` CFL-limited
substeps, with the previous iterate's parabolic data interpolated linearly
in time at the substep times.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convolution import DriftSchedule, KernelSpec, averaged_gradient, saturate
from .errors import ModelSpecError, NonContractionError, PicardConvergenceError
from .geometry import Field, Grid, VectorField, l1_norm
from .hyperbolic import TransportCoefficients, TransportTrajectory, simulate_transport
from .parabolic import (DEFAULT_LIN_TOL, DiffusionCoefficients, DiffusionTrajectory,
                        simulate_diffusion)

logger = logging.getLogger(__name__)

#: Distance-ratio threshold above which an iteration counts as non-contracting.
CONTRACTION_THRESHOLD = 0.9
#: Relative slack on the declared bound of the parabolic reaction rate.
BOUND_SLACK = 1e-12


def _as_function(value) -> Callable[[float], float]:
    if value is None or callable(value):
        return value
    return lambda t, _v=float(value): _v


@dataclass
class ModelSpec:
    """Coefficients of the coupled system and their declared bounds.

    ``alpha(t, x, w)`` and ``beta(t, x, u, w)`` receive the cell centers
    ``x`` (shape ``(*shape, dim)``) and whole fields, and return cell
    arrays or scalars; ``a(t, x)`` and ``b(t, x)`` are the sources. ``None``
    stands for the zero function. ``k_alpha``, ``k_beta`` may be numbers or
    functions of time.
    """

    mu: float
    kernel: KernelSpec
    drift: DriftSchedule
    alpha: Callable | None = None
    beta: Callable | None = None
    a: Callable | None = None
    b: Callable | None = None
    K_alpha: float = 0.0
    k_alpha: Callable | float | None = None
    K_beta: float = 0.0
    k_beta: Callable | float | None = None
    name: str = "custom"

    def __post_init__(self):
        if not self.mu > 0:
            raise ModelSpecError(f"diffusivity mu must be positive, got {self.mu}")
        self.k_alpha = _as_function(self.k_alpha)
        self.k_beta = _as_function(self.k_beta)

    def sources_nonnegative(self, grid: Grid, times) -> bool:
        x = grid.cell_centers()
        for fn in (self.a, self.b):
            if fn is not None and any(np.min(fn(t, x)) < 0 for t in times):
                return False
        return True


@dataclass
class CoupledState:
    time: float
    u: Field
    w: Field

    def __post_init__(self):
        if self.u.grid != self.w.grid:
            raise ValueError("u and w must share a grid")


@dataclass
class PicardConfig:
    """Solver settings shared by every window."""

    dt_parabolic: float = 0.01
    cfl_number: float = 0.5
    picard_tol: float = 1e-8
    max_picard_iters: int = 50
    window: float = 0.25
    min_window: float = 1e-3
    lin_tol: float = DEFAULT_LIN_TOL
    check_fixed_point: bool = True

    def __post_init__(self):
        for name in ("dt_parabolic", "picard_tol", "window", "min_window", "lin_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.cfl_number <= 1.0:
            raise ValueError("cfl_number must lie in (0, 1]")
        if self.max_picard_iters < 2:
            raise ValueError("max_picard_iters must be at least 2")


@dataclass
class PicardDiagnostics:
    window_start: float
    window_length: float
    distances: list[float]
    iterations: int
    converged: bool
    halvings: int = 0
    rejected: list[list[float]] = field(default_factory=list)
    fixed_point_residual: float | None = None

    @property
    def ratios(self) -> list[float]:
        d = self.distances
        return [d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 0]

    def to_dict(self) -> dict:
        return {
            "window_start": self.window_start,
            "window_length": self.window_length,
            "iterations": self.iterations,
            "converged": self.converged,
            "halvings": self.halvings,
            "distances": list(self.distances),
            "ratios": self.ratios,
            "rejected_attempts": [list(r) for r in self.rejected],
            "fixed_point_residual": self.fixed_point_residual,
        }


def _cells(value, grid: Grid) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), grid.shape).copy()


def _check_beta(B: np.ndarray, t: float, model: ModelSpec) -> None:
    if model.k_beta is None:
        return
    bound = model.k_beta(t)
    worst = float(np.abs(B).max())
    if worst > bound * (1.0 + BOUND_SLACK) + BOUND_SLACK:
        raise ModelSpecError(f"|beta| reaches {worst:.6g} at t={t:.6g}, "
                             f"above the declared bound k_beta={bound:.6g}")


def _transport_coefficients(t, w, model, grid, gradient=None) -> TransportCoefficients:
    x = grid.cell_centers()
    k = model.drift(t)
    if k == 0.0:
        c = VectorField.zeros(grid)
    else:
        g = averaged_gradient(w, model.kernel, grid) if gradient is None else gradient
        c = VectorField(grid, saturate(k, g))
    A = _cells(model.alpha(t, x, w), grid) if model.alpha else np.zeros(grid.shape)
    a = _cells(model.a(t, x), grid) if model.a else np.zeros(grid.shape)
    return TransportCoefficients(c, Field(grid, A), Field(grid, a))


def _diffusion_coefficients(t, u, w, model, grid) -> DiffusionCoefficients:
    x = grid.cell_centers()
    B = _cells(model.beta(t, x, u, w), grid) if model.beta else np.zeros(grid.shape)
    _check_beta(B, t, model)
    b = _cells(model.b(t, x), grid) if model.b else np.zeros(grid.shape)
    return DiffusionCoefficients(model.mu, Field(grid, B), Field(grid, b))


def freeze_coefficients(t: float, u_i: Field, w_i: Field, model: ModelSpec,
                        grid: Grid | None = None
                        ) -> tuple[TransportCoefficients, DiffusionCoefficients]:
    """Coefficients of both linear problems built from one iterate at time ``t``.

    Raises
    ------
    ModelSpecError
        If the parabolic reaction rate exceeds its declared bound.
    """
    grid = u_i.grid if grid is None else grid
    return (_transport_coefficients(t, w_i, model, grid),
            _diffusion_coefficients(t, u_i, w_i, model, grid))


@dataclass
class _Iterate:
    """One Picard iterate on a window: both sub-trajectories."""

    transport: TransportTrajectory
    diffusion: DiffusionTrajectory
    substeps: int

    @property
    def u_levels(self) -> list[np.ndarray]:
        return self.transport.states[:: self.substeps]

    @property
    def w_levels(self) -> list[np.ndarray]:
        return self.diffusion.states


class _FrozenHistory:
    """Coefficient providers built from a stored iterate."""

    def __init__(self, it: _Iterate, model: ModelSpec, grid: Grid, t0: float, dt: float):
        self.it = it
        self.model = model
        self.grid = grid
        self.t0 = t0
        self.dt = dt
        self.w = [Field(grid, s) for s in it.w_levels]
        self.u = [Field(grid, s) for s in it.u_levels]
        self._gradients: dict[int, np.ndarray] = {}

    def _locate(self, t: float) -> tuple[int, float]:
        s = (t - self.t0) / self.dt
        j = int(math.floor(s + 1e-9))
        j = min(max(j, 0), len(self.w) - 2)
        theta = s - j
        if abs(theta) < 1e-9:
            theta = 0.0
        return j, min(max(theta, 0.0), 1.0)

    def _gradient(self, j: int) -> np.ndarray:
        if j not in self._gradients:
            self._gradients[j] = averaged_gradient(self.w[j], self.model.kernel, self.grid)
        return self._gradients[j]

    def transport(self, t: float) -> TransportCoefficients:
        j, theta = self._locate(t)
        if theta == 0.0:
            w_t = self.w[j]
            g = self._gradient(j) if self.model.drift(t) != 0.0 else None
        else:
            w_t = Field(self.grid, (1 - theta) * self.w[j].values + theta * self.w[j + 1].values)
            g = None
            if self.model.drift(t) != 0.0:
                # the averaged gradient is linear in w
                g = (1 - theta) * self._gradient(j) + theta * self._gradient(j + 1)
        return _transport_coefficients(t, w_t, self.model, self.grid, gradient=g)

    def diffusion(self, t: float) -> DiffusionCoefficients:
        j, theta = self._locate(t)
        if theta == 0.0:
            u_t, w_t = self.u[j], self.w[j]
        else:
            u_t = Field(self.grid, (1 - theta) * self.u[j].values + theta * self.u[j + 1].values)
            w_t = Field(self.grid, (1 - theta) * self.w[j].values + theta * self.w[j + 1].values)
        return _diffusion_coefficients(t, u_t, w_t, self.model, self.grid)


def _substeps(model: ModelSpec, grid: Grid, config: PicardConfig,
              t0: float, t1: float, dt: float) -> int:
    kmax = model.drift.max_abs(t0, t1)
    if kmax == 0.0:
        return 1
    dt_h = config.cfl_number * min(grid.spacing) / (grid.dimension * kmax)
    return max(1, math.ceil(dt / dt_h - 1e-9))


def _solve_iterate(state: CoupledState, steps: int, dt: float, substeps: int,
                   model: ModelSpec, grid: Grid, config: PicardConfig,
                   history: _FrozenHistory | None) -> _Iterate:
    t0 = state.time
    length = steps * dt
    if history is None:
        x = grid.cell_centers()
        zero_c = TransportCoefficients.zeros(grid)

        def transport(t):
            if model.a is None:
                return zero_c
            return TransportCoefficients(zero_c.c, zero_c.A, Field(grid, _cells(model.a(t, x), grid)))

        def diffusion(t):
            b = _cells(model.b(t, x), grid) if model.b else np.zeros(grid.shape)
            return DiffusionCoefficients(model.mu, Field.zeros(grid), Field(grid, b))
    else:
        transport, diffusion = history.transport, history.diffusion
    tr = simulate_transport(state.u, transport, length, grid, dt=dt / substeps, t0=t0)
    df = simulate_diffusion(state.w, diffusion, length, grid, dt=dt, t0=t0,
                            lin_tol=config.lin_tol)
    return _Iterate(tr, df, substeps)


def _distance(new: _Iterate, old: _Iterate, grid: Grid) -> float:
    du = max(l1_norm(a - b, grid) for a, b in zip(new.transport.states, old.transport.states))
    dw = max(l1_norm(a - b, grid) for a, b in zip(new.diffusion.states, old.diffusion.states))
    return du + dw


def _picard_attempt(state, steps, dt, model, grid, config):
    """Run Picard on one window; return (iterate, distances, contracted)."""
    t0 = state.time
    substeps = _substeps(model, grid, config, t0, t0 + steps * dt, dt)
    current = _solve_iterate(state, steps, dt, substeps, model, grid, config, None)
    distances: list[float] = []
    strikes = 0
    for _ in range(2, config.max_picard_iters + 1):
        history = _FrozenHistory(current, model, grid, t0, dt)
        nxt = _solve_iterate(state, steps, dt, substeps, model, grid, config, history)
        d = _distance(nxt, current, grid)
        distances.append(d)
        current = nxt
        if d <= config.picard_tol:
            return current, distances, True
        if len(distances) >= 2 and distances[-2] > 0 and d / distances[-2] > CONTRACTION_THRESHOLD:
            strikes += 1
        else:
            strikes = 0
        if strikes >= 2:
            return current, distances, False
    raise PicardConvergenceError(
        f"no convergence on window starting at t={t0:.6g} after "
        f"{config.max_picard_iters} iterations (last distance {distances[-1]:.3g})")


def _window_steps(length: float, dt: float) -> int:
    return max(1, int(round(length / dt)))


def _picard_window(state, steps, dt, model, grid, config):
    halvings = 0
    rejected = []
    while True:
        length = steps * dt
        if length < config.min_window * (1 - 1e-9):
            raise NonContractionError(
                f"window shrank to {length:.3g} below min_window={config.min_window:.3g} "
                f"at t={state.time:.6g} without contraction")
        it, distances, ok = _picard_attempt(state, steps, dt, model, grid, config)
        if ok:
            break
        logger.info("halving window at t=%.6g (distances %s)", state.time, distances)
        rejected.append(distances)
        halvings += 1
        if steps == 1:
            raise NonContractionError(
                f"window of a single step {dt:.3g} at t={state.time:.6g} does not contract")
        steps //= 2
    residual = None
    if config.check_fixed_point:
        history = _FrozenHistory(it, model, grid, state.time, dt)
        extra = _solve_iterate(state, steps, dt, it.substeps, model, grid, config, history)
        residual = _distance(extra, it, grid)
    diag = PicardDiagnostics(state.time, steps * dt, distances, len(distances) + 1, True,
                             halvings, rejected, residual)
    return it, steps, diag


def picard_window(state: CoupledState, window_length: float, model: ModelSpec,
                  config: PicardConfig) -> tuple[CoupledState, PicardDiagnostics]:
    """Solve the coupled problem on ``[state.time, state.time + window_length]``.

    The window is split into parabolic steps of ``config.dt_parabolic``.
    If halving shortens the window the returned state sits at the end of
    the accepted window, ``state.time + diagnostics.window_length``.

    Raises
    ------
    NonContractionError
        If halving drives the window below ``config.min_window``.
    PicardConvergenceError
        If an attempt reaches ``config.max_picard_iters``.
    """
    if not window_length > 0:
        raise ValueError("window_length must be positive")
    grid = state.u.grid
    dt = config.dt_parabolic
    steps = _window_steps(window_length, dt)
    it, steps, diag = _picard_window(state, steps, dt, model, grid, config)
    end = CoupledState(state.time + steps * dt, it.transport.final, it.diffusion.final)
    return end, diag


@dataclass
class CoupledRun:
    """Trajectory of a coupled run on the parabolic time levels."""

    grid: Grid
    times: np.ndarray
    u_states: list[np.ndarray]
    w_states: list[np.ndarray]
    diagnostics: list[PicardDiagnostics]
    transport: TransportTrajectory
    diffusion: DiffusionTrajectory
    reports: list = field(default_factory=list)

    @property
    def states(self) -> list[CoupledState]:
        return [CoupledState(float(t), Field(self.grid, u), Field(self.grid, w))
                for t, u, w in zip(self.times, self.u_states, self.w_states)]

    @property
    def final(self) -> CoupledState:
        return CoupledState(float(self.times[-1]), Field(self.grid, self.u_states[-1]),
                            Field(self.grid, self.w_states[-1]))

    @property
    def steps(self) -> int:
        return len(self.times) - 1


def run_coupled(u0: Field, w0: Field, model: ModelSpec, T: float,
                grid: Grid | None = None, config: PicardConfig | None = None,
                checks: list[str] | None = None) -> CoupledRun:
    """Chain Picard windows over ``[0, T]`` and evaluate the requested checks.

    ``T`` is split into ``ceil(T / dt_parabolic)`` equal steps. Windows
    keep the length reached after any halving. ``checks`` selects the
    bound reports attached to the result (see ``verify.COUPLED_CHECKS``);
    ``None`` selects every check that applies to the data.
    """
    from . import verify

    grid = u0.grid if grid is None else grid
    config = PicardConfig() if config is None else config
    if T <= 0:
        raise ValueError("T must be positive")
    n_total = max(1, math.ceil(T / config.dt_parabolic - 1e-9))
    dt = T / n_total
    steps = _window_steps(config.window, dt)
    state = CoupledState(0.0, u0, w0)
    k = 0
    diagnostics = []
    u_states, w_states = [u0.values.copy()], [w0.values.copy()]
    transports, diffusions = [], []
    while k < n_total:
        steps = min(steps, n_total - k)
        it, steps, diag = _picard_window(state, steps, dt, model, grid, config)
        diagnostics.append(diag)
        transports.append(it.transport)
        diffusions.append(it.diffusion)
        u_states.extend(it.u_levels[1:])
        w_states.extend(it.w_levels[1:])
        k += steps
        state = CoupledState(k * dt, it.transport.final, it.diffusion.final)
    run = CoupledRun(grid, dt * np.arange(n_total + 1), u_states, w_states, diagnostics,
                     TransportTrajectory.concatenate(transports),
                     DiffusionTrajectory.concatenate(diffusions))
    run.reports = verify.coupled_reports(run, model, u0, w0, config, checks)
    return run

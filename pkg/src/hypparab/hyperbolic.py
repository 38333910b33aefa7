"""
Donor-cell upwind finite volumes for the linear balance law

    u_t + div(u c) = A u + a      in Omega,
    u = 0                         on inflow parts of the boundary.

Face velocities are arithmetic means of the adjacent cell velocities; on a
boundary face the velocity of the adjacent cell is used and the exterior
(ghost) value is zero, so inflow carries nothing in while outflow leaves
freely. Sources are applied explicitly after the flux update.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import StabilityError
from .geometry import Field, Grid, VectorField, l1_norm

#: Guard against division by zero speed in :func:`max_stable_dt`.
SPEED_FLOOR = 1e-14
#: Relative slack when comparing a time step with its stability limit.
STABILITY_SLACK = 1e-12


@dataclass
class TransportCoefficients:
    c: VectorField
    A: Field
    a: Field

    def __post_init__(self):
        if not (self.c.grid == self.A.grid == self.a.grid):
            raise ValueError("transport coefficients live on different grids")

    @classmethod
    def zeros(cls, grid: Grid) -> "TransportCoefficients":
        return cls(VectorField.zeros(grid), Field.zeros(grid), Field.zeros(grid))


def max_stable_dt(c: VectorField, grid: Grid, cfl_number: float,
                  dt_max: float = 1.0) -> float:
    """CFL time step ``cfl * min_d h_d / (n * max|c_d|)``.

    Returns ``dt_max`` when the velocity vanishes identically. A CFL number
    of at most 0.5 also keeps the per-cell outflow fraction below one, which
    is what makes the scheme monotone.
    """
    if not 0.0 < cfl_number <= 1.0:
        raise ValueError(f"cfl_number must lie in (0, 1], got {cfl_number}")
    speeds = [float(np.abs(c.component(d)).max()) for d in range(grid.dimension)]
    if max(speeds) <= SPEED_FLOOR:
        return float(dt_max)
    limits = [h / (grid.dimension * max(s, SPEED_FLOOR))
              for h, s in zip(grid.spacing, speeds)]
    return float(min(cfl_number * min(limits), dt_max))


def face_velocities(c: VectorField, axis: int) -> np.ndarray:
    """Normal velocities on all faces along ``axis`` (length ``n_axis + 1``)."""
    cd = np.moveaxis(c.component(axis), axis, 0)
    faces = np.concatenate([cd[:1], 0.5 * (cd[:-1] + cd[1:]), cd[-1:]], axis=0)
    return np.moveaxis(faces, 0, axis)


def discrete_divergence(c: VectorField, grid: Grid) -> np.ndarray:
    """Cell divergence of ``c`` computed from the face velocities of the scheme."""
    div = np.zeros(grid.shape)
    for axis, h in enumerate(grid.spacing):
        f = np.moveaxis(face_velocities(c, axis), axis, 0)
        div += np.moveaxis(f[1:] - f[:-1], 0, axis) / h
    return div


def outflow_fraction(c: VectorField, grid: Grid, dt: float) -> np.ndarray:
    """Fraction of each cell's content leaving through its faces in one step."""
    out = np.zeros(grid.shape)
    for axis, h in enumerate(grid.spacing):
        f = np.moveaxis(face_velocities(c, axis), axis, 0)
        leaving = np.maximum(f[1:], 0.0) + np.maximum(-f[:-1], 0.0)
        out += np.moveaxis(leaving, 0, axis) * dt / h
    return out


def _check_stable(c: VectorField, grid: Grid, dt: float) -> None:
    speeds = max(float(np.abs(c.values).max()), 0.0)
    if speeds > SPEED_FLOOR:
        limit = max_stable_dt(c, grid, 1.0, dt_max=math.inf)
        if dt > limit * (1.0 + STABILITY_SLACK):
            raise StabilityError(f"dt={dt:.6g} exceeds the CFL limit {limit:.6g}")
    worst = float(outflow_fraction(c, grid, dt).max())
    if worst > 1.0 + STABILITY_SLACK:
        raise StabilityError(
            f"dt={dt:.6g} lets {worst:.3f} of a cell's content leave in one step")


def _flux_update(u: np.ndarray, c: VectorField, dt: float, grid: Grid) -> np.ndarray:
    out = u.copy()
    for axis, h in enumerate(grid.spacing):
        f = np.moveaxis(face_velocities(c, axis), axis, 0)
        ua = np.moveaxis(u, axis, 0)
        ghost = np.zeros((1,) + ua.shape[1:])
        padded = np.concatenate([ghost, ua, ghost], axis=0)
        flux = np.maximum(f, 0.0) * padded[:-1] - np.maximum(-f, 0.0) * padded[1:]
        out -= np.moveaxis(flux[1:] - flux[:-1], 0, axis) * (dt / h)
    return out


def transport_step(u: Field, coeffs: TransportCoefficients, dt: float,
                   grid: Grid | None = None) -> Field:
    """Advance ``u`` by one upwind step followed by the explicit source update.

    Raises
    ------
    StabilityError
        If ``dt`` exceeds the CFL limit or lets more than the whole content
        of a cell flow out in one step.
    """
    grid = u.grid if grid is None else grid
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    _check_stable(coeffs.c, grid, dt)
    A = coeffs.A.values
    if dt * float(np.maximum(-A, 0.0).max()) >= 1.0:
        warnings.warn("dt * max(A^-) >= 1: the explicit source step may lose positivity",
                      RuntimeWarning, stacklevel=2)
    moved = _flux_update(u.values, coeffs.c, dt, grid)
    return Field(grid, moved + dt * (A * moved + coeffs.a.values))


@dataclass
class TransportTrajectory:
    """States at the step times plus the norms of the coefficients used per step.

    ``times`` and ``states`` have ``m + 1`` entries; each per-step array has
    ``m`` entries, entry ``k`` describing the coefficients frozen at
    ``times[k]`` and used to go from ``states[k]`` to ``states[k + 1]``.
    """

    grid: Grid
    times: np.ndarray
    states: list[np.ndarray]
    A_inf: np.ndarray
    a_l1: np.ndarray
    a_inf: np.ndarray
    div_inf: np.ndarray
    coefficients: list[TransportCoefficients] | None = field(default=None, repr=False)

    @property
    def dts(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def final(self) -> Field:
        return Field(self.grid, self.states[-1])

    def field_at(self, k: int) -> Field:
        return Field(self.grid, self.states[k])

    def l1_norms(self) -> np.ndarray:
        return np.array([l1_norm(s, self.grid) for s in self.states])

    def linf_norms(self) -> np.ndarray:
        return np.array([float(np.abs(s).max()) for s in self.states])

    @classmethod
    def concatenate(cls, parts: list["TransportTrajectory"]) -> "TransportTrajectory":
        """Join trajectories of consecutive time windows into one."""
        first = parts[0]
        times = np.concatenate([first.times] + [p.times[1:] for p in parts[1:]])
        states = list(first.states) + [s for p in parts[1:] for s in p.states[1:]]
        per_step = {name: np.concatenate([getattr(p, name) for p in parts])
                    for name in ("A_inf", "a_l1", "a_inf", "div_inf")}
        coeffs = None
        if all(p.coefficients is not None for p in parts):
            coeffs = [c for p in parts for c in p.coefficients]
        return cls(first.grid, times, states, coefficients=coeffs, **per_step)


def simulate_transport(u0: Field, coeff_provider: Callable[[float], TransportCoefficients],
                       T: float, grid: Grid | None = None, *, dt: float,
                       t0: float = 0.0, record_coefficients: bool = False
                       ) -> TransportTrajectory:
    """Fixed-step loop of :func:`transport_step` on ``[t0, t0 + T]``.

    The step is ``T / ceil(T / dt)`` so that the last step lands on the
    final time; coefficients are requested from ``coeff_provider`` at the
    start of every step.
    """
    grid = u0.grid if grid is None else grid
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    steps = max(1, math.ceil(T / dt - 1e-9))
    h = T / steps
    times = t0 + h * np.arange(steps + 1)
    states = [u0.values.copy()]
    norms = np.zeros((4, steps))
    kept = [] if record_coefficients else None
    u = u0
    for k in range(steps):
        coeffs = coeff_provider(float(times[k]))
        norms[0, k] = float(np.abs(coeffs.A.values).max())
        norms[1, k] = l1_norm(coeffs.a.values, grid)
        norms[2, k] = float(np.abs(coeffs.a.values).max())
        norms[3, k] = float(np.abs(discrete_divergence(coeffs.c, grid)).max())
        u = transport_step(u, coeffs, h, grid)
        states.append(u.values)
        if kept is not None:
            kept.append(coeffs)
    return TransportTrajectory(grid, times, states, norms[0], norms[1], norms[2],
                               norms[3], kept)

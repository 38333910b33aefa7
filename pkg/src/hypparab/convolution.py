"""
Compactly supported interaction kernel, domain-restricted convolution and
the nonlocal velocity field driving the hyperbolic population.

The kernel is the radial quartic bump

    eta(x) = eta_bar * (1 - (|x| / horizon)**4)**4   for |x| < horizon

normalized to unit mass on R^n. The domain-restricted convolution divides
by the kernel mass that falls inside the domain, so constants are
reproduced exactly up to the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numba
import numpy as np

from .errors import DegenerateKernelError
from .geometry import Field, Grid, VectorField

#: Midpoint nodes on [0, 1] used for the radial normalization integral.
NORMALIZATION_NODES = 200_000
#: Smallest admissible kernel mass inside the domain.
DENOMINATOR_FLOOR = 1e-14


@dataclass(frozen=True)
class KernelSpec:
    horizon: float
    eta_bar: float
    dimension: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"kernel horizon must be positive, got {self.horizon}")
        if not self.eta_bar > 0:
            raise ValueError(f"kernel normalization must be positive, got {self.eta_bar}")
        if self.dimension not in (1, 2):
            raise ValueError(f"kernel dimension must be 1 or 2, got {self.dimension}")


def _profile(s):
    """Unnormalized radial profile as a function of ``s = |x| / horizon``."""
    s = np.asarray(s, dtype=float)
    return np.where(s < 1.0, (1.0 - s ** 4) ** 4, 0.0)


def normalize_kernel(horizon: float, dimension: int,
                     nodes: int = NORMALIZATION_NODES) -> KernelSpec:
    """Build a :class:`KernelSpec` whose kernel has unit mass on R^n.

    The radial integral is evaluated with the composite midpoint rule on
    ``nodes`` equal subintervals of ``[0, 1]`` in the scaled variable
    ``s = r / horizon``; with the default resolution the quadrature error is
    below 1e-11 relative.
    """
    if not horizon > 0:
        raise ValueError(f"kernel horizon must be positive, got {horizon}")
    s = (np.arange(nodes) + 0.5) / nodes
    if dimension == 1:
        mass = 2.0 * horizon * _profile(s).sum() / nodes
    elif dimension == 2:
        mass = 2.0 * np.pi * horizon ** 2 * (_profile(s) * s).sum() / nodes
    else:
        raise ValueError(f"kernel dimension must be 1 or 2, got {dimension}")
    return KernelSpec(float(horizon), float(1.0 / mass), dimension)


def kernel_eval(spec: KernelSpec, x) -> np.ndarray | float:
    """Evaluate the kernel at points ``x``.

    In 1D ``x`` may be a scalar or an array of positions; in 2D the last
    axis of ``x`` holds the two coordinates.
    """
    x = np.asarray(x, dtype=float)
    if spec.dimension == 1:
        r = np.abs(x[..., 0]) if (x.ndim and x.shape[-1] == 1) else np.abs(x)
    else:
        r = np.sqrt(np.sum(x ** 2, axis=-1))
    out = spec.eta_bar * _profile(r / spec.horizon)
    return float(out) if np.ndim(out) == 0 else out


@numba.njit(cache=True)
def _stencil_sum(padded, off0, off1, weights, n0, n1):
    out = np.zeros((n0, n1))
    for i in range(n0):
        for j in range(n1):
            acc = 0.0
            for k in range(weights.shape[0]):
                acc += weights[k] * padded[i + off0[k], j + off1[k]]
            out[i, j] = acc
    return out


def _correlate(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Zero-padded correlation of ``values`` with an odd-sized stencil.

    Each output cell sums its nonzero stencil terms in one fixed order, so
    results do not depend on how many threads the process runs.
    """
    arr2 = values.reshape(values.shape[0], -1)
    w2 = weights.reshape(weights.shape[0], -1)
    r0, r1 = w2.shape[0] // 2, w2.shape[1] // 2
    padded = np.zeros((arr2.shape[0] + 2 * r0, arr2.shape[1] + 2 * r1))
    padded[r0:r0 + arr2.shape[0], r1:r1 + arr2.shape[1]] = arr2
    off0, off1 = np.nonzero(w2)
    out = _stencil_sum(padded, off0.astype(np.int64), off1.astype(np.int64),
                       np.ascontiguousarray(w2[off0, off1]), arr2.shape[0], arr2.shape[1])
    return out.reshape(values.shape)


@lru_cache(maxsize=32)
def _stencil(spec: KernelSpec, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Kernel weights on the cell-offset stencil and the in-domain kernel mass."""
    if spec.dimension != grid.dimension:
        raise ValueError("kernel and grid dimensions differ")
    if spec.horizon < max(grid.spacing):
        raise DegenerateKernelError(
            f"horizon {spec.horizon} is below the grid spacing {max(grid.spacing)}; "
            "the stencil would not reach neighbouring cells")
    radius = [int(np.ceil(spec.horizon / h)) for h in grid.spacing]
    offsets = [np.arange(-r, r + 1) * h for r, h in zip(radius, grid.spacing)]
    mesh = np.stack(np.meshgrid(*offsets, indexing="ij"), axis=-1)
    weights = np.asarray(kernel_eval(spec, mesh)) * grid.cell_volume
    denominator = _correlate(np.ones(grid.shape), weights)
    if denominator.min() < DENOMINATOR_FLOOR:
        raise DegenerateKernelError(
            f"kernel mass inside the domain drops to {denominator.min():.3g}")
    weights.setflags(write=False)
    denominator.setflags(write=False)
    return weights, denominator


def omega_convolve(rho: Field, spec: KernelSpec, grid: Grid | None = None) -> Field:
    """Domain-restricted convolution of ``rho`` with the kernel.

    Each output cell is the kernel-weighted average of ``rho`` over the
    cells of the domain, the weights being renormalized by the kernel mass
    inside the domain. Sums run over the stencil by direct summation.
    """
    grid = rho.grid if grid is None else grid
    weights, denominator = _stencil(spec, grid)
    numerator = _correlate(rho.values, weights)
    return Field(grid, numerator / denominator)


def averaged_gradient(w: Field, spec: KernelSpec, grid: Grid | None = None) -> np.ndarray:
    """Discrete gradient of the domain-restricted convolution of ``w``.

    Central differences in the interior, one-sided differences in boundary
    cells. Returns an array of shape ``(*shape, dimension)``.
    """
    grid = w.grid if grid is None else grid
    smooth = omega_convolve(w, spec, grid).values
    grads = np.gradient(smooth, *grid.spacing, edge_order=1)
    if grid.dimension == 1:
        grads = [grads]
    return np.stack(grads, axis=-1)


def saturate(k: float, gradient: np.ndarray) -> np.ndarray:
    """``k * g / sqrt(1 + |g|^2)`` applied cell by cell."""
    norm2 = np.sum(gradient ** 2, axis=-1, keepdims=True)
    return k * gradient / np.sqrt(1.0 + norm2)


@dataclass(frozen=True)
class DriftSchedule:
    """Piecewise-linear drift coefficient ``k(t)``, constant beyond the table.

    Positive values make the hyperbolic population chase the parabolic one,
    negative values make it escape.
    """

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise ValueError("drift table needs matching, non-empty times and values")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("drift table times must be strictly increasing")
        if not all(np.isfinite(self.values)):
            raise ValueError("drift values must be finite")

    @classmethod
    def constant(cls, k: float) -> "DriftSchedule":
        return cls((0.0,), (float(k),))

    @classmethod
    def table(cls, times: Sequence[float], values: Sequence[float]) -> "DriftSchedule":
        return cls(tuple(float(t) for t in times), tuple(float(v) for v in values))

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def max_abs(self, t0: float, t1: float) -> float:
        """Exact maximum of ``|k|`` on ``[t0, t1]`` (attained at nodes or ends)."""
        inner = [abs(v) for s, v in zip(self.times, self.values) if t0 < s < t1]
        return max([abs(self(t0)), abs(self(t1))] + inner)


def velocity_field(t: float, w: Field, spec: KernelSpec, schedule: DriftSchedule,
                   grid: Grid | None = None) -> VectorField:
    """Nonlocal velocity ``k(t) g / sqrt(1 + |g|^2)`` with ``g`` the averaged gradient."""
    grid = w.grid if grid is None else grid
    return VectorField(grid, saturate(schedule(t), averaged_gradient(w, spec, grid)))


def velocity_lipschitz_bound(spec: KernelSpec, grid: Grid) -> float:
    """Constant ``C`` with ``|v(w1) - v(w2)|_inf <= C |k| |w1 - w2|_L1`` on this grid.

    The saturation map is 1-Lipschitz, a difference quotient at most doubles
    the sup norm divided by the smallest spacing, and each convolved value
    is bounded by the largest normalized weight per unit volume.
    """
    weights, denominator = _stencil(spec, grid)
    per_volume = weights.max() / (denominator.min() * grid.cell_volume)
    return float(2.0 * per_volume / min(grid.spacing) * np.sqrt(grid.dimension))

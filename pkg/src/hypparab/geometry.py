"""
Uniform axis-aligned grids, cell-averaged fields and discrete norms.

Cells are stored as numpy arrays of shape ``cells_per_axis`` indexed
``[i0]`` in 1D and ``[i0, i1]`` in 2D. The canonical flat cell index runs
with axis 0 fastest, ``index = i0 + n0 * i1``, which is numpy's Fortran
order for these arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class BoundaryFace:
    cell_index: int
    normal: tuple[int, ...]
    area: float


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[0, L_0] x ... x [0, L_{n-1}]``.

    Use :func:`build_grid` rather than calling the constructor directly so
    that arguments are validated and normalized to tuples.
    """

    dimension: int
    extents: tuple[float, ...]
    cells_per_axis: tuple[int, ...]
    spacing: tuple[float, ...] = field(init=False)
    boundary_faces: tuple[BoundaryFace, ...] = field(init=False, repr=False)

    def __post_init__(self):
        spacing = tuple(L / n for L, n in zip(self.extents, self.cells_per_axis))
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "boundary_faces", self._enumerate_boundary())

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells_per_axis

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def face_area(self, axis: int) -> float:
        """Area of a face normal to ``axis`` (1 in 1D, the other spacing in 2D)."""
        others = [h for d, h in enumerate(self.spacing) if d != axis]
        return float(np.prod(others)) if others else 1.0

    def centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells_per_axis[axis]) + 0.5) * h

    def faces(self, axis: int) -> np.ndarray:
        return np.linspace(0.0, self.extents[axis], self.cells_per_axis[axis] + 1)

    def cell_centers(self) -> np.ndarray:
        """Array of shape ``(*shape, dimension)`` with cell center coordinates."""
        axes = [self.centers(d) for d in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def flat_index(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.shape, order="F"))

    def unravel(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(index, self.shape, order="F"))

    def flatten(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(-1, order="F")

    def unflatten(self, vector: np.ndarray) -> np.ndarray:
        return np.asarray(vector).reshape(self.shape, order="F")

    def _enumerate_boundary(self) -> tuple[BoundaryFace, ...]:
        faces = []
        for index in range(self.cell_count):
            multi = np.unravel_index(index, self.shape, order="F")
            for axis in range(self.dimension):
                for side, at_edge in ((-1, multi[axis] == 0),
                                      (1, multi[axis] == self.shape[axis] - 1)):
                    if at_edge:
                        normal = tuple(side if d == axis else 0
                                       for d in range(self.dimension))
                        faces.append(BoundaryFace(index, normal, self.face_area(axis)))
        return tuple(faces)


def build_grid(dimension: int, extents: Sequence[float],
               cells_per_axis: Sequence[int]) -> Grid:
    """Validate the arguments and build a :class:`Grid`.

    Raises
    ------
    ConfigurationError
        If the dimension is not 1 or 2, the per-axis sequences have the
        wrong length, an extent is not positive or an axis has fewer than
        two cells.
    """
    if dimension not in (1, 2):
        raise ConfigurationError(f"dimension must be 1 or 2, got {dimension}",
                                 key="grid.dimension")
    extents = tuple(float(L) for L in extents)
    cells = tuple(int(n) for n in cells_per_axis)
    if len(extents) != dimension or len(cells) != dimension:
        raise ConfigurationError(
            f"expected {dimension} extents and cell counts, got {extents} and {cells}",
            key="grid")
    if any(not np.isfinite(L) or L <= 0 for L in extents):
        raise ConfigurationError(f"extents must be positive, got {extents}",
                                 key="grid.extents")
    if any(n < 2 for n in cells):
        raise ConfigurationError(f"need at least 2 cells per axis, got {cells}",
                                 key="grid.cells")
    return Grid(dimension, extents, cells)


def _check_values(grid: Grid, values, trailing: tuple[int, ...], what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 1 and grid.dimension == 2 and arr.size == grid.cell_count * int(np.prod(trailing)):
        arr = arr.reshape(grid.shape + trailing, order="F")
    if arr.shape != grid.shape + trailing:
        raise ValueError(f"{what} has shape {arr.shape}, expected {grid.shape + trailing}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    return arr


class Field:
    """Cell-averaged scalar state bound to a grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        self.grid = grid
        self.values = _check_values(grid, values, (), "field")

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        """Sample ``fn(x)`` at cell centers, ``x`` of shape ``(*shape, dim)``."""
        return cls(grid, np.broadcast_to(fn(grid.cell_centers()), grid.shape))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def __repr__(self):
        return f"Field(shape={self.values.shape}, min={self.values.min():.3g}, max={self.values.max():.3g})"


class VectorField:
    """One n-vector per cell; ``values`` has shape ``(*shape, dimension)``."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        self.grid = grid
        self.values = _check_values(grid, values, (grid.dimension,), "vector field")

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros(grid.shape + (grid.dimension,)))

    def component(self, axis: int) -> np.ndarray:
        return self.values[..., axis]

    def speed(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values ** 2, axis=-1))


def total_variation(values: np.ndarray, grid: Grid) -> float:
    """Sum of face jumps times face area over interior faces."""
    tv = 0.0
    for axis in range(grid.dimension):
        jumps = np.abs(np.diff(values, axis=axis))
        tv += float(jumps.sum()) * grid.face_area(axis)
    return tv


def l1_norm(values: np.ndarray, grid: Grid) -> float:
    return float(np.abs(values).sum() * grid.cell_volume)


def discrete_norms(field: Field) -> tuple[float, float, float]:
    """Return ``(l1, linf, tv)`` of a field.

    ``l1`` is the volume-weighted sum of absolute values, ``linf`` the
    largest absolute cell value and ``tv`` the face-jump total variation.
    """
    v = field.values
    return (l1_norm(v, field.grid), float(np.abs(v).max()),
            total_variation(v, field.grid))

"""
Implicit finite volumes for the Neumann problem

    w_t - mu * Lap(w) = B w + b      in Omega,
    grad(w) . nu = 0                 on the boundary,

and a method-of-images Neumann heat kernel on an interval used to check
the representation of solutions as kernel integrals.

Time stepping is backward Euler for diffusion and for the damping part of
``B``; the growth part ``max(B, 0)`` is taken at the old level. The matrix
``I - dt*mu*L + dt*diag(max(-B, 0))`` is then a symmetric M-matrix with unit
or larger column sums whatever the step, so the update is positivity
preserving and contracts the L1 norm up to the explicit growth factor
``1 + dt*max(B, 0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla
from scipy.special import erf

from .errors import LinearSolverError, UnsupportedDimensionError
from .geometry import Field, Grid, l1_norm, total_variation

DEFAULT_LIN_TOL = 1e-10


@dataclass
class DiffusionCoefficients:
    mu: float
    B: Field
    b: Field

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"diffusivity must be positive, got {self.mu}")
        if self.B.grid != self.b.grid:
            raise ValueError("diffusion coefficients live on different grids")

    @classmethod
    def zeros(cls, grid: Grid, mu: float) -> "DiffusionCoefficients":
        return cls(mu, Field.zeros(grid), Field.zeros(grid))


def _neumann_1d(n: int, h: float) -> sparse.csr_matrix:
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr") / h ** 2


@lru_cache(maxsize=16)
def neumann_laplacian(grid: Grid) -> sparse.csr_matrix:
    """Zero-flux Laplacian acting on fields flattened with axis 0 fastest."""
    ops = [_neumann_1d(n, h) for n, h in zip(grid.shape, grid.spacing)]
    if grid.dimension == 1:
        lap = ops[0]
    else:
        lap = (sparse.kron(sparse.identity(grid.shape[1]), ops[0])
               + sparse.kron(ops[1], sparse.identity(grid.shape[0])))
    lap = lap.tocsr()
    lap.sort_indices()
    return lap


def diffusion_step(w: Field, coeffs: DiffusionCoefficients, dt: float,
                   grid: Grid | None = None, lin_tol: float = DEFAULT_LIN_TOL,
                   max_iter: int | None = None) -> Field:
    """One step of the implicit Neumann scheme.

    Solves ``(I - dt*mu*L - dt*diag(B_minus)) w_new = (1 + dt*B_plus) w + dt*b``
    with ``B_plus = max(B, 0)`` and ``B_minus = min(B, 0)`` by preconditioned
    conjugate gradients started from ``w``.

    Raises
    ------
    LinearSolverError
        If the relative residual does not reach ``lin_tol`` within
        ``max_iter`` iterations (default ``10 * cell_count``).
    """
    grid = w.grid if grid is None else grid
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    B = grid.flatten(coeffs.B.values)
    damping = np.maximum(-B, 0.0)
    growth = np.maximum(B, 0.0)
    w_old = grid.flatten(w.values)
    rhs = (1.0 + dt * growth) * w_old + dt * grid.flatten(coeffs.b.values)
    lap = neumann_laplacian(grid)
    matrix = sparse.identity(grid.cell_count, format="csr") - (dt * coeffs.mu) * lap
    if damping.any():
        matrix = matrix + sparse.diags(dt * damping, format="csr")
    max_iter = 10 * grid.cell_count if max_iter is None else max_iter
    jacobi = sparse.diags(1.0 / matrix.diagonal())
    solution, info = spla.cg(matrix, rhs, x0=w_old, rtol=lin_tol, atol=0.0,
                             maxiter=max_iter, M=jacobi)
    if info != 0:
        residual = np.linalg.norm(rhs - matrix @ solution) / max(np.linalg.norm(rhs), 1e-300)
        raise LinearSolverError(
            f"CG stopped after {max_iter} iterations with relative residual {residual:.3g}")
    return Field(grid, grid.unflatten(solution))


@dataclass
class DiffusionTrajectory:
    """Parabolic counterpart of :class:`hyperbolic.TransportTrajectory`."""

    grid: Grid
    mu: float
    times: np.ndarray
    states: list[np.ndarray]
    B_inf: np.ndarray
    b_l1: np.ndarray
    coefficients: list[DiffusionCoefficients] | None = field(default=None, repr=False)

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

    def gradient_l1(self) -> np.ndarray:
        """Face-jump L1 norm of the gradient at each stored time."""
        return np.array([total_variation(s, self.grid) for s in self.states])

    @classmethod
    def concatenate(cls, parts: list["DiffusionTrajectory"]) -> "DiffusionTrajectory":
        first = parts[0]
        times = np.concatenate([first.times] + [p.times[1:] for p in parts[1:]])
        states = list(first.states) + [s for p in parts[1:] for s in p.states[1:]]
        coeffs = None
        if all(p.coefficients is not None for p in parts):
            coeffs = [c for p in parts for c in p.coefficients]
        return cls(first.grid, first.mu, times, states,
                   np.concatenate([p.B_inf for p in parts]),
                   np.concatenate([p.b_l1 for p in parts]), coeffs)


def simulate_diffusion(w0: Field, coeff_provider: Callable[[float], DiffusionCoefficients],
                       T: float, grid: Grid | None = None, *, dt: float,
                       t0: float = 0.0, lin_tol: float = DEFAULT_LIN_TOL,
                       record_coefficients: bool = False) -> DiffusionTrajectory:
    """Fixed-step loop of :func:`diffusion_step` on ``[t0, t0 + T]``."""
    grid = w0.grid if grid is None else grid
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    steps = max(1, math.ceil(T / dt - 1e-9))
    h = T / steps
    times = t0 + h * np.arange(steps + 1)
    states = [w0.values.copy()]
    B_inf = np.zeros(steps)
    b_l1 = np.zeros(steps)
    kept = [] if record_coefficients else None
    w = w0
    mu = None
    for k in range(steps):
        coeffs = coeff_provider(float(times[k]))
        mu = coeffs.mu
        B_inf[k] = float(np.abs(coeffs.B.values).max())
        b_l1[k] = l1_norm(coeffs.b.values, grid)
        w = diffusion_step(w, coeffs, h, grid, lin_tol)
        states.append(w.values)
        if kept is not None:
            kept.append(coeffs)
    return DiffusionTrajectory(grid, mu, times, states, B_inf, b_l1, kept)


# -- Neumann kernel on an interval -------------------------------------------


@dataclass(frozen=True)
class NeumannKernel1D:
    """Neumann heat kernel of ``[0, length]`` by reflection.

    The truncated image sum keeps the direct and mirrored Gaussians of the
    ``2 * image_terms + 1`` periods ``m = -image_terms, ..., image_terms``.
    """

    length: float
    mu: float
    image_terms: int = 20

    def __post_init__(self):
        if self.image_terms < 1:
            raise ValueError("image_terms must be at least 1")
        if not (self.length > 0 and self.mu > 0):
            raise ValueError("length and mu must be positive")

    def image_shifts(self) -> np.ndarray:
        m = np.arange(-self.image_terms, self.image_terms + 1)
        return 2.0 * self.length * m


def _heat(mu: float, tau, z):
    return np.exp(-z ** 2 / (4.0 * mu * tau)) / np.sqrt(4.0 * np.pi * mu * tau)


def neumann_kernel_eval(kernel: NeumannKernel1D, t: float, x, s: float, y):
    """Evaluate ``N(t, x, s, y)`` for ``t > s``; ``x`` and ``y`` broadcast."""
    if not t > s:
        raise ValueError(f"the Neumann kernel needs t > s, got t={t}, s={s}")
    tau = t - s
    x = np.asarray(x, dtype=float)[..., None]
    y = np.asarray(y, dtype=float)[..., None]
    shifts = kernel.image_shifts()
    out = (_heat(kernel.mu, tau, x - y - shifts)
           + _heat(kernel.mu, tau, x + y - shifts)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def neumann_kernel_cell_integrals(kernel: NeumannKernel1D, tau: float, x,
                                  faces: np.ndarray) -> np.ndarray:
    """Exact integrals of ``y -> N(s + tau, x, s, y)`` over the cells bounded by ``faces``.

    Returns an array of shape ``(len(x), len(faces) - 1)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))[:, None, None]
    shifts = kernel.image_shifts()[None, None, :]
    scale = np.sqrt(4.0 * kernel.mu * tau)
    f = faces[None, :, None]
    # antiderivatives in y of G(x - y - s) and G(x + y - s)
    direct = -0.5 * erf((x - f - shifts) / scale)
    mirror = 0.5 * erf((x + f - shifts) / scale)
    prim = (direct + mirror).sum(axis=-1)
    return np.diff(prim, axis=1)


def representation_residual(trajectory: DiffusionTrajectory, w0: Field,
                            B: Callable[[float], np.ndarray] | None,
                            b: Callable[[float], np.ndarray] | None,
                            kernel: NeumannKernel1D,
                            probes: Sequence[float] | None = None,
                            probe_times: Sequence[int] | None = None) -> float:
    """Largest mismatch between stored values and the kernel representation.

    For each probe time index ``k`` and probe position ``x`` the right-hand
    side ``int N(t,x,0,y) w0(y) dy + int_0^t int N(t,x,s,y) (B w + b)(s,y) dy ds``
    is computed from the stored trajectory: space integrals are exact for the
    piecewise-constant cell data, the time integral uses the midpoint rule on
    every step with the source averaged between the two stored levels. The
    stored value at ``x`` is the value of the cell containing ``x``.

    ``B`` and ``b`` map a time to cell arrays; ``None`` means zero.
    """
    grid = trajectory.grid
    if grid.dimension != 1:
        raise UnsupportedDimensionError("the representation check is only available in 1D")
    faces = grid.faces(0)
    if probes is None:
        probes = grid.centers(0)[:: max(1, grid.shape[0] // 8)]
    probes = np.asarray(probes, dtype=float)
    times = trajectory.times
    if probe_times is None:
        probe_times = [len(times) - 1]
    cells = np.minimum((probes / grid.spacing[0]).astype(int), grid.shape[0] - 1)

    def source(k):
        s = np.zeros(grid.shape)
        if B is not None:
            s = s + np.asarray(B(times[k])) * trajectory.states[k]
        if b is not None:
            s = s + np.asarray(b(times[k]))
        return s

    has_source = B is not None or b is not None
    sources = [source(k) for k in range(len(times))] if has_source else None
    worst = 0.0
    for k in probe_times:
        t = times[k]
        if t <= times[0]:
            continue
        rhs = neumann_kernel_cell_integrals(kernel, t - times[0], probes, faces) @ w0.values
        if has_source:
            for j in range(k):
                mid = 0.5 * (times[j] + times[j + 1])
                weights = neumann_kernel_cell_integrals(kernel, t - mid, probes, faces)
                rhs = rhs + (times[j + 1] - times[j]) * weights @ (
                    0.5 * (sources[j] + sources[j + 1]))
        stored = trajectory.states[k][cells]
        worst = max(worst, float(np.abs(rhs - stored).max()))
    return worst

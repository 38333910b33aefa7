"""Implicit Neumann diffusion and the image-sum Neumann kernel."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hypparab.errors import LinearSolverError, UnsupportedDimensionError
from hypparab.geometry import Field, build_grid
from hypparab.parabolic import (DiffusionCoefficients, NeumannKernel1D, diffusion_step,
                                neumann_kernel_cell_integrals, neumann_kernel_eval,
                                neumann_laplacian, representation_residual,
                                simulate_diffusion)


def coeffs(grid, mu, B=0.0, b=0.0):
    return DiffusionCoefficients(mu, Field(grid, np.broadcast_to(B, grid.shape)),
                                 Field(grid, np.broadcast_to(b, grid.shape)))


class TestLaplacian:
    @pytest.mark.parametrize("dim, cells", [(1, [7]), (2, [5, 6])])
    def test_symmetric_with_zero_row_sums(self, dim, cells):
        g = build_grid(dim, [1.0] * dim, cells)
        L = neumann_laplacian(g).toarray()
        np.testing.assert_allclose(L, L.T)
        np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-10)

    def test_1d_stencil(self):
        g = build_grid(1, [1.0], [4])
        L = neumann_laplacian(g).toarray() / 16
        np.testing.assert_allclose(L[0, :2], [-1, 1])
        np.testing.assert_allclose(L[1, :3], [1, -2, 1])

    def test_ordering_matches_flatten(self):
        g = build_grid(2, [1.0, 2.0], [4, 3])
        x = g.cell_centers()
        quad = x[..., 0] ** 2 + x[..., 1] ** 2
        lap = g.unflatten(neumann_laplacian(g) @ g.flatten(quad))
        # interior cells see the exact Laplacian of a quadratic
        np.testing.assert_allclose(lap[1:-1, 1:-1], 4.0, rtol=1e-10)


class TestDiffusionStep:
    def test_constant_unchanged(self, grid2d):
        w = Field.constant(grid2d, 2.5)
        out = diffusion_step(w, coeffs(grid2d, 0.3), 0.1)
        np.testing.assert_allclose(out.values, 2.5, rtol=1e-10)

    def test_mass_conserved(self, rng):
        g = build_grid(2, [1.0, 1.0], [32, 32])
        w = Field(g, rng.uniform(size=g.shape))
        out = diffusion_step(w, coeffs(g, 0.1), 0.01)
        assert abs(out.mass() - w.mass()) <= 1e-10 * w.mass()

    def test_cosine_decay(self):
        g = build_grid(1, [1.0], [128])
        mu, T = 0.1, 0.2
        f = g.faces(0)
        avg = (np.sin(np.pi * f[1:]) - np.sin(np.pi * f[:-1])) / (np.pi * g.spacing[0])
        traj = simulate_diffusion(Field(g, avg), lambda t: coeffs(g, mu), T, dt=1e-3)
        exact = avg * np.exp(-mu * np.pi ** 2 * T)
        # O(dt) + O(h^2): backward Euler error ~ T (mu pi^2)^2 dt / 2
        assert np.abs(traj.final.values - exact).max() < 2e-4

    def test_reaction_term_split(self):
        g = build_grid(1, [1.0], [4])
        w = Field.constant(g, 1.0)
        grow = diffusion_step(w, coeffs(g, 0.1, B=2.0), 0.1).values
        decay = diffusion_step(w, coeffs(g, 0.1, B=-2.0), 0.1).values
        # growth is explicit, decay implicit
        np.testing.assert_allclose(grow, 1.2, rtol=1e-10)
        np.testing.assert_allclose(decay, 1 / 1.2, rtol=1e-10)

    def test_source(self):
        g = build_grid(1, [1.0], [8])
        out = diffusion_step(Field.zeros(g), coeffs(g, 0.1, b=3.0), 0.5)
        np.testing.assert_allclose(out.values, 1.5, rtol=1e-10)

    def test_solver_failure_raises(self, rng):
        g = build_grid(2, [1.0, 1.0], [16, 16])
        w = Field(g, rng.normal(size=g.shape))
        with pytest.raises(LinearSolverError):
            diffusion_step(w, coeffs(g, 1.0), 1.0, lin_tol=1e-14, max_iter=1)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0, 5), min_size=10, max_size=10),
           st.lists(st.floats(-20, 20), min_size=10, max_size=10),
           st.floats(1e-3, 1.0))
    def test_positivity_any_reaction(self, w, B, dt):
        g = build_grid(1, [1.0], [10])
        out = diffusion_step(Field(g, w), DiffusionCoefficients(
            0.05, Field(g, B), Field.zeros(g)), dt)
        assert out.values.min() >= -1e-12


class TestSimulateDiffusion:
    def test_zero_data(self, grid1d):
        traj = simulate_diffusion(Field.zeros(grid1d), lambda t: coeffs(grid1d, 0.1), 0.5,
                                  dt=0.1)
        assert all(not s.any() for s in traj.states)

    def test_nonnegative_with_nonnegative_data(self, rng):
        g = build_grid(2, [1.0, 1.0], [12, 12])
        B = rng.normal(size=g.shape) * 3
        b = rng.uniform(size=g.shape)
        w0 = Field(g, rng.uniform(size=g.shape) * (rng.uniform(size=g.shape) > 0.5))
        traj = simulate_diffusion(w0, lambda t: coeffs(g, 0.05, B, b), 0.5, dt=0.05)
        assert min(s.min() for s in traj.states) >= -1e-12

    def test_records_norms(self, grid1d):
        traj = simulate_diffusion(Field.constant(grid1d, 1.0),
                                  lambda t: coeffs(grid1d, 0.1, B=-1.0, b=2.0), 0.3, dt=0.1)
        np.testing.assert_allclose(traj.B_inf, 1.0)
        np.testing.assert_allclose(traj.b_l1, 2.0)
        assert traj.gradient_l1().shape == (4,)


class TestNeumannKernel:
    @pytest.mark.parametrize("tau", [0.01, 0.1])
    @pytest.mark.parametrize("y", [0.0, 0.2, 0.95])
    def test_unit_mass(self, tau, y):
        k = NeumannKernel1D(1.0, 0.5)
        mass = integrate.quad(lambda x: neumann_kernel_eval(k, tau, x, 0.0, y), 0, 1,
                              points=[y], epsabs=1e-13, limit=200)[0]
        assert mass == pytest.approx(1.0, abs=1e-8)

    def test_symmetry_and_sign(self, rng):
        k = NeumannKernel1D(1.0, 0.2)
        x, y = rng.uniform(size=(2, 50))
        a = neumann_kernel_eval(k, 0.3, x, 0.1, y)
        np.testing.assert_allclose(a, neumann_kernel_eval(k, 0.3, y, 0.1, x), rtol=1e-14)
        assert (a >= 0).all()

    @pytest.mark.parametrize("mu", [0.5, 1.0])
    def test_gaussian_envelope(self, mu):
        k = NeumannKernel1D(1.0, mu)
        x = np.linspace(0, 1, 21)
        X, Y = np.meshgrid(x, x)
        for tau in (1e-3, 1e-2, 0.1, 1.0, 10.0):
            N = neumann_kernel_eval(k, tau, X, 0.0, Y)
            env = (1 + tau ** -0.5) * np.exp(-(X - Y) ** 2 / (8 * mu * tau))
            assert (N <= env).all()

    def test_envelope_fails_for_small_diffusivity(self):
        # at a wall the direct and mirrored Gaussians double up
        k = NeumannKernel1D(1.0, 0.05)
        tau = 1e-3
        N = neumann_kernel_eval(k, tau, 0.0, 0.0, 0.0)
        assert N > 1 + tau ** -0.5

    def test_domain_error(self):
        k = NeumannKernel1D(1.0, 0.1)
        with pytest.raises(ValueError):
            neumann_kernel_eval(k, 0.1, 0.5, 0.1, 0.5)

    def test_cell_integrals_sum_to_one(self):
        k = NeumannKernel1D(2.0, 0.3)
        faces = np.linspace(0, 2.0, 41)
        W = neumann_kernel_cell_integrals(k, 0.05, np.array([0.0, 0.7, 2.0]), faces)
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)

    def test_cell_integrals_match_quadrature(self):
        k = NeumannKernel1D(1.0, 0.2)
        faces = np.linspace(0, 1, 11)
        W = neumann_kernel_cell_integrals(k, 0.02, np.array([0.33]), faces)
        ref = [integrate.quad(lambda y: neumann_kernel_eval(k, 0.02, 0.33, 0.0, y), a, b)[0]
               for a, b in zip(faces[:-1], faces[1:])]
        np.testing.assert_allclose(W[0], ref, atol=1e-10)

    def test_long_time_flat(self):
        k = NeumannKernel1D(1.0, 1.0)
        np.testing.assert_allclose(neumann_kernel_eval(k, 10.0, np.linspace(0, 1, 5), 0.0, 0.3),
                                   1.0, rtol=1e-10)


class TestRepresentation:
    def test_zero_data(self):
        g = build_grid(1, [1.0], [32])
        traj = simulate_diffusion(Field.zeros(g), lambda t: coeffs(g, 0.1), 0.1, dt=0.01)
        assert representation_residual(traj, Field.zeros(g), None, None,
                                       NeumannKernel1D(1.0, 0.1)) == 0.0

    def test_constant_source_adds_linear_growth(self):
        g = build_grid(1, [1.0], [64])
        mu, b = 0.5, 0.7
        w0 = Field(g, np.cos(np.pi * g.centers(0)))
        traj = simulate_diffusion(w0, lambda t: coeffs(g, mu, b=b), 2.0, dt=1e-3)
        res = representation_residual(traj, w0, None, lambda t: np.full(g.shape, b),
                                      NeumannKernel1D(1.0, mu))
        assert res < 1e-3
        np.testing.assert_allclose(traj.final.values, 2.0 * b, atol=1e-3)

    def test_requires_1d(self, grid2d):
        traj = simulate_diffusion(Field.zeros(grid2d), lambda t: coeffs(grid2d, 0.1), 0.1,
                                  dt=0.05)
        with pytest.raises(UnsupportedDimensionError):
            representation_residual(traj, Field.zeros(grid2d), None, None,
                                    NeumannKernel1D(1.0, 0.1))

"""Upwind transport: stability limit, conservation, monotonicity and sources."""

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypparab.errors import StabilityError
from hypparab.geometry import Field, VectorField, build_grid, total_variation
from hypparab.hyperbolic import (TransportCoefficients, discrete_divergence, max_stable_dt,
                                 outflow_fraction, simulate_transport, transport_step)


def uniform_velocity(grid, *components):
    vals = np.zeros(grid.shape + (grid.dimension,))
    for d, value in enumerate(components):
        vals[..., d] = value
    return VectorField(grid, vals)


def coefficients(grid, c=None, A=0.0, a=0.0):
    c = VectorField.zeros(grid) if c is None else c
    return TransportCoefficients(c, Field(grid, np.broadcast_to(A, grid.shape)),
                                 Field(grid, np.broadcast_to(a, grid.shape)))


class TestMaxStableDt:
    def test_zero_velocity_gives_cap(self, grid2d):
        assert max_stable_dt(VectorField.zeros(grid2d), grid2d, 0.5, dt_max=0.3) == 0.3

    def test_1d_formula(self):
        g = build_grid(1, [1.0], [10])
        assert max_stable_dt(uniform_velocity(g, 2.0), g, 0.5) == pytest.approx(0.025)

    def test_2d_divisor(self):
        g = build_grid(2, [1.0, 1.0], [10, 10])
        assert max_stable_dt(uniform_velocity(g, 1.0, -1.0), g, 1.0) == pytest.approx(0.05)

    def test_rejects_bad_cfl(self, grid1d):
        with pytest.raises(ValueError):
            max_stable_dt(uniform_velocity(grid1d, 1.0), grid1d, 1.5)


class TestTransportStep:
    def test_identity_without_coefficients(self, grid2d, rng):
        u = Field(grid2d, rng.normal(size=grid2d.shape))
        out = transport_step(u, coefficients(grid2d), 0.1)
        np.testing.assert_array_equal(out.values, u.values)

    def test_refuses_cfl_violation(self):
        g = build_grid(1, [1.0], [10])
        u = Field.constant(g, 1.0)
        with pytest.raises(StabilityError):
            transport_step(u, coefficients(g, uniform_velocity(g, 2.0)), 0.051)

    def test_unit_cfl_is_exact_shift(self):
        g = build_grid(1, [1.0], [20])
        u = np.zeros(20)
        u[5:9] = [1.0, 2.0, 3.0, 4.0]
        out = transport_step(Field(g, u), coefficients(g, uniform_velocity(g, 1.0)), 0.05)
        np.testing.assert_allclose(out.values, np.roll(u, 1), atol=1e-15)

    def test_negative_velocity_shifts_left(self):
        g = build_grid(1, [1.0], [20])
        u = np.zeros(20)
        u[10] = 1.0
        out = transport_step(Field(g, u), coefficients(g, uniform_velocity(g, -1.0)), 0.05)
        np.testing.assert_allclose(out.values, np.roll(u, -1), atol=1e-15)

    def test_outflow_through_boundary(self):
        g = build_grid(1, [1.0], [10])
        u = np.zeros(10)
        u[-1] = 1.0
        out = transport_step(Field(g, u), coefficients(g, uniform_velocity(g, 1.0)), 0.05)
        assert out.values.sum() == pytest.approx(0.5)

    def test_mass_conserved_when_boundary_velocity_vanishes(self, rng):
        g = build_grid(2, [1.0, 1.0], [20, 20])
        x = g.cell_centers()
        vals = np.stack([np.sin(np.pi * x[..., 0]) * np.cos(2 * x[..., 1]),
                         np.sin(np.pi * x[..., 1]) * 0.5], axis=-1)
        vals[0, :, 0] = vals[-1, :, 0] = 0.0
        vals[:, 0, 1] = vals[:, -1, 1] = 0.0
        c = VectorField(g, vals)
        u = Field(g, rng.uniform(size=g.shape))
        dt = max_stable_dt(c, g, 0.5)
        out = transport_step(u, coefficients(g, c), dt)
        assert out.mass() == pytest.approx(u.mass(), rel=1e-14)

    def test_source_applied_after_flux(self):
        g = build_grid(1, [1.0], [10])
        u = Field.constant(g, 2.0)
        out = transport_step(u, coefficients(g, A=-0.5, a=1.0), 0.1)
        np.testing.assert_allclose(out.values, 2.0 + 0.1 * (-0.5 * 2.0 + 1.0))

    def test_warns_when_decay_overshoots(self, grid1d):
        with pytest.warns(RuntimeWarning):
            transport_step(Field.constant(grid1d, 1.0), coefficients(grid1d, A=-20.0), 0.1)

    def test_no_warning_for_moderate_decay(self, grid1d):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            transport_step(Field.constant(grid1d, 1.0), coefficients(grid1d, A=-2.0), 0.1)

    def test_outflow_fraction_bounded_at_half_cfl(self, rng):
        g = build_grid(2, [1.0, 1.0], [12, 12])
        c = VectorField(g, rng.normal(size=g.shape + (2,)))
        dt = max_stable_dt(c, g, 0.5)
        assert outflow_fraction(c, g, dt).max() <= 1.0

    def test_divergence_of_linear_field(self):
        g = build_grid(1, [1.0], [10])
        c = VectorField(g, (3.0 * g.centers(0))[:, None])
        div = discrete_divergence(c, g)
        np.testing.assert_allclose(div[1:-1], 3.0, rtol=1e-12)


class TestMonotonicity:
    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0, 10), min_size=12, max_size=12),
           st.lists(st.floats(-3, 3), min_size=12, max_size=12))
    def test_positivity_and_l1_contraction(self, u, vel):
        g = build_grid(1, [1.0], [12])
        c = VectorField(g, np.array(vel)[:, None])
        dt = max_stable_dt(c, g, 0.5)
        out = transport_step(Field(g, u), coefficients(g, c), dt).values
        assert out.min() >= 0.0
        assert np.abs(out).sum() <= np.abs(u).sum() * (1 + 1e-12) + 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=16, max_size=16), st.floats(-2, 2))
    def test_tv_diminishing_for_constant_velocity(self, u, speed):
        g = build_grid(1, [1.0], [16])
        c = uniform_velocity(g, speed)
        dt = max_stable_dt(c, g, 0.9)
        out = transport_step(Field(g, u), coefficients(g, c), dt).values
        # the zero ghost state counts as part of the variation
        padded = lambda v: np.concatenate([[0.0], v, [0.0]])
        assert np.abs(np.diff(padded(out))).sum() <= np.abs(np.diff(padded(np.array(u)))).sum() + 1e-9


class TestSimulateTransport:
    def test_zero_data(self, grid2d):
        traj = simulate_transport(Field.zeros(grid2d), lambda t: coefficients(grid2d), 1.0,
                                  dt=0.1)
        assert all(not s.any() for s in traj.states)
        assert len(traj.times) == 11

    def test_step_lands_on_final_time(self, grid1d):
        traj = simulate_transport(Field.constant(grid1d, 1.0),
                                  lambda t: coefficients(grid1d), 1.0, dt=0.3)
        assert traj.times[-1] == pytest.approx(1.0)
        np.testing.assert_allclose(traj.dts, 0.25)

    def test_exponential_growth_rate(self, grid1d):
        traj = simulate_transport(Field.constant(grid1d, 1.0),
                                  lambda t: coefficients(grid1d, A=1.0), 1.0, dt=1e-3)
        assert traj.final.values[0] == pytest.approx(np.e, rel=2e-3)
        assert traj.final.values[0] <= np.e

    def test_time_dependent_source(self, grid1d):
        traj = simulate_transport(Field.zeros(grid1d),
                                  lambda t: coefficients(grid1d, a=2 * t), 1.0, dt=0.01,
                                  record_coefficients=True)
        # left-endpoint sum of 2t
        assert traj.final.values[0] == pytest.approx(0.99)
        assert len(traj.coefficients) == 100

    def test_tv_bounded_by_initial_with_zero_boundary_flow(self):
        g = build_grid(1, [1.0], [64])
        x = g.centers(0)
        c = VectorField(g, (np.sin(np.pi * x) * 0.8)[:, None])
        c.values[0] = c.values[-1] = 0.0
        u0 = Field(g, (np.abs(x - 0.3) < 0.1).astype(float))
        traj = simulate_transport(u0, lambda t: coefficients(g, c), 0.5,
                                  dt=max_stable_dt(c, g, 0.5))
        assert traj.final.mass() == pytest.approx(u0.mass(), rel=1e-12)
        assert total_variation(traj.final.values, g) <= total_variation(u0.values, g) + 1e-12

"""Tests for the pseudo-spectral vorticity solver."""

import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

import viscoclosure.spectral_flow as sf
from viscoclosure.asymptotic_closure import ScalingParams


def make_params(lam=1.0, eta=0.0):
    return ScalingParams(gamma=0.2, c=1.0, lam=lam, eta=eta, rho=1.0)


def coupled_rhs(tau_field, params):
    def rhs(state):
        return sf.vorticity_rhs_coupled(state, tau_field, params)

    return rhs


class TestGridSetup:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            sf.init_grid(nx=100, ny=128)
        with pytest.raises(ValueError):
            sf.init_grid(nx=128, ny=96)

    def test_rejects_too_small(self):
        with pytest.raises(ValueError):
            sf.init_grid(nx=16, ny=16)

    def test_rejects_bad_lengths(self):
        with pytest.raises(ValueError):
            sf.init_grid(nx=64, ny=64, Lx=-1.0)
        with pytest.raises(ValueError):
            sf.init_grid(nx=64, ny=64, Ly=0.0)

    def test_coordinates_cover_half_open_box(self):
        state = sf.init_grid(nx=64, ny=64, Lx=4.0, Ly=2.0)
        X, Y = sf.grid_coordinates(state)
        assert X[0, 0] == 0.0 and Y[0, 0] == 0.0
        assert X.max() == pytest.approx(4.0 - 4.0 / 64)
        assert Y.max() == pytest.approx(2.0 - 2.0 / 64)
        assert X.shape == (64, 64)

    def test_spectral_workspace_attached(self):
        state = sf.init_grid(nx=64, ny=64)
        assert state.KX.shape == state.K2.shape == state.dealias.shape
        assert state.dealias.dtype == bool or state.dealias.max() <= 1.0


class TestPoissonVelocity:
    def test_single_mode_velocity(self):
        # omega = sin(x) induces v = (0, -cos(x)) under lap(psi) = omega.
        state = sf.init_grid(nx=64, ny=64)
        X, _ = sf.grid_coordinates(state)
        state = replace(state, omega=np.sin(X))
        v = sf.poisson_velocity(state)
        assert np.max(np.abs(v[0])) < 1e-13
        np.testing.assert_allclose(v[1], -np.cos(X), atol=1e-13)

    def test_mean_vorticity_mode_dropped(self):
        state = sf.init_grid(nx=64, ny=64)
        X, _ = sf.grid_coordinates(state)
        v0 = sf.poisson_velocity(replace(state, omega=np.sin(X)))
        v1 = sf.poisson_velocity(replace(state, omega=np.sin(X) + 3.7))
        np.testing.assert_allclose(v1, v0, atol=1e-13)

    def test_dealiased_mode_gives_no_velocity(self):
        # A mode beyond the 2/3 cutoff is filtered before the solve.
        state = sf.init_grid(nx=64, ny=64)
        X, _ = sf.grid_coordinates(state)
        state = replace(state, omega=np.sin(30.0 * X))
        assert np.max(np.abs(sf.poisson_velocity(state))) < 1e-14

    def test_kinetic_energy_single_mode(self):
        # v = (0, -cos x): integral of cos^2 over the box is 2 pi^2.
        state = sf.init_grid(nx=64, ny=64)
        X, _ = sf.grid_coordinates(state)
        state = replace(state, omega=np.sin(X))
        assert sf.kinetic_energy(state) == pytest.approx(2.0 * np.pi**2, rel=1e-12)


class TestVelocityGradient:
    def test_single_mode_gradient(self):
        state = sf.init_grid(nx=64, ny=64)
        X, _ = sf.grid_coordinates(state)
        state = replace(state, omega=np.sin(X))
        g = sf.velocity_gradient(state)
        np.testing.assert_allclose(g[..., 1, 0], np.sin(X), atol=1e-12)
        for i, j in [(0, 0), (0, 1), (1, 1)]:
            assert np.max(np.abs(g[..., i, j])) < 1e-13

    def test_incompressibility_and_curl(self):
        state = sf.init_grid(nx=64, ny=64)
        X, Y = sf.grid_coordinates(state)
        omega = np.sin(2 * X) * np.cos(Y) + 0.3 * np.cos(X + Y)
        state = replace(state, omega=omega)
        g = sf.velocity_gradient(state)
        assert np.max(np.abs(g[..., 0, 0] + g[..., 1, 1])) < 1e-13
        np.testing.assert_allclose(g[..., 1, 0] - g[..., 0, 1], omega, atol=1e-13)


class TestBackgroundFlow:
    def test_linear_strain_in_the_interior(self):
        state = sf.init_grid(nx=64, ny=64)
        bg = sf.BackgroundFlow(kappa=2.0, taper_fraction=0.1)
        ub = sf.background_velocity(state, bg)
        X, Y = sf.grid_coordinates(state)
        ic = 32
        assert ub[0][ic, ic] == 0.0 and ub[1][ic, ic] == 0.0
        xo = X[ic + 5, ic] - 0.5 * state.Lx
        yo = Y[ic, ic + 5] - 0.5 * state.Ly
        assert ub[0][ic + 5, ic] == pytest.approx(2.0 * xo, rel=1e-12)
        assert ub[1][ic, ic + 5] == pytest.approx(-2.0 * yo, rel=1e-12)

    def test_tapers_to_zero_on_the_boundary(self):
        state = sf.init_grid(nx=64, ny=64)
        ub = sf.background_velocity(state, sf.BackgroundFlow(kappa=3.0))
        assert abs(ub[0][0, 0]) < 1e-14
        assert abs(ub[1][0, 0]) < 1e-14
        assert np.max(np.abs(ub[0][0, :])) < 1e-14

    def test_zero_kappa_is_quiescent(self):
        state = sf.init_grid(nx=32, ny=32)
        ub = sf.background_velocity(state, sf.BackgroundFlow(kappa=0.0))
        assert np.all(ub == 0.0)


class TestRightHandSides:
    def test_isotropic_stress_exerts_no_torque(self):
        # curl(div(a(x) I)) vanishes identically, so a spatially varying
        # isotropic stress must not force the vorticity.
        state = sf.init_grid(nx=64, ny=64)
        X, Y = sf.grid_coordinates(state)
        state = replace(state, omega=np.zeros_like(X), density=np.ones_like(X))
        a = 0.7 * np.sin(X) * np.cos(2 * Y) + 0.1
        tau_iso = a[..., None, None] * np.eye(2)
        domega, _ = sf.vorticity_rhs_coupled(state, tau_iso, make_params(lam=3.0))
        assert np.max(np.abs(domega)) < 1e-14

    def test_constant_stress_exerts_no_torque(self):
        state = sf.init_grid(nx=64, ny=64)
        X, _ = sf.grid_coordinates(state)
        state = replace(state, omega=np.zeros_like(X), density=np.ones_like(X))
        tau = np.array([[0.4, -1.2], [0.9, -0.4]])
        domega, _ = sf.vorticity_rhs_coupled(state, tau, make_params(lam=2.0))
        assert np.max(np.abs(domega)) < 1e-14

    def test_forcing_scales_linearly_with_lam(self):
        state = sf.init_grid(nx=64, ny=64)
        X, Y = sf.grid_coordinates(state)
        state = replace(state, omega=np.zeros_like(X), density=np.ones_like(X))
        tau = np.stack(
            [
                np.stack([0.2 * np.sin(X), 0.05 * np.cos(Y)], axis=-1),
                np.stack([0.05 * np.cos(Y), -0.2 * np.sin(X)], axis=-1),
            ],
            axis=-2,
        )
        d1, _ = sf.vorticity_rhs_coupled(state, tau, make_params(lam=1.0))
        d3, _ = sf.vorticity_rhs_coupled(state, tau, make_params(lam=3.0))
        np.testing.assert_allclose(d3, 3.0 * d1, rtol=1e-13)

    def test_perturbation_matches_coupled_for_separable_stress(self):
        # With tau(x) = tau_c f0(x) the coupled curl-div forcing reduces to
        # the perturbation form (t22 - t11) dxy f0 + t21 dxx f0 - t12 dyy f0.
        state = sf.init_grid(nx=64, ny=64)
        X, Y = sf.grid_coordinates(state)
        f0 = np.exp(np.cos(X)) * (1.0 + 0.2 * np.sin(Y))
        tau_c = np.array([[0.3, -0.8], [1.1, -0.25]])
        params = make_params(lam=2.5)
        zero = np.zeros_like(X)
        dom_c, _ = sf.vorticity_rhs_coupled(
            replace(state, omega=zero, density=f0), f0[..., None, None] * tau_c, params
        )
        dom_p, df0 = sf.vorticity_rhs_perturbation(
            replace(state, omega=zero, density=f0),
            sf.BackgroundFlow(kappa=0.0),
            tau_c,
            f0,
            params,
        )
        scale = np.max(np.abs(dom_c))
        assert scale > 1.0
        np.testing.assert_allclose(dom_c, dom_p, atol=1e-11 * scale)
        assert np.max(np.abs(df0)) < 1e-14

    def test_viscosity_enters_through_laplacian(self):
        state = sf.init_grid(nx=64, ny=64)
        X, Y = sf.grid_coordinates(state)
        omega = np.cos(X) * np.sin(2 * Y)
        state = replace(state, omega=omega, density=np.ones_like(X))
        d0, _ = sf.vorticity_rhs_coupled(state, np.zeros((2, 2)), make_params(eta=0.0))
        d1, _ = sf.vorticity_rhs_coupled(state, np.zeros((2, 2)), make_params(eta=0.05))
        # omega is an eigenfunction of the laplacian with eigenvalue -(1 + 4).
        np.testing.assert_allclose(d1 - d0, -0.25 * omega, atol=1e-13)


class TestTimeStepping:
    def test_rejects_nonpositive_dt(self):
        state = sf.init_grid(nx=32, ny=32)
        rhs = coupled_rhs(np.zeros((2, 2)), make_params())
        with pytest.raises(ValueError):
            sf.rk4_step(state, rhs, 0.0)
        with pytest.raises(ValueError):
            sf.rk4_step(state, rhs, -0.01)

    def test_cfl_number_formula(self):
        state = sf.init_grid(nx=64, ny=64)
        X, _ = sf.grid_coordinates(state)
        state = replace(state, omega=np.sin(X))
        h = state.Lx / state.nx
        expected = 0.02 * (1.0 / h + 0.01 * 4.0 * np.pi**2 / h**2)
        assert sf.cfl_number(state, 0.02, eta=0.01) == pytest.approx(expected, rel=1e-12)

    def test_cfl_violation_warns_and_matches_substeps(self):
        state = sf.init_grid(nx=64, ny=64)
        state = sf.lamb_chaplygin(state, U0=4.0)
        state = replace(state, density=np.ones((64, 64)))
        rhs = coupled_rhs(np.zeros((2, 2)), make_params())
        dt = 0.2
        number = sf.cfl_number(state, dt)
        assert number > 0.5
        with pytest.warns(UserWarning, match="halving"):
            stepped = sf.rk4_step(state, rhs, dt)
        sub = 2 ** math.ceil(math.log2(number / 0.5))
        manual = state
        for _ in range(sub):
            manual = sf._rk4_single(manual, rhs, dt / sub)
        np.testing.assert_array_equal(stepped.omega, manual.omega)
        assert stepped.time == pytest.approx(dt)

    def test_runaway_cfl_aborts(self):
        state = sf.init_grid(nx=64, ny=64)
        state = sf.lamb_chaplygin(state, U0=4.0)
        state = replace(state, density=np.ones((64, 64)))
        rhs = coupled_rhs(np.zeros((2, 2)), make_params())
        with pytest.raises(RuntimeError, match="halvings"):
            sf.rk4_step(state, rhs, 20.0)

    def test_taylor_green_decays_exactly(self):
        # Taylor-Green is a stationary pattern under self-advection, so the
        # spectral solution reduces to exact viscous decay of one mode.
        eta = 0.01
        state = sf.init_grid(nx=64, ny=64)
        X, Y = sf.grid_coordinates(state)
        state = replace(state, omega=2.0 * np.cos(X) * np.cos(Y), density=np.ones_like(X))
        rhs = coupled_rhs(np.zeros((2, 2)), make_params(eta=eta))
        dt, n = 0.008, 125
        for _ in range(n):
            state = sf.rk4_step(state, rhs, dt, eta=eta)
        exact = 2.0 * np.cos(X) * np.cos(Y) * np.exp(-2.0 * eta * n * dt)
        rel = np.max(np.abs(state.omega - exact)) / np.max(np.abs(exact))
        assert rel < 1e-12
        assert np.max(np.abs(state.density - 1.0)) < 1e-12

    def test_mean_vorticity_and_mass_are_conserved(self):
        state = sf.init_grid(nx=64, ny=64)
        state = sf.lamb_chaplygin(state, U0=1.0)
        state = sf.gaussian_density(state, normalization="standard")
        X, Y = sf.grid_coordinates(state)
        tau = np.stack(
            [
                np.stack([0.2 * np.sin(X), 0.05 * np.cos(Y)], axis=-1),
                np.stack([0.05 * np.cos(Y), -0.2 * np.sin(X)], axis=-1),
            ],
            axis=-2,
        )
        params = ScalingParams(gamma=0.5, c=1.0, lam=1.5, eta=0.02, rho=1.0)
        rhs = coupled_rhs(tau, params)
        mass0 = float(np.mean(state.density))
        for _ in range(20):
            m0 = float(np.mean(state.omega))
            state = sf.rk4_step(state, rhs, 0.002, eta=params.eta)
            assert abs(float(np.mean(state.omega)) - m0) < 1e-14
        assert abs(float(np.mean(state.density)) - mass0) < 1e-13


class TestInitialConditions:
    def test_lamb_chaplygin_reference_values(self):
        state = sf.init_grid(nx=128, ny=128)
        state = sf.lamb_chaplygin(state, U0=1.0)
        assert abs(float(np.mean(state.omega))) < 1e-15
        assert float(np.max(np.abs(state.omega))) == pytest.approx(14.068792345611934, rel=1e-8)
        assert sf.kinetic_energy(state) == pytest.approx(7.560433318951339, rel=1e-8)

    def test_lamb_chaplygin_scales_with_u0(self):
        state = sf.init_grid(nx=64, ny=64)
        w1 = sf.lamb_chaplygin(state, U0=1.0).omega
        w2 = sf.lamb_chaplygin(state, U0=2.0).omega
        np.testing.assert_allclose(w2, 2.0 * w1, atol=1e-14)

    def test_lamb_chaplygin_vanishes_outside_the_dipole(self):
        state = sf.init_grid(nx=128, ny=128)
        R = state.Lx / 8.0
        state = sf.lamb_chaplygin(state, U0=1.0, R=R)
        X, Y = sf.grid_coordinates(state)
        r = np.hypot(X - 0.5 * state.Lx, Y - 0.5 * state.Ly)
        assert np.max(np.abs(state.omega[r > 1.05 * R])) < 1e-14

    def test_lamb_chaplygin_radius_validation(self):
        state = sf.init_grid(nx=64, ny=64)
        with pytest.raises(ValueError):
            sf.lamb_chaplygin(state, R=state.Lx / 3.0)

    def test_gaussian_density_normalizations(self):
        state = sf.init_grid(nx=128, ny=128)
        dA = (state.Lx / state.nx) * (state.Ly / state.ny)
        standard = sf.gaussian_density(state, 0.1, 0.75, normalization="standard").density
        paper = sf.gaussian_density(state, 0.1, 0.75, normalization="paper").density
        assert float(np.sum(standard) * dA) == pytest.approx(1.0, abs=1e-3)
        ratio = (0.1 * 0.75) / np.sqrt(0.1**2 + 0.75**2)
        np.testing.assert_allclose(paper, ratio * standard, rtol=1e-12)

    def test_gaussian_density_rejects_unknown_normalization(self):
        state = sf.init_grid(nx=32, ny=32)
        with pytest.raises(ValueError):
            sf.gaussian_density(state, normalization="unit")

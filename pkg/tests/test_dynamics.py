import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetmpc.dynamics import (HP, HW, PHI, X, State, Wrench, augmented_dynamics, dynamics,
                             dynamics_thrust_input, linear_model_pattern, linearize, state_dim)
from jetmpc.kinematics import hover_thrust
from jetmpc.oracles import central_difference, frozen_dynamics, newton_euler_momentum_rates
from jetmpc.selftest import check_lambda, check_linearization, random_operating_point
from jetmpc.sim import equilibrium_input


def test_state_dimensions():
    assert state_dim(4) == 20
    assert state_dim(4, jet_dynamics=False) == 12


def test_state_vector_round_trip(rng):
    z = rng.normal(size=20)
    np.testing.assert_array_equal(State.from_vector(z, 4).as_vector(), z)


def test_hover_is_an_equilibrium(robot, jets):
    T = hover_thrust(robot)
    z = np.concatenate([[0.0, 0.0, 1.0], np.zeros(9), T, np.zeros(4)])
    u = np.concatenate([np.zeros(4), equilibrium_input(jets, T)])
    np.testing.assert_allclose(dynamics(robot, jets, z, u), 0.0, atol=1e-10)


def test_free_fall_without_thrust(robot, jets):
    z = np.zeros(20)
    dz = dynamics(robot, jets, z, np.zeros(8))
    # zdot_G = hp / m, so hp_dot / m is the CoM acceleration
    assert dz[HP][2] / robot.mass == pytest.approx(-robot.gravity, abs=1e-9)
    np.testing.assert_allclose(dz[HP][:2], 0.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_momentum_rates_match_newton_euler(robot, jets, seed):
    rng = np.random.default_rng(seed)
    z, u, _, _ = random_operating_point(robot, jets, rng)
    force, torque = rng.normal(scale=20.0, size=3), rng.normal(scale=20.0, size=3)
    dz = dynamics(robot, jets, z[:20], u, Wrench(force, torque))
    dhp, dhw = newton_euler_momentum_rates(robot, z, u[:4], z[12:16], force, torque)
    np.testing.assert_allclose(dz[HP], dhp, atol=1e-9)
    np.testing.assert_allclose(dz[HW], dhw, atol=1e-9)


def test_thrust_input_variant_agrees_with_jet_state(robot, jets, rng):
    z, u, _, _ = random_operating_point(robot, jets, rng)
    full = dynamics(robot, jets, z[:20], u)
    reduced = dynamics_thrust_input(robot, z[:12], np.concatenate([u[:4], z[12:16]]))
    np.testing.assert_allclose(full[:12], reduced, atol=1e-12)


def test_augmented_errors(robot, jets, rng):
    z, u, x_ref, phi_ref = random_operating_point(robot, jets, rng)
    f = augmented_dynamics(robot, jets, z, u, x_ref, phi_ref)
    np.testing.assert_allclose(f[20:23], z[X] - x_ref)
    np.testing.assert_allclose(f[23:26], z[PHI] - phi_ref)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_linearization_is_tangent_and_matches_fd(robot, jets, seed, jet_dyn):
    rng = np.random.default_rng(seed)
    z, u, x_ref, phi_ref = random_operating_point(robot, jets, rng, jet_dyn)
    lm = linearize(robot, jets, z, u, x_ref, phi_ref, jet_dyn)
    f = lambda zz: frozen_dynamics(robot, jets, zz, u, z, x_ref, phi_ref, jet_dyn)
    g = lambda uu: frozen_dynamics(robot, jets, z, uu, z, x_ref, phi_ref, jet_dyn)
    np.testing.assert_allclose(lm.A, central_difference(f, z), atol=1e-5)
    np.testing.assert_allclose(lm.B, central_difference(g, u), atol=1e-5)
    np.testing.assert_allclose(lm.A @ z + lm.B @ u + lm.c, f(z), atol=1e-10)
    # tangency also holds against the full nonlinear model
    np.testing.assert_allclose(lm.A @ z + lm.B @ u + lm.c,
                               augmented_dynamics(robot, jets, z, u, x_ref, phi_ref, jet_dyn),
                               atol=1e-10)


def test_linearization_pattern_covers_entries(robot, jets, rng):
    for jet_dyn in (True, False):
        A_mask, B_mask = linear_model_pattern(4, 4, jet_dyn)
        for _ in range(10):
            z, u, xr, pr = random_operating_point(robot, jets, rng, jet_dyn)
            lm = linearize(robot, jets, z, u, xr, pr, jet_dyn)
            assert not np.any(lm.A[~A_mask])
            assert not np.any(lm.B[~B_mask])


def test_linearization_rejects_bad_shapes(robot, jets):
    with pytest.raises(ValueError):
        linearize(robot, jets, np.zeros(20), np.zeros(8), np.zeros(3), np.zeros(3))


def test_batch_oracle_checks_small_sample():
    eA, eB, tang = check_linearization(40, seed=7)
    assert max(eA, eB) <= 1e-5 and tang <= 1e-10
    assert check_lambda(40, seed=8) <= 1e-5

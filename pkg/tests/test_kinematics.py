import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetmpc.config import build_model, default_model_spec
from jetmpc.errors import SingularityError
from jetmpc.kinematics import (allocation_matrices, euler_from_rotation, euler_rate_matrix,
                               forward_kinematics, hover_thrust, rot_x, rot_y, rot_z,
                               rotation_from_euler, skew)
from jetmpc.oracles import body_rate_from_euler_rates, central_difference

angles = st.floats(-np.pi, np.pi)
pitches = st.floats(-1.4, 1.4)


@given(angles, pitches, angles)
def test_rotation_is_orthonormal(roll, pitch, yaw):
    R = rotation_from_euler([roll, pitch, yaw])
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


@given(angles, pitches, angles)
def test_euler_round_trip(roll, pitch, yaw):
    phi = np.array([roll, pitch, yaw])
    np.testing.assert_allclose(rotation_from_euler(euler_from_rotation(rotation_from_euler(phi))),
                               rotation_from_euler(phi), atol=1e-9)


def test_zyx_composition():
    phi = [0.3, -0.2, 1.1]
    np.testing.assert_allclose(rotation_from_euler(phi),
                               rot_z(1.1) @ rot_y(-0.2) @ rot_x(0.3), atol=1e-15)


@given(angles, pitches, angles, st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_euler_rate_matrix_maps_to_body_rate(roll, pitch, yaw, rates):
    phi = np.array([roll, pitch, yaw])
    omega = euler_rate_matrix(phi) @ np.asarray(rates)
    np.testing.assert_allclose(omega, body_rate_from_euler_rates(phi, rates), atol=1e-6)


def test_gimbal_lock_raises():
    with pytest.raises(SingularityError):
        euler_rate_matrix([0.0, np.pi / 2, 0.0])


def test_skew_matches_cross(rng):
    a, b = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-15)


def test_jacobians_match_finite_differences(robot, rng):
    for _ in range(20):
        s = rng.uniform(robot.s_min, robot.s_max)
        fr = forward_kinematics(robot, s)
        J_r = central_difference(lambda q: forward_kinematics(robot, q, False).r, s)
        np.testing.assert_allclose(fr.J_r, J_r, atol=1e-8)
        # dR_i/ds_k = S(J_omega[:, k]) R_i
        for k in range(robot.n_s):
            dR = central_difference(
                lambda q: forward_kinematics(robot, q, False).rotations.reshape(-1),
                s)[:, k].reshape(robot.n_j, 3, 3)
            for i in range(robot.n_j):
                np.testing.assert_allclose(dR[i], skew(fr.J_omega[i, :, k]) @ fr.rotations[i],
                                           atol=1e-8)


def test_hover_thrust_balances_gravity(robot):
    T = hover_thrust(robot)
    A_lin, A_ang = allocation_matrices(forward_kinematics(robot, np.zeros(robot.n_s), False))
    np.testing.assert_allclose(A_lin @ T, [0.0, 0.0, robot.mass * robot.gravity], atol=1e-9)
    np.testing.assert_allclose(A_ang @ T, 0.0, atol=1e-9)
    # frozen from the least-squares solve of the default geometry
    np.testing.assert_allclose(T, [114.25566746, 114.25566746, 112.06501945, 112.06501945],
                               atol=1e-6)


def test_default_robot_is_symmetric(robot):
    fr = forward_kinematics(robot, np.zeros(robot.n_s), False)
    mirror = np.diag([1.0, -1.0, 1.0])
    np.testing.assert_allclose(fr.r[1], mirror @ fr.r[0], atol=1e-15)
    np.testing.assert_allclose(fr.r[3], mirror @ fr.r[2], atol=1e-15)
    np.testing.assert_allclose(fr.directions[1], mirror @ fr.directions[0], atol=1e-15)


def test_arm_cant_breaks_squeeze_null_direction():
    # a symmetric roll of both arms must move some wrench component
    def wrench_rate(model):
        T = hover_thrust(model)
        d = np.array([0.0, 1.0, 0.0, -1.0])
        f = lambda a: np.concatenate(allocation_matrices(
            forward_kinematics(model, a * d, False))) @ T
        return np.abs(central_difference(lambda a: f(a[0]), np.zeros(1))).max()

    from jetmpc.kinematics import default_robot
    assert wrench_rate(default_robot(arm_cant_deg=0.0)) < 1e-6
    assert wrench_rate(default_robot()) > 1.0


def test_model_spec_builds_default_robot(robot, rng):
    built = build_model(default_model_spec())
    for _ in range(5):
        s = rng.uniform(robot.s_min, robot.s_max)
        a, b = forward_kinematics(robot, s), forward_kinematics(built, s)
        np.testing.assert_allclose(a.r, b.r, atol=1e-12)
        np.testing.assert_allclose(a.rotations, b.rotations, atol=1e-12)
        np.testing.assert_allclose(a.J_r, b.J_r, atol=1e-12)


def test_robot_model_validation(robot):
    from dataclasses import replace
    with pytest.raises(ValueError, match="mass"):
        replace(robot, mass=0.0)
    with pytest.raises(ValueError, match="inertia"):
        replace(robot, inertia=-np.eye(3))
    with pytest.raises(ValueError, match="limits"):
        replace(robot, s_min=robot.s_max)
    with pytest.raises(ValueError, match="shape"):
        forward_kinematics(robot, np.zeros(3))

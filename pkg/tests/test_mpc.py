import numpy as np
import pytest
from scipy.optimize import brentq

from jetmpc.dynamics import linearize
from jetmpc.errors import ConfigError
from jetmpc.kinematics import hover_thrust, rotation_from_euler
from jetmpc.mpc import (MULTI_RATE, NO_JET_DYNAMICS, SINGLE_RATE, MpcConfig, MpcWeights,
                        MultiRateMpc, QpBuilder, blocking_structure, build_qp,
                        sample_reference, shift_warm_start, timestep_schedule)
from jetmpc.qp import SOLVED, QpSolver, kkt_residuals
from jetmpc.sim import equilibrium_input
from jetmpc.trajectory import hold


def test_geometric_schedule():
    cfg = MpcConfig()
    dt = timestep_schedule(cfg)
    # independent root of dt0 (r^N - 1) / (r - 1) = H
    r = brentq(lambda r: cfg.dt0 * (r ** cfg.n_knots - 1) / (r - 1) - cfg.horizon, 1.01, 2.0,
               xtol=1e-14)
    assert len(dt) == 17
    assert dt[0] == cfg.dt0
    np.testing.assert_allclose(dt[1:] / dt[:-1], r, rtol=1e-10)
    assert r == pytest.approx(1.2643, abs=1e-4)
    assert dt.sum() == pytest.approx(cfg.horizon, abs=1e-9)


def test_uniform_schedule():
    dt = timestep_schedule(MpcConfig(uniform=True))
    np.testing.assert_allclose(dt, 1.0 / 17)


def test_unreachable_horizon_rejected():
    with pytest.raises(ConfigError):
        timestep_schedule(MpcConfig(horizon=0.05))


def test_config_validation():
    with pytest.raises(ConfigError, match="mode"):
        MpcConfig(mode="fast")
    with pytest.raises(ConfigError):
        MpcConfig(f_jet=30.0)
    with pytest.raises(ConfigError):
        MpcConfig(dt0=0.01)
    with pytest.raises(ValueError, match="negative"):
        MpcWeights(du_jet=-1.0)


def test_blocking_segments_follow_jet_period():
    cfg = MpcConfig()
    dt = timestep_schedule(cfg)
    starts = np.concatenate([[0.0], np.cumsum(dt)[:-1]])
    for j in range(cfg.n_ratio + 1):
        b = blocking_structure(dt, cfg, j, np.zeros(4))
        phase = (j % cfg.n_ratio) * cfg.dt0
        assert b.hold_first == (j % cfg.n_ratio != 0)
        assert np.all(np.diff(b.segment_ids) >= 0)
        # every knot sits in the jet period its start time falls into
        np.testing.assert_array_equal(b.segment_ids, np.floor((starts + phase) * cfg.f_jet + 1e-9))
    b = blocking_structure(dt, MpcConfig(mode=SINGLE_RATE), 3, np.zeros(4))
    np.testing.assert_array_equal(b.segment_ids, np.arange(17))
    assert not b.hold_first


def _hover_problem(robot, jets, mode=MULTI_RATE, j=0):
    cfg = MpcConfig(mode=mode)
    dt = timestep_schedule(cfg)
    knots = np.concatenate([[0.0], np.cumsum(dt)])
    T = hover_thrust(robot)
    jet_dyn = mode != NO_JET_DYNAMICS
    slow = equilibrium_input(jets, T) if jet_dyn else T
    x0 = np.array([0.0, 0.0, 1.0])
    base = np.concatenate([x0, np.zeros(9)] + ([T, np.zeros(4)] if jet_dyn else []))
    z0 = np.concatenate([base, np.zeros(6)])
    u_c = np.concatenate([np.zeros(4), slow])
    lm = linearize(robot, jets, z0, u_c, x0, np.zeros(3), jet_dyn)
    ref = sample_reference(hold(x0, 5.0), 0.0, knots, np.zeros(3), np.eye(3), robot.mass)
    blocking = blocking_structure(dt, cfg, j, slow)
    lo = (robot.s_min, robot.s_max)
    bounds = (*lo, np.full(4, jets.v_min), np.full(4, jets.v_max)) if jet_dyn else \
        (*lo, np.zeros(4), np.full(4, jets.T_max))
    qp, layout, const = build_qp(lm, z0, ref, dt, blocking, cfg, 4, 4, np.zeros(4), bounds)
    return cfg, qp, layout, const, z0, slow


def test_qp_dimensions(robot, jets):
    cfg, qp, layout, _, _, _ = _hover_problem(robot, jets)
    assert layout.nz == 26
    assert layout.n_eq == 18 * 26 == 468
    assert layout.n_seg == 7  # jet periods 0-4, 6, 7; period 5 has no knot start
    assert qp.n == 468 + 17 * 4 + 7 * 4
    assert qp.m == 468 + 17 * 4 + 7 * 4
    _, qp1, l1, _, _, _ = _hover_problem(robot, jets, SINGLE_RATE)
    assert l1.n_seg == 17 and qp1.n == 468 + 17 * 8
    _, qp2, l2, _, _, _ = _hover_problem(robot, jets, NO_JET_DYNAMICS)
    assert l2.nz == 18 and l2.n_eq == 18 * 18


@pytest.mark.parametrize("mode", [MULTI_RATE, SINGLE_RATE, NO_JET_DYNAMICS])
def test_hover_plan_stays_at_equilibrium(robot, jets, mode):
    _, qp, layout, const, z0, slow = _hover_problem(robot, jets, mode)
    sol = QpSolver().solve(qp)
    assert sol.status == SOLVED
    np.testing.assert_allclose(layout.states(sol.x) - z0, 0.0, atol=1e-6)
    np.testing.assert_allclose(layout.fast(sol.x), 0.0, atol=1e-6)
    np.testing.assert_allclose(layout.slow(sol.x), np.tile(slow, (layout.n_seg, 1)), atol=1e-6)
    # with zero cost at the equilibrium the optimal value is zero
    cost = 0.5 * sol.x @ (qp.P @ sol.x) + qp.q @ sol.x + const
    assert cost == pytest.approx(0.0, abs=1e-6)


def test_held_segment_equals_previous_input_exactly(robot, jets):
    _, qp, layout, _, _, slow = _hover_problem(robot, jets, MULTI_RATE, j=3)
    sol = QpSolver().solve(qp)
    np.testing.assert_array_equal(layout.slow(sol.x)[0], slow)


def test_cost_matches_direct_sum(robot, jets, rng):
    cfg, qp, layout, const, z0, slow = _hover_problem(robot, jets)
    x = rng.normal(size=qp.n)
    w = cfg.weights
    zs = layout.states(x)
    r = np.zeros_like(zs)
    r[:, 0:3] = [0.0, 0.0, 1.0]
    q_state = np.concatenate([w.x, w.hp, w.phi, w.hw, np.zeros(8), w.ex, w.ephi])
    expected = np.sum(q_state * (zs[1:] - r[1:]) ** 2)
    fast = layout.fast(x)
    expected += w.du_joint * np.sum(np.diff(np.vstack([np.zeros(4), fast]), axis=0) ** 2)
    slw = layout.slow(x)
    expected += w.du_jet * np.sum(np.diff(np.vstack([slow, slw]), axis=0) ** 2)
    got = 0.5 * x @ (qp.P @ x) + qp.q @ x + const
    assert got == pytest.approx(expected, rel=1e-10)


def test_shift_warm_start_keeps_dimensions(robot, jets):
    cfg = MpcConfig()
    builder = QpBuilder(4, 4, cfg)
    dt = timestep_schedule(cfg)
    old = builder.layout(blocking_structure(dt, cfg, 0, np.zeros(4)))
    new = builder.layout(blocking_structure(dt, cfg, 1, np.zeros(4)))
    x, y = np.arange(old.n_var, dtype=float), np.arange(old.n_con, dtype=float)
    xs, ys = shift_warm_start(x, y, old, new)
    assert xs.shape == (new.n_var,) and ys.shape == (new.n_con,)


def test_controller_hold_iterations_keep_previous_jet_input(robot, jets):
    cfg = MpcConfig()
    T = hover_thrust(robot)
    v = equilibrium_input(jets, T)
    ctl = MultiRateMpc(robot, jets, cfg, hold([0.0, 0.0, 1.0], 5.0), np.zeros(3))
    ctl.reset(np.zeros(4), v)
    z = np.concatenate([[0.05, -0.02, 1.03], np.zeros(9), T, np.zeros(4)])
    for j in range(2 * cfg.n_ratio):
        out = ctl.step(z, j * cfg.dt0)
        assert out.status == SOLVED
        assert out.jet_update == (j % cfg.n_ratio == 0)
        if out.hold:
            np.testing.assert_array_equal(out.qp_first_slow, out.u_prev_before)
            np.testing.assert_array_equal(out.slow_cmd, out.u_prev_before)


def test_single_rate_controller_issues_a_command_every_iteration(robot, jets):
    cfg = MpcConfig(mode=SINGLE_RATE)
    T = hover_thrust(robot)
    ctl = MultiRateMpc(robot, jets, cfg, hold([0.0, 0.0, 1.0], 5.0), np.zeros(3))
    ctl.reset(np.zeros(4), equilibrium_input(jets, T))
    z = np.concatenate([[0.05, -0.02, 1.03], np.zeros(9), T, np.zeros(4)])
    for j in range(3):
        out = ctl.step(z, j * cfg.dt0)
        assert out.jet_update and not out.hold
        np.testing.assert_array_equal(ctl.u_prev, out.slow_cmd)


def test_reference_momentum_in_body_frame(robot):
    from jetmpc.trajectory import MinJerkTrajectory
    traj = MinJerkTrajectory([0.0, 2.0], [[0.0, 0.0, 1.0], [1.0, 0.0, 1.0]])
    R = rotation_from_euler([0.0, 0.0, np.pi / 2])
    ref = sample_reference(traj, 1.0, np.array([0.0]), np.zeros(3), R, robot.mass)
    _, xd, _ = traj(1.0)
    np.testing.assert_allclose(ref.hp[0], robot.mass * R.T @ xd, atol=1e-12)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetmpc.oracles import quintic_segment
from jetmpc.trajectory import MinJerkTrajectory, hold, min_jerk_trajectory


def test_matches_dense_quintic_solve():
    traj = MinJerkTrajectory([0.0, 2.0, 5.0], [[0.0, 1.0], [1.0, -1.0], [0.5, 0.0]])
    for (t0, t1), (a, b) in [((0.0, 2.0), (traj.points[0], traj.points[1])),
                             ((2.0, 5.0), (traj.points[1], traj.points[2]))]:
        for d in range(2):
            c = quintic_segment(t0, t1, a[d], b[d])
            for t in np.linspace(t0, t1, 7):
                pos, vel, acc = traj(t)
                assert pos[d] == pytest.approx(np.polyval(c[::-1], t), abs=1e-10)
                assert vel[d] == pytest.approx(np.polyval(np.polyder(c[::-1]), t), abs=1e-9)
                assert acc[d] == pytest.approx(np.polyval(np.polyder(c[::-1], 2), t), abs=1e-8)


@settings(max_examples=50)
@given(st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3),
       st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3), st.floats(0.5, 5.0))
def test_rest_to_rest(a, b, T):
    traj = min_jerk_trajectory([(0.0, a), (T, b)])
    pos0, vel0, acc0 = traj(0.0)
    pos1, vel1, acc1 = traj(T)
    np.testing.assert_allclose(pos0, a, atol=1e-12)
    np.testing.assert_allclose(pos1, b, atol=1e-12)
    np.testing.assert_allclose([vel0, acc0, vel1, acc1], 0.0, atol=1e-12)
    # peak speed of a min-jerk segment is 15/8 of the average
    t = np.linspace(0.0, T, 2001)
    speed = np.abs(traj(t)[1]).max(axis=0)
    np.testing.assert_allclose(speed, 15.0 / 8.0 * np.abs(np.subtract(b, a)) / T, rtol=1e-5,
                               atol=1e-12)


def test_velocity_is_derivative_of_position():
    traj = MinJerkTrajectory([0.0, 1.0, 3.0], [[0.0], [1.0], [-1.0]])
    t = np.linspace(0.1, 2.9, 11)
    h = 1e-6
    fd = (traj(t + h)[0] - traj(t - h)[0]) / (2 * h)
    np.testing.assert_allclose(traj(t)[1], fd, atol=1e-6)


def test_holds_outside_range():
    traj = MinJerkTrajectory([1.0, 2.0], [[0.0], [3.0]])
    pos, vel, acc = traj(np.array([0.0, 5.0]))
    np.testing.assert_allclose(pos[:, 0], [0.0, 3.0])
    np.testing.assert_allclose(vel, 0.0)
    np.testing.assert_allclose(acc, 0.0)


def test_hold_is_constant():
    traj = hold([1.0, 2.0, 3.0], 4.0)
    np.testing.assert_allclose(traj(2.5)[0], [1.0, 2.0, 3.0])


@pytest.mark.parametrize("times, points, msg", [
    ([0.0], [[0.0]], "two waypoints"),
    ([0.0, 0.0], [[0.0], [1.0]], "increasing"),
    ([0.0, 1.0], [[0.0]], "one point"),
])
def test_invalid_waypoints(times, points, msg):
    with pytest.raises(ValueError, match=msg):
        MinJerkTrajectory(times, points)

"""Piecewise minimum-jerk (quintic) interpolation through timed waypoints."""

from __future__ import annotations

import numpy as np


class MinJerkTrajectory:
    """Rest-to-rest quintic segments between consecutive waypoints.

    Velocity and acceleration are zero at every waypoint. Outside
    ``[times[0], times[-1]]`` the nearest waypoint is held.

    Parameters
    ----------
    times : array-like, shape (n,)
        Strictly increasing waypoint times in seconds, ``n >= 2``.
    points : array-like, shape (n, d)
        Waypoint positions.
    """

    def __init__(self, times, points):
        self.times = np.asarray(times, dtype=float)
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.times.ndim != 1 or self.times.size < 2:
            raise ValueError("need at least two waypoints")
        if self.points.shape[0] != self.times.size:
            raise ValueError("one point per waypoint time is required")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("waypoint times must be strictly increasing")

    @property
    def t_end(self):
        return self.times[-1]

    def __call__(self, t):
        """Position, velocity and acceleration at time(s) ``t``.

        Scalar ``t`` gives arrays of shape (d,), a vector gives (len(t), d).
        """
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tc = np.clip(t, self.times[0], self.times[-1])
        k = np.clip(np.searchsorted(self.times, tc, side="right") - 1, 0, self.times.size - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        D = (t1 - t0)[:, None]
        s = ((tc - t0) / (t1 - t0))[:, None]
        dx = self.points[k + 1] - self.points[k]
        pos = self.points[k] + dx * s**3 * (10 - 15 * s + 6 * s**2)
        vel = dx / D * s**2 * (30 - 60 * s + 30 * s**2)
        acc = dx / D**2 * s * (60 - 180 * s + 120 * s**2)
        outside = ((t < self.times[0]) | (t > self.times[-1]))[:, None]
        vel = np.where(outside, 0.0, vel)
        acc = np.where(outside, 0.0, acc)
        if scalar:
            return pos[0], vel[0], acc[0]
        return pos, vel, acc


def min_jerk_trajectory(waypoints):
    """Build a trajectory from ``[(t_i, x_i), ...]``."""
    times = [w[0] for w in waypoints]
    points = [np.atleast_1d(w[1]) for w in waypoints]
    return MinJerkTrajectory(times, points)


def hold(point, duration=1.0):
    """Constant reference at ``point``."""
    point = np.asarray(point, dtype=float)
    return MinJerkTrajectory([0.0, max(duration, 1e-9)], [point, point])

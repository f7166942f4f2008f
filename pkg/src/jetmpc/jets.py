"""Second-order jet thrust model ``Tddot = h(T, Tdot) + g(T, Tdot) * v``.

Drift and gain belong to a fixed parametric family::

    h = c1*T + c2*Tdot + c3*T**2 + c4*T*Tdot + c5*Tdot**2
    g = d0 + d1*T + d2*Tdot

and the auxiliary input is an affine function of the throttle,
``v = e0 + e1 * u_th``. All functions broadcast over numpy arrays, so a
whole thrust vector is handled in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import SingularGainError

GAIN_MIN = 1e-6


@dataclass(frozen=True)
class JetParams:
    c: tuple = (-4.0, -3.6, 0.0, 0.0, 0.0)
    d: tuple = (4.0, 0.0, 0.0)
    e0: float = 0.0
    e1: float = 1.0
    T_max: float = 160.0
    v_min: float = 0.0
    v_max: float = 160.0
    Tdot_max: float = 200.0

    def __post_init__(self):
        if len(self.c) != 5 or len(self.d) != 3:
            raise ValueError("need 5 drift (c) and 3 gain (d) coefficients")
        if self.e1 == 0:
            raise ValueError("throttle map must be invertible (e1 != 0)")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        # g is affine: its extreme values over the operating box sit at corners
        corners = [(T, Td) for T in (0.0, self.T_max) for Td in (-self.Tdot_max, self.Tdot_max)]
        gains = [gain(self, T, Td) for T, Td in corners]
        if not (min(gains) >= GAIN_MIN or max(gains) <= -GAIN_MIN):
            raise ValueError("jet gain g(T, Tdot) vanishes inside the operating box")

    @classmethod
    def linear(cls, omega_n=2.0, zeta=0.9, **kw):
        """``Tddot = omega_n**2 (v - T) - 2 zeta omega_n Tdot``."""
        w2 = omega_n ** 2
        return cls(c=(-w2, -2.0 * zeta * omega_n, 0.0, 0.0, 0.0), d=(w2, 0.0, 0.0), **kw)

    def time_scaled(self, k):
        """Same model running ``k`` times faster (``omega_n -> k omega_n`` in the linear case)."""
        c1, c2, c3, c4, c5 = self.c
        d0, d1, d2 = self.d
        return replace(self, c=(k * k * c1, k * c2, k * k * c3, k * c4, c5),
                       d=(k * k * d0, k * k * d1, k * d2))


def drift(p, T, Tdot):
    c1, c2, c3, c4, c5 = p.c
    return c1 * T + c2 * Tdot + c3 * T * T + c4 * T * Tdot + c5 * Tdot * Tdot


def gain(p, T, Tdot):
    d0, d1, d2 = p.d
    return d0 + d1 * T + d2 * Tdot


def jet_accel(p, T, Tdot, v):
    return drift(p, T, Tdot) + gain(p, T, Tdot) * v


def v_from_throttle(p, u_th):
    return p.e0 + p.e1 * u_th


def throttle_from_v(p, v):
    return (v - p.e0) / p.e1


def jet_linearization(p, T_c, Tdot_c, v_c):
    """Partials of ``h + g v`` and the bias of the tangent affine model.

    Returns ``(dT, dTdot, dv, bias)`` such that
    ``dT*T + dTdot*Tdot + dv*v + bias`` equals :func:`jet_accel` at the
    linearisation point.
    """
    c1, c2, c3, c4, c5 = p.c
    d0, d1, d2 = p.d
    dT = c1 + 2.0 * c3 * T_c + c4 * Tdot_c + d1 * v_c
    dTdot = c2 + c4 * T_c + 2.0 * c5 * Tdot_c + d2 * v_c
    dv = gain(p, T_c, Tdot_c)
    bias = drift(p, T_c, Tdot_c) - dT * T_c - dTdot * Tdot_c
    return dT, dTdot, dv, bias


def fl_thrust_controller(p, T, Tdot, T_des, kp=4.0, kd=4.0):
    """Feedback-linearising thrust tracker, clamped to the input bounds.

    Cancels the drift and imposes ``Tddot = kp (T_des - T) - kd Tdot``.
    """
    g = gain(p, T, Tdot)
    if np.any(np.abs(g) < GAIN_MIN):
        raise SingularGainError("jet gain too small for feedback linearisation")
    v = (-drift(p, T, Tdot) + kp * (T_des - T) - kd * Tdot) / g
    return np.clip(v, p.v_min, p.v_max)

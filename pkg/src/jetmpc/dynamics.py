"""Centroidal momentum + jet dynamics in body-CoM coordinates, and its LPV linearisation.

State vector layout (``n_j`` jets)::

    [x_G(3), h_p(3), phi(3), h_w(3), T(n_j), Tdot(n_j)]

with CoM position in the world frame, linear/angular momentum in the
body-CoM frame and ZYX Euler angles. The MPC appends the integral errors
``e_x(3), e_phi(3)``. Without jet dynamics the ``T``/``Tdot`` block is
dropped and thrust becomes an input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .jets import jet_accel, jet_linearization
from .kinematics import (allocation_matrices, cross, euler_rate_matrix, forward_kinematics,
                         rotation_from_euler, skew, skew_stack)

X, HP, PHI, HW = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12)


def state_dim(n_j, jet_dynamics=True):
    return 12 + 2 * n_j if jet_dynamics else 12


def thrust_slices(n_j):
    return slice(12, 12 + n_j), slice(12 + n_j, 12 + 2 * n_j)


def error_slices(n_base):
    return slice(n_base, n_base + 3), slice(n_base + 3, n_base + 6)


@dataclass
class State:
    x: np.ndarray
    h_p: np.ndarray
    phi: np.ndarray
    h_w: np.ndarray
    T: np.ndarray
    Tdot: np.ndarray

    def as_vector(self):
        return np.concatenate([self.x, self.h_p, self.phi, self.h_w, self.T, self.Tdot]).astype(float)

    @classmethod
    def from_vector(cls, z, n_j):
        z = np.asarray(z, dtype=float)
        sT, sTd = thrust_slices(n_j)
        return cls(z[X].copy(), z[HP].copy(), z[PHI].copy(), z[HW].copy(),
                   z[sT].copy(), z[sTd].copy())


@dataclass(frozen=True)
class Wrench:
    """External force and torque at the CoM, world frame."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True, eq=False)
class LinearModel:
    """``zdot ~= A z + B u + c`` around ``(z_c, u_c)`` over the augmented state."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    z_c: np.ndarray
    u_c: np.ndarray
    jet_dynamics: bool = True


def _momentum_rates(model, phi, hp, hw, s, T, wrench, alloc=None):
    R = rotation_from_euler(phi)
    omega = model.inertia_inv @ hw
    if alloc is None:
        alloc = allocation_matrices(forward_kinematics(model, s, jacobians=False))
    A_lin, A_ang = alloc
    # gravity -m g e3 (world, z-up) seen from the body
    dhp = A_lin @ T - model.mass * model.gravity * R[2] - cross(omega, hp)
    dhw = A_ang @ T - cross(omega, hw)
    if wrench is not None:
        dhp += R.T @ wrench.force
        dhw += R.T @ wrench.torque
    dx = R @ hp / model.mass
    dphi = np.linalg.solve(euler_rate_matrix(phi), omega)
    return dx, dhp, dphi, dhw


def dynamics(model, jet_params, z, u, wrench=None):
    """Nonlinear state derivative ``f(z, u)``; ``u = [s, v]``."""
    n_s, n_j = model.n_s, model.n_j
    s, v = u[:n_s], u[n_s:]
    sT, sTd = thrust_slices(n_j)
    T, Tdot = z[sT], z[sTd]
    dx, dhp, dphi, dhw = _momentum_rates(model, z[PHI], z[HP], z[HW], s, T, wrench)
    return np.concatenate([dx, dhp, dphi, dhw, Tdot, jet_accel(jet_params, T, Tdot, v)])


def dynamics_thrust_input(model, z, u, wrench=None):
    """Dynamics with thrust as a direct input: 12 states, ``u = [s, T]``."""
    n_s = model.n_s
    return np.concatenate(_momentum_rates(model, z[PHI], z[HP], z[HW], u[:n_s], u[n_s:], wrench))


def augmented_dynamics(model, jet_params, z, u, x_ref, phi_ref, jet_dynamics=True):
    """``f`` extended with ``e_x' = x - x_ref`` and ``e_phi' = phi - phi_ref``."""
    n = state_dim(model.n_j, jet_dynamics)
    base = z[:n]
    if jet_dynamics:
        f = dynamics(model, jet_params, base, u)
    else:
        f = dynamics_thrust_input(model, base, u)
    return np.concatenate([f, base[X] - x_ref, base[PHI] - phi_ref])


def lambda_lin(frames, T):
    """Joint sensitivity of ``A_lin(s) T``: ``sum_i -T_i S(R_i e3) J_omega_i``."""
    Sd = skew_stack(frames.directions)
    return -np.einsum("i,ijl,ilk->jk", T, Sd, frames.J_omega)


def lambda_ang(frames, T):
    """Joint sensitivity of ``A_ang(s) T``.

    ``sum_i -T_i (S(R_i e3) J_r_i + S(r_i) S(R_i e3) J_omega_i)``.
    """
    Sd = skew_stack(frames.directions)
    Sr = skew_stack(frames.r)
    M = np.matmul(Sd, frames.J_r) + np.matmul(np.matmul(Sr, Sd), frames.J_omega)
    return -np.einsum("i,ijk->jk", T, M)


def linearize(model, jet_params, z_c, u_c, x_ref, phi_ref, jet_dynamics=True):
    """LPV model of the augmented dynamics at ``(z_c, u_c)``.

    Attitude (rotation and Euler-rate map), body rate and inertia are
    frozen at the linearisation point; joints enter through the lambda
    matrices and jets through their tangent affine model. ``c`` collects
    every bias so that the model is exact at ``(z_c, u_c)``.
    """
    n_s, n_j = model.n_s, model.n_j
    n = state_dim(n_j, jet_dynamics)
    nz, nu = n + 6, n_s + n_j
    z_c = np.asarray(z_c, dtype=float)
    u_c = np.asarray(u_c, dtype=float)
    if z_c.shape != (nz,) or u_c.shape != (nu,):
        raise ValueError(f"expected z of size {nz} and u of size {nu}")
    s_c, w_c = u_c[:n_s], u_c[n_s:]
    phi, hw = z_c[PHI], z_c[HW]
    R = rotation_from_euler(phi)
    W = euler_rate_matrix(phi)
    omega = model.inertia_inv @ hw
    frames = forward_kinematics(model, s_c)
    A_lin, A_ang = allocation_matrices(frames)

    A = np.zeros((nz, nz))
    B = np.zeros((nz, nu))
    A[X, HP] = R / model.mass
    A[HP, HP] = -skew(omega)
    A[PHI, HW] = np.linalg.solve(W, model.inertia_inv)
    A[HW, HW] = -skew(omega)
    ex, ephi = error_slices(n)
    A[ex, X] = np.eye(3)
    A[ephi, PHI] = np.eye(3)
    if jet_dynamics:
        sT, sTd = thrust_slices(n_j)
        T_c, Tdot_c = z_c[sT], z_c[sTd]
        A[HP, sT] = A_lin
        A[HW, sT] = A_ang
        dT, dTdot, dv, _ = jet_linearization(jet_params, T_c, Tdot_c, w_c)
        A[sT, sTd] = np.eye(n_j)
        A[sTd, sT] = np.diag(dT)
        A[sTd, sTd] = np.diag(dTdot)
        B[sTd, n_s:] = np.diag(dv)
    else:
        T_c = w_c
        B[HP, n_s:] = A_lin
        B[HW, n_s:] = A_ang
    B[HP, :n_s] = lambda_lin(frames, T_c)
    B[HW, :n_s] = lambda_ang(frames, T_c)

    # f(z_c, u_c), reusing the allocation matrices computed above
    rates = _momentum_rates(model, phi, z_c[HP], hw, s_c, T_c, None, (A_lin, A_ang))
    f = np.concatenate(rates + (np.zeros(n - 12), z_c[X] - x_ref, phi - phi_ref))
    if jet_dynamics:
        f[sT] = Tdot_c
        f[sTd] = jet_accel(jet_params, T_c, Tdot_c, w_c)
    c = f - A @ z_c - B @ u_c
    return LinearModel(A, B, c, z_c, u_c, jet_dynamics)


def linear_model_pattern(n_s, n_j, jet_dynamics=True):
    """Boolean masks covering every entry :func:`linearize` may fill."""
    n = state_dim(n_j, jet_dynamics)
    nz, nu = n + 6, n_s + n_j
    A = np.zeros((nz, nz), bool)
    B = np.zeros((nz, nu), bool)
    A[X, HP] = A[HP, HP] = A[PHI, HW] = A[HW, HW] = True
    ex, ephi = error_slices(n)
    A[ex, X] = np.eye(3, dtype=bool)
    A[ephi, PHI] = np.eye(3, dtype=bool)
    B[HP, :n_s] = B[HW, :n_s] = True
    if jet_dynamics:
        sT, sTd = thrust_slices(n_j)
        A[HP, sT] = A[HW, sT] = True
        eye = np.eye(n_j, dtype=bool)
        A[sT, sTd] = A[sTd, sT] = A[sTd, sTd] = eye
        B[sTd, n_s:] = eye
    else:
        B[HP, n_s:] = B[HW, n_s:] = True
    return A, B

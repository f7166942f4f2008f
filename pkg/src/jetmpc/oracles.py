"""Independent reference computations used to verify the fast code paths.

Nothing here is used by the controller or the simulator; each function
recomputes a quantity by a different route (finite differences,
world-frame Newton-Euler, exhaustive active-set enumeration, dense
polynomial boundary solves).
"""

from __future__ import annotations

import itertools

import numpy as np

from .jets import jet_accel
from .kinematics import (allocation_matrices, euler_rate_matrix, forward_kinematics,
                         rotation_from_euler)


def central_difference(f, x, h=1e-6):
    """Jacobian of ``f`` at ``x`` by central differences, shape (len(f(x)), len(x))."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h))
    return np.stack(cols, axis=-1)


def body_rate_from_euler_rates(phi, phi_dot, h=1e-7):
    """Body angular velocity from ``R^T dR/dt`` with ``dR/dt`` by central differences."""
    phi, phi_dot = np.asarray(phi, float), np.asarray(phi_dot, float)
    R = rotation_from_euler(phi)
    Rdot = (rotation_from_euler(phi + h * phi_dot) - rotation_from_euler(phi - h * phi_dot)) / (2 * h)
    Om = R.T @ Rdot
    return np.array([Om[2, 1] - Om[1, 2], Om[0, 2] - Om[2, 0], Om[1, 0] - Om[0, 1]]) / 2


def frozen_dynamics(model, jet_params, z, u, z_frozen, x_ref, phi_ref, jet_dynamics=True):
    """Augmented dynamics with attitude, body rate and inertia held at ``z_frozen``."""
    n_s, n_j = model.n_s, model.n_j
    m = model.mass
    phi_f, hw_f = z_frozen[6:9], z_frozen[9:12]
    R = rotation_from_euler(phi_f)
    W = euler_rate_matrix(phi_f)
    omega = np.linalg.solve(model.inertia, hw_f)
    x, hp, phi, hw = z[0:3], z[3:6], z[6:9], z[9:12]
    s = u[:n_s]
    if jet_dynamics:
        T, Tdot = z[12:12 + n_j], z[12 + n_j:12 + 2 * n_j]
        n = 12 + 2 * n_j
    else:
        T = u[n_s:]
        n = 12
    A_lin, A_ang = allocation_matrices(forward_kinematics(model, s, jacobians=False))
    gravity = R.T @ np.array([0.0, 0.0, -m * model.gravity])
    out = [R @ hp / m,
           A_lin @ T + gravity - np.cross(omega, hp),
           np.linalg.solve(model.inertia @ W, hw),
           A_ang @ T - np.cross(omega, hw)]
    if jet_dynamics:
        out += [Tdot, jet_accel(jet_params, T, Tdot, u[n_s:])]
    out += [x - x_ref, phi - phi_ref]
    assert sum(len(o) for o in out) == n + 6
    return np.concatenate(out)


def newton_euler_momentum_rates(model, z, s, T, force=np.zeros(3), torque=np.zeros(3)):
    """Body-frame momentum rates from world-frame force/torque balances.

    Sums thrust forces and moments in the world frame, then rotates the
    world momentum derivative into the body using ``dR^T/dt = -S(w) R^T``.
    """
    m = model.mass
    R = rotation_from_euler(z[6:9])
    frames = forward_kinematics(model, s, jacobians=False)
    p_world = R @ z[3:6]
    L_world = R @ z[9:12]
    F = np.array([0.0, 0.0, -m * model.gravity]) + force
    M = np.array(torque, dtype=float)
    for i in range(model.n_j):
        f_i = T[i] * (R @ frames.rotations[i] @ np.array([0.0, 0.0, 1.0]))
        F = F + f_i
        M = M + np.cross(R @ frames.r[i], f_i)
    omega_body = np.linalg.inv(model.inertia) @ z[9:12]
    omega_world = R @ omega_body
    # d/dt (R^T p) = R^T (p_dot - w_world x p)
    dhp = R.T @ (F - np.cross(omega_world, p_world))
    dhw = R.T @ (M - np.cross(omega_world, L_world))
    return dhp, dhw


def active_set_qp(P, q, A, l, u, tol=1e-9):
    """Solve a small strictly convex QP by enumerating active sets.

    Rows with ``l == u`` are always active. Candidates are tried in order
    of increasing active-set size; the first one satisfying primal
    feasibility and multiplier signs is the (unique) optimum.
    """
    P, A = np.asarray(P, float), np.asarray(A, float)
    n, m = P.shape[0], A.shape[0]
    eq = [i for i in range(m) if l[i] == u[i]]
    ineq = [i for i in range(m) if l[i] != u[i]]
    for k in range(len(ineq) + 1):
        for rows in itertools.combinations(ineq, k):
            for sides in itertools.product((0, 1), repeat=k):
                bounds = [(i, l[i]) for i in eq]
                for i, side in zip(rows, sides):
                    b = u[i] if side else l[i]
                    if not np.isfinite(b):
                        break
                    bounds.append((i, b))
                else:
                    act = [i for i, _ in bounds]
                    b = np.array([v for _, v in bounds])
                    na = len(act)
                    K = np.zeros((n + na, n + na))
                    K[:n, :n] = P
                    K[:n, n:] = A[act].T
                    K[n:, :n] = A[act]
                    try:
                        sol = np.linalg.solve(K, np.r_[-q, b])
                    except np.linalg.LinAlgError:
                        continue
                    x, y = sol[:n], sol[n:]
                    Ax = A @ x
                    if np.any(Ax < l - tol) or np.any(Ax > u + tol):
                        continue
                    ok = True
                    for j, (i, _) in enumerate(bounds[len(eq):]):
                        side = sides[j]
                        if (side and y[len(eq) + j] < -tol) or (not side and y[len(eq) + j] > tol):
                            ok = False
                            break
                    if ok:
                        yfull = np.zeros(m)
                        yfull[act] = y
                        return x, yfull
    raise ValueError("no optimal active set found (infeasible problem?)")


def quintic_segment(t0, t1, x0, x1):
    """Coefficients of the quintic with zero end velocity/acceleration, via a 6x6 solve."""
    def rows(t):
        return [[1, t, t**2, t**3, t**4, t**5],
                [0, 1, 2 * t, 3 * t**2, 4 * t**3, 5 * t**4],
                [0, 0, 2, 6 * t, 12 * t**2, 20 * t**3]]
    M = np.array(rows(t0) + rows(t1), dtype=float)
    return np.linalg.solve(M, np.array([x0, 0, 0, x1, 0, 0], dtype=float))

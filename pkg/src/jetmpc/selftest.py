"""Oracle checks shared by ``jetmpc selftest`` and the test-suite.

Each check draws random inputs from a seeded generator and compares a
production code path with an independent computation from
:mod:`jetmpc.oracles`.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp

from .dynamics import lambda_ang, lambda_lin, linearize
from .jets import JetParams
from .kinematics import allocation_matrices, default_robot, forward_kinematics
from .oracles import active_set_qp, central_difference, frozen_dynamics
from .qp import QpSolver, SolverSettings, SparseQp


def random_operating_point(model, jets, rng, jet_dynamics=True):
    """Random augmented state, input and references inside the model bounds."""
    n_j = model.n_j
    z = np.concatenate([
        rng.uniform(-2.0, 2.0, 3),
        rng.uniform(-20.0, 20.0, 3),
        [rng.uniform(-1.0, 1.0), rng.uniform(-1.2, 1.2), rng.uniform(-np.pi, np.pi)],
        rng.uniform(-5.0, 5.0, 3),
    ])
    s = rng.uniform(model.s_min, model.s_max)
    if jet_dynamics:
        z = np.concatenate([z, rng.uniform(0.0, jets.T_max, n_j),
                            rng.uniform(-jets.Tdot_max, jets.Tdot_max, n_j)])
        w = rng.uniform(jets.v_min, jets.v_max, n_j)
    else:
        w = rng.uniform(0.0, jets.T_max, n_j)
    z = np.concatenate([z, rng.uniform(-1.0, 1.0, 6)])
    return z, np.concatenate([s, w]), rng.uniform(-2.0, 2.0, 3), rng.uniform(-0.5, 0.5, 3)


def check_linearization(n_points=1000, seed=0, model=None, jets=None, h=1e-6):
    """Max |A - FD|, |B - FD| and tangency residual over random points (both modes)."""
    model = model or default_robot()
    jets = jets or JetParams.linear()
    rng = np.random.default_rng(seed)
    err_A = err_B = tangency = 0.0
    for i in range(n_points):
        jd = i % 2 == 0
        z, u, x_ref, phi_ref = random_operating_point(model, jets, rng, jd)
        lm = linearize(model, jets, z, u, x_ref, phi_ref, jd)

        def fz(zz):
            return frozen_dynamics(model, jets, zz, u, z, x_ref, phi_ref, jd)

        def fu(uu):
            return frozen_dynamics(model, jets, z, uu, z, x_ref, phi_ref, jd)

        err_A = max(err_A, np.abs(lm.A - central_difference(fz, z, h)).max())
        err_B = max(err_B, np.abs(lm.B - central_difference(fu, u, h)).max())
        tangency = max(tangency, np.abs(lm.A @ z + lm.B @ u + lm.c - fz(z)).max())
    return err_A, err_B, tangency


def check_lambda(n_points=1000, seed=1, model=None, h=1e-6):
    """Max deviation of the lambda matrices from FD of ``s -> A(s) T``."""
    model = model or default_robot()
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(n_points):
        s = rng.uniform(model.s_min, model.s_max)
        T = rng.uniform(0.0, 160.0, model.n_j)
        frames = forward_kinematics(model, s)

        def lin(ss):
            return allocation_matrices(forward_kinematics(model, ss, jacobians=False))[0] @ T

        def ang(ss):
            return allocation_matrices(forward_kinematics(model, ss, jacobians=False))[1] @ T

        err = max(err, np.abs(lambda_lin(frames, T) - central_difference(lin, s, h)).max(),
                  np.abs(lambda_ang(frames, T) - central_difference(ang, s, h)).max())
    return err


def random_qp(rng):
    """Small strictly convex, feasible QP with equality, two-sided and one-sided rows."""
    n = int(rng.integers(2, 7))
    n_eq = int(rng.integers(0, min(n, 3)))
    n_in = int(rng.integers(1, 6))
    M = rng.normal(size=(n, n))
    P = M @ M.T + 0.1 * np.eye(n)
    q = rng.normal(scale=3.0, size=n)
    A = rng.normal(size=(n_eq + n_in, n))
    x0 = rng.normal(size=n)
    Ax0 = A @ x0
    l = Ax0 - rng.uniform(0.05, 1.0, n_eq + n_in)
    u = Ax0 + rng.uniform(0.05, 1.0, n_eq + n_in)
    l[:n_eq] = u[:n_eq] = Ax0[:n_eq]
    one_sided = rng.random(n_eq + n_in) < 0.3
    one_sided[:n_eq] = False
    flip = rng.random(n_eq + n_in) < 0.5
    l[one_sided & flip] = -np.inf
    u[one_sided & ~flip] = np.inf
    return P, q, A, l, u


def check_qp_oracle(n_problems=50, seed=2, settings=None):
    """Max ``|x - x_oracle|`` over random QPs and the statuses seen."""
    rng = np.random.default_rng(seed)
    solver = QpSolver(settings or SolverSettings())
    err, statuses = 0.0, set()
    for _ in range(n_problems):
        P, q, A, l, u = random_qp(rng)
        x_ref, _ = active_set_qp(P, q, A, l, u)
        sol = solver.solve(SparseQp(sp.csc_matrix(P), q, sp.csc_matrix(A), l, u))
        statuses.add(sol.status)
        err = max(err, np.abs(sol.x - x_ref).max())
    return err, statuses


def run_selftest(verbose=True):
    """Run every oracle check; print one line per check and return overall success."""
    checks = []

    def record(name, ok, detail, t0):
        checks.append(ok)
        if verbose:
            print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail} ({time.perf_counter() - t0:.1f} s)")

    t0 = time.perf_counter()
    eA, eB, tang = check_linearization(200)
    record("linearization vs finite differences", max(eA, eB) <= 1e-5 and tang <= 1e-10,
           f"max|dA| {eA:.2e}, max|dB| {eB:.2e}, tangency {tang:.2e}", t0)
    t0 = time.perf_counter()
    e = check_lambda(200)
    record("lambda matrices vs finite differences", e <= 1e-5, f"max error {e:.2e}", t0)
    for polish in (True, False):
        t0 = time.perf_counter()
        e, st = check_qp_oracle(50, settings=SolverSettings(polish=polish))
        record(f"QP solver vs active-set enumeration (polish={polish})",
               e <= 1e-4 and st == {"solved"}, f"max |x - x*| {e:.2e}, statuses {sorted(st)}", t0)
    return all(checks)


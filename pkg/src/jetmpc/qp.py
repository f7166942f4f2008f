"""Sparse convex QP solver based on ADMM operator splitting.

Solves::

    minimize    0.5 x'Px + q'x
    subject to  l <= A x <= u

Each ADMM step solves a quasi-definite KKT system with a sparse LDL'
factorisation. The symbolic factorisation is cached per sparsity pattern
and only refreshed numerically, which is what makes receding-horizon use
cheap: the MPC builds every problem on the same pattern.

After ADMM has identified the active constraints, the solution is
*polished* by solving the equality-constrained KKT system on that active
set, giving residuals at round-off level. A warm start supplies an
initial active-set guess, so a good warm start can finish with zero
ADMM iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import qdldl
import scipy.sparse as sp

SOLVED = "solved"
MAX_ITER = "max-iter"
INFEASIBLE = "infeasible-detected"

RHO_EQ_SCALE = 1e3
RHO_MIN = 1e-6


@dataclass(frozen=True, eq=False)
class SparseQp:
    """``P`` must hold the full symmetric matrix (both triangles)."""

    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        n = self.q.shape[0]
        m = self.l.shape[0]
        if self.P.shape != (n, n) or self.A.shape != (m, n) or self.u.shape != (m,):
            raise ValueError(f"inconsistent QP dimensions: P{self.P.shape} q({n},) "
                             f"A{self.A.shape} l({m},) u{self.u.shape}")
        if np.any(self.l > self.u):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self):
        return self.q.shape[0]

    @property
    def m(self):
        return self.l.shape[0]


@dataclass(frozen=True)
class SolverSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-5
    eps_rel: float = 1e-5
    eps_infeas: float = 1e-6
    max_iter: int = 4000
    warm_start: bool = True
    polish: bool = True
    polish_delta: float = 1e-7
    polish_refine: int = 4
    check_every: int = 5
    polish_stable: int = 2
    polish_passes: int = 10
    scaling: int = 10

    def __post_init__(self):
        if not (self.rho > 0 and self.sigma > 0):
            raise ValueError("rho and sigma must be positive")
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if self.max_iter < 1 or self.check_every < 1 or self.scaling < 0:
            raise ValueError("max_iter and check_every must be positive, scaling nonnegative")


@dataclass(frozen=True, eq=False)
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: str
    iterations: int
    primal_res: float
    dual_res: float
    polished: bool = False


def kkt_residuals(qp, x, y):
    """``(||clamp(Ax, l, u) - Ax||_inf, ||Px + q + A'y||_inf)``."""
    Ax = qp.A @ x
    prim = np.abs(np.clip(Ax, qp.l, qp.u) - Ax)
    dual = np.abs(qp.P @ x + qp.q + qp.A.T @ y)
    return (float(prim.max()) if prim.size else 0.0, float(dual.max()) if dual.size else 0.0)


class SparseAssembler:
    """CSC matrix with a fixed pattern filled from values in a fixed entry order.

    Duplicate ``(row, col)`` pairs are summed. The pattern keeps entries
    whose value happens to be zero, so the structure never changes.
    """

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        self.shape = shape
        keys = cols * shape[0] + rows
        uniq, self.pos = np.unique(keys, return_inverse=True)
        self.nnz = uniq.size
        self.indices = (uniq % shape[0]).astype(np.int32)
        counts = np.bincount(uniq // shape[0], minlength=shape[1])
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)

    def __call__(self, values):
        data = np.bincount(self.pos, weights=values, minlength=self.nnz)
        return sp.csc_matrix((data, self.indices, self.indptr), shape=self.shape)


def _segment_max(values, indptr):
    """Max of ``values[indptr[i]:indptr[i+1]]`` per segment, 0 for empty ones."""
    counts = np.diff(indptr)
    out = np.zeros(counts.size)
    nonempty = counts > 0
    if values.size:
        out[nonempty] = np.maximum.reduceat(values, indptr[:-1][nonempty])
    return out


def _entry_coords(M):
    cols = np.repeat(np.arange(M.shape[1]), np.diff(M.indptr))
    return M.indices.astype(np.int64), cols


class _Workspace:
    """KKT assembly and factor cache for one (P, A) sparsity pattern."""

    def __init__(self, P, A):
        n, m = P.shape[0], A.shape[0]
        self.n, self.m = n, m
        self.P_indptr, self.P_indices = P.indptr.copy(), P.indices.copy()
        self.A_indptr, self.A_indices = A.indptr.copy(), A.indices.copy()
        pr, pc = _entry_coords(P)
        self.p_upper = np.flatnonzero(pr <= pc)
        ar, ac = _entry_coords(A)
        self.a_rows = ar
        diag = np.arange(n)
        bottom = np.arange(n, n + m)
        rows = np.concatenate([pr[self.p_upper], diag, ac, bottom])
        cols = np.concatenate([pc[self.p_upper], diag, n + ar, bottom])
        self.kkt = SparseAssembler(rows, cols, (n + m, n + m))
        self.factors = {}
        # entry coordinates and row-major order of A, for equilibration
        self.p_rows, self.p_cols = pr, pc
        self.a_cols = ac
        self.a_row_order = np.lexsort((ac, ar))
        self.a_row_ptr = np.concatenate([[0], np.cumsum(np.bincount(ar, minlength=m))])

    def equilibrate(self, qp, iterations):
        """Ruiz scaling ``(D, E, c)`` and the scaled problem.

        The scaled problem has ``P' = c D P D``, ``q' = c D q``, ``A' = E A D``
        and bounds ``E l``, ``E u``; it shares the sparsity pattern of ``qp``.
        """
        n, m = self.n, self.m
        Pd, Ad = qp.P.data.copy(), qp.A.data.copy()
        D, E = np.ones(n), np.ones(m)
        for _ in range(iterations):
            col = np.maximum(_segment_max(np.abs(Pd), qp.P.indptr),
                             _segment_max(np.abs(Ad), qp.A.indptr))
            row = _segment_max(np.abs(Ad)[self.a_row_order], self.a_row_ptr)
            d = 1.0 / np.sqrt(np.clip(np.where(col > 0, col, 1.0), 1e-4, 1e4))
            e = 1.0 / np.sqrt(np.clip(np.where(row > 0, row, 1.0), 1e-4, 1e4))
            Pd *= d[self.p_rows] * d[self.p_cols]
            Ad *= e[self.a_rows] * d[self.a_cols]
            D *= d
            E *= e
        q = D * qp.q
        p_col = _segment_max(np.abs(Pd), qp.P.indptr)
        c = 1.0 / np.clip(max(p_col.mean() if n else 0.0, _norm(q)), 1e-4, 1e4)
        P = sp.csc_matrix((c * Pd, qp.P.indices, qp.P.indptr), shape=qp.P.shape)
        A = sp.csc_matrix((Ad, qp.A.indices, qp.A.indptr), shape=qp.A.shape)
        return D, E, c, SparseQp(P, c * q, A, E * qp.l, E * qp.u)

    def matches(self, P, A):
        return (np.array_equal(P.indptr, self.P_indptr) and np.array_equal(P.indices, self.P_indices)
                and np.array_equal(A.indptr, self.A_indptr) and np.array_equal(A.indices, self.A_indices))

    def factor(self, name, P, top_diag, a_vals, bottom_diag):
        K = self.kkt(np.concatenate([P.data[self.p_upper], np.broadcast_to(top_diag, self.n),
                                     a_vals, bottom_diag]))
        f = self.factors.get(name)
        if f is None:
            f = self.factors[name] = qdldl.Solver(K, upper=True)
        else:
            f.update(K, upper=True)
        return f


def _pattern_key(P, A):
    return (P.shape[0], A.shape[0], hash(P.indices.tobytes()), hash(P.indptr.tobytes()),
            hash(A.indices.tobytes()), hash(A.indptr.tobytes()))


class QpSolver:
    """Stateful ADMM solver; holds factorisation workspaces, one owner at a time."""

    def __init__(self, settings=None):
        self.settings = settings or SolverSettings()
        self._workspaces = {}

    def _workspace(self, qp):
        key = _pattern_key(qp.P, qp.A)
        ws = self._workspaces.get(key)
        if ws is None or not ws.matches(qp.P, qp.A):
            ws = self._workspaces[key] = _Workspace(qp.P, qp.A)
        return ws

    def prepare(self, qp):
        """Run the symbolic factorisations for ``qp``'s pattern ahead of time."""
        ws = self._workspace(qp)
        st = self.settings
        ws.factor("admm", qp.P, st.sigma, qp.A.data, np.full(qp.m, -1.0 / st.rho))
        ws.factor("polish", qp.P, st.polish_delta, qp.A.data, np.full(qp.m, -st.polish_delta))

    def solve(self, qp, warm=None):
        st = self.settings
        n, m = qp.n, qp.m
        ws = self._workspace(qp)
        if warm is not None and st.warm_start:
            x = np.array(warm[0], dtype=float)
            y = np.array(warm[1], dtype=float)
            if x.shape != (n,) or y.shape != (m,):
                raise ValueError("warm start has wrong dimensions")
        else:
            x, y = np.zeros(n), np.zeros(m)

        tried = set()
        if warm is not None and st.warm_start and st.polish:
            sol = self._polish(ws, qp, np.clip(qp.A @ x, qp.l, qp.u), y, tried)
            if sol is not None:
                return sol

        # ADMM on the equilibrated problem; residuals are judged unscaled
        if st.scaling:
            D, E, c, sqp = ws.equilibrate(qp, st.scaling)
        else:
            D, E, c, sqp = np.ones(n), np.ones(m), 1.0, qp
        l, u, q, P, A = sqp.l, sqp.u, sqp.q, sqp.P, sqp.A
        x, y = x / D, c * y / E
        z = np.clip(A @ x, l, u)
        eq = l == u
        free = np.isinf(l) & np.isinf(u) & (l < 0) & (u > 0)
        rho = np.where(eq, st.rho * RHO_EQ_SCALE, np.where(free, RHO_MIN, st.rho))
        f = ws.factor("admm", P, st.sigma, A.data, -1.0 / rho)
        rho_inv = 1.0 / rho
        alpha, sigma = st.alpha, st.sigma
        best = None
        stable, last_key = 0, None
        it = 0
        for it in range(1, st.max_iter + 1):
            sol = f.solve(np.concatenate([sigma * x - q, z - rho_inv * y]))
            x_t = sol[:n]
            z_t = z + rho_inv * (sol[n:] - y)
            x_new = alpha * x_t + (1.0 - alpha) * x
            z_relax = alpha * z_t + (1.0 - alpha) * z
            z_new = np.clip(z_relax + rho_inv * y, l, u)
            y_new = y + rho * (z_relax - z_new)
            dx, dy = x_new - x, y_new - y
            x, z, y = x_new, z_new, y_new
            if it % st.check_every and it != st.max_iter:
                continue
            Ax, Px, ATy = A @ x, P @ x, A.T @ y
            r_prim = _norm((Ax - z) / E)
            r_dual = _norm((Px + q + ATy) / D) / c
            if best is None or max(r_prim, r_dual) < best[0]:
                best = (max(r_prim, r_dual), x.copy(), y.copy())
            eps_p = st.eps_abs + st.eps_rel * max(_norm(Ax / E), _norm(z / E))
            eps_d = st.eps_abs + st.eps_rel * max(_norm(Px / D), _norm(ATy / D), _norm(q / D)) / c
            converged = r_prim <= eps_p and r_dual <= eps_d
            if st.polish:
                key = _active_key(sqp, z, y)
                stable = stable + 1 if key == last_key else 0
                last_key = key
                if converged or stable >= st.polish_stable:
                    pol = self._polish(ws, qp, z / E, E * y / c, tried, iterations=it)
                    if pol is not None:
                        return pol
            if converged:
                xo, yo = D * x, E * y / c
                p_res, d_res = kkt_residuals(qp, xo, yo)
                if p_res <= st.eps_abs and d_res <= st.eps_abs:
                    return QpSolution(xo, yo, SOLVED, it, p_res, d_res)
            if _primal_infeasible(sqp, dy, st.eps_infeas) or _dual_infeasible(sqp, dx, st.eps_infeas):
                xo, yo = D * x, E * y / c
                p_res, d_res = kkt_residuals(qp, xo, yo)
                return QpSolution(xo, yo, INFEASIBLE, it, p_res, d_res)
        x, y = (best[1], best[2]) if best is not None else (x, y)
        xo, yo = D * x, E * y / c
        p_res, d_res = kkt_residuals(qp, xo, yo)
        return QpSolution(xo, yo, MAX_ITER, it, p_res, d_res)

    def _polish(self, ws, qp, z, y, tried, iterations=0):
        """Solve the KKT system restricted to a guessed active set.

        A wrong guess is corrected for a few passes: rows whose multiplier
        has the wrong sign are released and violated rows are added.
        """
        st = self.settings
        l, u = qp.l, qp.u
        eq, low, upp = _active_sets(qp, z, y)
        tol = st.eps_abs
        # each pass refines once; the final active set gets the remaining steps
        passes = 0
        refine = 0
        while passes < st.polish_passes:
            key = low.tobytes() + upp.tobytes()
            if refine == 0:
                if key in tried:
                    return None
                tried.add(key)
                passes += 1
                x, y_p, sol = self._solve_active(ws, qp, low, upp)
                if st.polish_refine > 0:
                    x, y_p, sol = self._refine(ws, qp, low, upp, sol, 1)
            else:
                x, y_p, sol = self._refine(ws, qp, low, upp, sol, refine)
            if not np.all(np.isfinite(x)):
                return None
            Ax = qp.A @ x
            bad_low = low & ~eq & (y_p > tol)
            bad_upp = upp & (y_p < -tol)
            viol_low = ~low & ~upp & (Ax < l - tol)
            viol_upp = ~low & ~upp & (Ax > u + tol)
            if not (bad_low.any() or bad_upp.any() or viol_low.any() or viol_upp.any()):
                if refine == 0 and st.polish_refine > 1:
                    refine = st.polish_refine - 1
                    continue
                p_res, d_res = kkt_residuals(qp, x, y_p)
                if p_res <= st.eps_abs and d_res <= st.eps_abs:
                    return QpSolution(x, y_p, SOLVED, iterations, p_res, d_res, polished=True)
                return None
            refine = 0
            low = (low & ~bad_low) | viol_low
            upp = (upp & ~bad_upp) | viol_upp
        return None

    def _solve_active(self, ws, qp, low, upp):
        act = low | upp
        delta = self.settings.polish_delta
        f = ws.factor("polish", qp.P, delta, qp.A.data * act[ws.a_rows],
                      np.where(act, -delta, -1.0))
        sol = f.solve(self._active_rhs(qp, low, upp))
        return sol[:qp.n], np.where(act, sol[qp.n:], 0.0), sol

    @staticmethod
    def _active_rhs(qp, low, upp):
        act = low | upp
        return np.concatenate([-qp.q, np.where(act, np.where(upp, qp.u, qp.l), 0.0)])

    def _refine(self, ws, qp, low, upp, sol, steps):
        """Iterative refinement against the unregularised active-set KKT system."""
        n = qp.n
        act = low | upp
        f = ws.factors["polish"]
        rhs = self._active_rhs(qp, low, upp)
        for _ in range(steps):
            xs, ys = sol[:n], sol[n:]
            top = qp.P @ xs + qp.A.T @ np.where(act, ys, 0.0)
            bottom = np.where(act, qp.A @ xs, -ys)
            sol = sol + f.solve(rhs - np.concatenate([top, bottom]))
        return sol[:n], np.where(act, sol[n:], 0.0), sol


def _active_sets(qp, z, y):
    eq = qp.l == qp.u
    low = ((z - qp.l) < -y) | eq
    upp = ((qp.u - z) < y) & ~eq
    return eq, low, upp


def _active_key(qp, z, y):
    _, low, upp = _active_sets(qp, z, y)
    return low.tobytes() + upp.tobytes()


def _norm(v):
    return float(np.abs(v).max()) if v.size else 0.0


def _primal_infeasible(qp, dy, eps):
    ndy = _norm(dy)
    if ndy <= eps:
        return False
    if _norm(qp.A.T @ dy) > eps * ndy:
        return False
    pos, neg = np.maximum(dy, 0.0), np.minimum(dy, 0.0)
    if np.any((pos > 0) & np.isinf(qp.u)) or np.any((neg < 0) & np.isinf(qp.l)):
        return False
    up, lo = pos > 0, neg < 0
    support = qp.u[up] @ pos[up] + qp.l[lo] @ neg[lo]
    return support < -eps * ndy


def _dual_infeasible(qp, dx, eps):
    ndx = _norm(dx)
    if ndx <= eps:
        return False
    if _norm(qp.P @ dx) > eps * ndx or qp.q @ dx > -eps * ndx:
        return False
    Adx = qp.A @ dx
    tol = eps * ndx
    ok_hi = np.isinf(qp.u) | (Adx <= tol)
    ok_lo = np.isinf(qp.l) | (Adx >= -tol)
    return bool(np.all(ok_hi & ok_lo))


def solve(qp, settings=None, warm=None):
    """One-shot convenience wrapper around :class:`QpSolver`."""
    return QpSolver(settings).solve(qp, warm)

"""Multi-rate LPV MPC.

The prediction horizon uses a geometrically growing step (short steps
first). Joint positions get one decision variable per knot; jet inputs
get one variable per jet-update segment, so a jet command is constant
over each ``1 / f_jet`` interval of the horizon (move blocking). Between
jet updates the first jet segment is pinned to the command already
being applied.

QP decision vector::

    [z_0 .. z_N | fast inputs u_0 .. u_{N-1} | slow inputs per segment]

Fast inputs are joints; slow inputs are the jet auxiliary inputs ``v``
(or thrusts, when the controller is built without jet dynamics).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dynamics import (HP, HW, PHI, X, error_slices, linear_model_pattern, linearize,
                       state_dim)
from .errors import ConfigError
from .kinematics import rotation_from_euler
from .qp import SOLVED, QpSolver, SolverSettings, SparseAssembler, SparseQp

MULTI_RATE = "multi-rate"
SINGLE_RATE = "single-rate"
NO_JET_DYNAMICS = "no-jet-dynamics"
MODES = (MULTI_RATE, SINGLE_RATE, NO_JET_DYNAMICS)


@dataclass(frozen=True)
class MpcWeights:
    """Diagonals of the cost weights (``du_*`` penalise input increments)."""

    x: tuple = (500.0, 500.0, 500.0)
    hp: tuple = (0.3, 0.3, 0.3)
    phi: tuple = (800.0, 800.0, 800.0)
    hw: tuple = (10.0, 10.0, 10.0)
    du_joint: float = 10.0
    du_jet: float = 5.0
    ex: tuple = (50.0, 50.0, 50.0)
    ephi: tuple = (50.0, 50.0, 50.0)

    def __post_init__(self):
        for name in ("x", "hp", "phi", "hw", "ex", "ephi", "du_joint", "du_jet"):
            if np.any(np.asarray(getattr(self, name)) < 0):
                raise ValueError(f"weight {name} has a negative entry")


@dataclass(frozen=True)
class MpcConfig:
    horizon: float = 1.0
    n_knots: int = 17
    dt0: float = 0.005
    f_mpc: float = 200.0
    f_jet: float = 10.0
    f_joint: float = 1000.0
    uniform: bool = False
    mode: str = MULTI_RATE
    weights: MpcWeights = field(default_factory=MpcWeights)
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError("mpc.mode", f"unknown mode {self.mode!r}")
        if self.n_knots < 1 or self.horizon <= 0:
            raise ConfigError("mpc", "horizon and n_knots must be positive")
        if abs(self.dt0 - 1.0 / self.f_mpc) > 1e-12:
            raise ConfigError("mpc.dt0", "first step must equal 1 / f_mpc")
        ratio = self.f_mpc / self.f_jet
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("mpc.f_jet", "f_mpc must be an integer multiple of f_jet")

    @property
    def n_ratio(self):
        """MPC iterations per jet update."""
        return int(round(self.f_mpc / self.f_jet))

    @property
    def jet_dynamics(self):
        return self.mode != NO_JET_DYNAMICS


def timestep_schedule(config):
    """Step lengths ``dt0 * r**k`` summing to the horizon (``r`` by bisection)."""
    N, dt0, H = config.n_knots, config.dt0, config.horizon
    if config.uniform:
        return np.full(N, H / N)
    k = np.arange(N)

    def excess(r):
        return dt0 * np.sum(r ** k) - H

    lo, hi = 1.0, 2.0
    if not (excess(lo) < 0 < excess(hi)):
        raise ConfigError("mpc", f"no growth ratio in (1, 2] fits {N} knots, dt0={dt0} "
                          f"into a {H} s horizon")
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return dt0 * (0.5 * (lo + hi)) ** k


@dataclass(frozen=True, eq=False)
class BlockingStructure:
    segment_ids: np.ndarray   # jet segment of each knot (nondecreasing)
    hold_first: bool
    u_prev: np.ndarray

    @property
    def segment_var(self):
        """Knot -> index of its slow-input variable (dense 0..n_seg-1)."""
        return np.unique(self.segment_ids, return_inverse=True)[1]

    @property
    def n_segments(self):
        return int(np.unique(self.segment_ids).size)


def blocking_structure(schedule, config, j, u_prev):
    """Jet segments of the horizon at MPC iteration ``j``.

    A knot belongs to segment ``i`` once the time elapsed since the last
    jet update reaches ``i / f_jet``. Iterations between jet updates hold
    the first segment at ``u_prev``. In single-rate mode every knot has its
    own jet input and nothing is held.
    """
    N = len(schedule)
    u_prev = np.asarray(u_prev, dtype=float)
    if config.mode == SINGLE_RATE:
        return BlockingStructure(np.arange(N), False, u_prev)
    Nr = config.n_ratio
    phase = (j % Nr) * config.dt0
    starts = np.concatenate([[0.0], np.cumsum(schedule)[:-1]])
    period = 1.0 / config.f_jet
    seg = np.floor((starts + phase) / period + 1e-9).astype(int)
    return BlockingStructure(seg, j % Nr != 0, u_prev)


@dataclass(frozen=True, eq=False)
class Reference:
    """Reference samples at the ``N + 1`` knot times, each (N + 1, 3)."""

    x: np.ndarray
    phi: np.ndarray
    hp: np.ndarray
    hw: np.ndarray


def sample_reference(trajectory, t, knot_times, phi_ref, R_wb, mass):
    """Knot references; linear momentum ``m R^T xdot_ref`` in the current body frame."""
    x, xd, _ = trajectory(t + knot_times)
    n = len(knot_times)
    return Reference(x=x, phi=np.tile(phi_ref, (n, 1)), hp=mass * xd @ R_wb,
                     hw=np.zeros((n, 3)))


@dataclass(frozen=True, eq=False)
class QpLayout:
    """Index map between the QP vectors and states / inputs."""

    nz: int
    N: int
    n_fast: int
    n_slow: int
    segment_var: np.ndarray

    @property
    def n_seg(self):
        return int(self.segment_var.max()) + 1

    @property
    def fast_offset(self):
        return (self.N + 1) * self.nz

    @property
    def slow_offset(self):
        return self.fast_offset + self.N * self.n_fast

    @property
    def n_var(self):
        return self.slow_offset + self.n_seg * self.n_slow

    @property
    def n_eq(self):
        return (self.N + 1) * self.nz

    @property
    def n_con(self):
        return self.n_eq + self.N * self.n_fast + self.n_seg * self.n_slow

    def states(self, x):
        return x[:self.fast_offset].reshape(self.N + 1, self.nz)

    def fast(self, x):
        return x[self.fast_offset:self.slow_offset].reshape(self.N, self.n_fast)

    def slow(self, x):
        return x[self.slow_offset:self.n_var].reshape(self.n_seg, self.n_slow)

    def slow_per_knot(self, x):
        return self.slow(x)[self.segment_var]


class _Template:
    """Sparsity pattern and constant cost matrix for one blocking pattern."""

    def __init__(self, layout, A_mask, B_mask, weights, n_base):
        L = layout
        nz, N, nf, ns = L.nz, L.N, L.n_fast, L.n_slow
        self.layout = L
        A_mask = A_mask | np.eye(nz, dtype=bool)
        self.a_r, self.a_c = np.nonzero(A_mask)
        self.a_diag = (self.a_r == self.a_c).astype(float)
        Bf, Bs = B_mask[:, :nf], B_mask[:, nf:]
        self.bf_r, self.bf_c = np.nonzero(Bf)
        self.bs_r, self.bs_c = np.nonzero(Bs)

        rows, cols = [np.arange(nz)], [np.arange(nz)]
        for k in range(N):
            r0 = (k + 1) * nz
            rows += [r0 + np.arange(nz), r0 + self.a_r, r0 + self.bf_r, r0 + self.bs_r]
            cols += [(k + 1) * nz + np.arange(nz), k * nz + self.a_c,
                     L.fast_offset + k * nf + self.bf_c,
                     L.slow_offset + L.segment_var[k] * ns + self.bs_c]
        n_in = N * nf + L.n_seg * ns
        rows.append(L.n_eq + np.arange(n_in))
        cols.append(L.fast_offset + np.arange(n_in))
        self.assembler = SparseAssembler(np.concatenate(rows), np.concatenate(cols),
                                         (L.n_con, L.n_var))
        self.block_len = nz + self.a_r.size + self.bf_r.size + self.bs_r.size

        # state tracking weights, doubled for the 0.5 x'Px convention
        w = weights
        q_state = np.zeros(nz)
        q_state[X], q_state[HP], q_state[PHI], q_state[HW] = w.x, w.hp, w.phi, w.hw
        ex, ephi = error_slices(n_base)
        q_state[ex], q_state[ephi] = w.ex, w.ephi
        self.q_state = q_state
        diag_states = np.concatenate([np.zeros(nz), np.tile(2 * q_state, N)])
        Pz = sp.diags(diag_states)
        Pf = sp.kron(_difference_gram(N), sp.diags(np.full(nf, 2 * w.du_joint)))
        Ps = sp.kron(_difference_gram(L.n_seg), sp.diags(np.full(ns, 2 * w.du_jet)))
        self.P = sp.block_diag([Pz, Pf, Ps], format="csc")
        self.P.sort_indices()
        self.w_fast = np.full(nf, w.du_joint)
        self.w_slow = np.full(ns, w.du_jet)


def _difference_gram(n):
    """``D'D`` for ``D`` = first differences with a free-standing first row."""
    main = np.full(n, 2.0)
    main[-1] = 1.0
    off = np.full(n - 1, -1.0)
    return sp.diags([off, main, off], [-1, 0, 1], format="csc")


class QpBuilder:
    """Builds the MPC QP on cached, fixed sparsity patterns."""

    def __init__(self, n_s, n_j, config):
        self.config = config
        self.n_s, self.n_j = n_s, n_j
        self.n_base = state_dim(n_j, config.jet_dynamics)
        self.nz = self.n_base + 6
        self.A_mask, self.B_mask = linear_model_pattern(n_s, n_j, config.jet_dynamics)
        self._templates = {}

    def layout(self, blocking):
        return QpLayout(self.nz, len(blocking.segment_ids), self.n_s, self.n_j,
                        blocking.segment_var)

    def template(self, blocking):
        key = blocking.segment_var.tobytes()
        tpl = self._templates.get(key)
        if tpl is None:
            tpl = self._templates[key] = _Template(self.layout(blocking), self.A_mask,
                                                   self.B_mask, self.config.weights, self.n_base)
        return tpl

    def build(self, lm, z0, ref, schedule, blocking, u_prev_fast, bounds):
        """Return ``(SparseQp, QpLayout, constant_cost)``.

        ``bounds`` is ``(fast_min, fast_max, slow_min, slow_max)``. The
        increment penalty of the first knot is taken against the
        previously applied inputs (``u_prev_fast`` and ``blocking.u_prev``).
        """
        tpl = self.template(blocking)
        L = tpl.layout
        nz, N = L.nz, L.N
        dt = np.asarray(schedule, dtype=float)
        if lm.A.shape != (nz, nz) or z0.shape != (nz,) or dt.shape != (N,):
            raise ValueError("linear model, state and schedule dimensions disagree")
        a = lm.A[tpl.a_r, tpl.a_c]
        bf = lm.B[tpl.bf_r, tpl.bf_c]
        bs = lm.B[tpl.bs_r, L.n_fast + tpl.bs_c]
        blocks = np.empty((N, tpl.block_len))
        i0, i1, i2 = nz, nz + a.size, nz + a.size + bf.size
        blocks[:, :i0] = 1.0
        blocks[:, i0:i1] = -(tpl.a_diag + dt[:, None] * a)
        blocks[:, i1:i2] = -dt[:, None] * bf
        blocks[:, i2:] = -dt[:, None] * bs
        n_in = N * L.n_fast + L.n_seg * L.n_slow
        A_con = tpl.assembler(np.concatenate([np.ones(nz), blocks.ravel(), np.ones(n_in)]))

        c = np.tile(lm.c, (N, 1))
        ex, ephi = error_slices(self.n_base)
        c[:, ex] = -ref.x[:N]
        c[:, ephi] = -ref.phi[:N]
        b_eq = np.concatenate([z0, (dt[:, None] * c).ravel()])
        f_lo, f_hi, s_lo, s_hi = bounds
        slow_lo = np.tile(s_lo, (L.n_seg, 1))
        slow_hi = np.tile(s_hi, (L.n_seg, 1))
        if blocking.hold_first:
            slow_lo[0] = slow_hi[0] = blocking.u_prev
        l = np.concatenate([b_eq, np.tile(f_lo, N), slow_lo.ravel()])
        u = np.concatenate([b_eq, np.tile(f_hi, N), slow_hi.ravel()])

        r = np.zeros((N + 1, nz))
        r[:, X], r[:, HP], r[:, PHI], r[:, HW] = ref.x, ref.hp, ref.phi, ref.hw
        qz = -2.0 * tpl.q_state * r
        qz[0] = 0.0
        q = np.zeros(L.n_var)
        q[:L.fast_offset] = qz.ravel()
        q[L.fast_offset:L.fast_offset + L.n_fast] = -2.0 * tpl.w_fast * u_prev_fast
        q[L.slow_offset:L.slow_offset + L.n_slow] = -2.0 * tpl.w_slow * blocking.u_prev
        const = (np.sum(tpl.q_state * r[1:] ** 2) + tpl.w_fast @ u_prev_fast ** 2
                 + tpl.w_slow @ blocking.u_prev ** 2)
        return SparseQp(tpl.P, q, A_con, l, u), L, float(const)


def build_qp(lm, z0, ref, schedule, blocking, config, n_s, n_j, u_prev_fast, bounds):
    """One-off QP construction (see :meth:`QpBuilder.build`)."""
    return QpBuilder(n_s, n_j, config).build(lm, z0, ref, schedule, blocking, u_prev_fast, bounds)


def shift_warm_start(x, y, old, new):
    """Shift a previous primal/dual solution one knot forward onto layout ``new``."""
    N = new.N
    nxt = np.minimum(np.arange(N) + 1, N - 1)
    nxt_state = np.minimum(np.arange(N + 1) + 1, N)
    # first knot of each new segment, mapped to the old segment one knot later
    first_knot = np.searchsorted(new.segment_var, np.arange(new.n_seg))
    old_seg = old.segment_var[nxt[first_knot]]

    def blocks(v, offset, src, width):
        return v[offset + (src[:, None] * width + np.arange(width)).ravel()]

    xs = np.concatenate([blocks(x, 0, nxt_state, old.nz),
                         blocks(x, old.fast_offset, nxt, old.n_fast),
                         blocks(x, old.slow_offset, old_seg, old.n_slow)])
    ys = np.concatenate([blocks(y, 0, nxt_state, old.nz),
                         blocks(y, old.n_eq, nxt, old.n_fast),
                         blocks(y, old.n_eq + old.N * old.n_fast, old_seg, old.n_slow)])
    return xs, ys


@dataclass
class MpcOutput:
    s_cmd: np.ndarray
    slow_cmd: np.ndarray
    jet_update: bool
    status: str
    iterations: int
    primal_res: float
    dual_res: float
    cost: float
    solve_time: float
    degraded: bool
    qp_first_slow: np.ndarray
    hold: bool
    u_prev_before: np.ndarray


class MultiRateMpc:
    """Receding-horizon controller with multi-rate jet handling.

    Single owner: keeps the iteration counter, the jet command being held,
    the integral errors and the warm-start cache.
    """

    def __init__(self, model, jet_params, config, trajectory, phi_ref):
        self.model = model
        self.jet_params = jet_params
        self.config = config
        self.trajectory = trajectory
        self.phi_ref = np.asarray(phi_ref, dtype=float)
        self.schedule = timestep_schedule(config)
        self.knot_times = np.concatenate([[0.0], np.cumsum(self.schedule)])
        self.builder = QpBuilder(model.n_s, model.n_j, config)
        self.solver = QpSolver(config.solver)
        if config.jet_dynamics:
            slow_lo = np.full(model.n_j, jet_params.v_min)
            slow_hi = np.full(model.n_j, jet_params.v_max)
        else:
            slow_lo = np.zeros(model.n_j)
            slow_hi = np.full(model.n_j, jet_params.T_max)
        self.bounds = (np.asarray(model.s_min, float), np.asarray(model.s_max, float),
                       slow_lo, slow_hi)
        self.j = 0
        self.e_x = np.zeros(3)
        self.e_phi = np.zeros(3)
        self.s_prev = np.zeros(model.n_s)
        self.u_prev = np.zeros(model.n_j)
        self._warm = None
        self.on_qp = None

    def reset(self, s0, slow0):
        """Start a run with the inputs currently applied to the robot."""
        self.j = 0
        self.e_x[:] = 0.0
        self.e_phi[:] = 0.0
        self.s_prev = np.array(s0, dtype=float)
        self.u_prev = np.array(slow0, dtype=float)
        self._warm = None

    def prepare(self, z):
        """Build and pre-factor the QP of every blocking phase at state ``z``."""
        cfg = self.config
        n_base = state_dim(self.model.n_j, cfg.jet_dynamics)
        z_aug = np.concatenate([z[:n_base], np.zeros(6)])
        u_c = np.concatenate([self.s_prev, self.u_prev])
        x0, _, _ = self.trajectory(0.0)
        lm = linearize(self.model, self.jet_params, z_aug, u_c, x0, self.phi_ref,
                       cfg.jet_dynamics)
        ref = sample_reference(self.trajectory, 0.0, self.knot_times, self.phi_ref,
                               rotation_from_euler(z[PHI]), self.model.mass)
        phases = 1 if cfg.mode == SINGLE_RATE else cfg.n_ratio
        for j in range(phases):
            blocking = blocking_structure(self.schedule, cfg, j, self.u_prev)
            qp, _, _ = self.builder.build(lm, z_aug, ref, self.schedule, blocking,
                                          self.s_prev, self.bounds)
            self.solver.prepare(qp)

    def step(self, z, t):
        """One MPC iteration on the measured state ``z`` (plant layout) at time ``t``."""
        t_start = time.perf_counter()
        cfg = self.config
        n_base = state_dim(self.model.n_j, cfg.jet_dynamics)
        x_now, _, _ = self.trajectory(t)
        self.e_x += (z[X] - x_now) * cfg.dt0
        self.e_phi += (z[PHI] - self.phi_ref) * cfg.dt0
        z_aug = np.concatenate([z[:n_base], self.e_x, self.e_phi])
        u_c = np.concatenate([self.s_prev, self.u_prev])
        lm = linearize(self.model, self.jet_params, z_aug, u_c, x_now, self.phi_ref,
                       cfg.jet_dynamics)
        blocking = blocking_structure(self.schedule, cfg, self.j, self.u_prev)
        ref = sample_reference(self.trajectory, t, self.knot_times, self.phi_ref,
                               rotation_from_euler(z[PHI]), self.model.mass)
        qp, layout, const = self.builder.build(lm, z_aug, ref, self.schedule, blocking,
                                               self.s_prev, self.bounds)
        warm = None
        if self._warm is not None:
            warm = shift_warm_start(*self._warm, layout)
        sol = self.solver.solve(qp, warm)
        if self.on_qp is not None:
            self.on_qp(qp, sol)
        cost = float(0.5 * sol.x @ (qp.P @ sol.x) + qp.q @ sol.x + const)

        hold = blocking.hold_first
        u_prev_before = self.u_prev.copy()
        # Single-rate issues a jet command every iteration and is unaware that the
        # jets ignore all but one per period; its increment baseline is its own
        # last command. Otherwise the baseline is the command the jets hold.
        jet_update = cfg.mode == SINGLE_RATE or self.j % cfg.n_ratio == 0
        degraded = sol.status != SOLVED or not np.all(np.isfinite(sol.x))
        first_slow = layout.slow(sol.x)[0].copy()
        if degraded:
            s_cmd = self.s_prev.copy()
            slow_cmd = self.u_prev
            jet_update = False
        else:
            f_lo, f_hi, s_lo, s_hi = self.bounds
            s_cmd = np.clip(layout.fast(sol.x)[0], f_lo, f_hi)
            if jet_update:
                self.u_prev = np.clip(first_slow, s_lo, s_hi)
            slow_cmd = self.u_prev
            self._warm = (sol.x, sol.y, layout)
        self.s_prev = s_cmd
        self.j += 1
        return MpcOutput(s_cmd=s_cmd, slow_cmd=slow_cmd.copy(), jet_update=jet_update,
                         status=sol.status, iterations=sol.iterations,
                         primal_res=sol.primal_res, dual_res=sol.dual_res, cost=cost,
                         solve_time=time.perf_counter() - t_start, degraded=degraded,
                         qp_first_slow=first_slow, hold=hold, u_prev_before=u_prev_before)

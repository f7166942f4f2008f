"""Closed-loop simulation: nonlinear plant at 1 kHz around the MPC.

The plant integrates the centroidal + jet model with RK4, a first-order
joint servo and its own (perturbed) jet parameters. The controller runs
every ``f_sim / f_mpc`` steps and a plant-side gate latches the jet command
every ``f_sim / f_jet`` steps, whatever the controller mode.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import PHI, Wrench, dynamics, dynamics_thrust_input, thrust_slices
from .errors import SingularityError
from .jets import JetParams, drift, fl_thrust_controller, gain, throttle_from_v, v_from_throttle
from .kinematics import EPS_SING, RobotModel, hover_thrust
from .mpc import NO_JET_DYNAMICS, MpcConfig, MultiRateMpc
from .trajectory import MinJerkTrajectory

log = logging.getLogger(__name__)

COMPLETED = "completed"
CRASHED = "crashed"
STATUS_CODES = {"solved": 0, "max-iter": 1, "infeasible-detected": 2}
COMPONENTS = ("x", "y", "z", "roll", "pitch", "yaw")


@dataclass(frozen=True)
class Disturbance:
    """External wrench (world frame, at the CoM) over ``[start, start + duration)``."""

    start: float
    duration: float
    force: tuple = (0.0, 0.0, 0.0)
    torque: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.start < 0 or self.duration <= 0:
            raise ValueError("disturbance needs start >= 0 and duration > 0")

    @property
    def end(self):
        return self.start + self.duration


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything a closed-loop run needs, in runtime form."""

    model: RobotModel
    jets: JetParams
    plant_jets: JetParams
    mpc: MpcConfig
    trajectory: MinJerkTrajectory
    duration: float
    phi_ref: np.ndarray = field(default_factory=lambda: np.zeros(3))
    x0: np.ndarray | None = None
    phi0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    s0: np.ndarray | None = None
    disturbances: tuple = ()
    disturbance_scale: float = 1.0
    f_sim: float = 1000.0
    servo_tau: float = 0.02
    ideal_jets: bool = False
    fl_gains: tuple = (4.0, 4.0)
    eval_window: tuple | None = None
    seed: int = 0
    initial_position_noise: float = 0.0
    name: str = "scenario"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        for rate in (self.mpc.f_mpc, self.mpc.f_jet, self.mpc.f_joint):
            ratio = self.f_sim / rate
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(f"rate {rate} Hz does not divide f_sim = {self.f_sim} Hz")
        for d in self.disturbances:
            if d.end > self.duration + 1e-12:
                raise ValueError("disturbance extends past the end of the run")
        if self.ideal_jets and self.mpc.jet_dynamics:
            raise ValueError("ideal jets apply thrust commands; use the no-jet-dynamics mode")
        if self.servo_tau < 0:
            raise ValueError("servo time constant must be nonnegative")


def log_columns(n_s, n_j):
    cols = ["t", "x", "y", "z", "hp_x", "hp_y", "hp_z", "roll", "pitch", "yaw",
            "hw_x", "hw_y", "hw_z"]
    cols += [f"T{i}" for i in range(n_j)] + [f"Tdot{i}" for i in range(n_j)]
    cols += [f"s{i}" for i in range(n_s)] + [f"s_cmd{i}" for i in range(n_s)]
    cols += [f"jet_cmd{i}" for i in range(n_j)] + [f"v_plant{i}" for i in range(n_j)]
    cols += ["x_ref", "y_ref", "z_ref", "roll_ref", "pitch_ref", "yaw_ref"]
    cols += ["mpc_status", "mpc_iterations", "mpc_primal_res", "mpc_dual_res", "mpc_cost",
             "degraded", "jet_gate", "disturbance_active"]
    return cols


@dataclass(eq=False)
class SimLog:
    """One row per simulation step; see :func:`log_columns` for the layout."""

    columns: list
    data: np.ndarray

    def col(self, name):
        return self.data[:, self.columns.index(name)]

    def cols(self, names):
        idx = [self.columns.index(n) for n in names]
        return self.data[:, idx]

    @property
    def t(self):
        return self.col("t")

    @property
    def position(self):
        return self.cols(["x", "y", "z"])

    @property
    def attitude(self):
        return self.cols(["roll", "pitch", "yaw"])

    @property
    def position_ref(self):
        return self.cols(["x_ref", "y_ref", "z_ref"])

    @property
    def attitude_ref(self):
        return self.cols(["roll_ref", "pitch_ref", "yaw_ref"])

    def prefixed(self, prefix):
        names = [c for c in self.columns if c.startswith(prefix) and c[len(prefix):].isdigit()]
        return self.cols(names)

    def to_csv(self):
        """Deterministic text: shortest round-trip float repr, fixed column order."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.data:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass(frozen=True)
class MpcRecord:
    """Per-iteration controller diagnostics."""

    t: float
    status: str
    iterations: int
    primal_res: float
    dual_res: float
    cost: float
    solve_time: float
    degraded: bool
    hold: bool
    u_prev: tuple
    qp_first_slow: tuple


@dataclass
class Metrics:
    status: str
    crash_reason: str | None
    crash_time: float | None
    window: tuple
    mae: dict
    max_position_error: float
    max_attitude_error_deg: float
    recovery_times: list
    solve_time_ms: dict
    mpc_steps: int = 0
    degraded_steps: int = 0

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(eq=False)
class SimResult:
    log: SimLog
    metrics: Metrics
    mpc_records: list


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def tracking_errors(log):
    """Position error vectors (m) and wrapped attitude errors (rad) per row."""
    return log.position - log.position_ref, wrap_angle(log.attitude - log.attitude_ref)


def recovery_time(log, after, pos_tol=0.1, att_tol_deg=2.0, hold=1.0):
    """Seconds after ``after`` until errors stay below tolerance for ``hold`` s.

    Returns ``None`` when the log ends before a qualifying window is seen.
    """
    t = log.t
    e_pos, e_att = tracking_errors(log)
    ok = (np.linalg.norm(e_pos, axis=1) < pos_tol) & \
        (np.rad2deg(np.abs(e_att)).max(axis=1) < att_tol_deg)
    idx = np.flatnonzero(t >= after - 1e-12)
    if idx.size == 0:
        return None
    dt = t[1] - t[0] if t.size > 1 else 1.0
    need = int(round(hold / dt))
    run = 0
    for i in idx:
        run = run + 1 if ok[i] else 0
        if run >= need:
            return float(t[i - need + 1] - after)
    return None


def solve_time_stats(times):
    if len(times) == 0:
        return {"mean": None, "max": None, "std": None, "p99": None}
    ms = np.asarray(times) * 1e3
    return {"mean": float(ms.mean()), "max": float(ms.max()), "std": float(ms.std()),
            "p99": float(np.percentile(ms, 99))}


def compute_metrics(log, window=None, disturbances=(), solve_times=(), status=COMPLETED,
                    crash_reason=None, crash_time=None, degraded_steps=0):
    """Tracking metrics over ``window = (start, end)`` (whole log if ``None``)."""
    t = log.t
    if t.size == 0:
        raise ValueError("empty log")
    start, end = window if window is not None else (t[0], t[-1])
    sel = (t >= start - 1e-12) & (t <= end + 1e-12)
    if not sel.any():
        raise ValueError(f"no samples inside the evaluation window {window}")
    e_pos, e_att = tracking_errors(log)
    err = np.abs(np.hstack([e_pos, e_att])[sel])
    mae = {c: float(v) for c, v in zip(COMPONENTS, err.mean(axis=0))}
    rec = [recovery_time(log, d.end) for d in disturbances]
    return Metrics(status=status, crash_reason=crash_reason, crash_time=crash_time,
                   window=(float(start), float(end)), mae=mae,
                   max_position_error=float(np.linalg.norm(e_pos, axis=1).max()),
                   max_attitude_error_deg=float(np.rad2deg(np.abs(e_att)).max()),
                   recovery_times=rec, solve_time_ms=solve_time_stats(solve_times),
                   mpc_steps=len(solve_times), degraded_steps=degraded_steps)


def rk4_step(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def equilibrium_input(p, T):
    """Auxiliary input holding thrust ``T`` at rest: ``h(T, 0) + g(T, 0) v = 0``."""
    return -drift(p, T, 0.0) / gain(p, T, 0.0)


def _wrench(scenario, k, dt):
    force, torque = np.zeros(3), np.zeros(3)
    active = False
    for d in scenario.disturbances:
        k0 = int(round(d.start / dt))
        k1 = k0 + int(round(d.duration / dt))
        if k0 <= k < k1:
            force += scenario.disturbance_scale * np.asarray(d.force, float)
            torque += scenario.disturbance_scale * np.asarray(d.torque, float)
            active = True
    return force, torque, active


def initial_state(scenario):
    """Plant state at rest on the reference, thrusts at their hover values."""
    model = scenario.model
    s0 = np.zeros(model.n_s) if scenario.s0 is None else np.asarray(scenario.s0, float)
    x0 = scenario.trajectory(0.0)[0] if scenario.x0 is None else np.asarray(scenario.x0, float)
    if scenario.initial_position_noise > 0:
        rng = np.random.default_rng(scenario.seed)
        x0 = x0 + rng.normal(scale=scenario.initial_position_noise, size=3)
    T0 = hover_thrust(model, s0)
    z = np.concatenate([x0, np.zeros(3), scenario.phi0, np.zeros(3), T0, np.zeros(model.n_j)])
    return z, s0


def simulate(scenario, on_qp=None):
    """Run the closed loop and return log, metrics and controller records.

    ``on_qp(qp, solution)`` is called for every QP the controller solves.
    A singularity, a non-finite state or negative altitude ends the run
    with ``status == "crashed"``.
    """
    model, mpc_cfg = scenario.model, scenario.mpc
    n_s, n_j = model.n_s, model.n_j
    dt = 1.0 / scenario.f_sim
    n_steps = int(round(scenario.duration * scenario.f_sim))
    mpc_every = int(round(scenario.f_sim / mpc_cfg.f_mpc))
    jet_every = int(round(scenario.f_sim / mpc_cfg.f_jet))
    joint_every = int(round(scenario.f_sim / mpc_cfg.f_joint))
    sT, sTd = thrust_slices(n_j)
    nz = 12 + 2 * n_j
    kp, kd = scenario.fl_gains

    z, s_act = initial_state(scenario)
    T0 = z[sT].copy()
    v_plant = equilibrium_input(scenario.plant_jets, T0) * np.ones(n_j)
    v_ctrl = v_from_throttle(scenario.jets, throttle_from_v(scenario.plant_jets, v_plant))
    slow0 = T0 if not mpc_cfg.jet_dynamics else v_ctrl
    jet_cmd = slow0.copy()
    T_ideal = T0.copy()

    ctl = MultiRateMpc(model, scenario.jets, mpc_cfg, scenario.trajectory, scenario.phi_ref)
    ctl.on_qp = on_qp
    ctl.reset(s_act, slow0)
    ctl.prepare(z)

    columns = log_columns(n_s, n_j)
    data = np.empty((n_steps, len(columns)))
    records = []
    solve_times = []
    s_cmd = s_act.copy()
    s_servo = s_act.copy()
    diag = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    status, reason, crash_t = COMPLETED, None, None
    degraded_steps = 0
    y = np.concatenate([z, s_act])
    n_done = 0

    for k in range(n_steps):
        t = k * dt
        z, s_act = y[:nz], y[nz:]
        try:
            if k % mpc_every == 0:
                out = ctl.step(z, t)
                s_cmd = out.s_cmd
                solve_times.append(out.solve_time)
                degraded_steps += int(out.degraded)
                diag = (STATUS_CODES.get(out.status, 3), out.iterations, out.primal_res,
                        out.dual_res, out.cost, float(out.degraded))
                records.append(MpcRecord(t, out.status, out.iterations, out.primal_res,
                                         out.dual_res, out.cost, out.solve_time, out.degraded,
                                         out.hold, tuple(out.u_prev_before),
                                         tuple(out.qp_first_slow)))
            gate = k % jet_every == 0
            if gate:
                jet_cmd = out.slow_cmd.copy()
                if scenario.ideal_jets:
                    T_ideal = np.clip(jet_cmd, 0.0, scenario.plant_jets.T_max)
                else:
                    if mpc_cfg.jet_dynamics:
                        v_c = jet_cmd
                    else:
                        v_c = fl_thrust_controller(scenario.jets, z[sT], z[sTd], jet_cmd, kp, kd)
                    pj = scenario.plant_jets
                    v_plant = np.clip(v_from_throttle(pj, throttle_from_v(scenario.jets, v_c)),
                                      pj.v_min, pj.v_max)
        except SingularityError as exc:
            status, reason, crash_t = CRASHED, f"singularity: {exc}", t
            break
        if k % joint_every == 0:
            s_servo = s_cmd
        force, torque, active = _wrench(scenario, k, dt)
        if scenario.ideal_jets:
            z = z.copy()
            z[sT], z[sTd] = T_ideal, 0.0
        x_ref = scenario.trajectory(t)[0]
        data[k] = np.concatenate([[t], z, s_act, s_cmd, jet_cmd, v_plant, x_ref,
                                  scenario.phi_ref, diag, [float(gate), float(active)]])
        n_done = k + 1
        try:
            y = _plant_step(scenario, np.concatenate([z, s_act]), s_servo, v_plant, force,
                            torque, dt, T_ideal)
        except SingularityError as exc:
            status, reason, crash_t = CRASHED, f"singularity: {exc}", t
            break
        if not np.all(np.isfinite(y)):
            status, reason, crash_t = CRASHED, "non-finite state", t + dt
            break
        if y[2] < 0.0:
            status, reason, crash_t = CRASHED, "altitude below zero", t + dt
            break
        if abs(y[PHI][1]) >= np.pi / 2 - EPS_SING:
            status, reason, crash_t = CRASHED, "pitch singularity", t + dt
            break

    if status == CRASHED:
        log.warning("%s crashed at t=%.3f s: %s", scenario.name, crash_t, reason)
    sim_log = SimLog(columns, data[:n_done].copy())
    window = scenario.eval_window
    if sim_log.data.shape[0] == 0:
        raise ValueError("run produced no samples")
    if window is not None:
        window = (window[0], min(window[1], sim_log.t[-1]))
    metrics = compute_metrics(sim_log, window, scenario.disturbances, solve_times, status,
                              reason, crash_t, degraded_steps)
    return SimResult(sim_log, metrics, records)


def _plant_step(scenario, y, s_servo, v_plant, force, torque, dt, T_ideal):
    model = scenario.model
    n_j = model.n_j
    nz = 12 + 2 * n_j
    tau = scenario.servo_tau
    pj = scenario.plant_jets
    wrench = Wrench(force, torque)
    u = np.empty(model.n_s + n_j)

    if tau == 0.0:
        y = y.copy()
        y[nz:] = s_servo

    def rhs(yy):
        s_act = yy[nz:]
        dy = np.zeros_like(yy)
        if scenario.ideal_jets:
            u[:model.n_s], u[model.n_s:] = s_act, T_ideal
            dy[:12] = dynamics_thrust_input(model, yy[:12], u, wrench)
        else:
            u[:model.n_s], u[model.n_s:] = s_act, v_plant
            dy[:nz] = dynamics(model, pj, yy[:nz], u, wrench)
        if tau > 0.0:
            dy[nz:] = (s_servo - s_act) / tau
        return dy

    y = rk4_step(rhs, y, dt)
    sT, sTd = thrust_slices(n_j)
    T = y[sT]
    low, high = T < 0.0, T > pj.T_max
    y[sT] = np.clip(T, 0.0, pj.T_max)
    y[sTd] = np.where((low & (y[sTd] < 0)) | (high & (y[sTd] > 0)), 0.0, y[sTd])
    return y

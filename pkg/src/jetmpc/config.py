"""Run configuration: a single JSON document with sections ``model``,
``jets``, ``plant``, ``mpc`` and ``scenario``.

Parsing is driven by the dataclass annotations below. Every error is a
:class:`ConfigError` naming the dotted path of the offending entry, e.g.
``model.mass: required``. Lists are stored as tuples, so
``parse_config(to_dict(spec)) == spec`` holds exactly.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .jets import JetParams
from .kinematics import Joint, KinematicChain, RobotModel, Transform
from .mpc import MpcConfig
from .sim import Disturbance, Scenario
from .trajectory import MinJerkTrajectory, hold

SECTIONS = ("model", "jets", "plant", "mpc", "scenario")


@dataclass(frozen=True)
class FrameSpec:
    """Fixed transform; ``rpy`` are ZYX Euler angles in radians."""

    xyz: tuple[float, ...] = (0.0, 0.0, 0.0)
    rpy: tuple[float, ...] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.xyz) != 3 or len(self.rpy) != 3:
            raise ValueError("xyz and rpy need three entries each")


@dataclass(frozen=True)
class JointSpec:
    axis: tuple[float, ...]
    index: int
    offset: FrameSpec = FrameSpec()


@dataclass(frozen=True)
class ChainSpec:
    mount: FrameSpec
    joints: tuple[JointSpec, ...] = ()


@dataclass(frozen=True)
class ModelSpec:
    mass: float
    inertia: tuple[tuple[float, ...], ...]
    chains: tuple[ChainSpec, ...]
    s_min: tuple[float, ...]
    s_max: tuple[float, ...]
    com_offset: tuple[float, ...] = (0.0, 0.0, 0.0)
    gravity: float = 9.81


@dataclass(frozen=True)
class PlantSpec:
    """The plant runs the controller's jet model ``time_scale`` times faster."""

    time_scale: float = 1.1

    def __post_init__(self):
        if not self.time_scale > 0:
            raise ValueError("time_scale must be positive")


@dataclass(frozen=True)
class WaypointSpec:
    t: float
    x: tuple[float, ...]


@dataclass(frozen=True)
class ScenarioSpec:
    """A single waypoint means hovering at that point."""

    duration: float
    waypoints: tuple[WaypointSpec, ...]
    name: str = "scenario"
    phi_ref: tuple[float, ...] = (0.0, 0.0, 0.0)
    x0: tuple[float, ...] | None = None
    phi0: tuple[float, ...] = (0.0, 0.0, 0.0)
    s0: tuple[float, ...] | None = None
    disturbances: tuple[Disturbance, ...] = ()
    disturbance_scale: float = 1.0
    f_sim: float = 1000.0
    servo_tau: float = 0.02
    ideal_jets: bool = False
    fl_gains: tuple[float, ...] = (4.0, 4.0)
    eval_window: tuple[float, ...] | None = None
    seed: int = 0
    initial_position_noise: float = 0.0


@dataclass(frozen=True)
class RunSpec:
    model: ModelSpec
    scenario: ScenarioSpec
    jets: JetParams = field(default_factory=JetParams.linear)
    plant: PlantSpec = PlantSpec()
    mpc: MpcConfig = field(default_factory=MpcConfig)


def _parse(tp, value, path):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _parse(args[0], value, path)
    if dataclasses.is_dataclass(tp):
        return _parse_dataclass(tp, value, path)
    if origin is tuple or tp is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        args = typing.get_args(tp)
        if args and args[-1] is Ellipsis:
            return tuple(_parse(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        return tuple(_parse(float, v, f"{path}[{i}]") if not isinstance(v, (list, tuple))
                     else _parse(tuple, v, f"{path}[{i}]") for i, v in enumerate(value))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported schema type {tp!r} at {path}")


def _parse_dataclass(cls, value, path):
    if not isinstance(value, dict):
        raise ConfigError(path, f"expected an object, got {type(value).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(value) - set(fields))
    if unknown:
        raise ConfigError(_join(path, unknown[0]), "unknown key")
    kwargs = {}
    for name, f in fields.items():
        sub = _join(path, name)
        if name in value:
            kwargs[name] = _parse(hints[name], value[name], sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(sub, "required")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _join(path, name):
    return f"{path}.{name}" if path else name


def parse_config(data):
    """Validate a decoded JSON document and return a :class:`RunSpec`."""
    return _parse_dataclass(RunSpec, data, "")


def load_config(path, overrides=()):
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"{path}: invalid JSON ({exc})") from exc
    return parse_config(apply_overrides(data, overrides))


def to_dict(obj):
    """Plain JSON-ready form of a spec (inverse of :func:`parse_config`)."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    return obj


def dump_config(spec):
    return json.dumps(to_dict(spec), indent=2) + "\n"


def apply_overrides(data, overrides):
    """Apply ``key.path=value`` strings to a decoded document (copied first).

    Values are read as JSON when possible (``5``, ``[1, 2]``, ``true``) and
    as plain strings otherwise. Integer path parts index into lists.
    """
    data = json.loads(json.dumps(data))
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError("", f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.split(".")
        node = data
        for i, part in enumerate(parts[:-1]):
            node = _child(node, part, ".".join(parts[:i + 1]), create=True)
        last = parts[-1]
        if isinstance(node, list):
            node[_index(node, last, key)] = value
        else:
            node[last] = value
    return data


def _child(node, part, path, create):
    if isinstance(node, list):
        return node[_index(node, part, path)]
    if not isinstance(node, dict):
        raise ConfigError(path, "cannot descend into a scalar")
    if part not in node and create:
        node[part] = {}
    return node[part]


def _index(node, part, path):
    try:
        i = int(part)
    except ValueError:
        raise ConfigError(path, "list index must be an integer") from None
    if not -len(node) <= i < len(node):
        raise ConfigError(path, f"index {i} out of range")
    return i


def build_model(spec):
    def transform(f):
        return Transform.from_rpy(f.xyz, f.rpy)

    chains = tuple(
        KinematicChain(
            mount=transform(c.mount),
            joints=tuple(Joint(np.asarray(j.axis, float), j.index, transform(j.offset))
                         for j in c.joints))
        for c in spec.chains)
    try:
        return RobotModel(mass=spec.mass, inertia=np.asarray(spec.inertia, float), chains=chains,
                          s_min=np.asarray(spec.s_min, float), s_max=np.asarray(spec.s_max, float),
                          com_offset=np.asarray(spec.com_offset, float), gravity=spec.gravity)
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from exc


def build_trajectory(spec):
    if len(spec.waypoints) == 1:
        w = spec.waypoints[0]
        return hold(w.x, max(spec.duration, w.t + 1.0))
    try:
        return MinJerkTrajectory([w.t for w in spec.waypoints], [w.x for w in spec.waypoints])
    except ValueError as exc:
        raise ConfigError("scenario.waypoints", str(exc)) from exc


def build_scenario(spec):
    """Runtime :class:`Scenario` for a parsed :class:`RunSpec`."""
    sc = spec.scenario

    def arr(v):
        return None if v is None else np.asarray(v, float)

    try:
        return Scenario(
            model=build_model(spec.model), jets=spec.jets,
            plant_jets=spec.jets.time_scaled(spec.plant.time_scale), mpc=spec.mpc,
            trajectory=build_trajectory(sc), duration=sc.duration, phi_ref=arr(sc.phi_ref),
            x0=arr(sc.x0), phi0=arr(sc.phi0), s0=arr(sc.s0), disturbances=sc.disturbances,
            disturbance_scale=sc.disturbance_scale, f_sim=sc.f_sim, servo_tau=sc.servo_tau,
            ideal_jets=sc.ideal_jets, fl_gains=sc.fl_gains, eval_window=sc.eval_window,
            seed=sc.seed, initial_position_noise=sc.initial_position_noise, name=sc.name)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("scenario", str(exc)) from exc


def default_model_spec(arm_cant_deg=15.0):
    """:class:`ModelSpec` of :func:`jetmpc.kinematics.default_robot`."""
    cant, tilt = np.deg2rad(arm_cant_deg), np.deg2rad(10.0)
    hand = FrameSpec(xyz=(0.0, 0.0, -0.45))

    def arm(y, first):
        roll = float(np.sign(y) * cant)
        return ChainSpec(FrameSpec((0.1, y, 0.35), (roll, 0.0, 0.0)),
                         (JointSpec((0.0, 1.0, 0.0), first),
                          JointSpec((1.0, 0.0, 0.0), first + 1, hand)))

    def back(y, roll):
        return ChainSpec(FrameSpec((-0.1, y, 0.3), (float(roll), 0.0, 0.0)))

    return ModelSpec(mass=45.0, inertia=((3.0, 0.0, 0.0), (0.0, 2.5, 0.0), (0.0, 0.0, 1.5)),
                     chains=(arm(0.25, 0), arm(-0.25, 2), back(0.12, -tilt), back(-0.12, tilt)),
                     s_min=(-0.8, -0.5, -0.8, -0.5), s_max=(0.8, 0.5, 0.8, 0.5))

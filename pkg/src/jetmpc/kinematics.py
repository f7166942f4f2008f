"""Robot description, jet-frame kinematics and thrust allocation.

Rotations follow the ZYX (roll, pitch, yaw) Euler convention with a z-up
world frame: ``R_world_body = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import SingularityError

EPS_SING = 1e-3
E3 = np.array([0.0, 0.0, 1.0])
_EYE3 = np.eye(3)


def skew(v):
    """Matrix S(v) such that S(v) @ y == cross(v, y)."""
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def skew_stack(v):
    """Stack of skew matrices for rows of ``v`` (n, 3) -> (n, 3, 3)."""
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1], S[..., 0, 2] = -v[..., 2], v[..., 1]
    S[..., 1, 0], S[..., 1, 2] = v[..., 2], -v[..., 0]
    S[..., 2, 0], S[..., 2, 1] = -v[..., 1], v[..., 0]
    return S


def cross(a, b):
    """Cross product of two 3-vectors (cheaper than ``np.cross`` at this size)."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def axis_angle(axis, angle):
    """Rotation of ``angle`` rad about the unit vector ``axis`` (Rodrigues)."""
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_euler(phi):
    """World-from-body rotation for ZYX Euler angles ``(roll, pitch, yaw)``."""
    roll, pitch, yaw = phi
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def euler_from_rotation(R, eps=EPS_SING):
    """Inverse of :func:`rotation_from_euler`.

    Raises
    ------
    SingularityError
        If the pitch angle is within ``eps`` of +-pi/2.
    """
    pitch = -np.arcsin(np.clip(R[2, 0], -1.0, 1.0))
    if abs(pitch) >= np.pi / 2 - eps:
        raise SingularityError(f"pitch {pitch:.6f} rad is at gimbal lock")
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return np.array([roll, pitch, yaw])


def check_pitch(phi, eps=EPS_SING):
    if not abs(phi[1]) < np.pi / 2 - eps:
        raise SingularityError(f"pitch {phi[1]:.6f} rad is at gimbal lock")


def euler_rate_matrix(phi, eps=EPS_SING):
    """Matrix W with ``omega_body = W @ phi_dot`` for ZYX Euler angles.

    ``det(W) == cos(pitch)``; close to +-pi/2 pitch the map is singular and
    a :class:`SingularityError` is raised.
    """
    check_pitch(phi, eps)
    roll, pitch = phi[0], phi[1]
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    return np.array([[1.0, 0.0, -sp],
                     [0.0, cr, sr * cp],
                     [0.0, -sr, cr * cp]])


@dataclass(frozen=True, eq=False)
class Transform:
    """Rigid transform: ``p_parent = rotation @ p_child + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def from_rpy(cls, xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)):
        return cls(rotation_from_euler(np.asarray(rpy, float)), np.asarray(xyz, float))


@dataclass(frozen=True, eq=False)
class Joint:
    axis: np.ndarray
    index: int
    offset: Transform = field(default_factory=Transform)

    @cached_property
    def _rodrigues(self):
        K = skew(self.axis)
        return K, K @ K

    def rotation(self, angle):
        """Rotation about the joint axis, same as ``axis_angle(axis, angle)``."""
        K, K2 = self._rodrigues
        return _EYE3 + math.sin(angle) * K + (1.0 - math.cos(angle)) * K2


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """Serial chain from the body frame to one jet frame.

    The joint axis is expressed in the frame reached just before the joint;
    ``offset`` is applied after the joint rotation. A chain without joints
    is a fixed mount.
    """

    mount: Transform
    joints: tuple = ()

    def __post_init__(self):
        for j in self.joints:
            if abs(np.linalg.norm(j.axis) - 1.0) > 1e-12:
                raise ValueError(f"joint axis {j.axis} is not a unit vector")

    @property
    def joint_indices(self):
        return tuple(j.index for j in self.joints)


@dataclass(frozen=True, eq=False)
class RobotModel:
    mass: float
    inertia: np.ndarray
    chains: tuple
    s_min: np.ndarray
    s_max: np.ndarray
    com_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gravity: float = 9.81

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        I = np.asarray(self.inertia, float)
        if I.shape != (3, 3) or np.abs(I - I.T).max() > 1e-12:
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(I).min() <= 0:
            raise ValueError("inertia must be positive definite")
        if len(self.chains) < 1:
            raise ValueError("at least one jet chain is required")
        if np.shape(self.s_min) != np.shape(self.s_max) or np.any(
                np.asarray(self.s_min) >= np.asarray(self.s_max)):
            raise ValueError("joint limits need s_min < s_max elementwise")
        seen = set()
        for chain in self.chains:
            idx = set(chain.joint_indices)
            if idx & seen:
                raise ValueError("joint indices of distinct chains overlap")
            if any(i < 0 or i >= self.n_s for i in idx):
                raise ValueError("joint index out of range")
            seen |= idx

    @property
    def n_j(self):
        return len(self.chains)

    @property
    def n_s(self):
        return len(self.s_min)

    @cached_property
    def inertia_inv(self):
        return np.linalg.inv(self.inertia)


@dataclass(frozen=True, eq=False)
class JetFrames:
    """Jet frames at one joint configuration, stacked over jets.

    rotations : (n_j, 3, 3) body-from-jet rotations
    r : (n_j, 3) CoM-to-jet vectors in body coordinates
    J_omega, J_r : (n_j, 3, n_s) relative angular / linear Jacobians
    """

    rotations: np.ndarray
    r: np.ndarray
    J_omega: np.ndarray | None = None
    J_r: np.ndarray | None = None

    @property
    def directions(self):
        """Thrust directions R_i e3, shape (n_j, 3)."""
        return self.rotations[:, :, 2]


def forward_kinematics(model, s, jacobians=True):
    """Jet frames for joint vector ``s``.

    The Jacobians are exact: joint ``k`` contributes ``a_k`` to ``J_omega``
    and ``a_k x (p_jet - o_k)`` to ``J_r``, with ``a_k`` / ``o_k`` the joint
    axis and origin in body coordinates.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (model.n_s,):
        raise ValueError(f"joint vector has shape {s.shape}, expected ({model.n_s},)")
    n_j, n_s = model.n_j, model.n_s
    rotations = np.empty((n_j, 3, 3))
    r = np.empty((n_j, 3))
    if jacobians:
        J_omega = np.zeros((n_j, 3, n_s))
        J_r = np.zeros((n_j, 3, n_s))
    for i, chain in enumerate(model.chains):
        R = chain.mount.rotation
        p = chain.mount.translation
        axes, origins = [], []
        for joint in chain.joints:
            axes.append(R @ joint.axis)
            origins.append(p)
            R = R @ joint.rotation(s[joint.index])
            p = p + R @ joint.offset.translation
            R = R @ joint.offset.rotation
        rotations[i] = R
        r[i] = p - model.com_offset
        if jacobians:
            for joint, a, o in zip(chain.joints, axes, origins):
                J_omega[i, :, joint.index] = a
                J_r[i, :, joint.index] = cross(a, p - o)
    if not jacobians:
        return JetFrames(rotations, r)
    return JetFrames(rotations, r, J_omega, J_r)


def allocation_matrices(frames):
    """Thrust-to-wrench maps ``(A_lin, A_ang)``, each 3 x n_j.

    Column i of ``A_lin`` is the thrust direction ``R_i e3``; column i of
    ``A_ang`` is the moment ``r_i x R_i e3`` about the CoM.
    """
    d = frames.directions
    return d.T.copy(), np.einsum("ijk,ik->ji", skew_stack(frames.r), d)


def hover_thrust(model, s=None):
    """Minimum-norm thrusts balancing gravity at level attitude and joints ``s``."""
    if s is None:
        s = np.zeros(model.n_s)
    A_lin, A_ang = allocation_matrices(forward_kinematics(model, s, jacobians=False))
    wrench = np.r_[0.0, 0.0, model.mass * model.gravity, 0.0, 0.0, 0.0]
    T, *_ = np.linalg.lstsq(np.vstack([A_lin, A_ang]), wrench, rcond=None)
    return T


def default_robot(arm_cant_deg=15.0):
    """Four-jet torso: two 2-DOF arm jets and two fixed back jets.

    Jet order is (left arm, right arm, left back, right back); joints are
    (left pitch, left roll, right pitch, right roll). Values are desk-scale
    defaults, not identified parameters.

    The arm mounts are rolled so that at zero joint angles the arm jets
    exhaust outwards by ``arm_cant_deg``. Without the cant a symmetric roll
    of both arms changes no wrench component to first order around hover.
    """
    ey, ex = np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])
    hand = Transform(translation=np.array([0.0, 0.0, -0.45]))

    cant = np.deg2rad(arm_cant_deg)

    def arm(y, first):
        return KinematicChain(
            mount=Transform(rot_x(np.sign(y) * cant), np.array([0.1, y, 0.35])),
            joints=(Joint(ey, first), Joint(ex, first + 1, hand)))

    def back(y, tilt):
        return KinematicChain(mount=Transform(rot_x(tilt), np.array([-0.1, y, 0.3])))

    tilt = np.deg2rad(10.0)
    return RobotModel(
        mass=45.0,
        inertia=np.diag([3.0, 2.5, 1.5]),
        chains=(arm(0.25, 0), arm(-0.25, 2), back(0.12, -tilt), back(-0.12, tilt)),
        s_min=np.array([-0.8, -0.5, -0.8, -0.5]),
        s_max=np.array([0.8, 0.5, 0.8, 0.5]),
    )

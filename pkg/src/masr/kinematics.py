"""Planar kinematics of a serial arm with passive joints driven by one traveling actuator.

The arm has ``n`` passive revolute joints and a mobile actuator (MA) that
travels along the links; the gripper rides on the MA.  A configuration is
the joint vector plus the MA arc-length position ``d``.  Batch functions
take configurations stacked as rows ``[theta_1, ..., theta_n, d]``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Map angles to (-pi, pi]; values already in range are returned unchanged."""
    if np.ndim(a) == 0:
        a = float(a)
        if -math.pi < a <= math.pi:
            return a
        return math.pi - (math.pi - a) % TWO_PI
    a = np.asarray(a, dtype=float)
    inside = (a > -math.pi) & (a <= math.pi)
    return np.where(inside, a, math.pi - np.mod(math.pi - a, TWO_PI))


@dataclass(frozen=True)
class RobotModel:
    """Geometry and speeds of the arm. Angles in radians, lengths in meters."""

    link_lengths: tuple[float, ...]
    joint_bounds: tuple[float, ...]
    ma_speed: float = 0.1
    joint_speed: float = 0.28
    link_width: float = 0.02

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.link_lengths)
        bounds = self.joint_bounds
        if np.ndim(bounds) == 0:
            bounds = (bounds,) * len(lengths)
        bounds = tuple(float(v) for v in bounds)
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "joint_bounds", bounds)
        if not lengths:
            raise DomainError("robot needs at least one link")
        if len(bounds) != len(lengths):
            raise DomainError("joint_bounds and link_lengths differ in length")
        if any(v <= 0 for v in lengths):
            raise DomainError("link lengths must be positive")
        if any(v < 0 for v in bounds):
            raise DomainError("joint bounds must be nonnegative")
        if self.ma_speed <= 0 or self.joint_speed <= 0:
            raise DomainError("speeds must be positive")
        if self.link_width < 0:
            raise DomainError("link width must be nonnegative")

    @classmethod
    def default_arm(cls, link_width: float = 0.02) -> "RobotModel":
        """The 5-link, 0.8 m arm with +-50 deg joints used for evaluation."""
        return cls((0.2, 0.2, 0.2, 0.1, 0.1), (math.radians(50.0),) * 5,
                   ma_speed=0.1, joint_speed=0.28, link_width=link_width)

    @property
    def n(self) -> int:
        return len(self.link_lengths)

    @cached_property
    def lengths(self) -> np.ndarray:
        a = np.array(self.link_lengths)
        a.flags.writeable = False
        return a

    @cached_property
    def anchors(self) -> np.ndarray:
        """Arc-length positions r_j of the joints; r_1 = 0 (exactly rounded sums)."""
        ls = self.link_lengths
        r = np.array([math.fsum(ls[:j]) for j in range(len(ls))])
        r.flags.writeable = False
        return r

    @cached_property
    def total_length(self) -> float:
        return math.fsum(self.link_lengths)

    @cached_property
    def lower(self) -> np.ndarray:
        a = np.concatenate((-np.array(self.joint_bounds), [0.0]))
        a.flags.writeable = False
        return a

    @cached_property
    def upper(self) -> np.ndarray:
        a = np.concatenate((np.array(self.joint_bounds), [self.total_length]))
        a.flags.writeable = False
        return a

    def fingerprint(self) -> str:
        """Short hash of lengths and bounds; ties model files to a robot."""
        text = ",".join(repr(v) for v in self.link_lengths + self.joint_bounds)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def random_configurations(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.n + 1))


@dataclass(frozen=True)
class Configuration:
    theta: tuple[float, ...]
    d: float

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))
        object.__setattr__(self, "d", float(self.d))

    @classmethod
    def from_vector(cls, q: Sequence[float]) -> "Configuration":
        q = np.asarray(q, dtype=float)
        return cls(tuple(q[:-1]), float(q[-1]))

    @classmethod
    def straight(cls, n: int, d: float = 0.0) -> "Configuration":
        return cls((0.0,) * n, d)

    def vector(self) -> np.ndarray:
        return np.array(self.theta + (self.d,))


@dataclass(frozen=True)
class MaLocation:
    j_d: int          # 1-based index of the link carrying the MA
    d_link: float


@dataclass(frozen=True)
class PoseSE2:
    x: float
    y: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "phi", wrap_angle(float(self.phi)))

    def vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi])

    def inverse(self) -> "PoseSE2":
        c, s = math.cos(self.phi), math.sin(self.phi)
        return PoseSE2(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.phi)

    def compose(self, other: "PoseSE2") -> "PoseSE2":
        c, s = math.cos(self.phi), math.sin(self.phi)
        return PoseSE2(self.x + c * other.x - s * other.y,
                       self.y + s * other.x + c * other.y,
                       self.phi + other.phi)


@dataclass(frozen=True)
class Twist:
    vx: float
    vy: float
    omega: float

    def vector(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.omega])


# --- feasibility ----------------------------------------------------------

def check_feasible(model: RobotModel, q: Configuration) -> None:
    """Raise DomainError naming the first violated bound."""
    if len(q.theta) != model.n:
        raise DomainError(f"expected {model.n} joint angles, got {len(q.theta)}")
    for j, (t, b) in enumerate(zip(q.theta, model.joint_bounds), start=1):
        if not -b <= t <= b:
            raise DomainError(f"joint {j} angle {t:.6g} rad outside [-{b:.6g}, {b:.6g}]", joint=j)
    if not 0.0 <= q.d <= model.total_length:
        raise DomainError(f"MA position {q.d:.6g} m outside [0, {model.total_length:.6g}]")


def is_feasible(model: RobotModel, q: Configuration) -> bool:
    try:
        check_feasible(model, q)
    except DomainError:
        return False
    return True


def feasible_batch(model: RobotModel, Q: np.ndarray) -> np.ndarray:
    Q = np.atleast_2d(Q)
    return np.all((Q >= model.lower) & (Q <= model.upper), axis=1)


# --- forward kinematics ---------------------------------------------------

def decompose_ma_position(model: RobotModel, d: float) -> MaLocation:
    if not 0.0 <= d <= model.total_length:
        raise DomainError(f"MA position {d} outside [0, {model.total_length}]")
    j = min(int(np.searchsorted(model.anchors, d, side="right")), model.n)
    return MaLocation(j, float(d - model.anchors[j - 1]))


def _link_index(model: RobotModel, d: np.ndarray) -> np.ndarray:
    """0-based index of the link carrying the MA (right-continuous at anchors)."""
    j = np.searchsorted(model.anchors, d, side="right") - 1
    return np.clip(j, 0, model.n - 1)


def joint_positions_batch(model: RobotModel, theta: np.ndarray) -> np.ndarray:
    """Positions of joints 1..n and the arm tip, shape (B, n+1, 2)."""
    theta = np.atleast_2d(theta)
    cum = np.cumsum(theta, axis=1)
    steps = np.stack((np.cos(cum), np.sin(cum)), axis=-1) * model.lengths[None, :, None]
    out = np.zeros((theta.shape[0], model.n + 1, 2))
    np.cumsum(steps, axis=1, out=out[:, 1:])
    return out


def fk_batch(model: RobotModel, Q: np.ndarray) -> np.ndarray:
    """Gripper poses (x, y, phi) for stacked configurations, shape (B, 3)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    theta, d = Q[:, :-1], Q[:, -1]
    cum = np.cumsum(theta, axis=1)
    jd = _link_index(model, d)
    rows = np.arange(Q.shape[0])
    d_link = d - model.anchors[jd]
    proximal = np.arange(model.n)[None, :] < jd[:, None]
    lc = np.where(proximal, model.lengths[None, :], 0.0)
    ang = cum[rows, jd]
    x = np.sum(lc * np.cos(cum), axis=1) + d_link * np.cos(ang)
    y = np.sum(lc * np.sin(cum), axis=1) + d_link * np.sin(ang)
    return np.stack((x, y, wrap_angle(ang)), axis=1)


def forward_kinematics(model: RobotModel, q: Configuration) -> PoseSE2:
    check_feasible(model, q)
    x, y, phi = fk_batch(model, q.vector()[None, :])[0]
    return PoseSE2(x, y, phi)


def fk_jacobian_batch(model: RobotModel, Q: np.ndarray) -> np.ndarray:
    """d(x, y, phi)/d(theta_1..theta_n, d), shape (B, 3, n+1).

    At d == r_j the right-limit piece (MA on link j) is used.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    B, n = Q.shape[0], model.n
    pose = fk_batch(model, Q)
    joints = joint_positions_batch(model, Q[:, :-1])[:, :n]
    jd = _link_index(model, Q[:, -1])
    active = np.arange(n)[None, :] <= jd[:, None]
    J = np.zeros((B, 3, n + 1))
    J[:, 0, :n] = np.where(active, -(pose[:, None, 1] - joints[:, :, 1]), 0.0)
    J[:, 1, :n] = np.where(active, pose[:, None, 0] - joints[:, :, 0], 0.0)
    J[:, 2, :n] = active
    ang = np.cumsum(Q[:, :-1], axis=1)[np.arange(B), jd]
    J[:, 0, n] = np.cos(ang)
    J[:, 1, n] = np.sin(ang)
    return J


def fk_jacobian(model: RobotModel, q: Configuration) -> np.ndarray:
    check_feasible(model, q)
    return fk_jacobian_batch(model, q.vector()[None, :])[0]


# --- SE(2) log / exp --------------------------------------------------------

def _half_cot(w):
    """(w/2) cot(w/2), with its small-angle series."""
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < 1e-4
    ws = np.where(small, 1.0, w)
    exact = 0.5 * ws / np.tan(0.5 * ws)
    return np.where(small, 1.0 - w * w / 12.0 - w ** 4 / 720.0, exact)


def _half_cot_deriv(w):
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < 1e-4
    ws = np.where(small, 1.0, w)
    h = 0.5 * ws
    exact = 0.5 / np.tan(h) - 0.25 * ws / np.sin(h) ** 2
    return np.where(small, -w / 6.0 - w ** 3 / 180.0, exact)


def twist_batch(ref: np.ndarray, X: np.ndarray, with_jacobian: bool = False):
    """Body twists log(ref^-1 X) for stacked poses (B, 3).

    With ``with_jacobian`` also returns dV/dX of shape (B, 3, 3), the
    derivative with respect to the second pose's (x, y, phi).
    """
    ref = np.atleast_2d(ref)
    X = np.atleast_2d(X)
    c, s = np.cos(ref[:, 2]), np.sin(ref[:, 2])
    dx, dy = X[:, 0] - ref[:, 0], X[:, 1] - ref[:, 1]
    px, py = c * dx + s * dy, -s * dx + c * dy
    w = wrap_angle(X[:, 2] - ref[:, 2])
    a = _half_cot(w)
    V = np.stack((a * px + 0.5 * w * py, -0.5 * w * px + a * py, w), axis=1)
    if not with_jacobian:
        return V
    da = _half_cot_deriv(w)
    D = np.zeros((X.shape[0], 3, 3))
    # v = M(w) R(-phi_ref) (p - p_ref),  M = [[a, w/2], [-w/2, a]]
    D[:, 0, 0] = a * c - 0.5 * w * s
    D[:, 0, 1] = a * s + 0.5 * w * c
    D[:, 1, 0] = -0.5 * w * c - a * s
    D[:, 1, 1] = -0.5 * w * s + a * c
    D[:, 0, 2] = da * px + 0.5 * py
    D[:, 1, 2] = -0.5 * px + da * py
    D[:, 2, 2] = 1.0
    return V, D


def pose_log(x_ref: PoseSE2, x: PoseSE2) -> Twist:
    vx, vy, w = twist_batch(x_ref.vector()[None, :], x.vector()[None, :])[0]
    return Twist(float(vx), float(vy), float(w))


def pose_exp(v: Twist) -> PoseSE2:
    w = v.omega
    if abs(w) < 1e-9:
        a, b = 1.0 - w * w / 6.0, w / 2.0
    else:
        a, b = math.sin(w) / w, (1.0 - math.cos(w)) / w
    return PoseSE2(a * v.vx - b * v.vy, b * v.vx + a * v.vy, w)


def pose_errors(X: np.ndarray, goal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Position error (m) and absolute wrapped heading error (rad)."""
    X = np.atleast_2d(X)
    goal = np.broadcast_to(goal, X.shape)
    dp = np.hypot(X[:, 0] - goal[:, 0], X[:, 1] - goal[:, 1])
    dphi = np.abs(wrap_angle(X[:, 2] - goal[:, 2]))
    return dp, dphi


def in_goal_region(pose: PoseSE2, goal: PoseSE2, e_p: float, e_phi: float) -> bool:
    dp, dphi = pose_errors(pose.vector()[None, :], goal.vector())
    return bool(dp[0] <= e_p and dphi[0] <= e_phi)

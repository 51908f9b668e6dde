"""Actions, the MA motion convention, and action-time costs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ValidationError
from .kinematics import Configuration, RobotModel, check_feasible

# Joint deltas below this magnitude are numeric noise, not rotations.
ROTATION_EPS = 1e-12


@dataclass(frozen=True)
class Action:
    dtheta: tuple[float, ...]
    dd: float

    def __post_init__(self):
        object.__setattr__(self, "dtheta", tuple(float(v) for v in self.dtheta))
        object.__setattr__(self, "dd", float(self.dd))

    @classmethod
    def between(cls, q_from: Configuration, q_to: Configuration) -> "Action":
        return cls.from_vector(q_to.vector() - q_from.vector())

    @classmethod
    def from_vector(cls, a: Sequence[float]) -> "Action":
        a = np.asarray(a, dtype=float)
        return cls(tuple(a[:-1]), float(a[-1]))

    @classmethod
    def zero(cls, n: int) -> "Action":
        return cls((0.0,) * n, 0.0)

    def vector(self) -> np.ndarray:
        return np.array(self.dtheta + (self.dd,))

    def apply(self, q: Configuration) -> Configuration:
        return Configuration.from_vector(q.vector() + self.vector())

    def is_zero(self) -> bool:
        return abs(self.dd) == 0.0 and all(abs(t) < ROTATION_EPS for t in self.dtheta)


@dataclass(frozen=True)
class Move:
    from_d: float
    to_d: float


@dataclass(frozen=True)
class Rotate:
    joint: int        # 1-based
    from_angle: float
    to_angle: float


Step = Union[Move, Rotate]


def _phases(model: RobotModel, d_c: float, dd: float, dtheta: Sequence[float]):
    """Joint visit order (0-based indices) for the two sweep phases.

    Phase one moves away from the final MA position, phase two towards it;
    dd == 0 follows the dd >= 0 branch.
    """
    rotated = [j for j, t in enumerate(dtheta) if abs(t) >= ROTATION_EPS]
    r = model.anchors
    if dd >= 0:
        first = sorted((j for j in rotated if r[j] <= d_c), key=lambda j: -r[j])
        second = sorted((j for j in rotated if r[j] > d_c), key=lambda j: r[j])
    else:
        first = sorted((j for j in rotated if r[j] >= d_c), key=lambda j: r[j])
        second = sorted((j for j in rotated if r[j] < d_c), key=lambda j: -r[j])
    return first, second


def expand_action(model: RobotModel, q_from: Configuration, a: Action) -> list[Step]:
    """Primitive MA moves and joint rotations that execute ``a`` from ``q_from``."""
    check_feasible(model, q_from)
    check_feasible(model, a.apply(q_from))
    d_c = q_from.d
    d_f = d_c + a.dd
    steps: list[Step] = []
    pos = d_c
    angles = list(q_from.theta)
    first, second = _phases(model, d_c, a.dd, a.dtheta)
    for j in first + second:
        target = float(model.anchors[j])
        if target != pos:
            steps.append(Move(pos, target))
            pos = target
        steps.append(Rotate(j + 1, angles[j], angles[j] + a.dtheta[j]))
        angles[j] += a.dtheta[j]
    if d_f != pos:
        steps.append(Move(pos, d_f))
    return steps


def _sweep_extremes(model: RobotModel, d_c: float, dd: float, dtheta: Sequence[float]):
    d_f = d_c + dd
    visited = [float(model.anchors[j]) for j, t in enumerate(dtheta) if abs(t) >= ROTATION_EPS]
    if dd >= 0:
        return min(visited + [d_c]), max(visited + [d_f]), d_f
    return min(visited + [d_f]), max(visited + [d_c]), d_f


def traverse_length(model: RobotModel, q_from: Configuration, a: Action) -> float:
    """Total MA travel D_a under the motion convention (meters).

    Summed with ``math.fsum`` so the result is the correctly rounded value of
    the exact telescoped distance.
    """
    check_feasible(model, q_from)
    check_feasible(model, a.apply(q_from))
    d_c = q_from.d
    lo, hi, d_f = _sweep_extremes(model, d_c, a.dd, a.dtheta)
    if a.dd >= 0:
        return math.fsum((d_c, -lo, hi, -lo, hi, -d_f))
    return math.fsum((hi, -d_c, hi, -lo, d_f, -lo))


def action_cost(model: RobotModel, q_from: Configuration, a: Action) -> float:
    """Action time c(a) = D_a / ma_speed + sum|dtheta| / joint_speed (seconds)."""
    rotation = sum(abs(t) for t in a.dtheta if abs(t) >= ROTATION_EPS)
    return traverse_length(model, q_from, a) / model.ma_speed + rotation / model.joint_speed


def traverse_length_batch(model: RobotModel, d_from: np.ndarray, dtheta: np.ndarray,
                          dd: np.ndarray) -> np.ndarray:
    """Vectorized D_a for rows of (d_from, dtheta, dd)."""
    d_from = np.asarray(d_from, dtype=float)
    dd = np.asarray(dd, dtype=float)
    d_f = d_from + dd
    rotated = np.abs(dtheta) >= ROTATION_EPS
    r = model.anchors[None, :]
    r_min = np.min(np.where(rotated, r, np.inf), axis=1)
    r_max = np.max(np.where(rotated, r, -np.inf), axis=1)
    up = dd >= 0
    lo = np.minimum(r_min, np.where(up, d_from, d_f))
    hi = np.maximum(r_max, np.where(up, d_f, d_from))
    return np.where(up, (d_from - lo) + (hi - lo) + (hi - d_f),
                    (hi - d_from) + (hi - lo) + (d_f - lo))


def action_cost_batch(model: RobotModel, Q_from: np.ndarray, Q_to: np.ndarray) -> np.ndarray:
    """Action time from each row of ``Q_from`` to the matching row of ``Q_to``.

    Either argument may be a single configuration vector (broadcast).
    """
    Q_from, Q_to = np.broadcast_arrays(np.atleast_2d(Q_from), np.atleast_2d(Q_to))
    A = Q_to - Q_from
    dtheta = A[:, :-1]
    D = traverse_length_batch(model, Q_from[:, -1], dtheta, A[:, -1])
    rot = np.sum(np.where(np.abs(dtheta) >= ROTATION_EPS, np.abs(dtheta), 0.0), axis=1)
    return D / model.ma_speed + rot / model.joint_speed


@dataclass(frozen=True)
class Path:
    """K+1 configurations joined by K actions, with cumulative action times."""

    configurations: tuple[Configuration, ...]
    actions: tuple[Action, ...]
    cum_times: tuple[float, ...]

    @property
    def tau(self) -> float:
        return self.cum_times[-1] if self.cum_times else 0.0

    def __len__(self):
        return len(self.actions)


def make_path(model: RobotModel, configurations: Sequence[Configuration]) -> Path:
    configurations = tuple(configurations)
    actions = tuple(Action.between(a, b) for a, b in zip(configurations, configurations[1:]))
    times = [0.0]
    for q, a in zip(configurations, actions):
        times.append(times[-1] + action_cost(model, q, a))
    return Path(configurations, actions, tuple(times) if configurations else ())


def path_cost(model: RobotModel, path: Path, tol: float = 1e-9) -> float:
    """Total action time; validates that actions and times match the configurations."""
    qs, acts = path.configurations, path.actions
    if not qs:
        if acts:
            raise ValidationError("path has actions but no configurations")
        return 0.0
    if len(acts) != len(qs) - 1 or len(path.cum_times) != len(qs):
        raise ValidationError("path lengths are inconsistent")
    total = 0.0
    for k, (q, a) in enumerate(zip(qs, acts)):
        if not np.allclose(q.vector() + a.vector(), qs[k + 1].vector(), rtol=0.0, atol=tol):
            raise ValidationError(f"action {k} does not connect configurations {k} and {k + 1}")
        total += action_cost(model, q, a)
        if abs(total - path.cum_times[k + 1]) > tol:
            raise ValidationError(f"cumulative time at step {k + 1} is inconsistent")
    return total

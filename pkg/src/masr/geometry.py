"""Polygonal environments and collision checking for the arm.

The arm is treated as a chain of line segments; obstacles are inflated by
half the physical link width so that this is sufficient.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import GenerationError, ValidationError
from .kinematics import Configuration, RobotModel, feasible_batch, joint_positions_batch
from .motion import _phases

DEFAULT_ROTATION_RES = math.radians(0.5)
ARC_VERTICES = 8

BOUNDS = "bounds"
COLLISION = "collision"


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def _segments_cross(p0, p1, q0, q1) -> np.ndarray:
    """Closed-segment intersection test, broadcasting over leading axes."""
    d1 = _cross(q0, q1, p0)
    d2 = _cross(q0, q1, p1)
    d3 = _cross(p0, p1, q0)
    d4 = _cross(p0, p1, q1)
    hit = (d1 * d2 <= 0) & (d3 * d4 <= 0)
    collinear = (d1 == 0) & (d2 == 0)
    if np.any(collinear & hit):
        overlap = ((np.minimum(p0[..., 0], p1[..., 0]) <= np.maximum(q0[..., 0], q1[..., 0]))
                   & (np.minimum(q0[..., 0], q1[..., 0]) <= np.maximum(p0[..., 0], p1[..., 0]))
                   & (np.minimum(p0[..., 1], p1[..., 1]) <= np.maximum(q0[..., 1], q1[..., 1]))
                   & (np.minimum(q0[..., 1], q1[..., 1]) <= np.maximum(p0[..., 1], p1[..., 1])))
        hit = hit & (~collinear | overlap)
    return hit


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple polygon with counterclockwise vertices (meters)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValidationError("polygon needs at least 3 two-dimensional vertices")
        if not np.all(np.isfinite(v)):
            raise ValidationError("polygon vertices must be finite")
        area = _signed_area(v)
        if abs(area) <= 1e-15:
            raise ValidationError("degenerate polygon (zero area)")
        if area < 0:
            v = v[::-1].copy()
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        if not self._is_simple():
            raise ValidationError("polygon edges self-intersect")

    def __eq__(self, other):
        return isinstance(other, Polygon) and np.array_equal(self.vertices, other.vertices)

    def _is_simple(self) -> bool:
        v = self.vertices
        k = len(v)
        if k == 3:
            return True
        a, b = v, np.roll(v, -1, axis=0)
        i, j = np.triu_indices(k, 2)
        keep = ~((i == 0) & (j == k - 1))
        i, j = i[keep], j[keep]
        return not np.any(_segments_cross(a[i], b[i], a[j], b[j]))

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    @cached_property
    def bbox(self) -> np.ndarray:
        return np.concatenate((self.vertices.min(axis=0), self.vertices.max(axis=0)))

    def is_convex(self) -> bool:
        a, b = self.edges
        c = np.roll(b, -1, axis=0)
        return bool(np.all(_cross(a, b, c) >= 0))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Even-odd point-in-polygon test for an array of points (..., 2)."""
        pts = np.asarray(points, dtype=float)
        a, b = self.edges
        px, py = pts[..., None, 0], pts[..., None, 1]
        straddle = (a[:, 1] > py) != (b[:, 1] > py)
        dy = np.where(straddle, b[:, 1] - a[:, 1], 1.0)
        x_at = a[:, 0] + (py - a[:, 1]) * (b[:, 0] - a[:, 0]) / dy
        crossings = np.count_nonzero(straddle & (px < x_at), axis=-1)
        return crossings % 2 == 1

    def hits_segments(self, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
        """True where segment p0->p1 touches the closed polygon."""
        out = np.zeros(len(p0), dtype=bool)
        lo, hi = self.bbox[:2], self.bbox[2:]
        near = np.all((np.minimum(p0, p1) <= hi) & (np.maximum(p0, p1) >= lo), axis=1)
        idx = np.flatnonzero(near)
        if idx.size == 0:
            return out
        s0, s1 = p0[idx], p1[idx]
        a, b = self.edges
        crossing = _segments_cross(s0[:, None, :], s1[:, None, :], a[None], b[None]).any(axis=1)
        inside = self.contains(s0)
        out[idx] = crossing | inside
        return out

    def distance_to_point(self, point: Sequence[float]) -> float:
        """Euclidean distance from a point to the polygon boundary."""
        p = np.asarray(point, dtype=float)
        a, b = self.edges
        ab = b - a
        t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
        return float(np.min(np.hypot(*(a + t[:, None] * ab - p).T)))


def inflate_polygon(poly: Polygon, margin: float, arc_vertices: int = ARC_VERTICES) -> Polygon:
    """Offset polygon approximating the Minkowski sum with a disc of radius ``margin``.

    Convex corners get an arc of ``arc_vertices`` points on the true circle;
    reflex corners use the intersection of the two offset edges.
    """
    if margin < 0:
        raise ValidationError("inflation margin must be nonnegative")
    if margin == 0:
        return poly
    v = poly.vertices
    k = len(v)
    out = []
    for i in range(k):
        prev, cur, nxt = v[i - 1], v[i], v[(i + 1) % k]
        e_in, e_out = cur - prev, nxt - cur
        n_in = np.array([e_in[1], -e_in[0]]) / np.hypot(*e_in)
        n_out = np.array([e_out[1], -e_out[0]]) / np.hypot(*e_out)
        turn = e_in[0] * e_out[1] - e_in[1] * e_out[0]
        if turn > 0:
            a0 = math.atan2(n_in[1], n_in[0])
            a1 = math.atan2(n_out[1], n_out[0])
            if a1 < a0:
                a1 += 2 * math.pi
            for t in np.linspace(a0, a1, arc_vertices):
                out.append(cur + margin * np.array([math.cos(t), math.sin(t)]))
        else:
            # reflex or straight: offset lines meet at the bisector
            bis = n_in + n_out
            norm = np.dot(bis, n_in)
            if norm <= 1e-12:
                out.append(cur + margin * n_in)
            else:
                out.append(cur + margin * bis / norm)
    return Polygon(np.array(out))


@dataclass(frozen=True, eq=False)
class Environment:
    """Obstacles, their inflated copies, and the workspace square [-L, L]^2."""

    obstacles: tuple[Polygon, ...]
    inflated: tuple[Polygon, ...]
    half_extent: float
    margin: float = 0.0

    def __eq__(self, other):
        return (isinstance(other, Environment) and self.obstacles == other.obstacles
                and self.half_extent == other.half_extent and self.margin == other.margin)

    @classmethod
    def build(cls, obstacles: Iterable, link_width: float, half_extent: float) -> "Environment":
        polys = tuple(p if isinstance(p, Polygon) else Polygon(p) for p in obstacles)
        env = cls(polys, polys, float(half_extent), 0.0)
        return inflate_obstacles(env, link_width)

    @classmethod
    def empty(cls, model: RobotModel) -> "Environment":
        return cls((), (), model.total_length, 0.5 * model.link_width)


def inflate_obstacles(env: Environment, w: float) -> Environment:
    if w < 0:
        raise ValidationError("link width must be nonnegative")
    inflated = tuple(inflate_polygon(p, 0.5 * w) for p in env.obstacles)
    return Environment(env.obstacles, inflated, env.half_extent, 0.5 * w)


# --- configuration and motion checks -------------------------------------

def colliding_shapes(env: Environment, model: RobotModel, theta: np.ndarray) -> np.ndarray:
    """Per-row flag: does the arm with joint angles ``theta`` touch an inflated obstacle."""
    theta = np.atleast_2d(theta)
    hit = np.zeros(theta.shape[0], dtype=bool)
    if not env.inflated:
        return hit
    pts = joint_positions_batch(model, theta)
    p0 = pts[:, :-1].reshape(-1, 2)
    p1 = pts[:, 1:].reshape(-1, 2)
    seg_hit = np.zeros(p0.shape[0], dtype=bool)
    for poly in env.inflated:
        seg_hit |= poly.hits_segments(p0, p1)
    return seg_hit.reshape(theta.shape[0], model.n).any(axis=1)


def check_config(env: Environment, model: RobotModel, q) -> Optional[str]:
    """None if ``q`` (a Configuration or vector) is in C_free, else BOUNDS or COLLISION."""
    v = q.vector() if isinstance(q, Configuration) else np.asarray(q, dtype=float)
    if v.shape != (model.n + 1,) or not feasible_batch(model, v)[0]:
        return BOUNDS
    if colliding_shapes(env, model, v[None, :-1])[0]:
        return COLLISION
    return None


def config_free(env: Environment, model: RobotModel, q) -> bool:
    return check_config(env, model, q) is None


def intermediate_shapes(model: RobotModel, qa: np.ndarray, qb: np.ndarray,
                        res: float = DEFAULT_ROTATION_RES) -> np.ndarray:
    """Joint-angle rows visited while replaying qa -> qb under the motion convention."""
    a = qb - qa
    first, second = _phases(model, qa[-1], a[-1], a[:-1])
    current = qa[:-1].copy()
    blocks = [current[None, :].copy()]
    for j in first + second:
        k = max(1, math.ceil(abs(a[j]) / res))
        t = np.arange(1, k + 1) / k
        block = np.repeat(current[None, :], k, axis=0)
        block[:, j] = current[j] + t * a[j]
        blocks.append(block)
        current[j] = current[j] + a[j]
    blocks.append(qb[None, :-1])
    return np.vstack(blocks)


def motion_free_vec(env: Environment, model: RobotModel, qa: np.ndarray, qb: np.ndarray,
                    res: float = DEFAULT_ROTATION_RES) -> bool:
    ends = np.vstack((qa, qb))
    if not feasible_batch(model, ends).all():
        return False
    if not env.inflated:
        return True
    if colliding_shapes(env, model, ends[:, :-1]).any():
        return False
    if np.array_equal(qa[:-1], qb[:-1]):
        return True  # pure MA moves leave the arm shape unchanged
    return not colliding_shapes(env, model, intermediate_shapes(model, qa, qb, res)).any()


def motion_free(env: Environment, model: RobotModel, q_from: Configuration, q_to: Configuration,
                res: float = DEFAULT_ROTATION_RES) -> bool:
    if len(q_from.theta) != model.n or len(q_to.theta) != model.n:
        return False
    return motion_free_vec(env, model, q_from.vector(), q_to.vector(), res)


# --- random benchmark environments ---------------------------------------

def _random_convex(rng: np.random.Generator, area: float) -> np.ndarray:
    while True:
        k = int(rng.integers(4, 9))
        ang = np.sort(rng.uniform(0.0, 2 * math.pi, k))
        gaps = np.diff(np.concatenate((ang, [ang[0] + 2 * math.pi])))
        if gaps.min() > 0.15 and gaps.max() < math.pi - 0.15:
            break
    pts = np.stack((np.cos(ang), np.sin(ang)), axis=1)
    pts[:, 0] *= rng.uniform(0.5, 1.5)
    rot = rng.uniform(0.0, 2 * math.pi)
    c, s = math.cos(rot), math.sin(rot)
    pts = pts @ np.array([[c, s], [-s, c]])
    return pts * math.sqrt(area / _signed_area(pts))


def random_environment(model: RobotModel, seed: int, max_obstacles: int = 4,
                       max_coverage: float = 0.3, max_attempts: int = 1000) -> Environment:
    """Random convex obstacles covering at most ``max_coverage`` of the workspace square."""
    if not 0.0 < max_coverage < 1.0:
        raise ValidationError("max_coverage must lie in (0, 1)")
    if max_obstacles < 1:
        raise ValidationError("max_obstacles must be at least 1")
    L = model.total_length
    rng = np.random.default_rng(seed)
    count = int(rng.integers(1, max_obstacles + 1))
    budget = rng.uniform(0.1, 1.0) * max_coverage * (2 * L) ** 2
    shares = rng.dirichlet(np.ones(count)) * budget
    polys = []
    attempts = 0
    for area in shares:
        while True:
            attempts += 1
            if attempts > max_attempts:
                raise GenerationError(f"no valid obstacle set after {max_attempts} attempts")
            pts = _random_convex(rng, area) + rng.uniform(-L, L, 2)
            if np.any(np.abs(pts) > L):
                continue
            try:
                poly = Polygon(pts)
            except ValidationError:
                continue
            if poly.contains(np.zeros(2)) or poly.distance_to_point((0.0, 0.0)) <= 0.05 * L:
                continue
            polys.append(poly)
            break
    return Environment.build(polys, model.link_width, L)

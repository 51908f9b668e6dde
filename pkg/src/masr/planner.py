"""RRT* for the mobile-actuator arm with learned-IK goal propagation.

Node costs are cumulative action times.  With probability ``p_c`` a node
that has not been tried before is propagated straight to the goal with the
IK network; otherwise the tree steers toward a random free sample.  With
``p_c == 0`` the planner is plain RRT* with goal-configuration biasing.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GenerationError, MasrError
from .geometry import DEFAULT_ROTATION_RES, Environment, colliding_shapes, config_free, motion_free_vec
from .iknn import MlpNetwork
from .kinematics import (Configuration, PoseSE2, RobotModel, fk_batch, joint_positions_batch,
                         pose_errors, wrap_angle)
from .motion import Path, action_cost_batch, make_path, path_cost


class TreeInconsistency(MasrError, AssertionError):
    """Stored node times disagree with the times recomputed along parent chains."""


@dataclass(frozen=True)
class PlannerParams:
    n_iter: int = 3000
    n_neighbors: int = 7
    p_c: float = 0.6
    delta: float = 0.5
    goal_bias: float = 0.1
    e_p: float = 0.008
    e_phi: float = math.radians(4.0)
    seed: int = 0
    rotation_res: float = DEFAULT_ROTATION_RES
    audit_every: int = 0
    max_rejections: int = 10_000
    numeric_restarts: int = 1000

    def __post_init__(self):
        for name in ("p_c", "goal_bias"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.n_iter < 0 or self.n_neighbors < 0:
            raise ValueError("iteration and neighbor counts must be nonnegative")


@dataclass
class TreeNode:
    """A node candidate; ``parent`` is an index into the tree arena."""

    q: np.ndarray
    parent: Optional[int]
    action: np.ndarray
    tau: float


class Tree:
    """Array-backed search tree."""

    def __init__(self, model: RobotModel, q_root: np.ndarray, capacity: int = 1024):
        dim = model.n + 1
        self.model = model
        self.Q = np.zeros((capacity, dim))
        self.parent = np.full(capacity, -1, dtype=int)
        self.tau = np.zeros(capacity)
        self.edge = np.zeros(capacity)
        self.in_goal = np.zeros(capacity, dtype=bool)
        self.ik_tried = np.zeros(capacity, dtype=bool)
        self.children: list[list[int]] = []
        self.goal_nodes: list[int] = []
        self.size = 0
        self.audited_tau = np.zeros(0)     # times at the previous audit
        self.add(TreeNode(np.asarray(q_root, dtype=float), None, np.zeros(dim), 0.0))

    def _grow(self):
        cap = 2 * len(self.tau)
        for name in ("Q", "parent", "tau", "edge", "in_goal", "ik_tried"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[:len(old)] = old
            setattr(self, name, new)

    def add(self, node: TreeNode, goal: bool = False) -> int:
        if self.size == len(self.tau):
            self._grow()
        i = self.size
        self.Q[i] = node.q
        self.parent[i] = -1 if node.parent is None else node.parent
        self.tau[i] = node.tau
        self.edge[i] = node.tau - (self.tau[node.parent] if node.parent is not None else 0.0)
        self.children.append([])
        if node.parent is not None:
            self.children[node.parent].append(i)
        if goal:
            self.in_goal[i] = True
            self.goal_nodes.append(i)
        self.size += 1
        return i

    def node(self, i: int) -> TreeNode:
        p = int(self.parent[i])
        action = self.Q[i] - self.Q[p] if p >= 0 else np.zeros_like(self.Q[i])
        return TreeNode(self.Q[i].copy(), None if p < 0 else p, action, float(self.tau[i]))

    def chain(self, i: int) -> list[int]:
        out = []
        while i >= 0 and len(out) <= self.size:       # bounded so a cycle cannot hang
            out.append(i)
            i = int(self.parent[i])
        return out[::-1]

    def best_goal(self) -> Optional[int]:
        if not self.goal_nodes:
            return None
        g = np.array(self.goal_nodes)
        return int(g[np.argmin(self.tau[g])])

    def audit(self, tol: float = 1e-9):
        """Recompute every node's time along its parent chain, and check that no
        node's time grew since the previous audit."""
        model = self.model
        for i in range(1, self.size):
            ids = self.chain(i)
            if len(ids) > self.size or ids[0] != 0:
                raise TreeInconsistency(f"node {i} does not chain back to the root")
            total = 0.0
            for a, b in zip(ids, ids[1:]):
                total += action_cost_batch(model, self.Q[a], self.Q[b])[0]
            if abs(total - self.tau[i]) > tol:
                raise TreeInconsistency(f"node {i}: stored tau {self.tau[i]!r}, recomputed {total!r}")
        old = self.audited_tau
        grew = np.flatnonzero(self.tau[:len(old)] > old + tol)
        if grew.size:
            i = int(grew[0])
            raise TreeInconsistency(f"node {i}: tau rose from {old[i]!r} to {self.tau[i]!r}")
        self.audited_tau = self.tau[:self.size].copy()


# --- primitives --------------------------------------------------------------

def sample_free(env: Environment, model: RobotModel, rng: np.random.Generator,
                max_rejections: int = 10_000) -> np.ndarray:
    """Uniform sample from the joint/MA box, rejected until collision-free."""
    for _ in range(max_rejections + 1):
        q = rng.uniform(model.lower, model.upper)
        if not env.inflated or not colliding_shapes(env, model, q[None, :-1])[0]:
            return q
    raise GenerationError(f"no free configuration after {max_rejections} rejections")


def nearest(tree: Tree, q_rand: np.ndarray, model: RobotModel) -> int:
    """Node with the smallest action time to ``q_rand``; ties go to the oldest node."""
    costs = action_cost_batch(model, tree.Q[:tree.size], q_rand)
    return int(np.argmin(costs))


def near(tree: Tree, q: np.ndarray, k: int, model: RobotModel) -> np.ndarray:
    """Up to ``k`` non-goal nodes with the smallest action time to ``q``."""
    costs = action_cost_batch(model, tree.Q[:tree.size], q)
    costs[tree.in_goal[:tree.size]] = np.inf
    order = np.argsort(costs, kind="stable")[:k]
    return order[np.isfinite(costs[order])]


def steer(tree: Tree, i: int, q_rand: np.ndarray, delta: float, model: RobotModel) -> TreeNode:
    q_from = tree.Q[i]
    action = delta * (q_rand - q_from)
    q_new = np.clip(q_from + action, model.lower, model.upper)
    action = q_new - q_from
    tau = tree.tau[i] + action_cost_batch(model, q_from, q_new)[0]
    return TreeNode(q_new, i, action, float(tau))


def propagate_ik(tree: Tree, i: int, x_goal: np.ndarray, net: MlpNetwork, model: RobotModel) -> TreeNode:
    """IK-network step from node ``i`` toward the goal; marks ``i`` as tried."""
    tree.ik_tried[i] = True
    q_from = tree.Q[i]
    q_new = net.forward(x_goal[None, :], q_from[None, :])[0]
    tau = tree.tau[i] + action_cost_batch(model, q_from, q_new)[0]
    return TreeNode(q_new, i, q_new - q_from, float(tau))


def connect(tree: Tree, U: np.ndarray, i_near: int, v_new: TreeNode, env: Environment,
            model: RobotModel, res: float = DEFAULT_ROTATION_RES) -> TreeNode:
    """Reparent ``v_new`` to the cheapest collision-free neighbor."""
    if len(U) == 0:
        return v_new
    costs = tree.tau[U] + action_cost_batch(model, tree.Q[U], v_new.q)
    best_i, best_tau = i_near, v_new.tau
    for j in np.argsort(costs, kind="stable"):
        if costs[j] >= best_tau:
            break
        u = int(U[j])
        if u != i_near and motion_free_vec(env, model, tree.Q[u], v_new.q, res):
            best_i, best_tau = u, float(costs[j])
            break
    if best_i == v_new.parent:
        return v_new
    return TreeNode(v_new.q, best_i, v_new.q - tree.Q[best_i], best_tau)


def rewire(tree: Tree, U: np.ndarray, i_new: int, env: Environment, model: RobotModel,
           res: float = DEFAULT_ROTATION_RES) -> int:
    """Route neighbors through ``i_new`` when that strictly lowers their time."""
    if len(U) == 0:
        return 0
    q_new = tree.Q[i_new]
    edge = action_cost_batch(model, q_new, tree.Q[U])
    candidate = tree.tau[i_new] + edge
    count = 0
    for j in range(len(U)):
        u = int(U[j])
        if u == i_new or tree.in_goal[u] or not candidate[j] < tree.tau[u]:
            continue
        if not motion_free_vec(env, model, q_new, tree.Q[u], res):
            continue
        old_parent = int(tree.parent[u])
        tree.children[old_parent].remove(u)
        tree.children[i_new].append(u)
        tree.parent[u] = i_new
        tree.edge[u] = edge[j]
        tree.tau[u] = tree.tau[i_new] + edge[j]
        stack = list(tree.children[u])
        while stack:
            c = stack.pop()
            tree.tau[c] = tree.tau[tree.parent[c]] + tree.edge[c]
            stack.extend(tree.children[c])
        count += 1
    return count


def on_goal(model: RobotModel, x_goal: np.ndarray, q: np.ndarray, e_p: float,
            e_phi: float) -> Optional[tuple[int, float]]:
    """First link (1-based) passing within ``e_p`` of the goal point with heading
    within ``e_phi`` of the goal heading, and the MA position on it closest to the goal."""
    q = np.asarray(q, dtype=float)
    pts = joint_positions_batch(model, q[None, :-1])[0]
    heading = np.cumsum(q[:-1])
    goal_pt = np.asarray(x_goal[:2], dtype=float)
    for i in range(model.n):
        a, b = pts[i], pts[i + 1]
        ab = b - a
        t = float(np.dot(goal_pt - a, ab) / np.dot(ab, ab))
        t = min(max(t, 0.0), 1.0)
        dist = float(np.hypot(*(a + t * ab - goal_pt)))
        if dist <= e_p and abs(wrap_angle(heading[i] - x_goal[2])) <= e_phi:
            return i + 1, float(model.anchors[i] + t * model.link_lengths[i])
    return None


def goal_fix(tree: Tree, x_goal: np.ndarray, v_new: TreeNode, hit: tuple[int, float],
             model: RobotModel, env: Environment, e_p: float, e_phi: float,
             res: float = DEFAULT_ROTATION_RES) -> Optional[TreeNode]:
    """Move the MA onto the goal and drop rotations of joints beyond it.

    Returns None when the corrected motion collides or the corrected pose
    falls outside the goal region.
    """
    _, d_goal = hit
    parent_q = tree.Q[v_new.parent]
    q = v_new.q.copy()
    q[-1] = min(d_goal, model.total_length)
    distal = model.anchors > q[-1]
    q[:-1][distal] = parent_q[:-1][distal]
    dp, dphi = pose_errors(fk_batch(model, q), x_goal)
    if dp[0] > e_p or dphi[0] > e_phi:
        return None
    if not motion_free_vec(env, model, parent_q, q, res):
        return None
    tau = tree.tau[v_new.parent] + action_cost_batch(model, parent_q, q)[0]
    return TreeNode(q, v_new.parent, q - parent_q, float(tau))


def best_path(tree: Tree) -> Optional[Path]:
    i = tree.best_goal()
    if i is None:
        return None
    ids = tree.chain(i)
    qs = tuple(Configuration.from_vector(tree.Q[k]) for k in ids)
    return make_path(tree.model, qs)


# --- main loop ---------------------------------------------------------------

@dataclass
class PlanStats:
    iterations: int = 0
    tree_size: int = 1
    goal_nodes: int = 0
    first_solution: Optional[int] = None
    ik_calls: int = 0
    rewires: int = 0
    collisions_rejected: int = 0
    goal_fix_rejected: int = 0
    wall_time_s: float = 0.0
    trace: list = field(default_factory=list)   # (iteration, tree size, best tau or inf)

    def best_trace(self) -> list[tuple[int, float]]:
        """Iterations where the best goal time changed, with the new value."""
        out = []
        last = math.inf
        for it, _, best in self.trace:
            if best != last:
                out.append((it, best))
                last = best
        return out


@dataclass
class PlanResult:
    path: Optional[Path]
    stats: PlanStats
    tree: Tree
    q_goal: Optional[np.ndarray] = None

    @property
    def success(self) -> bool:
        return self.path is not None


def plan(env: Environment, model: RobotModel, q_init: Configuration, x_goal: PoseSE2,
         params: PlannerParams, net: Optional[MlpNetwork] = None,
         q_goal: Optional[Configuration] = None) -> PlanResult:
    """Run the planner for ``params.n_iter`` iterations and return the cheapest goal path."""
    if not config_free(env, model, q_init):
        raise MasrError("initial configuration is not collision-free")
    if params.p_c > 0 and net is None:
        raise MasrError("p_c > 0 requires an IK network")
    rng = np.random.default_rng(params.seed)
    goal = x_goal.vector()
    res = params.rotation_res
    baseline = params.p_c == 0
    qg = None
    if baseline:
        if q_goal is not None:
            qg = q_goal.vector()
        elif params.goal_bias > 0:
            from .iknumeric import ik_numeric
            found = ik_numeric(model, x_goal, q_init, params.numeric_restarts, params.seed,
                               params.e_p, params.e_phi)
            qg = None if found is None else found.vector()
    tree = Tree(model, q_init.vector(), capacity=max(64, params.n_iter + 2))
    stats = PlanStats()
    t0 = time.perf_counter()
    for it in range(1, params.n_iter + 1):
        if baseline and qg is not None and rng.random() < params.goal_bias:
            q_rand = qg
        else:
            q_rand = sample_free(env, model, rng, params.max_rejections)
        i_near = nearest(tree, q_rand, model)
        p = rng.random()
        if p < params.p_c and not tree.in_goal[i_near] and not tree.ik_tried[i_near]:
            v_new = propagate_ik(tree, i_near, goal, net, model)
            stats.ik_calls += 1
        else:
            v_new = steer(tree, i_near, q_rand, params.delta, model)
        if motion_free_vec(env, model, tree.Q[i_near], v_new.q, res):
            U = near(tree, v_new.q, params.n_neighbors, model)
            v_new = connect(tree, U, i_near, v_new, env, model, res)
            hit = on_goal(model, goal, v_new.q, params.e_p, params.e_phi)
            if hit is not None:
                fixed = goal_fix(tree, goal, v_new, hit, model, env, params.e_p, params.e_phi, res)
                if fixed is not None:
                    tree.add(fixed, goal=True)
                    if stats.first_solution is None:
                        stats.first_solution = it
                else:
                    stats.goal_fix_rejected += 1
            else:
                i_new = tree.add(v_new)
                stats.rewires += rewire(tree, U[U != v_new.parent], i_new, env, model, res)
        else:
            stats.collisions_rejected += 1
        best = tree.best_goal()
        stats.trace.append((it, tree.size, math.inf if best is None else float(tree.tau[best])))
        if params.audit_every and it % params.audit_every == 0:
            tree.audit()
    stats.iterations = params.n_iter
    stats.tree_size = tree.size
    stats.goal_nodes = len(tree.goal_nodes)
    stats.wall_time_s = time.perf_counter() - t0
    return PlanResult(best_path(tree), stats, tree, qg)


def validate_path(env: Environment, model: RobotModel, path: Path,
                  res: float = DEFAULT_ROTATION_RES, tol: float = 1e-9) -> float:
    """Full re-validation of a returned path; returns its recomputed time."""
    for k, q in enumerate(path.configurations):
        if not config_free(env, model, q):
            raise MasrError(f"waypoint {k} is not collision-free")
    for k, (a, b) in enumerate(zip(path.configurations, path.configurations[1:])):
        if not motion_free_vec(env, model, a.vector(), b.vector(), res):
            raise MasrError(f"motion {k} -> {k + 1} collides")
    return path_cost(model, path, tol)

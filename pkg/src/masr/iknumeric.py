"""Multi-restart damped Newton-Raphson IK over prismatic sub-chains.

A sub-chain keeps the first few revolute joints active and models the MA as
a prismatic joint along one link; all other joints stay at zero.  The
restart split uses chains 1..n with the MA on the last active link.
Restarts run vectorized per sub-chain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .iknn import REG_ACTION_TIME, reg_weights
from .kinematics import (Configuration, PoseSE2, RobotModel, fk_batch, fk_jacobian_batch,
                         pose_errors, twist_batch)

DAMPING = 1e-3
TOL = 1e-8
ITERS = 100


@dataclass(frozen=True)
class SubchainSpec:
    k: int            # number of active revolute joints
    link: int = 0     # 1-based link carrying the MA; 0 means link k

    def __post_init__(self):
        if self.link == 0:
            object.__setattr__(self, "link", self.k)
        if not 1 <= self.link or self.k > self.link:
            raise ValueError(f"invalid sub-chain: {self.k} joints, MA on link {self.link}")

    def lower(self, model: RobotModel) -> np.ndarray:
        return np.concatenate((-np.array(model.joint_bounds[:self.k]), [0.0]))

    def upper(self, model: RobotModel) -> np.ndarray:
        return np.concatenate((np.array(model.joint_bounds[:self.k]),
                               [model.link_lengths[self.link - 1]]))

    def lift(self, model: RobotModel, S: np.ndarray) -> np.ndarray:
        """Full configurations for stacked sub-chain states (M, k+1)."""
        S = np.atleast_2d(S)
        Q = np.zeros((S.shape[0], model.n + 1))
        Q[:, :self.k] = S[:, :self.k]
        Q[:, -1] = np.minimum(model.anchors[self.link - 1] + S[:, -1], model.total_length)
        return Q


def _solve_batch(model: RobotModel, spec: SubchainSpec, x_d: np.ndarray, S: np.ndarray,
                 iters: int, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Damped NR from each row of S; returns final states and iteration counts."""
    lo, hi = spec.lower(model), spec.upper(model)
    cols = list(range(spec.k)) + [model.n]
    S = np.clip(np.array(S, dtype=float), lo, hi)
    used = np.zeros(len(S), dtype=int)
    active = np.ones(len(S), dtype=bool)
    eye = DAMPING * np.eye(spec.k + 1)
    goal = x_d[None, :]
    for _ in range(iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Q = spec.lift(model, S[idx])
        V, D = twist_batch(goal, fk_batch(model, Q), with_jacobian=True)
        done = np.linalg.norm(V, axis=1) <= tol
        active[idx[done]] = False
        keep = ~done
        if not keep.any():
            break
        idx, V, D, Q = idx[keep], V[keep], D[keep], Q[keep]
        J = np.einsum("bij,bjk->bik", D, fk_jacobian_batch(model, Q)[:, :, cols])
        JT = np.transpose(J, (0, 2, 1))
        step = np.linalg.solve(JT @ J + eye, -np.einsum("bij,bj->bi", JT, V)[..., None])[..., 0]
        S[idx] = np.clip(S[idx] + step, lo, hi)
        used[idx] += 1
    return S, used


def nr_solve_subchain(model: RobotModel, spec: SubchainSpec, x_d: PoseSE2, q_start,
                      iters: int = ITERS, tol: float = TOL, e_p: float = 0.008,
                      e_phi: float = math.radians(4.0)) -> Optional[np.ndarray]:
    """Sub-chain state reaching ``x_d`` within (e_p, e_phi), or None."""
    S, _ = _solve_batch(model, spec, x_d.vector(), np.atleast_2d(q_start), iters, tol)
    dp, dphi = pose_errors(fk_batch(model, spec.lift(model, S)), x_d.vector())
    if dp[0] <= e_p and dphi[0] <= e_phi:
        return S[0]
    return None


@dataclass
class Restart:
    index: int
    k: int
    q: np.ndarray
    success: bool
    reg: float


def numeric_restarts(model: RobotModel, x_d: PoseSE2, q_c: Configuration, m: int, seed: int,
                     e_p: float = 0.008, e_phi: float = math.radians(4.0),
                     iters: int = ITERS, tol: float = TOL) -> list[Restart]:
    """All ``m`` restarts, split evenly over the n sub-chains, in restart order."""
    n = model.n
    if m < n:
        raise ValueError(f"need at least {n} restarts, got {m}")
    rng = np.random.default_rng(seed)
    goal = x_d.vector()
    qc = q_c.vector()
    w = reg_weights(model, qc, REG_ACTION_TIME)[0]
    out = []
    index = 0
    for k in range(1, n + 1):
        count = m // n + (k <= m % n)
        spec = SubchainSpec(k)
        S0 = rng.uniform(spec.lower(model), spec.upper(model), size=(count, k + 1))
        S, _ = _solve_batch(model, spec, goal, S0, iters, tol)
        Q = spec.lift(model, S)
        dp, dphi = pose_errors(fk_batch(model, Q), goal)
        ok = (dp <= e_p) & (dphi <= e_phi)
        regs = np.sum(w * np.abs(Q[:, :-1] - qc[:-1]), axis=1)
        for i in range(count):
            out.append(Restart(index, k, Q[i], bool(ok[i]), float(regs[i])))
            index += 1
    return out


def ik_numeric(model: RobotModel, x_d: PoseSE2, q_c: Configuration, m: int = 1000, seed: int = 0,
               e_p: float = 0.008, e_phi: float = math.radians(4.0)) -> Optional[Configuration]:
    """Successful restart with the smallest action-time regularizer, or None."""
    best = None
    for r in numeric_restarts(model, x_d, q_c, m, seed, e_p, e_phi):
        if r.success and (best is None or r.reg < best.reg):
            best = r
    return None if best is None else Configuration.from_vector(best.q)

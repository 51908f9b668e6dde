"""Learned inverse kinematics trained through the forward-kinematics decoder.

The network maps a desired gripper pose and the current configuration to a
target configuration.  Training is unsupervised: the predicted configuration
is decoded by forward kinematics and penalized by the weighted norm of the
body twist to the desired pose (or its square, with ``pose_loss="squared"``)
plus a regularizer on the motion from the current configuration.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .datagen import PoseDataset
from .errors import DomainError, TrainingDiverged
from .kinematics import (Configuration, PoseSE2, RobotModel, fk_batch, fk_jacobian_batch,
                         pose_errors, twist_batch)

log = logging.getLogger(__name__)

REG_ANGLES = "angles"           # sum |theta_c - theta~|
REG_ACTION_TIME = "action-time"  # sum |dtheta_i| / joint_speed * |d_c - r_i| / ma_speed
SMOOTH_EPS = 1e-6


@dataclass(frozen=True)
class TrainHyper:
    lam: float = 0.001
    reg_kind: str = REG_ACTION_TIME
    hidden: tuple[int, ...] = (120, 100, 50, 30)
    learning_rate: float = 1e-4
    batch_size: int = 500
    epochs: int = 300
    seed: int = 1
    w_v: float = 1.0
    w_omega: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    pose_loss: str = "norm"
    activation: str = "relu"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.reg_kind not in (REG_ANGLES, REG_ACTION_TIME):
            raise ValueError(f"unknown regularizer {self.reg_kind!r}")
        if self.pose_loss not in ("norm", "squared"):
            raise ValueError(f"unknown pose loss {self.pose_loss!r}")
        if self.activation not in ("tanh", "relu", "elu"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def model_one(cls, **kw) -> "TrainHyper":
        """Angle regularizer, lambda 0.002, hidden [70, 50, 30, 20]."""
        base = dict(lam=0.002, reg_kind=REG_ANGLES, hidden=(70, 50, 30, 20))
        base.update(kw)
        return cls(**base)

    @classmethod
    def model_two(cls, **kw) -> "TrainHyper":
        """Action-time regularizer, lambda 0.001, hidden [120, 100, 50, 30]."""
        base = dict(lam=0.001, reg_kind=REG_ACTION_TIME, hidden=(120, 100, 50, 30))
        base.update(kw)
        return cls(**base)


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "elu":
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
    raise ValueError(f"unknown activation {kind!r}")


def _activation_slope(kind: str, h: np.ndarray) -> np.ndarray:
    """Derivative expressed through the activation output ``h``."""
    if kind == "tanh":
        return 1.0 - h * h
    if kind == "relu":
        return (h > 0).astype(float)
    return np.where(h > 0, 1.0, h + 1.0)


class MlpNetwork:
    """Fully connected network with bounded (tanh-squashed) outputs."""

    def __init__(self, weights, biases, in_offset, in_scale, out_lower, out_upper,
                 fingerprint: str = "", activation: str = "tanh"):
        self.activation = activation
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.in_offset = np.asarray(in_offset, dtype=float)
        self.in_scale = np.asarray(in_scale, dtype=float)
        self.out_lower = np.asarray(out_lower, dtype=float)
        self.out_upper = np.asarray(out_upper, dtype=float)
        self.fingerprint = fingerprint

    @classmethod
    def initialize(cls, model: RobotModel, hidden: Sequence[int], rng: np.random.Generator,
                   activation: str = "tanh") -> "MlpNetwork":
        n = model.n
        L = model.total_length
        sizes = [3 + n + 1, *hidden, n + 1]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        in_offset = np.concatenate(([0.0, 0.0, 0.0], np.zeros(n), [L / 2]))
        in_scale = np.concatenate(([L, L, math.pi], np.maximum(model.joint_bounds, 1e-12), [L / 2]))
        return cls(weights, biases, in_offset, in_scale, model.lower, model.upper,
                   model.fingerprint(), activation)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def encode(self, Xd: np.ndarray, Qc: np.ndarray) -> np.ndarray:
        return (np.hstack((Xd, Qc)) - self.in_offset) / self.in_scale

    def forward(self, Xd: np.ndarray, Qc: np.ndarray, keep: bool = False):
        """Predicted configurations (B, n+1); with ``keep`` also the layer cache."""
        Xd, Qc = np.atleast_2d(Xd), np.atleast_2d(Qc)
        if Xd.shape[1] + Qc.shape[1] != self.sizes[0]:
            raise DomainError(f"network expects {self.sizes[0]} inputs, got {Xd.shape[1] + Qc.shape[1]}")
        h = self.encode(Xd, Qc)
        acts = [h]
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = _activate(self.activation, h @ W + b)
            acts.append(h)
        t = np.tanh(h @ self.weights[-1] + self.biases[-1])
        half = 0.5 * (self.out_upper - self.out_lower)
        Q = np.clip(self.out_lower + half * (t + 1.0), self.out_lower, self.out_upper)
        return (Q, (acts, t)) if keep else Q

    def backward(self, cache, dQ: np.ndarray):
        """Gradients of sum(dQ * Q) with respect to weights and biases."""
        acts, t = cache
        half = 0.5 * (self.out_upper - self.out_lower)
        delta = dQ * half * (1.0 - t * t)
        gW, gb = [None] * len(self.weights), [None] * len(self.biases)
        for k in range(len(self.weights) - 1, -1, -1):
            gW[k] = acts[k].T @ delta
            gb[k] = delta.sum(axis=0)
            if k:
                delta = (delta @ self.weights[k].T) * _activation_slope(self.activation, acts[k])
        return gW, gb

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases


def mlp_forward(net: MlpNetwork, x_d: PoseSE2, q_c: Configuration) -> Configuration:
    return Configuration.from_vector(net.forward(x_d.vector()[None, :], q_c.vector()[None, :])[0])


ik_solve = mlp_forward


# --- loss ------------------------------------------------------------------

def reg_weights(model: RobotModel, Qc: np.ndarray, reg_kind: str) -> np.ndarray:
    """Per-joint multipliers of |theta_c - theta~| in the regularizer, shape (B, n)."""
    Qc = np.atleast_2d(Qc)
    if reg_kind == REG_ANGLES:
        return np.ones((Qc.shape[0], model.n))
    dist = np.abs(Qc[:, -1:] - model.anchors[None, :])
    return dist / (model.joint_speed * model.ma_speed)


def loss_batch(model: RobotModel, Qc: np.ndarray, Xd: np.ndarray, Qt: np.ndarray,
               hyper: TrainHyper, smooth: bool = False):
    """Per-sample loss, its gradient w.r.t. Qt, and the pose/regularizer parts."""
    Qc, Xd, Qt = np.atleast_2d(Qc), np.atleast_2d(Xd), np.atleast_2d(Qt)
    n = model.n
    X = fk_batch(model, Qt)
    V, D = twist_batch(Xd, X, with_jacobian=True)
    pose = hyper.w_v * (V[:, 0] ** 2 + V[:, 1] ** 2) + hyper.w_omega * V[:, 2] ** 2
    gV = np.stack((2 * hyper.w_v * V[:, 0], 2 * hyper.w_v * V[:, 1], 2 * hyper.w_omega * V[:, 2]), axis=1)
    if hyper.pose_loss == "norm":
        root = np.sqrt(pose + SMOOTH_EPS ** 2)
        gV /= 2 * root[:, None]
        pose = root
    gX = np.einsum("bi,bij->bj", gV, D)
    grad = np.einsum("bj,bjk->bk", gX, fk_jacobian_batch(model, Qt))
    diff = Qt[:, :n] - Qc[:, :n]
    if smooth:
        mag = np.sqrt(diff * diff + SMOOTH_EPS ** 2)
        dmag = diff / mag
    else:
        mag, dmag = np.abs(diff), np.sign(diff)
    w = reg_weights(model, Qc, hyper.reg_kind)
    reg = np.sum(w * mag, axis=1)
    grad[:, :n] += hyper.lam * w * dmag
    return pose + hyper.lam * reg, grad, pose, reg


def ik_loss(model: RobotModel, q_c: Configuration, x_d: PoseSE2, q_tilde: Configuration,
            hyper: TrainHyper, smooth: bool = False) -> tuple[float, np.ndarray]:
    loss, grad, _, _ = loss_batch(model, q_c.vector(), x_d.vector(), q_tilde.vector(), hyper, smooth)
    return float(loss[0]), grad[0]


def regularizer(model: RobotModel, q_c: Configuration, q: Configuration, reg_kind: str) -> float:
    """Exact (unsmoothed) regularizer value between two configurations."""
    w = reg_weights(model, q_c.vector(), reg_kind)[0]
    return float(np.sum(w * np.abs(np.array(q.theta) - np.array(q_c.theta))))


# --- training ----------------------------------------------------------------

class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    mean_dp_mm: float
    mean_dphi_deg: float


def train(model: RobotModel, dataset: PoseDataset, hyper: TrainHyper,
          net: Optional[MlpNetwork] = None,
          callback: Optional[Callable[[EpochStats], None]] = None) -> tuple[MlpNetwork, list[EpochStats]]:
    """Minibatch Adam on the mean loss; fresh random q_c for every sample each epoch."""
    poses = np.asarray(dataset.poses, dtype=float)
    if len(poses) == 0:
        raise ValueError("training dataset is empty")
    rng = np.random.default_rng(hyper.seed)
    if net is None:
        net = MlpNetwork.initialize(model, hyper.hidden, rng, hyper.activation)
    params = net.params()
    opt = Adam(params, hyper.learning_rate, hyper.beta1, hyper.beta2)
    history = []
    N = len(poses)
    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(N)
        Qc_all = model.random_configurations(rng, N)
        tot_loss = tot_dp = tot_dphi = 0.0
        for start in range(0, N, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            Xd, Qc = poses[idx], Qc_all[idx]
            Q, cache = net.forward(Xd, Qc, keep=True)
            loss, gQ, _, _ = loss_batch(model, Qc, Xd, Q, hyper, smooth=True)
            if not np.all(np.isfinite(loss)):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting {start}; "
                                       f"last mean loss {history[-1].mean_loss if history else 'n/a'}")
            gW, gb = net.backward(cache, gQ / len(idx))
            opt.step(params, gW + gb)
            dp, dphi = pose_errors(fk_batch(model, Q), Xd)
            tot_loss += loss.sum()
            tot_dp += dp.sum()
            tot_dphi += dphi.sum()
        stats = EpochStats(epoch, tot_loss / N, 1e3 * tot_dp / N, math.degrees(tot_dphi / N))
        history.append(stats)
        if callback is not None:
            callback(stats)
        log.debug("epoch %d loss %.6g dp %.2f mm dphi %.2f deg", epoch, stats.mean_loss,
                  stats.mean_dp_mm, stats.mean_dphi_deg)
    return net, history


# --- evaluation --------------------------------------------------------------

@dataclass
class IKEvaluation:
    name: str
    dp_m: np.ndarray
    dphi_rad: np.ndarray
    success: np.ndarray
    action_time_s: np.ndarray     # action time from q_c to the solution
    reg_time: np.ndarray          # action-time regularizer value
    runtime_s: np.ndarray

    def summary(self) -> dict:
        ok = self.success
        return {
            "name": self.name,
            "queries": int(len(ok)),
            "mean_dp_mm": float(np.nanmean(self.dp_m) * 1e3),
            "mean_dphi_deg": float(np.degrees(np.nanmean(self.dphi_rad))),
            "success_pct": float(100.0 * ok.mean()),
            "mean_action_time_s": float(np.nanmean(self.action_time_s)),
            "mean_reg_action_time": float(np.nanmean(self.reg_time)),
            "runtime_mean_s": float(self.runtime_s.mean()),
            "runtime_std_s": float(self.runtime_s.std()),
        }


def random_queries(model: RobotModel, count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform random start configurations and reachable goal poses (FK of uniform configurations)."""
    rng = np.random.default_rng(seed)
    Qc = model.random_configurations(rng, count)
    Xd = fk_batch(model, model.random_configurations(rng, count))
    return Qc, Xd


def evaluate_solver(model: RobotModel, solve: Callable, Qc: np.ndarray, Xd: np.ndarray,
                    e_p: float, e_phi: float, name: str = "") -> IKEvaluation:
    """Run ``solve(x_d_vec, q_c_vec) -> q_vec or None`` per query and collect errors."""
    from .motion import action_cost_batch

    k = len(Qc)
    dp = np.full(k, np.nan)
    dphi = np.full(k, np.nan)
    act = np.full(k, np.nan)
    reg = np.full(k, np.nan)
    runtime = np.zeros(k)
    for i in range(k):
        t0 = time.perf_counter()
        q = solve(Xd[i], Qc[i])
        runtime[i] = time.perf_counter() - t0
        if q is None:
            continue
        a, b = pose_errors(fk_batch(model, q), Xd[i])
        dp[i], dphi[i] = a[0], b[0]
        act[i] = action_cost_batch(model, Qc[i], q)[0]
        w = reg_weights(model, Qc[i], REG_ACTION_TIME)[0]
        reg[i] = np.sum(w * np.abs(q[:-1] - Qc[i, :-1]))
    success = np.nan_to_num(dp, nan=np.inf) <= e_p
    success &= np.nan_to_num(dphi, nan=np.inf) <= e_phi
    return IKEvaluation(name, dp, dphi, success, act, reg, runtime)

"""Uniform-coverage pose dataset via occupancy-grid rejection sampling.

Random configurations are pushed through forward kinematics; an upper
half-plane pose is kept only if its grid cell is still empty.  Sampling
stops once every enclosed vacancy is small, and the kept poses are then
mirrored into the lower half-plane.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .kinematics import RobotModel, fk_batch, wrap_angle

log = logging.getLogger(__name__)

CHECK_EVERY = 50_000


@dataclass
class OccupancyGrid:
    """Grid of A x B cells over x in [-L, L], y in [0, L]."""

    shape: tuple[int, int]
    half_extent: float
    occupied: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.occupied is None:
            self.occupied = np.zeros(self.shape, dtype=bool)

    def cells(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        A, B = self.shape
        L = self.half_extent
        a = np.floor((xy[:, 0] + L) / (2 * L / A)).astype(int)
        b = np.floor(xy[:, 1] / (L / B)).astype(int)
        return np.clip(a, 0, A - 1), np.clip(b, 0, B - 1)


def density_sufficient(grid: OccupancyGrid, rho: int) -> bool:
    """True iff no 4-connected empty region away from the grid border exceeds ``rho`` cells."""
    labels, count = ndimage.label(~grid.occupied)
    if count == 0:
        return True
    border = np.unique(np.concatenate((labels[0], labels[-1], labels[:, 0], labels[:, -1])))
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    sizes[0] = 0
    sizes[border] = 0
    return bool(sizes.max() <= rho)


@dataclass
class PoseDataset:
    poses: np.ndarray               # (N, 3): x_m, y_m, phi_rad
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.poses)


def mirror_dataset(upper: PoseDataset) -> PoseDataset:
    """Union of the poses with their reflections (x, -y, -phi)."""
    P = np.asarray(upper.poses, dtype=float)
    if np.any(P[:, 1] < 0):
        raise ValidationError("mirror_dataset expects poses with y >= 0")
    mirrored = np.stack((P[:, 0], -P[:, 1], wrap_angle(-P[:, 2])), axis=1)
    self_mirror = (P[:, 1] == 0) & (wrap_angle(-P[:, 2]) == P[:, 2])
    poses = np.concatenate((P, mirrored[~self_mirror]))
    return PoseDataset(poses, dict(upper.meta))


def generate_dataset(model: RobotModel, grid_dims: tuple[int, int] = (180, 160), rho: int = 10,
                     seed: int = 0, max_samples: int = 5_000_000, workers: int = 1) -> PoseDataset:
    """Sample poses until the grid density criterion holds or the budget runs out.

    Each round draws ``CHECK_EVERY`` configurations split across ``workers``
    RNG shards; claims are resolved in shard order, so results depend only on
    (seed, workers).
    """
    A, B = grid_dims
    if A < 10 or B < 10:
        raise ValidationError("grid dimensions must be at least 10 x 10")
    if rho < 1:
        raise ValidationError("rho must be at least 1")
    grid = OccupancyGrid((A, B), model.total_length)
    shards = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(workers)]
    kept = []
    drawn = 0
    reached = False
    while drawn < max_samples:
        per_round = min(CHECK_EVERY, max_samples - drawn)
        sizes = [per_round // workers + (k < per_round % workers) for k in range(workers)]
        Q = np.vstack([model.random_configurations(rng, s) for rng, s in zip(shards, sizes)])
        drawn += per_round
        X = fk_batch(model, Q)
        X = X[X[:, 1] >= 0]
        a, b = grid.cells(X)
        flat = a * B + b
        _, first = np.unique(flat, return_index=True)
        first.sort()
        fresh = first[~grid.occupied[a[first], b[first]]]
        grid.occupied[a[fresh], b[fresh]] = True
        kept.append(X[fresh])
        if density_sufficient(grid, rho):
            reached = True
            break
    if not reached:
        log.warning("density not reached after %d samples", drawn)
    upper = PoseDataset(np.concatenate(kept) if kept else np.zeros((0, 3)))
    data = mirror_dataset(upper)
    data.meta = {"grid": [A, B], "rho": rho, "seed": seed, "max_samples": max_samples,
                 "samples_drawn": drawn, "workers": workers, "density_reached": reached,
                 "upper_cells": int(grid.occupied.sum()), "N": len(data.poses)}
    return data

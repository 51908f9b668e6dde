import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from masr.datagen import OccupancyGrid, PoseDataset, density_sufficient, generate_dataset, mirror_dataset
from masr.errors import ValidationError
from masr.fileio import save_dataset
from masr.kinematics import RobotModel


def flood_oracle(occupied, rho):
    """BFS over empty cells; regions touching the border are exempt."""
    A, B = occupied.shape
    seen = np.zeros_like(occupied)
    for i in range(A):
        for j in range(B):
            if occupied[i, j] or seen[i, j]:
                continue
            size, border = 0, False
            queue = deque([(i, j)])
            seen[i, j] = True
            while queue:
                a, b = queue.popleft()
                size += 1
                border |= a in (0, A - 1) or b in (0, B - 1)
                for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    x, y = a + da, b + db
                    if 0 <= x < A and 0 <= y < B and not occupied[x, y] and not seen[x, y]:
                        seen[x, y] = True
                        queue.append((x, y))
            if not border and size > rho:
                return False
    return True


def grid_from(occupied):
    g = OccupancyGrid(occupied.shape, 1.0)
    g.occupied = occupied
    return g


def test_density_examples():
    full = np.ones((12, 12), dtype=bool)
    assert density_sufficient(grid_from(full), 10)
    one = full.copy()
    one[5, 5] = False
    assert density_sufficient(grid_from(one), 10)
    blob = full.copy()
    blob[3:5, 3:8] = False
    blob[5, 3] = False
    assert blob.size - blob.sum() == 11
    assert not density_sufficient(grid_from(blob), 10)
    edge = full.copy()
    edge[0:6, 0:6] = False
    assert density_sufficient(grid_from(edge), 10)


def test_density_diagonal_cells_are_separate():
    g = np.ones((10, 10), dtype=bool)
    for k in range(2, 8):
        g[k, k] = False     # touching only at corners
    assert density_sufficient(grid_from(g), 1)


@given(st.integers(0, 2 ** 31 - 1), st.floats(0.3, 0.95), st.integers(1, 15))
def test_density_matches_flood_fill(seed, fill, rho):
    occ = np.random.default_rng(seed).random((14, 11)) < fill
    assert density_sufficient(grid_from(occ), rho) == flood_oracle(occ, rho)


def test_mirror_examples():
    out = mirror_dataset(PoseDataset(np.array([[0.3, 0.2, math.radians(10)]])))
    assert out.poses.tolist()[1] == pytest.approx([0.3, -0.2, -math.radians(10)])
    same = mirror_dataset(PoseDataset(np.array([[0.5, 0.0, 0.0]])))
    assert len(same) == 1
    with pytest.raises(ValidationError):
        mirror_dataset(PoseDataset(np.array([[0.5, -0.1, 0.0]])))


@given(st.integers(0, 2 ** 31 - 1))
def test_mirror_count_and_closure(seed):
    rng = np.random.default_rng(seed)
    P = np.column_stack((rng.uniform(-1, 1, 30), rng.uniform(0, 1, 30), rng.uniform(-3, 3, 30)))
    P[rng.random(30) < 0.3, 1] = 0.0
    P[rng.random(30) < 0.5, 2] = 0.0
    selfm = int(np.sum((P[:, 1] == 0) & (P[:, 2] == 0)))
    out = mirror_dataset(PoseDataset(P)).poses
    assert len(out) == 2 * len(P) - selfm
    keys = {tuple(r) for r in out}
    for x, y, phi in out:
        assert (x, -y, -phi if phi != math.pi else phi) in keys or (x, -y, math.pi) in keys


def test_desk_scale_dataset(tmp_path):
    model = RobotModel.default_arm()
    data = generate_dataset(model, (180, 160), 10, seed=7)
    assert data.meta["density_reached"]
    assert len(data) == 2 * data.meta["upper_cells"]
    assert len(data) == data.meta["N"]
    P = data.poses
    assert np.all(np.hypot(P[:, 0], P[:, 1]) <= model.total_length + 1e-12)
    again = generate_dataset(model, (180, 160), 10, seed=7)
    save_dataset(tmp_path / "a.csv", data)
    save_dataset(tmp_path / "b.csv", again)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_one_cell_per_claim():
    model = RobotModel.default_arm()
    data = generate_dataset(model, (40, 30), 10, seed=3, max_samples=100_000)
    upper = data.poses[data.poses[:, 1] >= 0]
    g = OccupancyGrid((40, 30), model.total_length)
    a, b = g.cells(upper[:, :2])
    assert len(set(zip(a.tolist(), b.tolist()))) == len(upper)


def test_single_joint_reachability():
    model = RobotModel((0.5,), math.pi)
    data = generate_dataset(model, (40, 20), 10, seed=1, max_samples=200_000)
    P = data.poses
    assert np.all(P[:, 0] ** 2 + P[:, 1] ** 2 <= 0.25 + 1e-9)


def test_sparse_grid_is_vacuously_dense():
    # with few samples every vacancy still reaches the border
    model = RobotModel.default_arm()
    data = generate_dataset(model, (180, 160), 10, seed=1, max_samples=1000)
    assert data.meta["density_reached"] and data.meta["samples_drawn"] == 1000


def test_budget_exhaustion_warns(caplog, monkeypatch):
    import masr.datagen as dg
    monkeypatch.setattr(dg, "density_sufficient", lambda grid, rho: False)
    model = RobotModel.default_arm()
    data = dg.generate_dataset(model, (180, 160), 10, seed=1, max_samples=1000)
    assert not data.meta["density_reached"]
    assert data.meta["samples_drawn"] == 1000
    assert "density not reached" in caplog.text


def test_workers_change_only_the_shards():
    model = RobotModel.default_arm()
    a = generate_dataset(model, (60, 50), 10, seed=2, max_samples=60_000, workers=2)
    b = generate_dataset(model, (60, 50), 10, seed=2, max_samples=60_000, workers=2)
    assert np.array_equal(a.poses, b.poses)


def test_rejects_bad_parameters():
    model = RobotModel.default_arm()
    with pytest.raises(ValidationError):
        generate_dataset(model, (5, 5))
    with pytest.raises(ValidationError):
        generate_dataset(model, rho=0)

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from masr.kinematics import RobotModel

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def arm():
    return RobotModel.default_arm()


@pytest.fixture(scope="session")
def two_link():
    return RobotModel((1.0, 1.0), math.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def hom(theta, length):
    """Planar homogeneous transform: rotate by theta, then translate along the new x axis."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, c * length], [s, c, s * length], [0.0, 0.0, 1.0]])


def fk_oracle(model, q):
    """Gripper pose by chaining 3x3 transforms up to the actuator position."""
    theta, d = q[:-1], q[-1]
    T = np.eye(3)
    start = 0.0
    for j in range(model.n):
        end = start + model.link_lengths[j]
        if d < end or j == model.n - 1:
            T = T @ hom(theta[j], d - start)
            break
        T = T @ hom(theta[j], model.link_lengths[j])
        start = end
    return np.array([T[0, 2], T[1, 2], math.atan2(T[1, 0], T[0, 0])])


# --- trained desk-scale networks, cached between sessions ---------------------

DESK_GRID, DESK_RHO, DESK_SEED = (180, 160), 10, 7


def _source_key(*extra) -> str:
    """Hash of the modules that determine a trained network, so stale caches are never reused."""
    import hashlib
    import pathlib

    import masr
    root = pathlib.Path(masr.__file__).parent
    h = hashlib.sha256()
    for name in ("kinematics.py", "datagen.py", "iknn.py"):
        h.update((root / name).read_bytes())
    h.update(repr(extra).encode())
    return h.hexdigest()[:16]


@pytest.fixture(scope="session")
def desk_dataset():
    import time

    from masr.datagen import generate_dataset
    t0 = time.perf_counter()
    data = generate_dataset(RobotModel.default_arm(), DESK_GRID, DESK_RHO, seed=DESK_SEED)
    data.meta["generation_seconds"] = time.perf_counter() - t0
    return data


def _trained(request, desk_dataset, preset):
    """(network, info) where info records the training time, also for cached networks."""
    import json
    import time

    from masr.fileio import load_network, save_network
    from masr.iknn import TrainHyper, train
    model = RobotModel.default_arm()
    hyper = getattr(TrainHyper, preset)()
    cache = request.config.cache.mkdir("masr-models")
    path = cache / f"{preset}-{_source_key(hyper, DESK_GRID, DESK_RHO, DESK_SEED)}.json"
    if path.exists():
        info = json.loads(path.read_text())["training"]
        return load_network(path, model), dict(info, cached=True)
    t0 = time.perf_counter()
    net, history = train(model, desk_dataset, hyper)
    info = {"train_seconds": time.perf_counter() - t0, "dataset_size": len(desk_dataset),
            "final_mean_dp_mm": history[-1].mean_dp_mm}
    save_network(path, net, info)
    return net, dict(info, cached=False)


@pytest.fixture(scope="session")
def net_two(request, desk_dataset):
    """Action-time regularized network (preset two), trained with the fixed desk-scale recipe."""
    return _trained(request, desk_dataset, "model_two")


@pytest.fixture(scope="session")
def net_one(request, desk_dataset):
    """Angle regularized network (preset one)."""
    return _trained(request, desk_dataset, "model_one")


# --- acceptance report ---------------------------------------------------------

ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])

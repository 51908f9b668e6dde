import json
import math

import numpy as np
import pytest

from masr.datagen import PoseDataset
from masr.errors import ValidationError
from masr.fileio import (Scene, load_dataset, load_network, load_path, load_scene, save_dataset,
                         save_network, save_path, scene_to_dict)
from masr.geometry import Environment, random_environment
from masr.iknn import MlpNetwork
from masr.kinematics import Configuration, PoseSE2, RobotModel
from masr.motion import make_path


@pytest.fixture
def scene(arm):
    env = random_environment(arm, 11)
    return Scene(arm, env, Configuration.straight(5), PoseSE2(0.41, -0.2, 0.3),
                 Configuration((0.1, -0.2, 0.3, 0.0, 0.1), 0.35), 0.006, math.radians(3.0))


def test_scene_round_trip(tmp_path, scene):
    f = tmp_path / "env.json"
    from masr.fileio import save_scene
    save_scene(f, scene)
    back = load_scene(f)
    assert back.model == scene.model
    assert back.start == scene.start and back.goal == scene.goal
    assert back.q_goal.d == scene.q_goal.d
    assert np.allclose(back.q_goal.theta, scene.q_goal.theta, atol=1e-15)
    assert (back.e_p, back.e_phi) == pytest.approx((scene.e_p, scene.e_phi), abs=1e-15)
    assert len(back.env.obstacles) == len(scene.env.obstacles)
    for a, b in zip(back.env.obstacles, scene.env.obstacles):
        assert np.array_equal(a.vertices, b.vertices)
    for a, b in zip(back.env.inflated, scene.env.inflated):
        assert np.allclose(a.vertices, b.vertices, atol=1e-15)


def _write(tmp_path, data):
    f = tmp_path / "env.json"
    f.write_text(json.dumps(data))
    return f


@pytest.mark.parametrize("mutate, needle", [
    (lambda d: d.update(extra=1), "extra"),
    (lambda d: d["robot"].update(colour="red"), "colour"),
    (lambda d: d.update(format_version=99), "version"),
    (lambda d: d.pop("goal"), "goal"),
    (lambda d: d["start"].update(d_m=5.0), "start"),
    (lambda d: d["start"].update(theta_deg=[0, 0, 90, 0, 0]), "start"),
    (lambda d: d["goal"].pop("goal_theta_deg"), "goal"),
    (lambda d: d["tolerances"].update(e_p_mm=0), "tolerances"),
    (lambda d: d.update(obstacles=[[[0, 0], [1, 0]]]), "obstacles"),
])
def test_scene_rejects_bad_files(tmp_path, scene, mutate, needle):
    data = scene_to_dict(scene)
    mutate(data)
    with pytest.raises(ValidationError, match=needle):
        load_scene(_write(tmp_path, data))


def test_scene_rejects_non_json(tmp_path):
    f = tmp_path / "env.json"
    f.write_text("{not json")
    with pytest.raises(ValidationError):
        load_scene(f)
    with pytest.raises(ValidationError):
        load_scene(tmp_path / "missing.json")


def test_dataset_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    poses = rng.normal(size=(50, 3))
    f = tmp_path / "d.csv"
    save_dataset(f, PoseDataset(poses, {"seed": 3, "grid": [4, 5]}))
    back = load_dataset(f)
    assert np.array_equal(back.poses, poses)
    assert back.meta["seed"] == 3 and back.meta["N"] == 50


def test_dataset_rejects_bad_rows(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text('# {"format_version": 1}\nx_m,y_m,phi_rad\n1,2\n')
    with pytest.raises(ValidationError):
        load_dataset(f)
    f.write_text("x_m,y_m,phi_rad\n1,2,3\n")
    with pytest.raises(ValidationError):
        load_dataset(f)


def test_network_round_trip_is_exact(tmp_path, arm):
    net = MlpNetwork.initialize(arm, (9, 7), np.random.default_rng(2), activation="relu")
    f = tmp_path / "m.json"
    save_network(f, net, {"note": "x"})
    back = load_network(f, arm)
    assert back.activation == "relu"
    for a, b in zip(net.weights + net.biases, back.weights + back.biases):
        assert np.array_equal(a, b)
    X = np.random.default_rng(1).normal(size=(4, 3)) * 0.2
    Q = arm.random_configurations(np.random.default_rng(3), 4)
    assert np.array_equal(net.forward(X, Q), back.forward(X, Q))


def test_network_fingerprint_mismatch(tmp_path, arm):
    net = MlpNetwork.initialize(arm, (4,), np.random.default_rng(2))
    f = tmp_path / "m.json"
    save_network(f, net)
    other = RobotModel((0.3, 0.3, 0.3), math.radians(50))
    with pytest.raises(ValidationError):
        load_network(f, other)


def test_path_round_trip_recomputes_time(tmp_path, arm):
    qs = [Configuration.straight(5), Configuration((0.1, 0, 0, 0, 0), 0.3),
          Configuration((0.1, -0.3, 0, 0.2, 0), 0.65)]
    path = make_path(arm, qs)
    f = tmp_path / "p.json"
    save_path(f, arm, path)
    back, tau = load_path(f, arm)
    assert tau == path.tau
    assert back.tau == pytest.approx(path.tau, abs=1e-12)
    data = json.loads(f.read_text())
    data["tau_s"] = path.tau + 1.0
    f.write_text(json.dumps(data))
    with pytest.raises(ValidationError):
        load_path(f, arm)

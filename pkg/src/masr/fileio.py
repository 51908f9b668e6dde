"""Text file formats: environments, datasets, IK models, and paths.

Every format carries a ``format_version`` key.  Floats are written with 17
significant digits so that reading a file back reproduces the exact values.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Optional

import numpy as np

from .datagen import PoseDataset
from .errors import ValidationError
from .geometry import Environment, Polygon
from .iknn import MlpNetwork
from .kinematics import Configuration, PoseSE2, RobotModel, check_feasible
from .motion import Path, make_path

FORMAT_VERSION = 1
TIME_TOL = 1e-9


def _g(v: float) -> str:
    return format(float(v), ".17g")


def _array_text(a: np.ndarray) -> str:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return "[" + ", ".join(_g(v) for v in a) + "]"
    return "[\n      " + ",\n      ".join(_array_text(row) for row in a) + "\n    ]"


def _read_json(path) -> dict:
    try:
        text = FsPath(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: top level must be an object")
    return data


def _check_keys(block: dict, allowed: set, required: set, where: str):
    if not isinstance(block, dict):
        raise ValidationError(f"{where}: expected an object")
    unknown = set(block) - allowed
    if unknown:
        raise ValidationError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(block)
    if missing:
        raise ValidationError(f"{where}: missing keys {sorted(missing)}")


def _check_version(data: dict, where: str):
    if data.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"{where}: unsupported format_version {data.get('format_version')!r}")


# --- environment -------------------------------------------------------------

ROBOT_KEYS = {"link_lengths_m", "joint_bound_deg", "ma_speed_m_s", "joint_speed_rad_s", "link_width_m"}
TOP_KEYS = {"format_version", "robot", "obstacles", "start", "goal", "tolerances"}
START_KEYS = {"theta_deg", "d_m"}
GOAL_KEYS = {"x_m", "y_m", "phi_deg", "goal_theta_deg", "goal_d_m"}
TOL_KEYS = {"e_p_mm", "e_phi_deg"}


@dataclass
class Scene:
    """Everything an environment file describes, in SI units and radians."""

    model: RobotModel
    env: Environment
    start: Configuration
    goal: PoseSE2
    q_goal: Optional[Configuration] = None
    e_p: float = 0.008
    e_phi: float = math.radians(4.0)


def robot_to_dict(model: RobotModel) -> dict:
    return {"link_lengths_m": list(model.link_lengths),
            "joint_bound_deg": [math.degrees(b) for b in model.joint_bounds],
            "ma_speed_m_s": model.ma_speed, "joint_speed_rad_s": model.joint_speed,
            "link_width_m": model.link_width}


def robot_from_dict(block: dict) -> RobotModel:
    _check_keys(block, ROBOT_KEYS, {"link_lengths_m", "joint_bound_deg"}, "robot")
    bounds = block["joint_bound_deg"]
    bounds = [math.radians(b) for b in bounds] if isinstance(bounds, list) else math.radians(bounds)
    try:
        return RobotModel(tuple(block["link_lengths_m"]), bounds,
                          ma_speed=block.get("ma_speed_m_s", 0.1),
                          joint_speed=block.get("joint_speed_rad_s", 0.28),
                          link_width=block.get("link_width_m", 0.02))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"robot: {exc}") from exc


def scene_to_dict(scene: Scene) -> dict:
    goal = {"x_m": scene.goal.x, "y_m": scene.goal.y, "phi_deg": math.degrees(scene.goal.phi)}
    if scene.q_goal is not None:
        goal["goal_theta_deg"] = [math.degrees(t) for t in scene.q_goal.theta]
        goal["goal_d_m"] = scene.q_goal.d
    return {"format_version": FORMAT_VERSION,
            "robot": robot_to_dict(scene.model),
            "obstacles": [p.vertices.tolist() for p in scene.env.obstacles],
            "start": {"theta_deg": [math.degrees(t) for t in scene.start.theta], "d_m": scene.start.d},
            "goal": goal,
            "tolerances": {"e_p_mm": scene.e_p * 1e3, "e_phi_deg": math.degrees(scene.e_phi)}}


def scene_from_dict(data: dict) -> Scene:
    _check_keys(data, TOP_KEYS, TOP_KEYS - {"tolerances"}, "environment")
    _check_version(data, "environment")
    model = robot_from_dict(data["robot"])
    if not isinstance(data["obstacles"], list):
        raise ValidationError("obstacles: expected a list of vertex lists")
    try:
        polys = [Polygon(np.asarray(v, dtype=float)) for v in data["obstacles"]]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"obstacles: {exc}") from exc
    env = Environment.build(polys, model.link_width, model.total_length)

    def config(theta_deg, d, where):
        try:
            q = Configuration(tuple(math.radians(t) for t in theta_deg), d)
            check_feasible(model, q)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{where}: {exc}") from exc
        return q

    s = data["start"]
    _check_keys(s, START_KEYS, START_KEYS, "start")
    start = config(s["theta_deg"], s["d_m"], "start")
    g = data["goal"]
    _check_keys(g, GOAL_KEYS, {"x_m", "y_m", "phi_deg"}, "goal")
    goal = PoseSE2(float(g["x_m"]), float(g["y_m"]), math.radians(g["phi_deg"]))
    q_goal = None
    if ("goal_theta_deg" in g) != ("goal_d_m" in g):
        raise ValidationError("goal: goal_theta_deg and goal_d_m must be given together")
    if "goal_theta_deg" in g:
        q_goal = config(g["goal_theta_deg"], g["goal_d_m"], "goal")
    tol = data.get("tolerances", {"e_p_mm": 8.0, "e_phi_deg": 4.0})
    _check_keys(tol, TOL_KEYS, TOL_KEYS, "tolerances")
    if tol["e_p_mm"] <= 0 or tol["e_phi_deg"] <= 0:
        raise ValidationError("tolerances must be positive")
    return Scene(model, env, start, goal, q_goal, tol["e_p_mm"] * 1e-3, math.radians(tol["e_phi_deg"]))


def save_scene(path, scene: Scene):
    FsPath(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n")


def load_scene(path) -> Scene:
    return scene_from_dict(_read_json(path))


# --- dataset -----------------------------------------------------------------

def save_dataset(path, data: PoseDataset):
    header = {"format_version": FORMAT_VERSION, **data.meta, "N": len(data.poses)}
    lines = ["# " + json.dumps(header, sort_keys=True), "x_m,y_m,phi_rad"]
    lines += [",".join(_g(v) for v in row) for row in data.poses]
    FsPath(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> PoseDataset:
    try:
        text = FsPath(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from exc
    first, _, rest = text.partition("\n")
    if not first.startswith("# "):
        raise ValidationError(f"{path}: missing header line")
    try:
        meta = json.loads(first[2:])
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: bad header ({exc.msg})") from exc
    _check_version(meta, str(path))
    columns, _, body = rest.partition("\n")
    if columns.strip() != "x_m,y_m,phi_rad":
        raise ValidationError(f"{path}: unexpected columns {columns!r}")
    try:
        poses = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2) if body.strip() else np.zeros((0, 3))
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    if poses.shape[1] != 3 or len(poses) != meta.get("N"):
        raise ValidationError(f"{path}: expected {meta.get('N')} rows of 3 values")
    meta.pop("format_version")
    return PoseDataset(poses, meta)


# --- IK model ----------------------------------------------------------------

def save_network(path, net: MlpNetwork, extra: Optional[dict] = None):
    head = {"format_version": FORMAT_VERSION, "robot_fingerprint": net.fingerprint,
            "layer_sizes": net.sizes, "activation": net.activation, "output": "bounded-tanh"}
    if extra:
        head["training"] = extra
    parts = [json.dumps(head, indent=2, sort_keys=True)[:-2]]
    for name in ("in_offset", "in_scale", "out_lower", "out_upper"):
        parts.append(f',\n  "{name}": {_array_text(getattr(net, name))}')
    layers = []
    for W, b in zip(net.weights, net.biases):
        layers.append(f'{{\n    "weights": {_array_text(W)},\n    "bias": {_array_text(b)}\n  }}')
    parts.append(',\n  "layers": [' + ", ".join(layers) + "]\n}\n")
    FsPath(path).write_text("".join(parts))


def load_network(path, model: Optional[RobotModel] = None) -> MlpNetwork:
    data = _read_json(path)
    _check_version(data, "model")
    if model is not None and data.get("robot_fingerprint") != model.fingerprint():
        raise ValidationError("model was trained for a different robot (fingerprint mismatch)")
    try:
        weights = [np.array(layer["weights"], dtype=float) for layer in data["layers"]]
        biases = [np.array(layer["bias"], dtype=float) for layer in data["layers"]]
        net = MlpNetwork(weights, biases, data["in_offset"], data["in_scale"], data["out_lower"],
                         data["out_upper"], data["robot_fingerprint"], data["activation"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"model: {exc}") from exc
    if net.sizes != data["layer_sizes"]:
        raise ValidationError("model: layer sizes disagree with weight shapes")
    return net


# --- path --------------------------------------------------------------------

def path_to_text(model: RobotModel, path: Path) -> str:
    head = {"format_version": FORMAT_VERSION, "robot_fingerprint": model.fingerprint(),
            "tau_s": path.tau, "waypoints": len(path.configurations)}
    rows = [f'    {{"theta_rad": {_array_text(q.theta)}, "d_m": {_g(q.d)}, "t_s": {_g(t)}}}'
            for q, t in zip(path.configurations, path.cum_times)]
    body = json.dumps(head, indent=2, sort_keys=True)[:-2]
    body = body.replace(f'"tau_s": {json.dumps(path.tau)}', f'"tau_s": {_g(path.tau)}')
    return body + ',\n  "path": [\n' + ",\n".join(rows) + "\n  ]\n}\n"


def save_path(path_file, model: RobotModel, path: Path):
    FsPath(path_file).write_text(path_to_text(model, path))


def load_path(path_file, model: RobotModel) -> tuple[Path, float]:
    """The path rebuilt from its waypoints, and the time stored in its header.

    The stored time must match the recomputed one to within ``TIME_TOL``.
    """
    data = _read_json(path_file)
    _check_version(data, "path")
    if data.get("robot_fingerprint") != model.fingerprint():
        raise ValidationError("path was planned for a different robot")
    try:
        qs = tuple(Configuration(tuple(w["theta_rad"]), w["d_m"]) for w in data["path"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"path: {exc}") from exc
    if not qs:
        raise ValidationError("path: no waypoints")
    for q in qs:
        try:
            check_feasible(model, q)
        except ValueError as exc:
            raise ValidationError(f"path: {exc}") from exc
    path = make_path(model, qs)
    tau = float(data["tau_s"])
    if abs(path.tau - tau) > TIME_TOL:
        raise ValidationError(f"path: stored time {tau!r} disagrees with the recomputed {path.tau!r}")
    return path, tau

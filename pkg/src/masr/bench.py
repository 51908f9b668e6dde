"""Benchmark harness: many planning trials over a grid of p_c values.

Each trial gets its own environment and goal from a seed derived from the
suite seed and the trial index.  Every trial is planned once per p_c with
the largest iteration budget; since the planner is anytime, the best time
after ``N`` iterations of that run equals the result of a run capped at
``N``.  The rows keep each run's best-time trace so the aggregate curves
can be recomputed from them.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Optional, Sequence

import numpy as np

from .errors import GenerationError, MasrError
from .fileio import Scene
from .geometry import Environment, config_free, random_environment
from .iknn import MlpNetwork
from .kinematics import Configuration, PoseSE2, RobotModel, fk_batch
from .planner import PlannerParams, PlanResult, plan, validate_path

log = logging.getLogger(__name__)

THRESHOLDS = (0.15, 0.25)
CHECKPOINTS = 20
TRIAL_FIELDS = ["trial", "env", "p_c", "seed", "success", "tau_s", "first_solution",
                "unsolvable_suspect", "error", "trace"]


@dataclass(frozen=True)
class BenchSpec:
    trials: int
    p_cs: tuple[float, ...] = (0.0, 0.2, 0.6, 1.0)
    n_iter: int = 1000
    source: str = "random"            # "random", "empty", or "scenes"
    seed: int = 0
    n_neighbors: int = 7
    delta: float = 0.5
    e_p: float = 0.008
    e_phi: float = math.radians(4.0)
    audit_every: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trial count must be at least 1")
        if self.source not in ("random", "empty", "scenes"):
            raise ValueError(f"unknown environment source {self.source!r}")


@dataclass
class TrialRow:
    trial: int
    env: str
    p_c: float
    seed: int
    success: bool
    tau_s: float
    first_solution: Optional[int]
    error: str = ""
    trace: list = field(default_factory=list)   # (iteration, best tau) change points
    unsolvable_suspect: bool = False
    wall_time_s: float = 0.0          # kept out of trials.csv so reports stay byte-identical

    def best_at(self, iteration: int) -> float:
        best = math.inf
        for it, tau in self.trace:
            if it > iteration:
                break
            best = tau
        return best


def trial_seed(suite_seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([suite_seed, trial]).generate_state(1)[0])


def random_trial_scene(model: RobotModel, seed: int, empty: bool = False,
                       max_tries: int = 100) -> tuple[Scene, int]:
    """Environment and goal for one trial; returns the scene and the environment seed used.

    The start is the straight arm (the environment is redrawn until it can
    be built and leaves the start free) and the goal is the gripper pose of a random free configuration,
    which is kept as the goal configuration.
    """
    rng = np.random.default_rng(seed)
    start = Configuration.straight(model.n)
    for _ in range(max_tries):
        env_seed = int(rng.integers(2 ** 31))
        try:
            env = Environment.empty(model) if empty else random_environment(model, env_seed)
        except GenerationError:
            continue
        if not config_free(env, model, start):
            continue
        for _ in range(1000):
            q = rng.uniform(model.lower, model.upper)
            if config_free(env, model, q):
                goal = PoseSE2(*fk_batch(model, q)[0])
                return Scene(model, env, start, goal, Configuration.from_vector(q)), env_seed
    raise GenerationError("could not build a trial scene with a free start and goal")


def trial_params(spec: BenchSpec, p_c: float, seed: int) -> PlannerParams:
    return PlannerParams(n_iter=spec.n_iter, n_neighbors=spec.n_neighbors, p_c=p_c, delta=spec.delta,
                         e_p=spec.e_p, e_phi=spec.e_phi, seed=seed, audit_every=spec.audit_every)


def trial_row(scene: Scene, trial: int, env_id: str, p_c: float, seed: int, result: PlanResult) -> TrialRow:
    """Report row for one planning run; the path is re-validated against the tree's time."""
    trace = result.stats.best_trace()
    tau = math.inf
    if result.success:
        tau = validate_path(scene.env, scene.model, result.path)
        if tau != trace[-1][1] and abs(tau - trace[-1][1]) > 1e-9:
            raise MasrError(f"path time {tau!r} differs from tree time {trace[-1][1]!r}")
    return TrialRow(trial, env_id, p_c, seed, result.success, tau, result.stats.first_solution,
                    trace=trace, wall_time_s=result.stats.wall_time_s)


def _run_one(args) -> TrialRow:
    scene, trial, env_id, p_c, seed, spec, net = args
    try:
        result = plan(scene.env, scene.model, scene.start, scene.goal, trial_params(spec, p_c, seed), net,
                      scene.q_goal)
        return trial_row(scene, trial, env_id, p_c, seed, result)
    except MasrError as exc:
        return TrialRow(trial, env_id, p_c, seed, False, math.inf, None, error=f"{type(exc).__name__}: {exc}")


def trial_scenes(model: RobotModel, spec: BenchSpec, scenes: Sequence[Scene] = ()) -> list:
    """(trial, seed, scene, env id) for every trial of the suite."""
    out = []
    for t in range(spec.trials):
        seed = trial_seed(spec.seed, t)
        if spec.source == "scenes":
            k = t % len(scenes)
            out.append((t, seed, scenes[k], f"scene{k}"))
        else:
            scene, env_seed = random_trial_scene(model, seed, empty=spec.source == "empty")
            out.append((t, seed, scene, f"empty{t}" if spec.source == "empty" else f"random{env_seed}"))
    return out


def run_suite(model: RobotModel, spec: BenchSpec, net: Optional[MlpNetwork] = None,
              scenes: Sequence[Scene] = ()) -> list[TrialRow]:
    """Rows ordered by (trial, p_c)."""
    if any(p > 0 for p in spec.p_cs) and net is None:
        raise MasrError("p_c > 0 requires an IK network")
    if spec.source == "scenes" and not scenes:
        raise MasrError("scene source needs at least one scene")
    tasks = [(scene, t, env_id, p_c, seed, spec, net)
             for t, seed, scene, env_id in trial_scenes(model, spec, scenes) for p_c in spec.p_cs]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            rows = list(pool.map(_run_one, tasks))
    else:
        rows = [_run_one(task) for task in tasks]
    by_trial: dict[int, list[TrialRow]] = {}
    for r in rows:
        by_trial.setdefault(r.trial, []).append(r)
    for group in by_trial.values():
        suspect = not any(r.success for r in group)
        for r in group:
            r.unsolvable_suspect = suspect
    return rows


# --- aggregation -------------------------------------------------------------

def checkpoints(n_iter: int, count: int = CHECKPOINTS) -> list[int]:
    return sorted({max(1, round(n_iter * k / count)) for k in range(1, count + 1)})


def success_curves(rows: Sequence[TrialRow], n_iter: int) -> dict:
    """p_c -> (iterations, fraction of trials with a solution by then)."""
    its = checkpoints(n_iter)
    out = {}
    for p_c in sorted({r.p_c for r in rows}):
        group = [r for r in rows if r.p_c == p_c]
        rate = [sum(r.first_solution is not None and r.first_solution <= i for r in group) / len(group)
                for i in its]
        out[p_c] = (its, rate)
    return out


def normalization_bounds(rows: Sequence[TrialRow]) -> dict:
    """Per environment, the (min, max) final time over its successful runs.

    Runs on the same environment share one normalization; random
    environments each form their own group.
    """
    bounds = {}
    for r in rows:
        if r.success:
            lo, hi = bounds.get(r.env, (math.inf, -math.inf))
            bounds[r.env] = (min(lo, r.tau_s), max(hi, r.tau_s))
    return bounds


def normalized(tau: float, lo: float, hi: float) -> float:
    if not math.isfinite(tau):
        return math.inf
    if hi <= lo:
        return 0.0
    return (tau - lo) / (hi - lo)


def percentile_curves(rows: Sequence[TrialRow], n_iter: int, thresholds=THRESHOLDS) -> dict:
    """(p_c, threshold) -> (iterations, fraction of runs whose normalized best time is within the threshold)."""
    its = checkpoints(n_iter)
    bounds = normalization_bounds(rows)
    out = {}
    for p_c in sorted({r.p_c for r in rows}):
        group = [r for r in rows if r.p_c == p_c]
        for thr in thresholds:
            rate = []
            for i in its:
                hits = 0
                for r in group:
                    if r.env in bounds and normalized(r.best_at(i), *bounds[r.env]) <= thr:
                        hits += 1
                rate.append(hits / len(group))
            out[(p_c, thr)] = (its, rate)
    return out


# --- report files ------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "inf" if v == math.inf else format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def rows_to_csv(rows: Sequence[TrialRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_FIELDS)
    for r in rows:
        trace = " ".join(f"{it}:{_fmt(tau)}" for it, tau in r.trace)
        w.writerow([r.trial, r.env, _fmt(r.p_c), r.seed, _fmt(r.success), _fmt(r.tau_s),
                    _fmt(r.first_solution), _fmt(r.unsolvable_suspect), r.error, trace])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[TrialRow]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != TRIAL_FIELDS:
        raise MasrError(f"unexpected trial columns {reader.fieldnames}")
    rows = []
    for d in reader:
        trace = []
        for item in d["trace"].split():
            it, tau = item.split(":")
            trace.append((int(it), float(tau)))
        rows.append(TrialRow(int(d["trial"]), d["env"], float(d["p_c"]), int(d["seed"]), d["success"] == "1",
                             float(d["tau_s"]), int(d["first_solution"]) if d["first_solution"] else None,
                             d["error"], trace, d["unsolvable_suspect"] == "1"))
    return rows


def curves_to_csv(rows: Sequence[TrialRow], n_iter: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["curve", "p_c", "threshold", "iteration", "value"])
    for p_c, (its, rate) in success_curves(rows, n_iter).items():
        for i, v in zip(its, rate):
            w.writerow(["success", _fmt(p_c), "", i, _fmt(v)])
    for (p_c, thr), (its, rate) in percentile_curves(rows, n_iter).items():
        for i, v in zip(its, rate):
            w.writerow(["normalized_cost", _fmt(p_c), _fmt(thr), i, _fmt(v)])
    return buf.getvalue()


def write_report(out_dir, rows: Sequence[TrialRow], spec: BenchSpec, plots: bool = True) -> dict:
    """trials.csv and curves.csv (deterministic), timings.csv, and PNG figures."""
    out = FsPath(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"trials": out / "trials.csv", "curves": out / "curves.csv"}
    files["trials"].write_text(rows_to_csv(rows))
    files["curves"].write_text(curves_to_csv(rows, spec.n_iter))
    files["timings"] = out / "timings.csv"
    files["timings"].write_text("trial,p_c,wall_time_s\n" + "".join(
        f"{r.trial},{_fmt(r.p_c)},{r.wall_time_s:.6f}\n" for r in rows))
    if plots:
        from .plotting import plot_percentile_curves, plot_success_curves
        files["success_png"] = out / "success.png"
        files["percentile_png"] = out / "normalized_cost.png"
        plot_success_curves(success_curves(rows, spec.n_iter), files["success_png"])
        plot_percentile_curves(percentile_curves(rows, spec.n_iter), files["percentile_png"])
    return files


def summary(rows: Sequence[TrialRow]) -> dict:
    """p_c -> (success rate, mean final time over successes)."""
    out = {}
    for p_c in sorted({r.p_c for r in rows}):
        group = [r for r in rows if r.p_c == p_c]
        taus = [r.tau_s for r in group if r.success]
        out[p_c] = (len(taus) / len(group), float(np.mean(taus)) if taus else math.inf)
    return out

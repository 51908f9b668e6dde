"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest
import shapely.geometry as sg

from conftest import ACCEPTANCE_LINES, fk_oracle
from masr.bench import (BenchSpec, rows_to_csv, run_suite, trial_params, trial_row, trial_scenes)
from masr.geometry import motion_free_vec
from masr.iknn import REG_ACTION_TIME, TrainHyper, evaluate_solver, ik_loss, loss_batch, random_queries, regularizer
from masr.iknumeric import ik_numeric
from masr.kinematics import (Configuration, PoseSE2, RobotModel, feasible_batch, fk_batch, fk_jacobian_batch,
                             joint_positions_batch, wrap_angle)
from masr.motion import Action, Move, action_cost_batch, expand_action, traverse_length
from masr.planner import plan

MODEL = RobotModel.default_arm()
SUITE_SEED = 2024


def record(k: int, ok: bool, detail: str):
    ACCEPTANCE_LINES[k] = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, detail


# --- 1. forward kinematics -------------------------------------------------------

def test_criterion_01_fk_oracle():
    t0 = time.perf_counter()
    Q = MODEL.random_configurations(np.random.default_rng(1), 1000)
    X = fk_batch(MODEL, Q)
    ref = np.array([fk_oracle(MODEL, q) for q in Q])
    err_p = np.max(np.abs(X[:, :2] - ref[:, :2]))
    err_phi = np.max(np.abs(wrap_angle(X[:, 2] - ref[:, 2])))
    dt = time.perf_counter() - t0
    record(1, max(err_p, err_phi) <= 1e-9 and dt < 1.0,
           f"max position error {err_p:.2e} m, heading error {err_phi:.2e} rad, {dt:.2f} s")


# --- 2. traverse length --------------------------------------------------------

def _move_sum(steps) -> float:
    return float(sum(abs(Fraction(s.to_d) - Fraction(s.from_d)) for s in steps if isinstance(s, Move)))


def test_criterion_02_traverse_length():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    mismatches = 0
    for _ in range(10_000):
        q = rng.uniform(MODEL.lower, MODEL.upper)
        q2 = rng.uniform(MODEL.lower, MODEL.upper)
        keep = rng.random(MODEL.n) < 0.5
        q2[:-1] = np.where(keep, q2[:-1], q[:-1])
        qc, a = Configuration.from_vector(q), Action.from_vector(q2 - q)
        mismatches += traverse_length(MODEL, qc, a) != _move_sum(expand_action(MODEL, qc, a))
    # MA on link 3 at d_link = 0.1, joints 1 and 2 rotated, MA ends at joint 2
    qc, a = Configuration((0.0,) * 5, 0.5), Action((0.1, -0.2, 0, 0, 0), -0.3)
    d_a = traverse_length(MODEL, qc, a)
    l1, l2 = MODEL.link_lengths[:2]
    instance = math.isclose(d_a, 0.1 + 2 * l1 + l2, abs_tol=1e-15) and math.isclose(d_a, 0.7, abs_tol=1e-15)
    dt = time.perf_counter() - t0
    record(2, mismatches == 0 and instance and dt < 5.0,
           f"{mismatches} mismatches in 10000 actions, reference instance D_a = {d_a!r} m, {dt:.2f} s")


# --- 3. gradients --------------------------------------------------------------

def test_criterion_03_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    hyper = TrainHyper.model_two()
    edges = np.append(MODEL.anchors, MODEL.total_length)
    worst_loss, h = 0.0, 1e-6
    checked = 0
    while checked < 100:
        qc, qt, qg = MODEL.random_configurations(rng, 3)
        # skip points on the kinks of |dtheta| and on link boundaries
        if np.min(np.abs(qt[:-1] - qc[:-1])) < 1e-3 or np.min(np.abs(qt[-1] - edges)) < 1e-3:
            continue
        xd = fk_batch(MODEL, qg)[0]
        _, grad = ik_loss(MODEL, Configuration.from_vector(qc), PoseSE2(*xd), Configuration.from_vector(qt), hyper)
        fd = np.zeros_like(grad)
        for k in range(len(qt)):
            e = np.zeros(len(qt))
            e[k] = h
            fd[k] = (loss_batch(MODEL, qc, xd, qt + e, hyper)[0][0]
                     - loss_batch(MODEL, qc, xd, qt - e, hyper)[0][0]) / (2 * h)
        worst_loss = max(worst_loss, np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12))
        checked += 1
    Q = MODEL.random_configurations(rng, 300)
    gap = np.min(np.abs(Q[:, -1:] - edges[None, :]), axis=1)
    Q = Q[gap > 1e-3][:100]
    J = fk_jacobian_batch(MODEL, Q)
    worst_jac = 0.0
    for q, j in zip(Q, J):
        for k in range(len(q)):
            e = np.zeros(len(q))
            e[k] = h
            a, b = fk_batch(MODEL, q + e)[0], fk_batch(MODEL, q - e)[0]
            col = np.append((a[:2] - b[:2]) / (2 * h), wrap_angle(a[2] - b[2]) / (2 * h))
            worst_jac = max(worst_jac, np.max(np.abs(col - j[:, k])))
    dt = time.perf_counter() - t0
    record(3, worst_loss <= 1e-4 and worst_jac <= 1e-5 and dt < 10.0,
           f"loss gradient relative error {worst_loss:.2e}, Jacobian error {worst_jac:.2e}, {dt:.2f} s")


# --- 4. regularizer ------------------------------------------------------------

def test_criterion_04_regularizer():
    l, alpha = 0.2, 0.05
    model = RobotModel((l, l, l, l / 2, l / 2), 1.0, ma_speed=0.1, joint_speed=0.28)
    qc = Configuration((0.0,) * 5, 1.5 * l)
    q = Configuration((alpha, 2 * alpha, -3 * alpha, -3 * alpha, 2 * alpha), 2.5 * l)
    # independent oracle: per joint, |dtheta_i| times the MA's distance to joint i
    oracle, r = 0.0, 0.0
    for i in range(5):
        oracle += abs(q.theta[i] - qc.theta[i]) * abs(qc.d - r)
        r += model.link_lengths[i]
    oracle /= model.ma_speed * model.joint_speed
    tau_l, tau_theta = l / model.ma_speed, alpha / model.joint_speed
    got = regularizer(model, qc, q, REG_ACTION_TIME)
    ok = math.isclose(oracle, 12.5 * tau_l * tau_theta, rel_tol=1e-12) and math.isclose(got, oracle, rel_tol=1e-12)
    record(4, ok, f"regularizer {got / (tau_l * tau_theta):.12g} x tau_l tau_theta, oracle {oracle / (tau_l * tau_theta):.12g}")


# --- 5 and 6. learned IK ---------------------------------------------------------

@pytest.fixture(scope="module")
def queries():
    return random_queries(MODEL, 1000, 5)


def _evaluate(net, queries, e_p, e_phi, name):
    Qc, Xd = queries
    return evaluate_solver(MODEL, lambda x, q: net.forward(x[None], q[None])[0], Qc, Xd, e_p, e_phi, name)


def test_criterion_05_learned_ik(net_two, desk_dataset, queries):
    net, info = net_two
    ev = _evaluate(net, queries, 0.016, math.radians(8), "model two").summary()
    strict = _evaluate(net, queries, 0.008, math.radians(4), "model two").summary()
    minutes = (desk_dataset.meta["generation_seconds"] + info["train_seconds"]) / 60
    ok = ev["success_pct"] >= 60 and ev["mean_dp_mm"] <= 12 and minutes <= 30
    record(5, ok, f"success {ev['success_pct']:.1f}% at 16 mm / 8 deg ({strict['success_pct']:.1f}% at 8 mm / 4 deg), "
                  f"mean dp {ev['mean_dp_mm']:.2f} mm, N = {len(desk_dataset)}, "
                  f"data + training {minutes:.1f} min{' (cached network)' if info['cached'] else ''}")


def test_criterion_06_regularizer_ordering(net_one, net_two, queries):
    one = _evaluate(net_one[0], queries, 0.008, math.radians(4), "model one").summary()
    two = _evaluate(net_two[0], queries, 0.008, math.radians(4), "model two").summary()
    r1, r2 = one["mean_reg_action_time"], two["mean_reg_action_time"]
    ok = r2 <= r1 or (r2 - r1) <= 0.05 * r1
    record(6, ok, f"mean action-time regularizer {r2:.3f} (action-time trained) vs {r1:.3f} (angle trained); "
                  f"mean action time {two['mean_action_time_s']:.2f} s vs {one['mean_action_time_s']:.2f} s")


# --- 7. numeric IK -----------------------------------------------------------------

def test_criterion_07_numeric_ik():
    e_p, e_phi = 0.008, math.radians(4)
    Qc, Xd = random_queries(MODEL, 200, 7)
    t0 = time.perf_counter()
    successes, bad = 0, 0
    for k, (qc, xd) in enumerate(zip(Qc, Xd)):
        q = ik_numeric(MODEL, PoseSE2(*xd), Configuration.from_vector(qc), 1000, seed=k, e_p=e_p, e_phi=e_phi)
        if q is None:
            continue
        successes += 1
        x = fk_oracle(MODEL, q.vector())
        inside = math.hypot(x[0] - xd[0], x[1] - xd[1]) <= e_p and abs(wrap_angle(x[2] - xd[2])) <= e_phi
        inside &= bool(feasible_batch(MODEL, q.vector()[None])[0])
        bad += not inside
    dt = time.perf_counter() - t0
    rate = successes / len(Qc)
    record(7, rate >= 0.9 and bad == 0 and dt <= 300,
           f"success {100 * rate:.1f}% of 200 poses, {bad} solutions outside the goal region, {dt:.0f} s")


# --- 8, 9 and 10. planning -------------------------------------------------------

RANDOM_SPEC = BenchSpec(50, (0.0, 0.6), 1000, "random", seed=SUITE_SEED, audit_every=500)
EMPTY_SPEC = BenchSpec(50, (0.6,), 3000, "empty", seed=SUITE_SEED, audit_every=500)


@pytest.fixture(scope="module")
def random_suite(net_two):
    t0 = time.perf_counter()
    rows = run_suite(MODEL, RANDOM_SPEC, net_two[0])
    return rows, time.perf_counter() - t0


@pytest.fixture(scope="module")
def empty_suite(net_two):
    t0 = time.perf_counter()
    rows = run_suite(MODEL, EMPTY_SPEC, net_two[0])
    return rows, time.perf_counter() - t0


def _waypoint_clearance(env, q) -> float:
    """Smallest distance from a link centerline to an obstacle, by an independent geometry library."""
    pts = joint_positions_batch(MODEL, q[None, :-1])[0]
    arm = sg.LineString(pts)
    return min((arm.distance(sg.Polygon(p.vertices)) for p in env.obstacles), default=math.inf)


def _independent_check(scene, path) -> list:
    problems = []
    qs = [q.vector() for q in path.configurations]
    if not np.array_equal(qs[0], scene.start.vector()):
        problems.append("path does not start at q_init")
    # arc corners are chords on the true circle, so allow their sag
    min_clear = 0.5 * MODEL.link_width * math.cos(math.pi / 14)
    for k, q in enumerate(qs):
        if not feasible_batch(MODEL, q[None])[0]:
            problems.append(f"waypoint {k} violates bounds")
        if _waypoint_clearance(scene.env, q) < min_clear:
            problems.append(f"waypoint {k} touches an obstacle")
    for k, (a, b) in enumerate(zip(qs, qs[1:])):
        if not motion_free_vec(scene.env, MODEL, a, b):
            problems.append(f"motion {k} collides")
    resum = math.fsum(action_cost_batch(MODEL, a, b)[0] for a, b in zip(qs, qs[1:]))
    if abs(resum - path.tau) > 1e-9:
        problems.append(f"time {path.tau!r} re-sums to {resum!r}")
    x = fk_oracle(MODEL, qs[-1])
    g = scene.goal
    if math.hypot(x[0] - g.x, x[1] - g.y) > 0.008 or abs(wrap_angle(x[2] - g.phi)) > math.radians(4):
        problems.append("final pose outside the goal region")
    return problems


def test_criterion_08_planner_soundness(net_two, random_suite):
    rows, _ = random_suite
    by_key = {(r.trial, r.p_c): r for r in rows}
    problems, paths, diffs = [], 0, 0
    for t, seed, scene, env_id in trial_scenes(MODEL, RANDOM_SPEC):
        reruns = []
        for p_c in RANDOM_SPEC.p_cs:
            result = plan(scene.env, MODEL, scene.start, scene.goal, trial_params(RANDOM_SPEC, p_c, seed),
                          net_two[0], scene.q_goal)
            if result.success:
                paths += 1
                problems += [f"trial {t} p_c {p_c}: {p}" for p in _independent_check(scene, result.path)]
            reruns.append(trial_row(scene, t, env_id, p_c, seed, result))
        for r in reruns:
            r.unsolvable_suspect = not any(x.success for x in reruns)
            diffs += rows_to_csv([r]) != rows_to_csv([by_key[(t, r.p_c)]])
    errors = [r.error for r in rows if r.error]
    ok = not problems and not errors and diffs == 0 and paths > 0
    record(8, ok, f"{paths} paths re-validated, {len(problems)} problems, {len(errors)} trial errors, "
                  f"{diffs} of {len(rows)} rerun rows differ" + (f"; first: {problems[0]}" if problems else ""))


def test_criterion_09_ik_biasing(random_suite, empty_suite):
    rows, t_random = random_suite
    rate = {p: np.mean([r.success for r in rows if r.p_c == p]) for p in RANDOM_SPEC.p_cs}
    empty_rows, t_empty = empty_suite
    empty_rate = np.mean([r.success for r in empty_rows])
    minutes = (t_random + t_empty) / 60
    ok = rate[0.6] >= rate[0.0] and empty_rate == 1.0 and minutes <= 20
    record(9, ok, f"random environments: {100 * rate[0.6]:.0f}% at p_c 0.6 vs {100 * rate[0.0]:.0f}% at p_c 0; "
                  f"empty environments: {100 * empty_rate:.0f}% at p_c 0.6; {minutes:.1f} min")


def test_criterion_10_anytime_monotonicity(random_suite, empty_suite):
    rows = random_suite[0] + empty_suite[0]
    rising = [r for r in rows if any(b > a for (_, a), (_, b) in zip(r.trace, r.trace[1:]))]
    audit_errors = [r for r in rows if "TreeInconsistency" in r.error]
    ok = not rising and not audit_errors
    record(10, ok, f"{len(rows)} traces, {len(rising)} with a rising best time, "
                   f"{len(audit_errors)} audit failures (audit every 500 iterations)")

"""Command-line front end.

Exit codes: 0 success, 1 bad input, 2 planning or training failure.  Errors
are reported on stderr as one JSON object per line.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path as FsPath

from .errors import MasrError, TrainingDiverged, ValidationError

EXIT_OK, EXIT_INPUT, EXIT_FAILURE = 0, 1, 2


class PlanningFailed(MasrError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _robot(args):
    from .fileio import load_scene
    from .kinematics import RobotModel
    if getattr(args, "env", None):
        return load_scene(args.env).model
    return RobotModel.default_arm()


def cmd_gen_data(args):
    from .datagen import generate_dataset
    from .fileio import save_dataset
    model = _robot(args)
    data = generate_dataset(model, (args.grid_a, args.grid_b), args.rho, args.seed, args.max_samples,
                            args.workers)
    save_dataset(args.out, data)
    print(json.dumps({"out": str(args.out), **data.meta}))


def cmd_train(args):
    from .fileio import load_dataset, save_network
    from .iknn import REG_ACTION_TIME, REG_ANGLES, TrainHyper, train
    model = _robot(args)
    data = load_dataset(args.data)
    preset = TrainHyper.model_one if args.preset == "one" else TrainHyper.model_two
    overrides = {"epochs": args.epochs, "seed": args.seed}
    for key in ("lam", "learning_rate", "batch_size"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.reg:
        overrides["reg_kind"] = {"angles": REG_ANGLES, "action-time": REG_ACTION_TIME}[args.reg]
    if args.hidden:
        overrides["hidden"] = tuple(int(h) for h in args.hidden.split(","))
    hyper = preset(**overrides)
    net, history = train(model, data, hyper)
    hyper_info = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(hyper).items()}
    save_network(args.out, net, hyper_info)
    log_file = FsPath(args.out).with_suffix(".log.csv")
    log_file.write_text("epoch,mean_loss,mean_dp_mm,mean_dphi_deg\n" + "".join(
        f"{h.epoch},{h.mean_loss:.17g},{h.mean_dp_mm:.17g},{h.mean_dphi_deg:.17g}\n" for h in history))
    if args.plot:
        from .plotting import plot_training
        plot_training(history, FsPath(args.out).with_suffix(".png"))
    last = history[-1]
    print(json.dumps({"out": str(args.out), "log": str(log_file), "epochs": last.epoch,
                      "mean_dp_mm": last.mean_dp_mm, "mean_dphi_deg": last.mean_dphi_deg}))


def cmd_ik_eval(args):
    from .fileio import load_network
    from .iknn import evaluate_solver, random_queries
    from .iknumeric import ik_numeric
    from .kinematics import Configuration, PoseSE2
    model = _robot(args)
    Qc, Xd = random_queries(model, args.trials, args.seed)
    e_p, e_phi = args.e_p_mm * 1e-3, math.radians(args.e_phi_deg)
    results = []
    for path in args.model:
        net = load_network(path, model)
        ev = evaluate_solver(model, lambda x, q: net.forward(x[None], q[None])[0], Qc, Xd, e_p, e_phi,
                             FsPath(path).stem)
        results.append(ev.summary())
    if args.numeric_trials:
        k = min(args.numeric_trials, args.trials)

        def numeric(x, q):
            found = ik_numeric(model, PoseSE2(*x), Configuration.from_vector(q), args.restarts,
                               args.seed, e_p, e_phi)
            return None if found is None else found.vector()

        ev = evaluate_solver(model, numeric, Qc[:k], Xd[:k], e_p, e_phi, "numeric")
        results.append(ev.summary())
    keys = list(results[0])
    print(",".join(keys))
    for r in results:
        print(",".join(format(r[k], ".6g") if isinstance(r[k], float) else str(r[k]) for k in keys))


def cmd_plan(args):
    from .fileio import load_network, load_scene, save_path
    from .planner import PlannerParams, plan, validate_path
    from .render import render_svg
    scene = load_scene(args.env)
    if args.pc > 0 and not args.model:
        raise ValidationError("--pc > 0 needs --model")
    net = load_network(args.model, scene.model) if args.model else None
    params = PlannerParams(n_iter=args.nc, n_neighbors=args.nn, p_c=args.pc, delta=args.delta,
                           e_p=scene.e_p, e_phi=scene.e_phi, seed=args.seed, audit_every=args.audit)
    result = plan(scene.env, scene.model, scene.start, scene.goal, params, net, scene.q_goal)
    stats = result.stats
    info = {"success": result.success, "iterations": stats.iterations, "tree_size": stats.tree_size,
            "first_solution": stats.first_solution, "ik_calls": stats.ik_calls}
    if not result.success:
        raise PlanningFailed(f"no path found in {args.nc} iterations")
    info["tau_s"] = validate_path(scene.env, scene.model, result.path)
    save_path(args.out, scene.model, result.path)
    info["out"] = str(args.out)
    if args.svg:
        FsPath(args.svg).write_text(render_svg(scene.env, scene.model, result.path.configurations,
                                               scene.goal, scene.e_p))
        info["svg"] = str(args.svg)
    print(json.dumps(info))


def cmd_bench(args):
    from .bench import BenchSpec, rows_to_csv, run_suite, summary, write_report
    from .fileio import load_network, load_scene
    from .kinematics import RobotModel
    scenes = [load_scene(p) for p in args.env] if args.env else []
    model = scenes[0].model if scenes else RobotModel.default_arm()
    source = "scenes" if scenes else args.source
    p_cs = tuple(float(p) for p in args.pc.split(","))
    if any(p > 0 for p in p_cs) and not args.model:
        raise ValidationError("p_c > 0 needs --model")
    net = load_network(args.model, model) if args.model else None
    spec = BenchSpec(args.trials, p_cs, args.nc, source, args.seed, args.nn, audit_every=args.audit,
                     workers=args.workers)
    rows = run_suite(model, spec, net, scenes)
    if args.out:
        write_report(args.out, rows, spec, plots=not args.no_plots)
    sys.stdout.write(rows_to_csv(rows))
    for p_c, (rate, mean_tau) in summary(rows).items():
        print(json.dumps({"p_c": p_c, "success_rate": rate, "mean_tau_s": mean_tau}), file=sys.stderr)


def cmd_render(args):
    from .fileio import load_path, load_scene
    from .render import render_svg
    scene = load_scene(args.env)
    configurations = [scene.start]
    if args.path:
        path, _ = load_path(args.path, scene.model)
        configurations = list(path.configurations)
    FsPath(args.out).write_text(render_svg(scene.env, scene.model, configurations, scene.goal, scene.e_p))
    print(json.dumps({"out": str(args.out), "arms": len(configurations)}))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="masr", description="Mobile-actuator arm kinematics, learned IK, and planning.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--seed", type=int, default=0)
        s.set_defaults(func=func)
        return s

    s = add("gen-data", cmd_gen_data, "sample a uniform-coverage pose dataset")
    s.add_argument("--env", help="take the robot from this environment file")
    s.add_argument("--grid-a", type=int, default=180)
    s.add_argument("--grid-b", type=int, default=160)
    s.add_argument("--rho", type=int, default=10)
    s.add_argument("--max-samples", type=int, default=5_000_000)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)

    s = add("train", cmd_train, "train an IK network on a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--env")
    s.add_argument("--preset", choices=("one", "two"), default="two")
    s.add_argument("--reg", choices=("angles", "action-time"))
    s.add_argument("--lam", type=float)
    s.add_argument("--hidden", help="comma-separated layer widths")
    s.add_argument("--learning-rate", type=float)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--epochs", type=int, default=300)
    s.add_argument("--plot", action="store_true", help="also write a training-curve PNG")
    s.add_argument("--out", required=True)

    s = add("ik-eval", cmd_ik_eval, "compare IK solvers on random queries")
    s.add_argument("--model", action="append", required=True)
    s.add_argument("--env")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--numeric-trials", type=int, default=0)
    s.add_argument("--restarts", type=int, default=1000)
    s.add_argument("--e-p-mm", type=float, default=8.0)
    s.add_argument("--e-phi-deg", type=float, default=4.0)

    s = add("plan", cmd_plan, "plan a path for one environment file")
    s.add_argument("--env", required=True)
    s.add_argument("--model")
    s.add_argument("--pc", type=float, default=0.6)
    s.add_argument("--nc", type=int, default=3000)
    s.add_argument("--nn", type=int, default=7)
    s.add_argument("--delta", type=float, default=0.5)
    s.add_argument("--audit", type=int, default=0, help="full tree audit every N iterations")
    s.add_argument("--out", required=True)
    s.add_argument("--svg")

    s = add("bench", cmd_bench, "run a planning benchmark suite")
    s.add_argument("--env", action="append", help="scene files; default is random environments")
    s.add_argument("--source", choices=("random", "empty"), default="random")
    s.add_argument("--model")
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--pc", default="0,0.2,0.6,1")
    s.add_argument("--nc", type=int, default=1000)
    s.add_argument("--nn", type=int, default=7)
    s.add_argument("--audit", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="directory for trials.csv, curves.csv, timings.csv and figures")
    s.add_argument("--no-plots", action="store_true")

    s = add("render", cmd_render, "draw an environment and optional path as SVG")
    s.add_argument("--env", required=True)
    s.add_argument("--path")
    s.add_argument("--out", required=True)
    return p


def _report(kind: str, exc: BaseException):
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ValidationError as exc:
        _report("usage", exc)
        return EXIT_INPUT
    except SystemExit as exc:       # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (PlanningFailed, TrainingDiverged) as exc:
        _report("failure", exc)
        return EXIT_FAILURE
    except (ValidationError, ValueError, OSError) as exc:
        _report("input", exc)
        return EXIT_INPUT
    except MasrError as exc:
        _report("failure", exc)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands::

    scfo run <problem.json> <run.json>    solve a problem file (builtin or stdio plant)
    scfo bench <name>                     run a builtin benchmark end to end
    scfo certify fj <point|trajectory>    stationarity certificate at a point
    scfo certify bounds <problem>         growth bounds, gain floor, iteration bound
    scfo validate-lipschitz <problem>     sample-check the declared constants

Exit codes: 0 success, 1 validation failure (including bad usage), 2
internal error.  ``SCFO_LOG={error,info,debug}`` controls logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import bench, bounds, plots, problem_io
from .engine import InfeasibleStartError, ProjectionParams, RunConfig, run
from .fj import FIXED_COST, UNIT_SPHERE, fj_error
from .model import ProblemSpec
from .protocol import PlantProtocolError, external_plant_session

log = logging.getLogger("scfo.cli")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INTERNAL = 2

_DEFAULT_BUDGETS = {"constrained_quadratic": 500, "rosenbrock": 5000}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are validation failures (exit 1)
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_VALIDATION)


def _build_parser() -> _Parser:
    p = _Parser(prog="scfo", description="feasible-side experimental optimization solver")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="solve a problem file")
    run_p.add_argument("problem", help="problem JSON file")
    run_p.add_argument("runfile", help="run-config JSON file")
    run_p.add_argument("--budget", type=int, default=None)
    run_p.add_argument("--max-halvings", type=int, default=None)
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--target", default=None, help='vector "x,y" | box_center | file:<path>')

    bench_p = sub.add_parser("bench", help="run a builtin benchmark")
    bench_p.add_argument("name", choices=bench.BUILTIN_NAMES)
    bench_p.add_argument("--budget", type=int, default=None)
    bench_p.add_argument("--max-halvings", type=int, default=10)
    bench_p.add_argument("--out", default=None, help="output directory (default scfo_out/<name>)")
    bench_p.add_argument("--plot-data", action="store_true",
                         help="also emit the raw cost/path series as JSON")
    bench_p.add_argument("--fj-mode", choices=("sphere", "fixed"), default="fixed")

    cert_p = sub.add_parser("certify", help="emit certificates")
    cert_sub = cert_p.add_subparsers(dest="what", required=True)

    fj_p = cert_sub.add_parser("fj", help="stationarity certificate at a point or trajectory end")
    fj_p.add_argument("token", help='point "x,y" or a trajectory JSON file')
    fj_p.add_argument("--problem", required=True, help="builtin:<name>, <name>, or problem file")
    fj_p.add_argument("--fj-mode", choices=("sphere", "fixed"), default="fixed")
    fj_p.add_argument("--out", default=None, help="write the certificate JSON here")

    b_p = cert_sub.add_parser("bounds", help="growth bounds, gain floor, iteration bound")
    b_p.add_argument("problem", help="builtin:<name>, <name>, or problem file")
    b_p.add_argument("--max-halvings", type=int, default=10)
    b_p.add_argument("--out", default=None)

    v_p = sub.add_parser("validate-lipschitz", help="sample-check the declared constants")
    v_p.add_argument("problem", help="builtin:<name>, <name>, or problem file")
    v_p.add_argument("--samples", type=int, default=10_000)
    v_p.add_argument("--seed", type=int, default=0)
    v_p.add_argument("--out", default=None)
    return p


def _load_spec(token: str) -> ProblemSpec:
    if token.startswith("builtin:"):
        return bench.builtin(token.split(":", 1)[1])
    if token in bench.BUILTIN_NAMES:
        return bench.builtin(token)
    return problem_io.load_problem(token)


def _emit(obj, out_path: str | None):
    if out_path:
        problem_io.write_json_atomic(out_path, obj)
        print(out_path)
    else:
        json.dump(obj, sys.stdout, indent=2)
        print()


def _write_run_artifacts(traj, spec, out_dir: str, plot_data: bool = False):
    os.makedirs(out_dir, exist_ok=True)
    problem_io.write_text_atomic(os.path.join(out_dir, "trajectory.csv"),
                                 problem_io.trajectory_csv(traj, spec))
    problem_io.write_json_atomic(os.path.join(out_dir, "trajectory.json"),
                                 problem_io.trajectory_json(traj, spec))
    reference = None
    if hasattr(spec.oracle, "phi") and spec.n_u == 2:
        try:
            reference = bench.derived_optimum(spec, 1e-3)
        except (TypeError, ValueError):
            reference = None
    summary = bench.summarize(traj, reference)
    problem_io.write_json_atomic(os.path.join(out_dir, "summary.json"), summary.to_json())
    plots.render_run_figures(traj, spec, out_dir, reference)
    if plot_data:
        problem_io.write_json_atomic(os.path.join(out_dir, "plot_data.json"), {
            "cost_vs_k": [[r.k, r.measurement.phi] for r in traj.records],
            "path": [r.u.tolist() for r in traj.records],
            "reference": reference.tolist() if reference is not None else None,
        })
    return summary


def _cmd_run(args) -> int:
    spec = problem_io.load_problem(args.problem)
    cfg = problem_io.load_run_config(args.runfile, spec)
    if args.budget is not None:
        cfg.budget = args.budget
    if args.max_halvings is not None:
        cfg.max_halvings = args.max_halvings
    if args.target is not None:
        token = args.target
        if "," in token:
            token = [float(x) for x in token.split(",")]
        cfg.target = problem_io.parse_target(token, spec.box)
    out_dir = args.out or cfg.out or os.path.join("scfo_out", spec.name)

    try:
        if spec.oracle is None:
            traj = external_plant_session(spec, cfg, sys.stdin, sys.stdout)
        else:
            traj = run(spec, cfg)
    except InfeasibleStartError as exc:
        print(f"initial point rejected: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PlantProtocolError as exc:
        if getattr(exc, "trajectory", None) is not None:
            _write_run_artifacts(exc.trajectory, spec, out_dir)
        print(f"plant protocol error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    summary = _write_run_artifacts(traj, spec, out_dir)
    log.info("run finished: %d experiments, terminated=%s", summary.n_experiments, summary.terminated)
    print(out_dir)
    return EXIT_OK


def _cmd_bench(args) -> int:
    spec = bench.builtin(args.name)
    budget = args.budget if args.budget is not None else _DEFAULT_BUDGETS[args.name]
    cfg = RunConfig(budget=budget, max_halvings=args.max_halvings)
    try:
        traj = run(spec, cfg)
    except InfeasibleStartError as exc:
        print(f"initial point rejected: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = args.out or os.path.join("scfo_out", args.name)
    _write_run_artifacts(traj, spec, out_dir, plot_data=args.plot_data)

    mode = UNIT_SPHERE if args.fj_mode == "sphere" else FIXED_COST
    last = traj.records[-1]
    cert = fj_error(last.u, spec, last.measurement, mode=mode)
    problem_io.write_json_atomic(os.path.join(out_dir, "fj_certificate.json"),
                                 cert.to_json(spec.n_gp, spec.n_g, spec.n_u))
    print(out_dir)
    return EXIT_OK


def _cmd_certify_fj(args) -> int:
    spec = _load_spec(args.problem)
    if spec.oracle is None:
        print("certify fj needs a problem with a builtin plant", file=sys.stderr)
        return EXIT_VALIDATION
    token = args.token
    level = None
    if os.path.exists(token):
        traj = problem_io.load_trajectory_json(token)
        point = traj.terminal if traj.terminal is not None else traj.final_point
        level = traj.records[-1].params_level
    else:
        try:
            point = np.array([float(x) for x in token.split(",")], dtype=float)
        except ValueError:
            print(f"cannot parse point or find trajectory file: {token!r}", file=sys.stderr)
            return EXIT_VALIDATION
    if point.size != spec.n_u:
        print(f"point has {point.size} entries, problem needs {spec.n_u}", file=sys.stderr)
        return EXIT_VALIDATION
    m = spec.oracle.measure(point)
    fixed = fj_error(point, spec, m, mode=FIXED_COST)
    sphere = fj_error(point, spec, m, mode=UNIT_SPHERE)
    fixed.params_level = sphere.params_level = level
    headline = fixed if args.fj_mode == "fixed" else sphere
    _emit({
        "point": point.tolist(),
        "error": headline.error,
        "headline_mode": headline.normalization,
        "fixed_cost_multiplier": fixed.to_json(spec.n_gp, spec.n_g, spec.n_u),
        "unit_sphere": sphere.to_json(spec.n_gp, spec.n_g, spec.n_u),
    }, args.out)
    return EXIT_OK


def _cmd_certify_bounds(args) -> int:
    spec = _load_spec(args.problem)
    gb = bounds.worst_case_growth(spec.lipschitz, spec.box)
    report = {
        "problem": spec.name,
        "growth": {
            "L_p": gb.L_p.tolist(),
            "L": gb.L.tolist(),
            "Q_phi": gb.Q_phi,
            "Q_g": gb.Q_g.tolist(),
            "Q_gp": gb.Q_gp.tolist(),
        },
    }
    ceilings = spec.default_ceilings
    if ceilings is not None and spec.oracle is not None:
        m0 = spec.oracle.measure(spec.u0)
        phi_lower = None
        if hasattr(spec.oracle, "phi"):
            pts = bench._grid_points(spec.box, 0.01)
            phi_lower = float(np.min(spec.oracle.phi(pts)))
        per_level = []
        for level in range(args.max_halvings + 1):
            params = ProjectionParams(ceilings, level)
            k_floor = bounds.filter_gain_floor(params, gb, spec.lipschitz, m0.g_p)
            entry = {
                "level": level,
                "filter_gain_floor": k_floor,
                "constraint_floors": [
                    bounds.constraint_floor(spec.lipschitz, params, gb, m0.g_p, j)
                    for j in range(spec.n_gp)
                ],
            }
            if phi_lower is not None:
                entry["max_feasible_iterations"] = bounds.max_feasible_iterations(
                    k_floor, spec.lipschitz, gb, params.delta_phi, m0.phi, phi_lower)
            per_level.append(entry)
        report["per_level"] = per_level
        report["filter_gain_floor"] = per_level[0]["filter_gain_floor"]
        report["constraint_floors"] = per_level[0]["constraint_floors"]
        if phi_lower is not None:
            report["max_feasible_iterations"] = per_level[0]["max_feasible_iterations"]
            report["phi_lower"] = phi_lower
    else:
        report["note"] = "gain floors need ceilings and a measurable plant; only growth bounds emitted"
    _emit(report, args.out)
    return EXIT_OK


def _cmd_validate_lipschitz(args) -> int:
    spec = _load_spec(args.problem)
    try:
        report = bounds.validate_lipschitz(spec, samples=args.samples, seed=args.seed)
    except TypeError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    _emit(report.to_json(), args.out)
    if not report.ok:
        worst = max(report.violations(), key=lambda e: e.ratio)
        print(f"violations found; worst: {worst.family}{list(worst.index)} "
              f"observed {worst.worst_observed:.6g} >= declared {worst.constant:.6g}",
              file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main(argv=None) -> int:
    level = os.environ.get("SCFO_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "certify":
            if args.what == "fj":
                return _cmd_certify_fj(args)
            return _cmd_certify_bounds(args)
        if args.command == "validate-lipschitz":
            return _cmd_validate_lipschitz(args)
        parser.error(f"unknown command {args.command!r}")
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # anything else is an internal failure
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

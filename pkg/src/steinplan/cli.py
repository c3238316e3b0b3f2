"""Command line front end.

Three subcommands: ``plan`` runs one planner on a scenario file, ``bench``
runs the scenario's full planner/seed matrix, and ``demo-prior`` writes the
prior and goal-conditioned posterior bands of a one-dimensional trajectory
prior for plotting.  Exit status is 0 on success, 1 for scenario or argument
validation errors, and 2 for numerical failures at run time.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .bench import RunRecord, emit_plot_data, run_benchmark, summarize_run, write_trace
from .errors import ConfigError, NumericalError, ScenarioError
from .gp_prior import BoundaryCondition, HsgpSpec, Observation, TimeGrid, \
    build_joint_prior, condition_prior
from .planners import PLANNER_KINDS, plan
from .scenarios import build_problem, load_scenario, planner_config


class _Parser(argparse.ArgumentParser):
    """Argument errors raise instead of exiting, so main can map them to 1."""

    def error(self, message):
        raise ConfigError(message)


def _cmd_plan(args) -> int:
    scenario = load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else scenario.run.seeds[0]
    overrides = {}
    if args.particles is not None:
        overrides["n_particles"] = args.particles
    if args.iterations is not None:
        overrides["n_iterations"] = args.iterations
    config = planner_config(scenario, args.planner, seed, **overrides)
    problem = build_problem(scenario)
    result = plan(problem, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(out / f"trace_{args.planner}_{seed}.csv", result.trace)
    emit_plot_data(problem, [RunRecord(planner=args.planner, seed=seed, result=result)], out)
    row = summarize_run(problem, result)
    print(f"{args.planner} seed {seed}: success={str(row['success']).lower()} "
          f"violation_mse={row['violation_mse']:.3e} "
          f"best_objective={result.objectives[result.best_index]:.6g} "
          f"queries={result.n_queries} wall_time={result.wall_time:.2f}s")
    if result.aborted:
        print(f"aborted: {result.message}", file=sys.stderr)
        return 2
    return 0


def _cmd_bench(args) -> int:
    scenario = load_scenario(args.scenario)
    report = run_benchmark(scenario, args.out, jobs=args.jobs)
    for row in report.rows:
        print(f"{row['planner']} seed {row['seed']}: "
              f"success={str(row['success']).lower()} "
              f"violation_mse={row['violation_mse']:.3e} "
              f"wall_time={row['wall_time']:.2f}s")
    for failure in report.failures:
        print(f"{failure['planner']} seed {failure['seed']} failed: {failure['error']}",
              file=sys.stderr)
    return 2 if len(report.rows) == 0 and report.failures else 0


def _cmd_demo_prior(args) -> int:
    grid = TimeGrid(horizon=args.horizon, n_nodes=args.nodes)
    spec = HsgpSpec(args.family, lengthscale=args.lengthscale, variance=args.variance,
                    noise=args.noise, n_features=args.features,
                    domain_radius=1.25 * args.horizon)
    boundary = BoundaryCondition(args.start, args.start_var, args.goal)
    prior = build_joint_prior(spec, grid, boundary)
    posterior = condition_prior(prior, [
        Observation("position", 0, args.start, 1e-8),
        Observation("position", grid.n_nodes - 1, args.goal, 1e-8),
    ])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "prior_demo.csv"
    n = grid.n_nodes
    header = ["time"]
    columns = [grid.times]
    for label, p in (("prior", prior), ("posterior", posterior)):
        sd = np.sqrt(np.clip(np.diag(p.cov), 0.0, None))
        for block, offset in (("pos", 0), ("vel", n)):
            mean = p.mean[offset:offset + n]
            band = 2.0 * sd[offset:offset + n]
            header += [f"{label}_{block}_mean", f"{label}_{block}_lo", f"{label}_{block}_hi"]
            columns += [mean, mean - band, mean + band]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t in range(n):
            writer.writerow([repr(float(col[t])) for col in columns])
    print(f"wrote {path} ({n} nodes, {args.family}, conditioned on both endpoints)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="steinplan",
                     description="Constrained Stein variational trajectory planning.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="run one planner on a scenario file")
    p.add_argument("scenario", help="path to a scenario TOML file")
    p.add_argument("--planner", required=True, choices=PLANNER_KINDS)
    p.add_argument("--seed", type=int, default=None,
                   help="defaults to the scenario's first seed")
    p.add_argument("--particles", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--out", default="plan_out", help="output directory")
    p.set_defaults(func=_cmd_plan)

    b = sub.add_parser("bench", help="run the scenario's full planner/seed matrix")
    b.add_argument("scenario", help="path to a scenario TOML file")
    b.add_argument("--out", default="bench_out", help="output directory")
    b.add_argument("--jobs", type=int, default=None,
                   help="parallel workers (default: STEINPLAN_JOBS or 1)")
    b.set_defaults(func=_cmd_bench)

    d = sub.add_parser("demo-prior",
                       help="write prior/posterior bands of a 1D trajectory prior")
    d.add_argument("--out", default="demo_out", help="output directory")
    d.add_argument("--family", default="matern32", choices=("matern32", "se"))
    d.add_argument("--horizon", type=float, default=4.0)
    d.add_argument("--nodes", type=int, default=64)
    d.add_argument("--lengthscale", type=float, default=1.0)
    d.add_argument("--variance", type=float, default=1.0)
    d.add_argument("--noise", type=float, default=1e-4)
    d.add_argument("--features", type=int, default=64)
    d.add_argument("--start", type=float, default=0.0)
    d.add_argument("--goal", type=float, default=1.0)
    d.add_argument("--start-var", type=float, default=1e-4, dest="start_var")
    d.set_defaults(func=_cmd_demo_prior)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ScenarioError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Benchmark harness: run every planner/seed pair of a scenario and persist
traces, a summary table and plot-ready trajectory dumps.

Outputs under the chosen directory:

- ``trace_<planner>_<seed>.csv``   per-iteration convergence, four columns
- ``summary.csv`` / ``summary.json``  one row per completed run plus, in the
  JSON, per-planner aggregates and any recorded failures
- ``trajectories_<planner>_<seed>.csv``  final particle set (via
  :func:`emit_plot_data`)

Everything except wall_time is deterministic for a fixed scenario file, byte
for byte, regardless of the worker count.  ``STEINPLAN_JOBS`` (or the
``jobs`` argument, which wins) sets how many runs execute in parallel; each
run rebuilds its problem from the scenario, so workers share nothing.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericalError
from .planners import PlanResult, plan
from .problems import TrajectoryProblem, sdf_with_gradient
from .scenarios import Scenario, build_problem, planner_config

TRACE_COLUMNS = ("iteration", "mean_objective", "mean_abs_h", "best_objective")

SUMMARY_COLUMNS = ("planner", "seed", "length", "smoothness", "violation_mse",
                   "success", "wall_time")

#: Aggregated per planner in summary.json (plus success_rate).
AGGREGATE_FIELDS = ("length", "smoothness", "violation_mse", "wall_time")

JOBS_ENV = "STEINPLAN_JOBS"

#: A run succeeds when its best particle's constraint violation stays below
#: this, every node clears the obstacles, and the endpoints hit their marks.
FEASIBILITY_TOL = 1e-4
ENDPOINT_TOL = 1e-3


@dataclass
class RunRecord:
    """One planner/seed execution: either a result or an error string."""

    planner: str
    seed: int
    result: PlanResult = None
    error: str = ""


@dataclass
class BenchReport:
    """Everything run_benchmark produced, before and after serialization."""

    scenario: Scenario
    records: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)


def resolve_jobs(jobs=None) -> int:
    """Worker count: explicit argument, else STEINPLAN_JOBS, else 1."""
    if jobs is None:
        raw = os.environ.get(JOBS_ENV)
        if raw is None:
            return 1
        try:
            jobs = int(raw)
        except ValueError:
            raise ConfigError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None
    if jobs < 1:
        raise ConfigError(f"worker count must be >= 1, got {jobs}")
    return jobs


def execute_run(scenario: Scenario, planner: str, seed: int) -> PlanResult:
    """Build the scenario's problem and run one planner on one seed."""
    problem = build_problem(scenario)
    return plan(problem, planner_config(scenario, planner, seed))


def summarize_run(problem, result: PlanResult) -> dict:
    """Best-particle metrics and the success verdict for one run."""
    best = result.best_index
    violation = float(result.violations[best])
    if isinstance(problem, TrajectoryProblem):
        metrics = result.metrics[best]
        pos, _ = problem.view.unflatten(result.particles[best])
        node_sdf, _ = sdf_with_gradient(problem.spec.scene, pos[:2].T)
        clear = bool(np.all(node_sdf > 0.0))
        start_err = float(np.linalg.norm(pos[:, 0] - np.asarray(problem.spec.start)))
        goal_err = float(np.linalg.norm(pos[:, -1] - np.asarray(problem.spec.goal)))
        success = (violation <= FEASIBILITY_TOL and clear
                   and start_err <= ENDPOINT_TOL and goal_err <= ENDPOINT_TOL)
        row = dict(metrics)
    else:
        success = violation <= FEASIBILITY_TOL
        row = {"length": 0.0, "smoothness": 0.0, "violation_mse": violation**2}
    row["success"] = bool(success and not result.aborted)
    row["wall_time"] = float(result.wall_time)
    return row


def write_trace(path, trace) -> None:
    """Trace CSV with exactly the four benchmark columns."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        n = len(trace["iteration"])
        for i in range(n):
            writer.writerow([int(trace["iteration"][i])]
                            + [repr(float(trace[c][i])) for c in TRACE_COLUMNS[1:]])


def write_summary(out_dir, report: BenchReport) -> None:
    out_dir = Path(out_dir)
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in report.rows:
            writer.writerow([row["planner"], row["seed"],
                             repr(row["length"]), repr(row["smoothness"]),
                             repr(row["violation_mse"]),
                             "true" if row["success"] else "false",
                             repr(row["wall_time"])])
    payload = {
        "scenario": report.scenario.name,
        "kind": report.scenario.kind,
        "rows": report.rows,
        "aggregates": report.aggregates,
        "failures": report.failures,
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def aggregate_rows(rows) -> dict:
    """Per-planner mean/std (population) of the numeric fields, plus success rate."""
    out = {}
    for planner in sorted({row["planner"] for row in rows}):
        group = [row for row in rows if row["planner"] == planner]
        stats = {}
        for name in AGGREGATE_FIELDS:
            values = np.array([row[name] for row in group], dtype=float)
            stats[name] = {"mean": float(values.mean()), "std": float(values.std())}
        stats["success_rate"] = float(np.mean([row["success"] for row in group]))
        stats["n_runs"] = len(group)
        out[planner] = stats
    return out


def run_benchmark(scenario: Scenario, out_dir, jobs=None) -> BenchReport:
    """Run all planner/seed pairs, writing traces and the summary as we go.

    A run that raises a numerical error is recorded under failures and the
    remaining runs still execute; an aborted-but-returned run keeps its row
    with success marked false.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = resolve_jobs(jobs)
    pairs = [(p, s) for p in scenario.run.planners for s in scenario.run.seeds]
    report = BenchReport(scenario=scenario)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {(p, s): pool.submit(execute_run, scenario, p, s) for p, s in pairs}
            outcomes = {}
            for key, fut in futures.items():
                try:
                    outcomes[key] = fut.result()
                except NumericalError as exc:
                    outcomes[key] = exc
    else:
        outcomes = {}
        for p, s in pairs:
            try:
                outcomes[(p, s)] = execute_run(scenario, p, s)
            except NumericalError as exc:
                outcomes[(p, s)] = exc

    problem = build_problem(scenario)
    for p, s in pairs:
        outcome = outcomes[(p, s)]
        if isinstance(outcome, NumericalError):
            report.records.append(RunRecord(planner=p, seed=s, error=str(outcome)))
            report.failures.append({"planner": p, "seed": s, "error": str(outcome)})
            continue
        report.records.append(RunRecord(planner=p, seed=s, result=outcome))
        write_trace(out_dir / f"trace_{p}_{s}.csv", outcome.trace)
        row = {"planner": p, "seed": s}
        row.update(summarize_run(problem, outcome))
        if outcome.aborted:
            report.failures.append({"planner": p, "seed": s, "error": outcome.message})
        report.rows.append(row)

    report.aggregates = aggregate_rows(report.rows)
    write_summary(out_dir, report)
    emit_plot_data(problem, report.records, out_dir)
    return report


def emit_plot_data(problem, records, out_dir) -> None:
    """Final particle sets in plot-ready columnar CSVs.

    Trajectory problems get one file per run with a time column plus, per
    particle, a position and a velocity column for every degree of freedom.
    The toy problem gets a two-column particle scatter instead.
    """
    out_dir = Path(out_dir)
    for record in records:
        if record.result is None:
            continue
        result = record.result
        stem = f"{record.planner}_{record.seed}"
        if isinstance(problem, TrajectoryProblem):
            names = problem.spec.dof_names
            header = ["time"]
            for i in range(result.particles.shape[0]):
                header += [f"{d}_p{i}" for d in names] + [f"v{d}_p{i}" for d in names]
            unpacked = [problem.view.unflatten(p) for p in result.particles]
            with open(out_dir / f"trajectories_{stem}.csv", "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                for t in range(problem.grid.n_nodes):
                    cells = [repr(float(problem.grid.times[t]))]
                    for pos, vel in unpacked:
                        cells += [repr(float(v)) for v in pos[:, t]]
                        cells += [repr(float(v)) for v in vel[:, t]]
                    writer.writerow(cells)
        else:
            with open(out_dir / f"particles_{stem}.csv", "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["x0", "x1"])
                for p in result.particles:
                    writer.writerow([repr(float(p[0])), repr(float(p[1]))])

"""Benchmark scenario files: schema, validation and problem construction.

A scenario is a TOML document with a `kind` (toy_gaussian, unicycle or
pointmass), a kind-specific [problem] table, optional [prior] and [kernel]
tables for the trajectory kinds, and a [run] table naming planners, seeds
and budgets.
Unknown keys anywhere are rejected so that typos fail loudly instead of
silently running with defaults.  `scenario_to_toml` writes the fully
normalized document back out; loading that text reproduces the scenario
exactly, which keeps benchmark configurations self-documenting.
"""

from __future__ import annotations

from dataclasses import dataclass

import tomli

from .errors import ScenarioError
from .gp_prior import HsgpSpec, TimeGrid
from .planners import PLANNER_KINDS, PlannerConfig
from .problems import GaussianEllipseProblem, ProblemSpec, Scene2D, TrajectoryProblem

SCENARIO_KINDS = ("toy_gaussian", "unicycle", "pointmass")

#: Planners that operate on decision vectors without trajectory structure.
POINT_PLANNERS = ("csvn", "csvgd")


@dataclass(frozen=True)
class RunSettings:
    """Which planners run, on which seeds, with which budgets.

    The per-planner step sizes default to None, which keeps each planner's
    own default; scenarios override them where a problem's conditioning
    demands it (the update rate is the one protocol knob the experiments
    leave per-scenario).
    """

    planners: tuple
    seeds: tuple
    n_particles: int = 50
    stein_iterations: int = 4000
    baseline_iterations: int = 22000
    warmup: int = 0
    init_scale: float = 1.0
    baseline_init_scale: float = None
    csvn_step: float = None
    csvgd_step: float = None
    chomp_step: float = None
    gpmp_step: float = None

    def step_for(self, planner: str):
        return getattr(self, f"{planner}_step")

    def init_for(self, planner: str) -> float:
        """Init spread for a planner; baselines may pin their own (0 means
        every particle starts on the prior mean, the straight-line path)."""
        if planner in ("chomp", "gpmp") and self.baseline_init_scale is not None:
            return self.baseline_init_scale
        return self.init_scale


@dataclass(frozen=True)
class Scenario:
    """One validated benchmark configuration.

    ``problem``, ``prior`` and ``kernel`` hold normalized plain mappings
    (every optional key filled in) so the scenario round-trips through TOML
    unchanged.
    """

    kind: str
    name: str
    problem: dict
    prior: dict
    kernel: dict
    run: RunSettings


# ---------------------------------------------------------------------------
# validation helpers


def _require(table, key, path):
    if key not in table:
        raise ScenarioError(f"{path}.{key}: required key is missing")
    return table[key]


def _check_unknown(table, allowed, path):
    for key in table:
        if key not in allowed:
            raise ScenarioError(f"{path}.{key}: unknown key (allowed: {', '.join(sorted(allowed))})")


def _as_float(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}: expected a number, got {value!r}")
    value = float(value)
    if value != value or value in (float("inf"), float("-inf")):
        raise ScenarioError(f"{path}: must be finite, got {value!r}")
    return value


def _as_int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_str(value, path, choices=None):
    if not isinstance(value, str):
        raise ScenarioError(f"{path}: expected a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ScenarioError(f"{path}: must be one of {choices}, got {value!r}")
    return value


def _as_vector(value, length, path):
    if not isinstance(value, list) or len(value) != length:
        raise ScenarioError(f"{path}: expected a list of {length} numbers, got {value!r}")
    return [_as_float(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _as_matrix(value, n_cols, path, n_rows=None, allow_empty=False):
    if not isinstance(value, list) or (not value and not allow_empty):
        raise ScenarioError(f"{path}: expected a non-empty list of rows, got {value!r}")
    if n_rows is not None and len(value) != n_rows:
        raise ScenarioError(f"{path}: expected {n_rows} rows, got {len(value)}")
    return [_as_vector(row, n_cols, f"{path}[{i}]") for i, row in enumerate(value)]


# ---------------------------------------------------------------------------
# section validators


def _validate_scene(table, path):
    _check_unknown(table, {"circles", "boxes", "workspace"}, path)
    return {
        "circles": _as_matrix(table.get("circles", []), 3, f"{path}.circles",
                              allow_empty=True),
        "boxes": _as_matrix(table.get("boxes", []), 4, f"{path}.boxes",
                            allow_empty=True),
        "workspace": _as_vector(table.get("workspace", [-10.0, 10.0, -10.0, 10.0]),
                                4, f"{path}.workspace"),
    }


def _validate_toy_problem(table):
    path = "problem"
    _check_unknown(table, {"mean", "cov", "center", "radii"}, path)
    radii = _as_vector(table.get("radii", [1.5, 1.0]), 2, f"{path}.radii")
    if min(radii) <= 0:
        raise ScenarioError(f"{path}.radii: must be positive, got {radii}")
    return {
        "mean": _as_vector(table.get("mean", [0.0, 0.0]), 2, f"{path}.mean"),
        "cov": _as_matrix(table.get("cov", [[1.0, 0.9], [0.9, 1.0]]), 2, f"{path}.cov",
                          n_rows=2),
        "center": _as_vector(table.get("center", [0.0, 0.0]), 2, f"{path}.center"),
        "radii": radii,
    }


def _validate_trajectory_problem(table, kind):
    path = "problem"
    n_dof = 3 if kind == "unicycle" else 2
    allowed = {"start", "goal", "horizon", "n_nodes", "scene", "w_prior", "w_obstacle",
               "w_length", "cost_mode", "safety_margin", "goal_mode"}
    _check_unknown(table, allowed, path)
    horizon = _as_float(_require(table, "horizon", path), f"{path}.horizon")
    if horizon <= 0:
        raise ScenarioError(f"{path}.horizon: must be positive, got {horizon}")
    n_nodes = _as_int(_require(table, "n_nodes", path), f"{path}.n_nodes")
    if n_nodes < 4:
        raise ScenarioError(f"{path}.n_nodes: need at least 4 nodes, got {n_nodes}")
    scene_table = table.get("scene", {})
    if not isinstance(scene_table, dict):
        raise ScenarioError(f"{path}.scene: expected a table, got {scene_table!r}")
    return {
        "start": _as_vector(_require(table, "start", path), n_dof, f"{path}.start"),
        "goal": _as_vector(_require(table, "goal", path), n_dof, f"{path}.goal"),
        "horizon": horizon,
        "n_nodes": n_nodes,
        "scene": _validate_scene(scene_table, f"{path}.scene"),
        "w_prior": _as_float(table.get("w_prior", 1e-2), f"{path}.w_prior"),
        "w_obstacle": _as_float(table.get("w_obstacle", 1.0), f"{path}.w_obstacle"),
        "w_length": _as_float(table.get("w_length", 0.0), f"{path}.w_length"),
        "cost_mode": _as_str(table.get("cost_mode", "exp"), f"{path}.cost_mode",
                             choices=("exp", "hinge")),
        "safety_margin": _as_float(table.get("safety_margin", 0.0), f"{path}.safety_margin"),
        "goal_mode": _as_str(table.get("goal_mode", "clamp"), f"{path}.goal_mode",
                             choices=("clamp", "condition")),
    }


def _validate_prior(table, horizon):
    path = "prior"
    allowed = {"kernel_family", "lengthscale", "variance", "noise", "n_features",
               "domain_radius"}
    _check_unknown(table, allowed, path)
    out = {
        "kernel_family": _as_str(table.get("kernel_family", "matern32"),
                                 f"{path}.kernel_family", choices=("matern32", "se")),
        "lengthscale": _as_float(table.get("lengthscale", 1.0), f"{path}.lengthscale"),
        "variance": _as_float(table.get("variance", 1.0), f"{path}.variance"),
        "noise": _as_float(table.get("noise", 1e-4), f"{path}.noise"),
        "n_features": _as_int(table.get("n_features", 64), f"{path}.n_features"),
        "domain_radius": _as_float(table.get("domain_radius", 1.25 * horizon),
                                   f"{path}.domain_radius"),
    }
    if out["lengthscale"] <= 0 or out["variance"] <= 0:
        raise ScenarioError(f"{path}: lengthscale and variance must be positive")
    if out["n_features"] < 1:
        raise ScenarioError(f"{path}.n_features: must be >= 1, got {out['n_features']}")
    return out


def _validate_kernel(table):
    """Trajectory-kernel settings: metric choice and the fixed widening factor.

    The lengthscale itself is always the once-at-initialization calibration
    (median pairwise kernel value 1/2); the factor scales that default and is
    the scenario's way of pinning a wider kernel where the particle coupling
    needs it.
    """
    path = "kernel"
    _check_unknown(table, {"metric", "lengthscale_factor"}, path)
    factor = _as_float(table.get("lengthscale_factor", 1.0),
                       f"{path}.lengthscale_factor")
    if factor <= 0:
        raise ScenarioError(f"{path}.lengthscale_factor: must be positive, got {factor}")
    return {
        "metric": _as_str(table.get("metric", "precision"), f"{path}.metric",
                          choices=("precision", "covariance")),
        "lengthscale_factor": factor,
    }


STEP_KEYS = ("csvn_step", "csvgd_step", "chomp_step", "gpmp_step")


def _validate_run(table, kind):
    path = "run"
    allowed = {"planners", "seeds", "n_particles", "stein_iterations",
               "baseline_iterations", "warmup", "init_scale",
               "baseline_init_scale", *STEP_KEYS}
    _check_unknown(table, allowed, path)
    planners = _require(table, "planners", path)
    if not isinstance(planners, list) or not planners:
        raise ScenarioError(f"{path}.planners: expected a non-empty list")
    for i, p in enumerate(planners):
        _as_str(p, f"{path}.planners[{i}]", choices=PLANNER_KINDS)
        if kind == "toy_gaussian" and p not in POINT_PLANNERS:
            raise ScenarioError(
                f"{path}.planners[{i}]: {p!r} needs trajectory structure, which the "
                f"toy_gaussian scenario does not have")
    if len(set(planners)) != len(planners):
        raise ScenarioError(f"{path}.planners: duplicate entries in {planners}")
    seeds = _require(table, "seeds", path)
    if not isinstance(seeds, list) or not seeds:
        raise ScenarioError(f"{path}.seeds: expected a non-empty list")
    seeds = [_as_int(s, f"{path}.seeds[{i}]") for i, s in enumerate(seeds)]
    if len(set(seeds)) != len(seeds):
        raise ScenarioError(f"{path}.seeds: duplicate entries in {seeds}")
    n_particles = _as_int(table.get("n_particles", 50), f"{path}.n_particles")
    if n_particles < 1:
        raise ScenarioError(f"{path}.n_particles: must be >= 1, got {n_particles}")
    stein_iterations = _as_int(table.get("stein_iterations", 4000),
                               f"{path}.stein_iterations")
    baseline_iterations = _as_int(table.get("baseline_iterations", 22000),
                                  f"{path}.baseline_iterations")
    if stein_iterations < 1 or baseline_iterations < 1:
        raise ScenarioError(f"{path}: iteration budgets must be >= 1")
    warmup = _as_int(table.get("warmup", 0), f"{path}.warmup")
    if warmup < 0:
        raise ScenarioError(f"{path}.warmup: must be >= 0, got {warmup}")
    init_scale = _as_float(table.get("init_scale", 1.0), f"{path}.init_scale")
    if init_scale < 0:
        raise ScenarioError(f"{path}.init_scale: must be >= 0, got {init_scale}")
    extras = {}
    if "baseline_init_scale" in table:
        value = _as_float(table["baseline_init_scale"], f"{path}.baseline_init_scale")
        if value < 0:
            raise ScenarioError(
                f"{path}.baseline_init_scale: must be >= 0, got {value}")
        extras["baseline_init_scale"] = value
    for key in STEP_KEYS:
        if key in table:
            value = _as_float(table[key], f"{path}.{key}")
            if value <= 0:
                raise ScenarioError(f"{path}.{key}: must be positive, got {value}")
            extras[key] = value
    return RunSettings(
        planners=tuple(planners), seeds=tuple(seeds), n_particles=n_particles,
        stein_iterations=stein_iterations, baseline_iterations=baseline_iterations,
        warmup=warmup, init_scale=init_scale, **extras)


def scenario_from_dict(data) -> Scenario:
    """Validate a parsed TOML mapping into a Scenario, filling defaults."""
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario: expected a table, got {data!r}")
    _check_unknown(data, {"kind", "name", "problem", "prior", "kernel", "run"},
                   "scenario")
    if "kind" not in data:
        raise ScenarioError("scenario.kind: required key is missing")
    kind = _as_str(data["kind"], "scenario.kind", choices=SCENARIO_KINDS)
    name = _as_str(data.get("name", kind), "scenario.name")
    if not name or not all(c.isalnum() or c in "_-" for c in name):
        raise ScenarioError(f"scenario.name: must be a file-name-safe identifier, got {name!r}")

    problem_table = data.get("problem", {})
    if not isinstance(problem_table, dict):
        raise ScenarioError(f"problem: expected a table, got {problem_table!r}")
    kernel_table = data.get("kernel", {})
    if not isinstance(kernel_table, dict):
        raise ScenarioError(f"kernel: expected a table, got {kernel_table!r}")
    if kind == "toy_gaussian":
        if "prior" in data:
            raise ScenarioError("prior: not used by toy_gaussian scenarios")
        if "kernel" in data:
            raise ScenarioError("kernel: not used by toy_gaussian scenarios")
        problem = _validate_toy_problem(problem_table)
        prior = {}
        kernel = {}
    else:
        problem = _validate_trajectory_problem(problem_table, kind)
        prior_table = data.get("prior", {})
        if not isinstance(prior_table, dict):
            raise ScenarioError(f"prior: expected a table, got {prior_table!r}")
        prior = _validate_prior(prior_table, problem["horizon"])
        kernel = _validate_kernel(kernel_table)

    if "run" not in data or not isinstance(data["run"], dict):
        raise ScenarioError("run: required table is missing")
    run = _validate_run(data["run"], kind)
    return Scenario(kind=kind, name=name, problem=problem, prior=prior,
                    kernel=kernel, run=run)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario TOML file."""
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError as exc:
        raise ScenarioError(f"scenario file not found: {path}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: invalid TOML: {exc}") from exc
    return scenario_from_dict(data)


# ---------------------------------------------------------------------------
# serialization


def scenario_to_dict(scenario: Scenario) -> dict:
    """Plain nested mapping with every key explicit, ready for TOML."""
    out = {"kind": scenario.kind, "name": scenario.name,
           "problem": {k: v for k, v in scenario.problem.items()}}
    if scenario.kind != "toy_gaussian":
        out["prior"] = dict(scenario.prior)
        out["kernel"] = dict(scenario.kernel)
    run = scenario.run
    out["run"] = {
        "planners": list(run.planners), "seeds": list(run.seeds),
        "n_particles": run.n_particles, "stein_iterations": run.stein_iterations,
        "baseline_iterations": run.baseline_iterations, "warmup": run.warmup,
        "init_scale": run.init_scale,
    }
    if run.baseline_init_scale is not None:
        out["run"]["baseline_init_scale"] = run.baseline_init_scale
    for key in STEP_KEYS:
        if getattr(run, key) is not None:
            out["run"][key] = getattr(run, key)
    return out


def _toml_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ScenarioError(f"cannot serialize {value!r} to TOML")


def _emit_table(lines, table, prefix):
    scalars = {k: v for k, v in table.items() if not isinstance(v, dict)}
    subtables = {k: v for k, v in table.items() if isinstance(v, dict)}
    if prefix and (scalars or not subtables):
        lines.append(f"[{prefix}]")
    for key, value in scalars.items():
        lines.append(f"{key} = {_toml_value(value)}")
    for key, sub in subtables.items():
        lines.append("")
        _emit_table(lines, sub, f"{prefix}.{key}" if prefix else key)


def scenario_to_toml(scenario: Scenario) -> str:
    """Serialize with all defaults made explicit; loading the text round-trips."""
    data = scenario_to_dict(scenario)
    lines = []
    _emit_table(lines, {k: v for k, v in data.items() if not isinstance(v, dict)}, "")
    for key in ("problem", "prior", "kernel", "run"):
        if key in data:
            lines.append("")
            _emit_table(lines, data[key], key)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# construction


def build_problem(scenario: Scenario):
    """Instantiate the planning problem a scenario describes."""
    p = scenario.problem
    if scenario.kind == "toy_gaussian":
        return GaussianEllipseProblem(
            mean=tuple(p["mean"]), cov=tuple(tuple(row) for row in p["cov"]),
            center=tuple(p["center"]), radii=tuple(p["radii"]))
    scene = Scene2D(
        circles=[tuple(c) for c in p["scene"]["circles"]],
        boxes=[tuple(b) for b in p["scene"]["boxes"]],
        workspace=tuple(p["scene"]["workspace"]))
    spec = ProblemSpec(
        scene=scene,
        dof_names=("x", "y", "theta") if scenario.kind == "unicycle" else ("x", "y"),
        start=tuple(p["start"]), goal=tuple(p["goal"]),
        w_prior=p["w_prior"], w_obstacle=p["w_obstacle"], w_length=p["w_length"],
        cost_mode=p["cost_mode"], safety_margin=p["safety_margin"],
        constraint="unicycle" if scenario.kind == "unicycle" else "none")
    grid = TimeGrid(horizon=p["horizon"], n_nodes=p["n_nodes"])
    pr = scenario.prior
    hsgp = HsgpSpec(pr["kernel_family"], lengthscale=pr["lengthscale"],
                    variance=pr["variance"], noise=pr["noise"],
                    n_features=pr["n_features"], domain_radius=pr["domain_radius"])
    kern = scenario.kernel
    return TrajectoryProblem(spec, grid, hsgp, goal_mode=p["goal_mode"],
                             kernel_metric=kern["metric"],
                             lengthscale_factor=kern["lengthscale_factor"])


def planner_config(scenario: Scenario, planner: str, seed: int, **overrides) -> PlannerConfig:
    """Config for one planner/seed pair under the scenario's run settings."""
    if planner not in PLANNER_KINDS:
        raise ScenarioError(f"unknown planner {planner!r}")
    run = scenario.run
    stein = planner in POINT_PLANNERS
    fields = dict(
        kind=planner, n_particles=run.n_particles,
        n_iterations=run.stein_iterations if stein else run.baseline_iterations,
        warmup=run.warmup if stein else 0,
        step_size=run.step_for(planner),
        init_scale=run.init_for(planner), seed=seed)
    fields.update(overrides)
    return PlannerConfig(**fields)

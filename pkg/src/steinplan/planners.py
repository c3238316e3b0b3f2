"""Outer inference loops: constrained Stein sweeps and penalty baselines.

The Stein planners (csvn, csvgd) run synchronous Jacobi sweeps over a
particle set: freeze the set, compute every particle's direction from the
shared kernel state, then apply all updates at once.  The penalty baselines
(chomp, gpmp) run independent per-particle gradient descent on interior
position nodes with a squared constraint penalty, velocities recovered by
finite differences only when converting their result back into the shared
decision-vector layout for comparison.

Everything here is deterministic given the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from time import perf_counter

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .constraints import SlackState, csvgd_step, init_slack, solve_kkt_with_retry
from .errors import ConfigError, NumericalError
from .problems import TrajectoryProblem
from .stein import (
    TrajectoryKernelSpec,
    all_directions,
    all_hessians,
    anneal_scale,
    bfgs_init,
    bfgs_update,
    build_stein_state,
    calibrate_lengthscales,
    ksd,
)

PLANNER_KINDS = ("csvn", "csvgd", "chomp", "gpmp")

DEFAULT_STEP = {"csvn": 1.0, "csvgd": 0.5, "chomp": 1e-4, "gpmp": 1e-4}

#: Adaptive Levenberg damping: mu = DAMPING_SCALE * trace(H) / dim.
DAMPING_SCALE = 1e-3

#: A KKT solve needing more than this many damping retries resets that
#: particle's BFGS block, which is usually the stale ingredient.
BFGS_RESET_RETRIES = 3

#: Initial scale of the BFGS residual block on top of an analytic curvature
#: seed, relative to the seed's mean eigenvalue.  Small, so the seed carries
#: the early Newton steps; positive, so the secant updates are accepted.
RESIDUAL_INIT_SCALE = 1e-4

#: Restoration pre-pass targets and budget.  Particles drawn from the prior
#: rarely satisfy the equality constraints, and letting the first KKT sweep
#: absorb the full restoration scatters the ensemble far beyond the spread
#: the kernel was calibrated on.  Projecting onto h = 0 first keeps that
#: calibration valid for the ensemble the run actually sees.
RESTORE_TOL = 1e-9
RESTORE_MAX_SWEEPS = 20


@dataclass(frozen=True)
class BaselinePriorSpec:
    """Finite-difference smoothness model used by the penalty baselines.

    ``order`` 1 penalizes velocity (the covariant metric of chomp), order 2
    acceleration (the constant-velocity prior of gpmp); ``weight`` scales the
    quadratic form and ``penalty_weight`` the squared constraint penalty.
    """

    order: int
    weight: float = 1.0
    penalty_weight: float = 100.0

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ConfigError(f"difference order must be 1 or 2, got {self.order}")
        if self.weight < 0 or self.penalty_weight < 0:
            raise ConfigError("baseline weights must be >= 0")


@dataclass(frozen=True)
class PlannerConfig:
    """Shared knob set for all planner kinds.

    ``step_size`` and ``baseline`` default per kind (csvn 1.0, csvgd 0.5,
    baselines 1e-4 with order 1 for chomp / order 2 for gpmp); ``damping``
    None selects the adaptive trace rule.  Tolerances default to None, which
    disables early stopping (benchmark mode runs the full budget).
    """

    kind: str
    n_particles: int = 50
    n_iterations: int = 4000
    step_size: float = None
    warmup: int = 0
    damping: float = None
    seed: int = 0
    kernel: TrajectoryKernelSpec = None
    tol_update: float = None
    tol_constraint: float = None
    track_ksd: bool = False
    feasibility_tol: float = 1e-4
    init_scale: float = 1.0
    baseline: BaselinePriorSpec = None

    def __post_init__(self):
        if self.kind not in PLANNER_KINDS:
            raise ConfigError(f"planner kind must be one of {PLANNER_KINDS}, got {self.kind!r}")
        if self.n_particles < 1:
            raise ConfigError(f"need at least one particle, got {self.n_particles}")
        if self.n_iterations < 1:
            raise ConfigError(f"iteration budget must be >= 1, got {self.n_iterations}")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigError(f"step_size must be positive, got {self.step_size}")
        if self.warmup < 0:
            raise ConfigError(f"warmup must be >= 0, got {self.warmup}")
        if self.damping is not None and self.damping < 0:
            raise ConfigError(f"damping must be >= 0, got {self.damping}")
        if self.init_scale < 0:
            raise ConfigError(f"init_scale must be >= 0, got {self.init_scale}")

    @property
    def eta(self) -> float:
        return self.step_size if self.step_size is not None else DEFAULT_STEP[self.kind]

    @property
    def baseline_prior(self) -> BaselinePriorSpec:
        if self.baseline is not None:
            return self.baseline
        return BaselinePriorSpec(order=1 if self.kind == "chomp" else 2)


@dataclass
class PlanResult:
    """Final particle set with per-iteration trace and per-particle summaries.

    ``trace`` maps column name to an array of one entry per completed
    iteration; ``objectives`` is the planner's own objective (negative log
    posterior for Stein planners, cost plus penalty for baselines) and
    ``violations`` the per-particle max |h| under the problem's constraint
    set.  ``aborted`` marks a run stopped by repeated KKT failure; the trace
    up to that point is kept.
    """

    kind: str
    particles: np.ndarray
    trace: dict
    objectives: np.ndarray
    violations: np.ndarray
    best_index: int
    n_queries: int
    wall_time: float
    metrics: tuple = None
    aborted: bool = False
    message: str = ""
    n_restore_sweeps: int = 0


def select_best(result: PlanResult, feasibility_tol: float = 1e-4) -> int:
    """Lowest objective among feasible particles, else least-infeasible.

    Ties in the infeasible fallback break toward the lower objective.
    """
    if result.objectives.size == 0:
        raise ConfigError("result holds no particles")
    feasible = result.violations <= feasibility_tol
    if np.any(feasible):
        idx = np.flatnonzero(feasible)
        return int(idx[np.argmin(result.objectives[idx])])
    order = np.lexsort((result.objectives, result.violations))
    return int(order[0])


def trajectory_metrics(problem: TrajectoryProblem, xi) -> dict:
    """Length, velocity-difference smoothness and constraint MSE of one trajectory."""
    pos, vel = problem.view.unflatten(np.asarray(xi, dtype=float))
    length = float(np.sum(np.linalg.norm(pos[:, 1:] - pos[:, :-1], axis=0)))
    dv = vel[:, 1:] - vel[:, :-1]
    smoothness = float(np.mean(np.sum(dv**2, axis=0)))
    ceval = problem.constraint(xi)
    violation_mse = float(np.mean(ceval.h**2)) if ceval.n_eq else 0.0
    return {"length": length, "smoothness": smoothness, "violation_mse": violation_mse}


def count_trajectory_clusters(particles, kernel: TrajectoryKernelSpec,
                              threshold: float = 0.5) -> int:
    """Greedy leader clustering under the trajectory kernel.

    A particle starts a new cluster when its kernel value to every existing
    representative falls below the threshold.  Deterministic in particle
    order; used to assert mode coverage, not to label particles.
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    state = build_stein_state(particles, np.zeros_like(particles), kernel)
    reps = [0]
    for i in range(1, particles.shape[0]):
        if np.max(state.gram[i, reps]) < threshold:
            reps.append(i)
    return len(reps)


def iterations_to_reach(result: PlanResult, target: float):
    """First traced iteration whose mean objective is at or below the target.

    Returns None when the trace never reaches it.
    """
    hit = np.flatnonzero(result.trace["mean_objective"] <= target)
    return int(result.trace["iteration"][hit[0]]) if hit.size else None


def plan(problem, config: PlannerConfig) -> PlanResult:
    """Dispatch to the planner selected by config.kind."""
    if config.kind == "csvn":
        return plan_csvn(problem, config)
    if config.kind == "csvgd":
        return plan_csvgd(problem, config)
    if config.kind == "chomp":
        return plan_chomp(problem, config)
    return plan_gpmp(problem, config)


def restore_feasible(problem, particles, metric, tol: float = RESTORE_TOL,
                     max_sweeps: int = RESTORE_MAX_SWEEPS):
    """Damped Newton projection of every particle onto the h = 0 manifold.

    Each sweep applies the minimum-metric-norm correction of the linearized
    equality constraints (a KKT solve with zero objective direction) until
    the worst violation is at or below ``tol`` or the sweep budget runs out.
    Inequalities are left to the main loop's slack handling.  Returns the
    particle array (modified in place) and the number of sweeps used.
    """
    particles = np.asarray(particles, dtype=float)
    d = particles.shape[1]
    mu = DAMPING_SCALE * np.trace(metric) / d
    zero = np.zeros(d)
    for sweep in range(max_sweeps):
        cevals = [problem.constraint(p) for p in particles]
        worst = max((np.abs(c.h).max() for c in cevals if c.n_eq), default=0.0)
        if worst <= tol:
            return particles, sweep
        for i, ceval in enumerate(cevals):
            if not ceval.n_eq:
                continue
            if ceval.n_ineq:
                ceval = replace(ceval, g=np.zeros(0), jac_g=np.zeros((d, 0)))
            sol, _, _ = solve_kkt_with_retry(metric, zero, ceval, mu)
            particles[i] = particles[i] + sol.delta_x
    return particles, max_sweeps


# ---------------------------------------------------------------------------
# Stein planners


def _finalize_stein(problem, config, particles, values, cevals, trace, queries,
                    started, aborted=False, message="", restore_sweeps=0):
    objectives = -values
    violations = np.array([np.abs(c.h).max() if c.n_eq else 0.0 for c in cevals])
    result = PlanResult(
        kind=config.kind, particles=particles,
        trace={k: np.asarray(v) for k, v in trace.items()},
        objectives=objectives, violations=violations, best_index=0,
        n_queries=queries, wall_time=perf_counter() - started,
        aborted=aborted, message=message, n_restore_sweeps=restore_sweeps)
    result.best_index = select_best(result, config.feasibility_tol)
    if isinstance(problem, TrajectoryProblem):
        result.metrics = tuple(trajectory_metrics(problem, p) for p in particles)
    return result


def _stein_loop(problem, config: PlannerConfig, newton: bool) -> PlanResult:
    started = perf_counter()
    n = config.n_particles
    eta = config.eta
    kernel = config.kernel if config.kernel is not None else problem.kernel_spec
    particles = problem.initial_particles(n, config.seed)
    # Problems with an analytic prior precision expose it as a constant
    # curvature seed.  The Newton loop keeps it out of the BFGS state (the
    # secant updates only track the remaining cost terms, so the stiff
    # prior block can never be corrupted by a large step); the first-order
    # loop uses it as the metric of a natural-gradient KKT step, which is
    # what lets the documented step sizes survive prior precisions with
    # eigenvalues in the thousands.
    seed_fn = getattr(problem, "hessian_seed", None)
    seed_hess = seed_fn() if seed_fn is not None else None
    metric = seed_hess if seed_hess is not None else np.eye(problem.dim)
    particles, restore_sweeps = restore_feasible(problem, particles, metric)
    kernel = calibrate_lengthscales(particles, kernel)
    values, scores = problem.scores(particles)
    queries = n
    cevals = [problem.constraint(p) for p in particles]
    bfgs = None
    if newton:
        if seed_hess is not None:
            eps = RESIDUAL_INIT_SCALE * np.trace(seed_hess) / problem.dim
            bfgs = np.repeat((eps * np.eye(problem.dim))[None, :, :], n, axis=0)
        else:
            bfgs = np.stack([bfgs_init(s) for s in scores])
    has_ineq = any(c.n_ineq for c in cevals)
    if has_ineq and not newton:
        raise ConfigError("inequalities need the csvn planner (slack KKT solve)")

    trace = {"iteration": [], "mean_objective": [], "mean_abs_h": [], "best_objective": []}
    if config.track_ksd:
        trace["ksd"] = []
    aborted = False
    message = ""

    for it in range(1, config.n_iterations + 1):
        anneal = anneal_scale(it, config.warmup)
        blocks = None
        if newton:
            blocks = bfgs if seed_hess is None else bfgs + seed_hess[None, :, :]
        state = build_stein_state(particles, scores, kernel, anneal,
                                  hessians=blocks)
        phis = all_directions(state)
        deltas = np.empty_like(particles)
        reset = np.zeros(n, dtype=bool)
        if newton:
            hess = all_hessians(state)
            for i in range(n):
                mu = config.damping if config.damping is not None \
                    else DAMPING_SCALE * np.trace(hess[i]) / problem.dim
                slack = None
                if cevals[i].n_ineq:
                    # Slack is re-derived from the current g each sweep so
                    # g + s^2/2 = 0 holds exactly at every linearization
                    # point; integrating delta_s is unstable at this step
                    # size because the slack block is only mu-damped.
                    slack = SlackState(s=init_slack(cevals[i].g), beta=max(mu, 1e-8))
                try:
                    sol, _, retries = solve_kkt_with_retry(
                        hess[i], phis[i], cevals[i], mu, slack=slack)
                except NumericalError as exc:
                    aborted = True
                    message = f"KKT solve failed for particle {i} at iteration {it}: {exc}"
                    break
                deltas[i] = sol.delta_x
                reset[i] = retries > BFGS_RESET_RETRIES
            if aborted:
                break
        else:
            for i in range(n):
                if seed_hess is None:
                    deltas[i] = csvgd_step(phis[i], cevals[i])
                    continue
                try:
                    sol, _, _ = solve_kkt_with_retry(
                        seed_hess, phis[i], cevals[i],
                        1e-12 * np.trace(seed_hess) / problem.dim)
                except NumericalError as exc:
                    aborted = True
                    message = (f"projection solve failed for particle {i} "
                               f"at iteration {it}: {exc}")
                    break
                deltas[i] = sol.delta_x
            if aborted:
                break

        new_particles = particles + eta * deltas
        new_values, new_scores = problem.scores(new_particles)
        queries += n
        if newton:
            for i in range(n):
                step = new_particles[i] - particles[i]
                grad_diff = scores[i] - new_scores[i]
                if reset[i]:
                    if seed_hess is None:
                        bfgs[i] = bfgs_init(new_scores[i])
                    else:
                        eps = RESIDUAL_INIT_SCALE * np.trace(seed_hess) / problem.dim
                        bfgs[i] = eps * np.eye(problem.dim)
                elif seed_hess is None:
                    bfgs[i] = bfgs_update(bfgs[i], step, grad_diff)
                else:
                    bfgs[i] = bfgs_update(bfgs[i], step,
                                          grad_diff - seed_hess @ step)
        particles, values, scores = new_particles, new_values, new_scores
        cevals = [problem.constraint(p) for p in particles]

        mean_abs_h = float(np.mean([np.abs(c.h).mean() if c.n_eq else 0.0 for c in cevals]))
        trace["iteration"].append(it)
        trace["mean_objective"].append(float(np.mean(-values)))
        trace["mean_abs_h"].append(mean_abs_h)
        trace["best_objective"].append(float(np.min(-values)))
        if config.track_ksd:
            trace["ksd"].append(ksd(particles, scores, kernel))

        if config.tol_update is not None and config.tol_constraint is not None:
            mean_step = float(np.mean(np.linalg.norm(eta * deltas, axis=1)))
            if mean_abs_h <= config.tol_constraint and mean_step <= config.tol_update:
                break

    return _finalize_stein(problem, config, particles, values, cevals, trace,
                           queries, started, aborted, message, restore_sweeps)


def plan_csvn(problem, config: PlannerConfig) -> PlanResult:
    """Constrained SVN: per-particle KKT solves on the kernel-averaged Newton system."""
    if config.kind != "csvn":
        raise ConfigError(f"config is for {config.kind!r}, not csvn")
    return _stein_loop(problem, config, newton=True)


def plan_csvgd(problem, config: PlannerConfig) -> PlanResult:
    """Constrained SVGD: projected first-order updates with a restoration term.

    When the problem carries an analytic prior precision the projection is
    carried out in that metric (a natural-gradient step), which is what the
    GP-prior problems need for stability at first-order step sizes.
    """
    if config.kind != "csvgd":
        raise ConfigError(f"config is for {config.kind!r}, not csvgd")
    return _stein_loop(problem, config, newton=False)


# ---------------------------------------------------------------------------
# penalty baselines


def difference_operator(n_nodes: int, order: int, dt: float) -> np.ndarray:
    """Finite-difference matrix over all nodes: velocities (order 1) or
    accelerations (order 2), scaled by the grid step."""
    if order == 1:
        d = (np.eye(n_nodes, k=1) - np.eye(n_nodes))[:-1] / dt
    else:
        d = (np.eye(n_nodes, k=2) - 2 * np.eye(n_nodes, k=1) + np.eye(n_nodes))[:-2] / dt**2
    return d


def fd_velocities(positions, dt: float) -> np.ndarray:
    """Central-difference velocities (one-sided at the ends), batched."""
    pos = np.asarray(positions, dtype=float)
    vel = np.empty_like(pos)
    vel[..., 1:-1] = (pos[..., 2:] - pos[..., :-2]) / (2.0 * dt)
    vel[..., 0] = (pos[..., 1] - pos[..., 0]) / dt
    vel[..., -1] = (pos[..., -1] - pos[..., -2]) / dt
    return vel


def fd_unicycle_h(positions, dt: float) -> np.ndarray:
    """No-slip residuals at interior nodes from central-difference velocities.

    positions has shape (..., 3, n_nodes); returns (..., n_nodes - 2).
    """
    pos = np.asarray(positions, dtype=float)
    vx = (pos[..., 0, 2:] - pos[..., 0, :-2]) / (2.0 * dt)
    vy = (pos[..., 1, 2:] - pos[..., 1, :-2]) / (2.0 * dt)
    theta = pos[..., 2, 1:-1]
    return vy * np.cos(theta) - vx * np.sin(theta)


def fd_unicycle_penalty(positions, dt: float, weight: float):
    """Squared no-slip penalty weight * sum_t h_t^2 and its position gradient."""
    pos = np.asarray(positions, dtype=float)
    vx = (pos[..., 0, 2:] - pos[..., 0, :-2]) / (2.0 * dt)
    vy = (pos[..., 1, 2:] - pos[..., 1, :-2]) / (2.0 * dt)
    theta = pos[..., 2, 1:-1]
    sin, cos = np.sin(theta), np.cos(theta)
    h = vy * cos - vx * sin
    value = weight * np.sum(h**2, axis=-1)
    grad = np.zeros_like(pos)
    c = 2.0 * weight * h
    grad[..., 0, 2:] += c * (-sin) / (2.0 * dt)
    grad[..., 0, :-2] -= c * (-sin) / (2.0 * dt)
    grad[..., 1, 2:] += c * cos / (2.0 * dt)
    grad[..., 1, :-2] -= c * cos / (2.0 * dt)
    grad[..., 2, 1:-1] += c * (-vy * sin - vx * cos)
    return value, grad


def _baseline_loop(problem, config: PlannerConfig, covariant: bool) -> PlanResult:
    if not isinstance(problem, TrajectoryProblem):
        raise ConfigError("penalty baselines plan over trajectory problems only")
    started = perf_counter()
    spec = problem.spec
    grid = problem.grid
    n_t = grid.n_nodes
    if n_t < 4:
        raise ConfigError("baselines need at least four nodes")
    n, eta = config.n_particles, config.eta
    prior = config.baseline_prior
    interior = slice(1, n_t - 1)

    diff = difference_operator(n_t, prior.order, grid.dt)
    quad = diff.T @ diff
    chol = np.linalg.cholesky(prior.weight * quad[interior, interior])

    start = np.asarray(spec.start)
    goal = np.asarray(spec.goal)
    line = start[:, None] + (goal - start)[:, None] * (grid.times / grid.horizon)

    # Initialize on the straight line perturbed by draws from the smoothness
    # prior N(0, (w A)^-1), realized as L^-T z with L the metric's Cholesky.
    rng = np.random.default_rng(config.seed)
    z = rng.standard_normal((n, spec.n_dof, n_t - 2))
    noise = solve_triangular(chol.T, z.reshape(-1, n_t - 2).T, lower=False)
    free = line[None, :, interior] + config.init_scale * noise.T.reshape(n, spec.n_dof, -1)

    positions = np.broadcast_to(line, (n, spec.n_dof, n_t)).copy()
    use_penalty = spec.constraint == "unicycle"
    trace = {"iteration": [], "mean_objective": [], "mean_abs_h": [], "best_objective": []}

    def evaluate(free_nodes):
        """Objective, free-node gradient and mean |h| at the given interior nodes."""
        positions[..., interior] = free_nodes
        value, grad_pos, _ = problem.cost_terms(positions, np.zeros_like(positions))
        mean_abs_h = 0.0
        if use_penalty:
            pen, pen_grad = fd_unicycle_penalty(positions, grid.dt, prior.penalty_weight)
            value = value + pen
            grad_pos = grad_pos + pen_grad
            mean_abs_h = float(np.mean(np.abs(fd_unicycle_h(positions, grid.dt))))
        if not covariant:
            # gpmp keeps its smoothness prior in the objective itself; the
            # straight line is in the operator's null space for order 2.
            smooth = positions @ quad
            value = value + 0.5 * prior.weight * np.sum(smooth * positions, axis=(1, 2))
            grad_pos = grad_pos + prior.weight * smooth
        return value, grad_pos[..., interior], mean_abs_h

    values, grad_free, _ = evaluate(free)
    for it in range(1, config.n_iterations + 1):
        if covariant:
            flat = grad_free.reshape(-1, n_t - 2).T
            step = cho_solve((chol, True), flat).T.reshape(grad_free.shape)
        else:
            step = grad_free
        free = free - eta * step
        values, grad_free, mean_abs_h = evaluate(free)
        trace["iteration"].append(it)
        trace["mean_objective"].append(float(np.mean(values)))
        trace["mean_abs_h"].append(mean_abs_h)
        trace["best_objective"].append(float(np.min(values)))

    positions[..., interior] = free
    velocities = fd_velocities(positions, grid.dt)
    particles = problem.view.flatten(positions, velocities)
    cevals = [problem.constraint(p) for p in particles]
    violations = np.array([np.abs(c.h).max() if c.n_eq else 0.0 for c in cevals])
    result = PlanResult(
        kind=config.kind, particles=particles,
        trace={k: np.asarray(v) for k, v in trace.items()},
        objectives=np.asarray(values), violations=violations, best_index=0,
        n_queries=(config.n_iterations + 1) * n, wall_time=perf_counter() - started)
    result.best_index = select_best(result, config.feasibility_tol)
    result.metrics = tuple(trajectory_metrics(problem, p) for p in particles)
    return result


def plan_chomp(problem, config: PlannerConfig) -> PlanResult:
    """Covariant gradient descent on scene costs plus the squared penalty."""
    if config.kind != "chomp":
        raise ConfigError(f"config is for {config.kind!r}, not chomp")
    return _baseline_loop(problem, config, covariant=True)


def plan_gpmp(problem, config: PlannerConfig) -> PlanResult:
    """Plain gradient descent on the linear-prior MAP objective plus penalty."""
    if config.kind != "gpmp":
        raise ConfigError(f"config is for {config.kind!r}, not gpmp")
    return _baseline_loop(problem, config, covariant=False)

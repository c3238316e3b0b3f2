"""Tests for the Stein planning loops, penalty baselines and result handling.

Planner behavior is pinned with small synthetic problems implementing the
same protocol as the real ones: a quadratic target for Newton convergence, a
score-free hyperplane target for manifold adherence, and short trajectory
runs checked against manually assembled first steps.
"""

import numpy as np
import pytest

from steinplan import ConfigError, ConstraintEval, HsgpSpec, TimeGrid, TrajectoryKernelSpec
from steinplan.planners import (
    BaselinePriorSpec,
    PlannerConfig,
    PlanResult,
    count_trajectory_clusters,
    difference_operator,
    fd_unicycle_h,
    fd_unicycle_penalty,
    fd_velocities,
    iterations_to_reach,
    plan,
    plan_chomp,
    plan_csvgd,
    plan_csvn,
    plan_gpmp,
    restore_feasible,
    select_best,
    trajectory_metrics,
)
from steinplan.problems import (
    GaussianEllipseProblem,
    ProblemSpec,
    Scene2D,
    TrajectoryProblem,
)


class QuadraticProblem:
    """Unconstrained Gaussian in 3D, diagonal curvature."""

    def __init__(self):
        self.target = np.array([1.0, -2.0, 0.5])
        self.curv = np.array([2.0, 1.0, 4.0])
        self.kernel_spec = TrajectoryKernelSpec(metrics=(np.eye(3),), lengthscales=(1.0,))

    @property
    def dim(self):
        return 3

    def initial_particles(self, n, seed):
        rng = np.random.default_rng(seed)
        return self.target + 2.0 * rng.standard_normal((n, 3))

    def scores(self, particles):
        resid = np.atleast_2d(particles) - self.target
        return -0.5 * np.sum(self.curv * resid**2, axis=1), -self.curv * resid

    def constraint(self, xi):
        return ConstraintEval.unconstrained(3)


class HyperplaneProblem:
    """Flat (zero-score) target restricted to a plane a'x = b."""

    def __init__(self):
        self.normal = np.array([1.0, 2.0, -2.0]) / 3.0
        self.offset = 0.6
        self.kernel_spec = TrajectoryKernelSpec(metrics=(np.eye(3),), lengthscales=(1.0,))

    @property
    def dim(self):
        return 3

    def initial_particles(self, n, seed):
        rng = np.random.default_rng(seed)
        pts = rng.standard_normal((n, 3))
        # project onto the plane so the start is exactly feasible
        return pts - np.outer(pts @ self.normal - self.offset, self.normal)

    def scores(self, particles):
        particles = np.atleast_2d(particles)
        return np.zeros(particles.shape[0]), np.zeros_like(particles)

    def constraint(self, xi):
        h = np.array([float(self.normal @ xi) - self.offset])
        return ConstraintEval(h=h, jac_h=self.normal[:, None].copy())


class StiffQuadraticProblem(QuadraticProblem):
    """Curvature spread over four orders of magnitude, particles started
    close to the stiff coordinate's optimum (like prior samples are).  The
    score norm then reflects the soft coordinates only, so a scaled-identity
    curvature init overshoots the stiff one; the analytic seed does not."""

    def __init__(self):
        super().__init__()
        self.curv = np.array([1.0, 0.5, 4000.0])
        self.seed_calls = 0

    def initial_particles(self, n, seed):
        rng = np.random.default_rng(seed)
        pts = self.target + 2.0 * rng.standard_normal((n, 3))
        pts[:, 2] = self.target[2] + 0.02 * rng.standard_normal(n)
        return pts

    def hessian_seed(self):
        self.seed_calls += 1
        return np.diag(self.curv)


class StiffBareProblem(StiffQuadraticProblem):
    """Same stiff target without the analytic seed (fallback path)."""

    hessian_seed = None


class HalfSpaceProblem(QuadraticProblem):
    """Quadratic target with the inequality x_0 - bound <= 0."""

    bound = 0.2

    def constraint(self, xi):
        return ConstraintEval(
            h=np.zeros(0), jac_h=np.zeros((3, 0)),
            g=np.array([xi[0] - self.bound]),
            jac_g=np.array([[1.0], [0.0], [0.0]]))


class DuplicateConstraintProblem(QuadraticProblem):
    """Two identical equalities, so every Schur complement is singular."""

    def constraint(self, xi):
        jac = np.array([[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
        return ConstraintEval(h=np.array([xi[0], xi[0]]), jac_h=jac)


def pointmass_problem(**spec_overrides):
    scene = Scene2D(circles=[(0.5, 0.6, 0.4)], workspace=(-5.0, 5.0, -5.0, 5.0))
    fields = dict(scene=scene, dof_names=("x", "y"), start=(-2.0, -2.0),
                  goal=(2.0, 2.0), w_prior=1e-2, w_obstacle=1.0, w_length=0.1)
    fields.update(spec_overrides)
    grid = TimeGrid(horizon=4.0, n_nodes=10)
    hsgp = HsgpSpec("matern32", lengthscale=1.0, variance=1.0, noise=1e-4,
                    n_features=32, domain_radius=5.0)
    return TrajectoryProblem(ProblemSpec(**fields), grid, hsgp)


def unicycle_problem():
    scene = Scene2D(circles=[(0.0, 0.3, 0.5)], workspace=(-6.0, 6.0, -6.0, 6.0))
    spec = ProblemSpec(scene=scene, dof_names=("x", "y", "theta"),
                       start=(-2.0, -2.0, 0.6), goal=(2.0, 2.0, 0.6),
                       w_prior=1e-2, w_obstacle=1.0, constraint="unicycle")
    grid = TimeGrid(horizon=5.0, n_nodes=12)
    hsgp = HsgpSpec("matern32", lengthscale=1.25, variance=1.0, noise=1e-4,
                    n_features=32, domain_radius=6.25)
    return TrajectoryProblem(spec, grid, hsgp)


# ---------------------------------------------------------------------------
# config


def test_config_defaults_per_kind():
    assert PlannerConfig(kind="csvn").eta == 1.0
    assert PlannerConfig(kind="csvgd").eta == 0.5
    assert PlannerConfig(kind="chomp").eta == 1e-4
    assert PlannerConfig(kind="csvn", step_size=0.2).eta == 0.2
    assert PlannerConfig(kind="chomp").baseline_prior.order == 1
    assert PlannerConfig(kind="gpmp").baseline_prior.order == 2
    assert PlannerConfig(kind="gpmp").baseline_prior.penalty_weight == 100.0


def test_config_validation():
    with pytest.raises(ConfigError):
        PlannerConfig(kind="dijkstra")
    with pytest.raises(ConfigError):
        PlannerConfig(kind="csvn", n_particles=0)
    with pytest.raises(ConfigError):
        PlannerConfig(kind="csvn", n_iterations=0)
    with pytest.raises(ConfigError):
        PlannerConfig(kind="csvn", step_size=0.0)
    with pytest.raises(ConfigError):
        BaselinePriorSpec(order=3)
    with pytest.raises(ConfigError):
        plan_csvn(QuadraticProblem(), PlannerConfig(kind="csvgd"))


# ---------------------------------------------------------------------------
# Stein planners


def test_csvn_single_particle_is_damped_newton_on_quadratic():
    problem = QuadraticProblem()
    config = PlannerConfig(kind="csvn", n_particles=1, n_iterations=20, seed=3)
    result = plan_csvn(problem, config)
    assert np.allclose(result.particles[0], problem.target, atol=1e-6)
    assert not result.aborted
    assert result.trace["mean_objective"].shape == (20,)


def test_csvn_seeds_curvature_from_analytic_prior_precision():
    # On an exact quadratic the BFGS residual stays zero, so convergence is
    # linear at the Levenberg damping rate; 120 sweeps cover the soft
    # coordinates with margin.
    problem = StiffQuadraticProblem()
    config = PlannerConfig(kind="csvn", n_particles=1, n_iterations=120, seed=5)
    result = plan_csvn(problem, config)
    assert problem.seed_calls == 1
    assert not result.aborted
    assert np.allclose(result.particles[0], problem.target, atol=1e-8)


def test_csvn_identity_fallback_overshoots_stiff_coordinate():
    # documents why the seed exists: one scaled-identity Newton step
    # amplifies the stiff residual instead of contracting it
    problem = StiffBareProblem()
    config = PlannerConfig(kind="csvn", n_particles=1, n_iterations=1, seed=5)
    result = plan_csvn(problem, config)
    before = abs(problem.initial_particles(1, 5)[0, 2] - problem.target[2])
    after = abs(result.particles[0, 2] - problem.target[2])
    assert after > 10 * before


def test_csvn_toy_constraint_convergence():
    problem = GaussianEllipseProblem()
    config = PlannerConfig(kind="csvn", n_particles=16, n_iterations=300,
                           warmup=30, seed=0)
    result = plan_csvn(problem, config)
    assert not result.aborted
    assert result.violations.max() <= 1e-5
    # late-phase constraint decay: far tighter than at the start
    assert result.trace["mean_abs_h"][-1] < 1e-2 * result.trace["mean_abs_h"][0]


def test_csvgd_stays_on_manifold_from_feasible_start():
    problem = HyperplaneProblem()
    config = PlannerConfig(kind="csvgd", n_particles=12, n_iterations=50, seed=1)
    result = plan_csvgd(problem, config)
    assert np.all(result.trace["mean_abs_h"] <= 1e-8)
    assert result.violations.max() <= 1e-8


def test_csvgd_repulsion_spreads_flat_target():
    problem = HyperplaneProblem()
    config = PlannerConfig(kind="csvgd", n_particles=6, n_iterations=80, seed=2)
    result = plan_csvgd(problem, config)
    spread0 = np.var(problem.initial_particles(6, 2), axis=0).sum()
    assert np.var(result.particles, axis=0).sum() > spread0


def test_restore_feasible_projects_onto_equalities():
    problem = unicycle_problem()
    particles = problem.initial_particles(6, 0)
    before = max(np.abs(problem.constraint(p).h).max() for p in particles)
    restored, sweeps = restore_feasible(problem, particles, problem.hessian_seed())
    after = max(np.abs(problem.constraint(p).h).max() for p in restored)
    assert before > 0.1
    assert after <= 1e-9
    assert 1 <= sweeps <= 20


def test_restore_feasible_without_equalities_is_identity():
    problem = HalfSpaceProblem()
    particles = problem.initial_particles(4, 1)
    copy = particles.copy()
    restored, sweeps = restore_feasible(problem, particles, np.eye(3))
    assert sweeps == 0
    assert np.array_equal(restored, copy)


def test_stein_loop_restores_before_first_sweep():
    problem = unicycle_problem()
    init_violation = max(np.abs(problem.constraint(p).h).max()
                         for p in problem.initial_particles(6, 0))
    config = PlannerConfig(kind="csvn", n_particles=6, n_iterations=5,
                           warmup=5, seed=0)
    result = plan_csvn(problem, config)
    assert result.n_restore_sweeps >= 1
    # the first traced sweep starts from a projected ensemble, so its mean
    # violation sits far below the raw prior samples'
    assert result.trace["mean_abs_h"][0] < 0.05 * init_violation


def first_feasible_iteration(result, tol=1e-5):
    hit = np.flatnonzero(result.trace["mean_abs_h"] <= tol)
    return int(result.trace["iteration"][hit[0]]) if hit.size else None


def test_csvn_needs_fewer_iterations_than_csvgd_on_toy():
    problem = GaussianEllipseProblem()
    svgd = plan_csvgd(problem, PlannerConfig(
        kind="csvgd", n_particles=16, n_iterations=600, warmup=30, seed=0))
    svn = plan_csvn(problem, PlannerConfig(
        kind="csvn", n_particles=16, n_iterations=600, warmup=30, seed=0))
    it_svgd = first_feasible_iteration(svgd)
    it_svn = first_feasible_iteration(svn)
    assert it_svgd is not None and it_svn is not None
    assert it_svn < it_svgd


def test_csvn_handles_inequality_via_slack():
    problem = HalfSpaceProblem()
    config = PlannerConfig(kind="csvn", n_particles=8, n_iterations=250,
                           warmup=20, seed=4)
    result = plan_csvn(problem, config)
    assert not result.aborted
    final_g = np.array([p[0] - problem.bound for p in result.particles])
    assert final_g.max() <= 1e-2


def test_csvgd_rejects_inequalities():
    with pytest.raises(ConfigError):
        plan_csvgd(HalfSpaceProblem(), PlannerConfig(kind="csvgd", n_particles=4,
                                                     n_iterations=5))


def test_csvn_aborts_on_unsolvable_kkt_and_keeps_trace():
    problem = DuplicateConstraintProblem()
    config = PlannerConfig(kind="csvn", n_particles=3, n_iterations=10, seed=5)
    result = plan_csvn(problem, config)
    assert result.aborted
    assert "KKT" in result.message
    assert result.trace["iteration"].size == 0
    assert result.particles.shape == (3, 3)


def test_stein_early_stop_on_tolerances():
    problem = QuadraticProblem()
    config = PlannerConfig(kind="csvn", n_particles=1, n_iterations=500,
                           tol_update=1e-10, tol_constraint=1e-10, seed=6)
    result = plan_csvn(problem, config)
    assert result.trace["iteration"].size < 500


def test_stein_determinism():
    problem = GaussianEllipseProblem()
    config = PlannerConfig(kind="csvn", n_particles=8, n_iterations=30, seed=7)
    a = plan_csvn(problem, config)
    b = plan_csvn(problem, config)
    assert np.array_equal(a.particles, b.particles)
    for key in a.trace:
        assert np.array_equal(a.trace[key], b.trace[key])
    assert a.n_queries == b.n_queries


def test_plan_dispatch():
    problem = QuadraticProblem()
    result = plan(problem, PlannerConfig(kind="csvn", n_particles=2, n_iterations=3))
    assert result.kind == "csvn"


def test_ksd_trace_optional():
    problem = QuadraticProblem()
    config = PlannerConfig(kind="csvgd", n_particles=5, n_iterations=8,
                           track_ksd=True, seed=8)
    result = plan_csvgd(problem, config)
    assert result.trace["ksd"].shape == (8,)
    assert np.all(result.trace["ksd"] >= 0.0)


# ---------------------------------------------------------------------------
# finite-difference helpers


def test_difference_operator_shapes_and_values():
    d1 = difference_operator(5, 1, 0.5)
    assert d1.shape == (4, 5)
    x = np.array([0.0, 1.0, 3.0, 6.0, 10.0])
    assert np.allclose(d1 @ x, np.array([1.0, 2.0, 3.0, 4.0]) / 0.5)
    d2 = difference_operator(6, 2, 1.0)
    assert d2.shape == (4, 6)
    line = np.linspace(-1.0, 7.0, 6)
    assert np.allclose(d2 @ line, 0.0, atol=1e-12)


def test_fd_velocities_exact_on_quadratic():
    dt = 0.3
    t = np.arange(7) * dt
    pos = (2.0 * t**2 - t)[None, :]
    vel = fd_velocities(pos, dt)
    exact = 4.0 * t - 1.0
    assert np.allclose(vel[0, 1:-1], exact[1:-1], atol=1e-12)
    # one-sided ends are first-order only
    assert vel[0, 0] == pytest.approx((pos[0, 1] - pos[0, 0]) / dt)


def test_fd_unicycle_penalty_gradient_matches_finite_differences():
    rng = np.random.default_rng(9)
    pos = 0.2 * rng.standard_normal((3, 9))
    dt = 0.4
    _, grad = fd_unicycle_penalty(pos, dt, weight=100.0)
    step = 1e-6
    flat = pos.ravel()
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        bump = np.zeros_like(flat)
        bump[i] = step
        up = fd_unicycle_penalty((flat + bump).reshape(3, 9), dt, 100.0)[0]
        dn = fd_unicycle_penalty((flat - bump).reshape(3, 9), dt, 100.0)[0]
        fd[i] = (up - dn) / (2 * step)
    assert np.allclose(grad.ravel(), fd, rtol=1e-5, atol=1e-4)


def test_fd_unicycle_h_zero_for_aligned_straight_line():
    t = np.linspace(0.0, 1.0, 8)
    pos = np.vstack([t, t, np.full(8, np.pi / 4)])  # heading along the diagonal
    assert np.allclose(fd_unicycle_h(pos, t[1] - t[0]), 0.0, atol=1e-14)


# ---------------------------------------------------------------------------
# baselines


def test_chomp_stays_at_cost_free_optimum():
    problem = pointmass_problem(w_obstacle=0.0, w_length=0.0)
    config = PlannerConfig(kind="chomp", n_particles=2, n_iterations=50,
                           init_scale=0.0, seed=10)
    result = plan_chomp(problem, config)
    pos, _ = problem.view.unflatten(result.particles[0])
    line = np.array(problem.spec.start)[:, None] + (
        np.array(problem.spec.goal) - np.array(problem.spec.start))[:, None] \
        * (problem.grid.times / problem.grid.horizon)
    assert np.allclose(pos, line, atol=1e-12)


def test_chomp_first_step_matches_covariant_oracle():
    problem = pointmass_problem()
    config = PlannerConfig(kind="chomp", n_particles=1, n_iterations=1,
                           init_scale=0.0, seed=11)
    result = plan_chomp(problem, config)

    grid = problem.grid
    n_t = grid.n_nodes
    start = np.array(problem.spec.start)
    goal = np.array(problem.spec.goal)
    line = start[:, None] + (goal - start)[:, None] * (grid.times / grid.horizon)
    _, grad_pos, _ = problem.cost_terms(line[None], np.zeros((1, 2, n_t)))
    diff = difference_operator(n_t, 1, grid.dt)
    metric = (diff.T @ diff)[1:-1, 1:-1]
    expected = line[:, 1:-1] - config.eta * np.linalg.solve(metric, grad_pos[0][:, 1:-1].T).T

    pos, _ = problem.view.unflatten(result.particles[0])
    assert np.allclose(pos[:, 1:-1], expected, atol=1e-10)


def test_gpmp_converges_to_prior_mean_without_costs():
    scene = Scene2D(workspace=(-5.0, 5.0, -5.0, 5.0))
    spec = ProblemSpec(scene=scene, dof_names=("x", "y"), start=(-1.0, 0.5),
                       goal=(1.0, -0.5), w_obstacle=0.0, w_length=0.0)
    grid = TimeGrid(horizon=2.0, n_nodes=8)
    hsgp = HsgpSpec("matern32", lengthscale=0.5, variance=1.0, noise=1e-4,
                    n_features=32, domain_radius=2.5)
    problem = TrajectoryProblem(spec, grid, hsgp)
    config = PlannerConfig(kind="gpmp", n_particles=3, n_iterations=4000,
                           step_size=5e-4, init_scale=0.4, seed=12)
    result = plan_gpmp(problem, config)
    line = np.array(spec.start)[:, None] + (
        np.array(spec.goal) - np.array(spec.start))[:, None] * (grid.times / grid.horizon)
    for p in result.particles:
        pos, _ = problem.view.unflatten(p)
        assert np.allclose(pos, line, atol=1e-3)


def test_gpmp_first_step_matches_objective_gradient():
    problem = pointmass_problem()
    config = PlannerConfig(kind="gpmp", n_particles=1, n_iterations=1,
                           init_scale=0.0, seed=13)
    result = plan_gpmp(problem, config)

    grid = problem.grid
    n_t = grid.n_nodes
    start = np.array(problem.spec.start)
    goal = np.array(problem.spec.goal)
    line = start[:, None] + (goal - start)[:, None] * (grid.times / grid.horizon)
    quad = (lambda d: d.T @ d)(difference_operator(n_t, 2, grid.dt))

    def objective(free):
        pos = line.copy()
        pos[:, 1:-1] = free
        cost = problem.cost_terms(pos[None], np.zeros((1, 2, n_t)))[0][0]
        return cost + 0.5 * np.sum((pos @ quad) * pos)

    free0 = line[:, 1:-1]
    step = 1e-6
    fd = np.zeros_like(free0)
    for d in range(2):
        for t in range(n_t - 2):
            bump = np.zeros_like(free0)
            bump[d, t] = step
            fd[d, t] = (objective(free0 + bump) - objective(free0 - bump)) / (2 * step)
    pos, _ = problem.view.unflatten(result.particles[0])
    assert np.allclose(pos[:, 1:-1], free0 - config.eta * fd, atol=1e-9)


def test_baselines_reject_non_trajectory_problems():
    with pytest.raises(ConfigError):
        plan_chomp(QuadraticProblem(), PlannerConfig(kind="chomp", n_iterations=2))


def test_baseline_unicycle_runs_and_reports_violation():
    problem = unicycle_problem()
    config = PlannerConfig(kind="chomp", n_particles=4, n_iterations=300,
                           init_scale=0.3, seed=14)
    result = plan_chomp(problem, config)
    assert result.trace["mean_abs_h"].shape == (300,)
    assert np.all(result.violations > 0)
    assert result.metrics is not None
    assert result.n_queries == 301 * 4


def test_baseline_determinism():
    problem = pointmass_problem()
    config = PlannerConfig(kind="gpmp", n_particles=3, n_iterations=40,
                           init_scale=0.2, seed=15)
    a = plan_gpmp(problem, config)
    b = plan_gpmp(problem, config)
    assert np.array_equal(a.particles, b.particles)
    for key in a.trace:
        assert np.array_equal(a.trace[key], b.trace[key])


# ---------------------------------------------------------------------------
# selection, metrics, clustering


def fake_result(objectives, violations):
    n = len(objectives)
    return PlanResult(
        kind="csvn", particles=np.zeros((n, 2)), trace={},
        objectives=np.asarray(objectives, dtype=float),
        violations=np.asarray(violations, dtype=float),
        best_index=0, n_queries=0, wall_time=0.0)


def test_select_best_prefers_feasible():
    result = fake_result([0.1, 5.0, 1.0], [1.0, 1e-6, 0.5])
    assert select_best(result, feasibility_tol=1e-4) == 1


def test_select_best_all_feasible_takes_argmin():
    result = fake_result([3.0, 1.0, 2.0], [0.0, 0.0, 0.0])
    assert select_best(result) == 1


def test_select_best_matches_exhaustive_scan():
    rng = np.random.default_rng(16)
    for _ in range(30):
        objectives = rng.standard_normal(6)
        violations = np.abs(rng.standard_normal(6)) * (rng.random(6) > 0.5)
        result = fake_result(objectives, violations)
        tol = 1e-4
        feasible = [i for i in range(6) if violations[i] <= tol]
        if feasible:
            expected = min(feasible, key=lambda i: objectives[i])
        else:
            expected = min(range(6), key=lambda i: (violations[i], objectives[i]))
        assert select_best(result, tol) == expected


def test_trajectory_metrics_straight_line():
    problem = pointmass_problem(w_obstacle=0.0)
    grid = problem.grid
    line = np.array(problem.spec.start)[:, None] + (
        np.array(problem.spec.goal) - np.array(problem.spec.start))[:, None] \
        * (grid.times / grid.horizon)
    vel = np.broadcast_to(((np.array(problem.spec.goal)
                            - np.array(problem.spec.start)) / grid.horizon)[:, None],
                          line.shape).copy()
    xi = problem.view.flatten(line, vel)
    metrics = trajectory_metrics(problem, xi)
    assert metrics["length"] == pytest.approx(np.linalg.norm(
        np.array(problem.spec.goal) - np.array(problem.spec.start)), rel=1e-12)
    assert metrics["smoothness"] == pytest.approx(0.0, abs=1e-24)
    assert metrics["violation_mse"] == 0.0


def test_trajectory_metrics_unit_violation():
    problem = unicycle_problem()
    pos = np.zeros((3, problem.grid.n_nodes))
    pos[0] = np.linspace(-2.0, 2.0, problem.grid.n_nodes)
    pos[1] = np.linspace(-2.0, 2.0, problem.grid.n_nodes)
    vel = np.zeros_like(pos)
    vel[1] = 1.0  # pure sideways slip with theta = 0
    pos[2] = 0.0
    xi = problem.view.flatten(pos, vel)
    metrics = trajectory_metrics(problem, xi)
    pos2, vel2 = problem.view.unflatten(xi)
    h = vel2[1, 1:-1] * np.cos(pos2[2, 1:-1]) - vel2[0, 1:-1] * np.sin(pos2[2, 1:-1])
    assert metrics["violation_mse"] == pytest.approx(float(np.mean(h**2)), rel=1e-12)


def test_trajectory_metrics_match_recompute_oracle():
    problem = pointmass_problem()
    rng = np.random.default_rng(17)
    for _ in range(10):
        xi = problem.initial_particles(1, int(rng.integers(1000)))[0]
        metrics = trajectory_metrics(problem, xi)
        pos, vel = problem.view.unflatten(xi)
        length = sum(float(np.linalg.norm(pos[:, t + 1] - pos[:, t]))
                     for t in range(pos.shape[1] - 1))
        dv = [float(np.sum((vel[:, t + 1] - vel[:, t])**2))
              for t in range(vel.shape[1] - 1)]
        assert metrics["length"] == pytest.approx(length, rel=1e-12)
        assert metrics["smoothness"] == pytest.approx(np.mean(dv), rel=1e-12)


def test_cluster_count_separated_groups():
    kernel = TrajectoryKernelSpec(metrics=(np.eye(2),), lengthscales=(1.0,))
    tight = np.random.default_rng(18).normal(0.0, 0.01, (10, 2))
    far = tight + np.array([50.0, 0.0])
    assert count_trajectory_clusters(np.vstack([tight, far]), kernel) == 2
    assert count_trajectory_clusters(tight, kernel) == 1


def test_iterations_to_reach():
    result = fake_result([0.0], [0.0])
    result.trace = {"iteration": np.array([1, 2, 3]),
                    "mean_objective": np.array([5.0, 3.0, 1.0])}
    assert iterations_to_reach(result, 3.5) == 2
    assert iterations_to_reach(result, 0.5) is None

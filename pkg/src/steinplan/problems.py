"""2D planning scenes, trajectory costs with analytic gradients, and problems.

A trajectory problem couples three ingredients behind the score/constraint
interface the planners consume: per-DOF joint position/velocity priors
(conditioned on the boundary and restricted to the free nodes), scene costs
(obstacle, path length, joint limits) and an optional equality constraint set
(the unicycle no-slip condition).  The decision vector holds, per DOF, the
free position nodes followed by the free velocity nodes; TrajectoryView maps
between that flat layout and full node arrays.

All cost functions are batched: they accept arbitrary leading axes so one
call evaluates the whole particle set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .constraints import ConstraintEval
from .errors import ConfigError
from .gp_prior import (
    BoundaryCondition,
    HsgpSpec,
    JointGpPrior,
    Observation,
    TimeGrid,
    build_joint_prior,
    condition_prior,
    restrict_prior,
    sample_prior,
)
from .stein import TrajectoryKernelSpec

#: Smoothing inside the path-length norm, sqrt(|dq|^2 + eps^2).
PATH_EPS = 1e-8

#: Observation noise used to pin clamped boundary nodes before restriction.
CLAMP_NOISE = 1e-12

COST_MODES = ("exp", "hinge")
CONSTRAINT_KINDS = ("none", "unicycle")


# ---------------------------------------------------------------------------
# scene geometry


@dataclass(frozen=True)
class Scene2D:
    """Planar obstacle scene: circles, axis-aligned boxes, workspace bounds.

    ``circles`` rows are (cx, cy, radius); ``boxes`` rows are
    (cx, cy, half_x, half_y); ``workspace`` is (xmin, xmax, ymin, ymax).
    """

    circles: np.ndarray = ()
    boxes: np.ndarray = ()
    workspace: tuple = (-10.0, 10.0, -10.0, 10.0)

    def __post_init__(self):
        circles = np.asarray(self.circles, dtype=float).reshape(-1, 3) \
            if np.size(self.circles) else np.zeros((0, 3))
        boxes = np.asarray(self.boxes, dtype=float).reshape(-1, 4) \
            if np.size(self.boxes) else np.zeros((0, 4))
        if not np.all(np.isfinite(circles)) or not np.all(np.isfinite(boxes)):
            raise ConfigError("obstacle parameters must be finite")
        if circles.shape[0] and np.any(circles[:, 2] <= 0):
            raise ConfigError("circle radii must be positive")
        if boxes.shape[0] and np.any(boxes[:, 2:] <= 0):
            raise ConfigError("box half extents must be positive")
        ws = tuple(float(v) for v in self.workspace)
        if len(ws) != 4:
            raise ConfigError("workspace must be (xmin, xmax, ymin, ymax)")
        if not (ws[0] < ws[1] and ws[2] < ws[3]):
            raise ConfigError(f"degenerate workspace bounds {ws}")
        object.__setattr__(self, "circles", circles)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "workspace", ws)

    @property
    def n_obstacles(self) -> int:
        return self.circles.shape[0] + self.boxes.shape[0]

    def contains(self, point) -> bool:
        """Whether the point lies inside the workspace rectangle."""
        x, y = float(point[0]), float(point[1])
        xmin, xmax, ymin, ymax = self.workspace
        return xmin <= x <= xmax and ymin <= y <= ymax


def sdf_with_gradient(scene: Scene2D, points):
    """Signed distance to the nearest obstacle and its spatial gradient.

    ``points`` has shape (..., 2); returns (distance (...,), gradient
    (..., 2)).  Negative inside an obstacle.  An empty scene yields +inf
    with a zero gradient.  The gradient is the unit direction away from the
    closest obstacle; on the (measure-zero) non-smooth sets of the distance
    field an arbitrary subgradient is returned.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != 2:
        raise ConfigError(f"points must have a trailing axis of size 2, got {pts.shape}")
    batch = pts.shape[:-1]
    if scene.n_obstacles == 0:
        return np.full(batch, np.inf), np.zeros(batch + (2,))

    dists = []
    grads = []
    if scene.circles.shape[0]:
        delta = pts[..., None, :] - scene.circles[:, :2]
        norm = np.linalg.norm(delta, axis=-1)
        dists.append(norm - scene.circles[:, 2])
        safe = np.where(norm > 0, norm, 1.0)
        grads.append(delta / safe[..., None])
    if scene.boxes.shape[0]:
        delta = pts[..., None, :] - scene.boxes[:, :2]
        q = np.abs(delta) - scene.boxes[:, 2:]
        outside = np.maximum(q, 0.0)
        out_norm = np.linalg.norm(outside, axis=-1)
        inner = np.minimum(np.max(q, axis=-1), 0.0)
        dists.append(out_norm + inner)
        # Outside: gradient follows the clipped offset; inside: one-hot on
        # the axis of least penetration.
        onehot = np.zeros_like(q)
        np.put_along_axis(onehot, np.argmax(q, axis=-1)[..., None], 1.0, axis=-1)
        safe = np.where(out_norm > 0, out_norm, 1.0)
        gq = np.where(out_norm[..., None] > 0, outside / safe[..., None], onehot)
        grads.append(np.sign(delta) * gq)

    dist = np.concatenate(dists, axis=-1)
    grad = np.concatenate(grads, axis=-2)
    nearest = np.argmin(dist, axis=-1)
    d = np.take_along_axis(dist, nearest[..., None], axis=-1)[..., 0]
    g = np.take_along_axis(grad, nearest[..., None, None], axis=-2)[..., 0, :]
    return d, g


def signed_distance(scene: Scene2D, point) -> float:
    """Signed distance from a single point to the nearest obstacle."""
    point = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(point)):
        raise ConfigError("query point must be finite")
    d, _ = sdf_with_gradient(scene, point)
    return float(d)


# ---------------------------------------------------------------------------
# costs


def obstacle_cost(positions_xy, scene: Scene2D, mode: str = "exp",
                  safety_margin: float = 0.0):
    """Obstacle cost summed over position nodes, with its analytic gradient.

    ``positions_xy`` has shape (..., n_nodes, 2).  ``exp`` mode charges
    exp(-d) per node for a smooth everywhere-active cost; ``hinge`` charges
    max(0, margin - d), active only within the safety margin.  Returns
    (value (...,), gradient (..., n_nodes, 2)).
    """
    if mode not in COST_MODES:
        raise ConfigError(f"cost mode must be one of {COST_MODES}, got {mode!r}")
    pts = np.asarray(positions_xy, dtype=float)
    d, g = sdf_with_gradient(scene, pts)
    if mode == "exp":
        per_node = np.exp(-d)
        grad = -per_node[..., None] * g
    else:
        active = safety_margin - d > 0
        per_node = np.where(active, safety_margin - d, 0.0)
        grad = np.where(active[..., None], -g, 0.0)
    return per_node.sum(axis=-1), grad


def path_length_cost(positions):
    """Smoothed path length sum_t sqrt(|q_{t+1} - q_t|^2 + eps^2) and gradient.

    ``positions`` has shape (..., n_dof, n_nodes); the norm runs over the DOF
    axis.  The eps floor keeps the cost differentiable at repeated nodes (a
    trajectory of n identical nodes costs about n * eps).
    """
    pos = np.asarray(positions, dtype=float)
    if pos.shape[-1] < 2:
        raise ConfigError("path length needs at least two nodes")
    diff = pos[..., 1:] - pos[..., :-1]
    seg = np.sqrt(np.sum(diff**2, axis=-2) + PATH_EPS**2)
    w = diff / seg[..., None, :]
    grad = np.zeros_like(pos)
    grad[..., 1:] += w
    grad[..., :-1] -= w
    return seg.sum(axis=-1), grad


def joint_limit_penalty(positions, lower, upper, weight: float = 1.0):
    """Weighted squared hinge penalty on per-DOF position bounds.

    ``positions`` has shape (..., n_dof, n_nodes); ``lower``/``upper`` are
    per-DOF bounds.  Returns (value (...,), gradient (..., n_dof, n_nodes)).
    """
    pos = np.asarray(positions, dtype=float)
    lower = np.asarray(lower, dtype=float)[:, None]
    upper = np.asarray(upper, dtype=float)[:, None]
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ConfigError("joint limits must be finite")
    if np.any(lower >= upper):
        raise ConfigError("lower limits must lie strictly below upper limits")
    over = np.maximum(pos - upper, 0.0)
    under = np.maximum(lower - pos, 0.0)
    value = weight * np.sum(over**2 + under**2, axis=(-2, -1))
    grad = weight * 2.0 * (over - under)
    return value, grad


# ---------------------------------------------------------------------------
# decision-vector layout


@dataclass(frozen=True)
class TrajectoryView:
    """Map between the flat decision vector and (position, velocity) node arrays.

    Per DOF the decision vector holds the free position nodes followed by the
    free velocity nodes, DOFs concatenated in order.  Clamped nodes carry the
    fixed values given here, are filled back in by ``unflatten`` and never
    appear in the vector, so ``flatten`` is a pure selection; applied to
    node-space gradient arrays it therefore also yields the decision-space
    gradient.
    """

    n_dof: int
    n_nodes: int
    fixed_pos_mask: np.ndarray
    fixed_pos_value: np.ndarray
    fixed_vel_mask: np.ndarray = None
    fixed_vel_value: np.ndarray = None

    def __post_init__(self):
        if self.n_dof < 1 or self.n_nodes < 2:
            raise ConfigError("view needs at least one DOF and two nodes")
        shape = (self.n_dof, self.n_nodes)

        def as_mask(mask, value, name):
            mask = np.zeros(shape, dtype=bool) if mask is None \
                else np.asarray(mask, dtype=bool)
            value = np.zeros(shape) if value is None \
                else np.asarray(value, dtype=float)
            if mask.shape != shape or value.shape != shape:
                raise ConfigError(f"{name} arrays must have shape {shape}")
            return mask, np.where(mask, value, 0.0)

        pm, pv = as_mask(self.fixed_pos_mask, self.fixed_pos_value, "fixed position")
        vm, vv = as_mask(self.fixed_vel_mask, self.fixed_vel_value, "fixed velocity")
        if np.all(pm) and np.all(vm):
            raise ConfigError("every node is clamped; nothing left to optimize")
        object.__setattr__(self, "fixed_pos_mask", pm)
        object.__setattr__(self, "fixed_pos_value", pv)
        object.__setattr__(self, "fixed_vel_mask", vm)
        object.__setattr__(self, "fixed_vel_value", vv)

        # Flat index of each (dof, node) slot in the decision vector, -1 when
        # clamped; built per DOF as [free positions; free velocities].
        pos_index = np.full(shape, -1, dtype=int)
        vel_index = np.full(shape, -1, dtype=int)
        slices = []
        start = 0
        for d in range(self.n_dof):
            free_p = np.flatnonzero(~pm[d])
            free_v = np.flatnonzero(~vm[d])
            pos_index[d, free_p] = start + np.arange(free_p.size)
            vel_index[d, free_v] = start + free_p.size + np.arange(free_v.size)
            slices.append(slice(start, start + free_p.size + free_v.size))
            start += free_p.size + free_v.size
        object.__setattr__(self, "_pos_index", pos_index)
        object.__setattr__(self, "_vel_index", vel_index)
        object.__setattr__(self, "_dof_slices", tuple(slices))
        object.__setattr__(self, "_dim", start)

    @classmethod
    def from_clamps(cls, n_dof: int, n_nodes: int, position_clamps=(),
                    velocity_clamps=()) -> "TrajectoryView":
        """Build a view from (dof, node, value) clamp triples."""
        pm = np.zeros((n_dof, n_nodes), dtype=bool)
        pv = np.zeros((n_dof, n_nodes))
        vm = np.zeros((n_dof, n_nodes), dtype=bool)
        vv = np.zeros((n_dof, n_nodes))
        for mask, val, clamps in ((pm, pv, position_clamps), (vm, vv, velocity_clamps)):
            for dof, node, value in clamps:
                if not (0 <= dof < n_dof and 0 <= node < n_nodes):
                    raise ConfigError(f"clamp ({dof}, {node}) outside the grid")
                mask[dof, node] = True
                val[dof, node] = value
        return cls(n_dof, n_nodes, pm, pv, vm, vv)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def dof_slices(self) -> tuple:
        return self._dof_slices

    def position_index(self, dof: int, node: int) -> int:
        """Decision-vector index of a position node, -1 when clamped."""
        return int(self._pos_index[dof, node])

    def velocity_index(self, dof: int, node: int) -> int:
        return int(self._vel_index[dof, node])

    def prior_indices(self, dof: int) -> np.ndarray:
        """Free indices into that DOF's stacked [positions; velocities] prior."""
        free_p = np.flatnonzero(~self.fixed_pos_mask[dof])
        free_v = np.flatnonzero(~self.fixed_vel_mask[dof])
        return np.concatenate([free_p, self.n_nodes + free_v])

    def unflatten(self, xi):
        """Expand decision vectors (..., dim) to node arrays (..., n_dof, n_nodes)."""
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self._dim:
            raise ConfigError(f"decision vector has {xi.shape[-1]} entries, expected {self._dim}")
        pos = np.where(self.fixed_pos_mask, self.fixed_pos_value,
                       xi[..., np.maximum(self._pos_index, 0)])
        vel = np.where(self.fixed_vel_mask, self.fixed_vel_value,
                       xi[..., np.maximum(self._vel_index, 0)])
        return pos, vel

    def flatten(self, positions, velocities):
        """Select the free entries of node arrays into decision vectors."""
        positions = np.asarray(positions, dtype=float)
        velocities = np.asarray(velocities, dtype=float)
        shape = (self.n_dof, self.n_nodes)
        if positions.shape[-2:] != shape or velocities.shape[-2:] != shape:
            raise ConfigError(f"node arrays must end in shape {shape}")
        batch = positions.shape[:-2]
        xi = np.empty(batch + (self._dim,))
        free_p = ~self.fixed_pos_mask
        free_v = ~self.fixed_vel_mask
        xi[..., self._pos_index[free_p]] = positions[..., free_p]
        xi[..., self._vel_index[free_v]] = velocities[..., free_v]
        return xi


# ---------------------------------------------------------------------------
# non-holonomic constraint


def unicycle_constraint(view: TrajectoryView, xi) -> ConstraintEval:
    """No-lateral-slip equalities vy cos(theta) - vx sin(theta) = 0.

    One equality per interior node, evaluated on the trajectory's velocity
    variables (not finite differences), with the analytic Jacobian with
    respect to the full decision vector.  Requires the (x, y, theta) layout.
    """
    if view.n_dof != 3:
        raise ConfigError("unicycle constraint needs the (x, y, theta) layout")
    pos, vel = view.unflatten(np.asarray(xi, dtype=float))
    nodes = np.arange(1, view.n_nodes - 1)
    theta = pos[2, nodes]
    vx = vel[0, nodes]
    vy = vel[1, nodes]
    sin, cos = np.sin(theta), np.cos(theta)
    h = vy * cos - vx * sin
    jac = np.zeros((view.dim, nodes.size))
    cols = np.arange(nodes.size)
    for rows, values in (
        (view._vel_index[0, nodes], -sin),
        (view._vel_index[1, nodes], cos),
        (view._pos_index[2, nodes], -vy * sin - vx * cos),
    ):
        free = rows >= 0
        jac[rows[free], cols[free]] = values[free]
    return ConstraintEval(h=h, jac_h=jac)


# ---------------------------------------------------------------------------
# problem assembly


@dataclass(frozen=True)
class ProblemSpec:
    """Scene, layout, boundary states and cost weights of a planning task."""

    scene: Scene2D
    dof_names: tuple
    start: tuple
    goal: tuple
    w_prior: float = 1e-2
    w_obstacle: float = 1.0
    w_length: float = 0.0
    w_limits: float = 0.0
    cost_mode: str = "exp"
    safety_margin: float = 0.0
    constraint: str = "none"
    limit_lower: tuple = None
    limit_upper: tuple = None

    def __post_init__(self):
        names = tuple(str(n) for n in self.dof_names)
        start = tuple(float(v) for v in self.start)
        goal = tuple(float(v) for v in self.goal)
        if len(names) < 1 or len(set(names)) != len(names):
            raise ConfigError("dof_names must be nonempty and distinct")
        if len(start) != len(names) or len(goal) != len(names):
            raise ConfigError("start/goal must list one value per DOF")
        for w, label in ((self.w_prior, "w_prior"), (self.w_obstacle, "w_obstacle"),
                         (self.w_length, "w_length"), (self.w_limits, "w_limits")):
            if w < 0:
                raise ConfigError(f"{label} must be >= 0, got {w}")
        if self.cost_mode not in COST_MODES:
            raise ConfigError(f"cost_mode must be one of {COST_MODES}")
        if self.constraint not in CONSTRAINT_KINDS:
            raise ConfigError(f"constraint must be one of {CONSTRAINT_KINDS}")
        if self.constraint == "unicycle" and names != ("x", "y", "theta"):
            raise ConfigError("unicycle constraint needs dof_names ('x', 'y', 'theta')")
        if len(names) >= 2:
            for label, state in (("start", start), ("goal", goal)):
                if not self.scene.contains(state[:2]):
                    raise ConfigError(f"{label} position lies outside the workspace")
        if (self.limit_lower is None) != (self.limit_upper is None):
            raise ConfigError("joint limits need both lower and upper bounds")
        if self.limit_lower is not None:
            lo = tuple(float(v) for v in self.limit_lower)
            hi = tuple(float(v) for v in self.limit_upper)
            if len(lo) != len(names) or len(hi) != len(names):
                raise ConfigError("joint limits must list one bound per DOF")
            object.__setattr__(self, "limit_lower", lo)
            object.__setattr__(self, "limit_upper", hi)
        object.__setattr__(self, "dof_names", names)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "goal", goal)

    @property
    def n_dof(self) -> int:
        return len(self.dof_names)


class TrajectoryProblem:
    """A planning task over flattened position/velocity trajectories.

    Builds one joint prior per DOF (conditioned on the boundary, restricted
    to the free nodes of the shared TrajectoryView) and exposes the batched
    score, the per-particle constraint set and the prior-induced trajectory
    kernel.  The goal is either clamped out of the decision vector or pulled
    in softly by conditioning the prior on a noisy goal observation.
    """

    def __init__(self, spec: ProblemSpec, grid: TimeGrid, hsgp: HsgpSpec, *,
                 start_var: float = 1e-4, goal_mode: str = "clamp",
                 goal_noise: float = 1e-4, kernel_metric: str = "precision",
                 lengthscale_factor: float = 1.0):
        if goal_mode not in ("clamp", "condition"):
            raise ConfigError(f"goal_mode must be clamp or condition, got {goal_mode!r}")
        if kernel_metric not in ("covariance", "precision"):
            raise ConfigError("kernel_metric must be covariance or precision")
        self.spec = spec
        self.grid = grid
        self.hsgp = hsgp
        self.goal_mode = goal_mode

        last = grid.n_nodes - 1
        clamps = [(d, 0, spec.start[d]) for d in range(spec.n_dof)]
        if goal_mode == "clamp":
            clamps += [(d, last, spec.goal[d]) for d in range(spec.n_dof)]
        self.view = TrajectoryView.from_clamps(spec.n_dof, grid.n_nodes, clamps)

        self.priors = []
        for d in range(spec.n_dof):
            boundary = BoundaryCondition(spec.start[d], start_var, spec.goal[d])
            prior = build_joint_prior(hsgp, grid, boundary)
            observations = [Observation("position", 0, spec.start[d], CLAMP_NOISE)]
            if goal_mode == "clamp":
                observations.append(Observation("position", last, spec.goal[d], CLAMP_NOISE))
            else:
                observations.append(Observation("position", last, spec.goal[d], goal_noise))
            prior = condition_prior(prior, observations)
            self.priors.append(restrict_prior(prior, self.view.prior_indices(d)))

        metrics = tuple(p.cov if kernel_metric == "covariance"
                        else np.linalg.inv(p.cov) for p in self.priors)
        self.kernel_spec = TrajectoryKernelSpec(
            metrics=metrics, lengthscales=(1.0,) * spec.n_dof,
            lengthscale_factor=lengthscale_factor)
        self._hessian_seed = None

    @property
    def dim(self) -> int:
        return self.view.dim

    def initial_particles(self, n: int, seed: int) -> np.ndarray:
        """Draw n particles from the per-DOF priors, one independent stream each."""
        out = np.empty((n, self.dim))
        children = np.random.SeedSequence(seed).spawn(self.spec.n_dof)
        for sl, prior, child in zip(self.view.dof_slices, self.priors, children):
            out[:, sl] = sample_prior(prior, n, child)
        return out

    def cost_terms(self, positions, velocities):
        """Weighted scene costs and their node-space gradients, batched.

        Velocities are accepted for interface symmetry; none of the current
        costs read them, so their gradient comes back zero.
        """
        spec = self.spec
        value = np.zeros(positions.shape[:-2])
        grad_pos = np.zeros_like(positions)
        grad_vel = np.zeros_like(velocities)
        if spec.w_obstacle > 0 and spec.scene.n_obstacles > 0:
            xy = np.swapaxes(positions[..., :2, :], -2, -1)
            v, g = obstacle_cost(xy, spec.scene, spec.cost_mode, spec.safety_margin)
            value += spec.w_obstacle * v
            grad_pos[..., :2, :] += spec.w_obstacle * np.swapaxes(g, -2, -1)
        if spec.w_length > 0:
            v, g = path_length_cost(positions)
            value += spec.w_length * v
            grad_pos += spec.w_length * g
        if spec.w_limits > 0 and spec.limit_lower is not None:
            v, g = joint_limit_penalty(positions, spec.limit_lower, spec.limit_upper)
            value += spec.w_limits * v
            grad_pos += spec.w_limits * g
        return value, grad_pos, grad_vel

    def scores(self, particles):
        """Log unnormalized posterior and its gradient for every particle.

        log p(xi) = -w_prior * sum_d 0.5 (xi_d - mu_d)' K_d^-1 (xi_d - mu_d)
                    - (weighted scene costs); returns (values (N,), grads (N, dim)).
        """
        xi = np.atleast_2d(np.asarray(particles, dtype=float))
        value = np.zeros(xi.shape[0])
        grad = np.zeros_like(xi)
        for sl, prior in zip(self.view.dof_slices, self.priors):
            resid = xi[:, sl] - prior.mean
            nat = cho_solve((prior.chol, True), resid.T).T
            value -= self.spec.w_prior * 0.5 * np.sum(resid * nat, axis=1)
            grad[:, sl] -= self.spec.w_prior * nat
        positions, velocities = self.view.unflatten(xi)
        cost, grad_pos, grad_vel = self.cost_terms(positions, velocities)
        value -= cost
        grad -= self.view.flatten(grad_pos, grad_vel)
        return value, grad

    def log_posterior(self, xi):
        """Score of a single decision vector: (value, gradient)."""
        values, grads = self.scores(np.asarray(xi, dtype=float)[None, :])
        return float(values[0]), grads[0]

    def hessian_seed(self) -> np.ndarray:
        """Analytic prior part of -d^2 log p: w_prior * blkdiag(K_d^-1).

        The conditioned joint priors are stiff (precision eigenvalues span
        many orders of magnitude), so Newton curvature estimates must start
        from this block; quasi-Newton updates then only have to learn the
        scene-cost part.
        """
        if self._hessian_seed is None:
            seed = np.zeros((self.dim, self.dim))
            for sl, prior in zip(self.view.dof_slices, self.priors):
                eye = np.eye(prior.mean.shape[0])
                seed[sl, sl] = self.spec.w_prior * cho_solve((prior.chol, True), eye)
            self._hessian_seed = 0.5 * (seed + seed.T)
        return self._hessian_seed

    def constraint(self, xi) -> ConstraintEval:
        if self.spec.constraint == "unicycle":
            return unicycle_constraint(self.view, xi)
        return ConstraintEval.unconstrained(self.dim)


class GaussianEllipseProblem:
    """Correlated 2D Gaussian target with an ellipse equality constraint.

    h(x) = ((x - cx)/a)^2 + ((y - cy)/b)^2 - 1, so the feasible set is the
    ellipse boundary.  Particles initialize from the Gaussian itself.
    """

    def __init__(self, mean=(0.0, 0.0), cov=((1.0, 0.9), (0.9, 1.0)),
                 center=(0.0, 0.0), radii=(1.5, 1.0)):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.center = np.asarray(center, dtype=float)
        self.radii = np.asarray(radii, dtype=float)
        if self.mean.shape != (2,) or self.cov.shape != (2, 2):
            raise ConfigError("target mean must be 2D with a 2x2 covariance")
        if not np.allclose(self.cov, self.cov.T) or np.linalg.eigvalsh(self.cov)[0] <= 0:
            raise ConfigError("target covariance must be symmetric positive definite")
        if self.radii.shape != (2,) or np.any(self.radii <= 0):
            raise ConfigError("ellipse radii must be two positive values")
        self._chol = np.linalg.cholesky(self.cov)
        self.kernel_spec = TrajectoryKernelSpec(metrics=(np.eye(2),), lengthscales=(1.0,))

    @property
    def dim(self) -> int:
        return 2

    def initial_particles(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.mean + rng.standard_normal((n, 2)) @ self._chol.T

    def scores(self, particles):
        xi = np.atleast_2d(np.asarray(particles, dtype=float))
        resid = xi - self.mean
        nat = cho_solve((self._chol, True), resid.T).T
        return -0.5 * np.sum(resid * nat, axis=1), -nat

    def log_posterior(self, xi):
        values, grads = self.scores(np.asarray(xi, dtype=float)[None, :])
        return float(values[0]), grads[0]

    def hessian_seed(self) -> np.ndarray:
        """-d^2 log p is the constant precision matrix for a Gaussian target."""
        return cho_solve((self._chol, True), np.eye(2))

    def constraint(self, xi) -> ConstraintEval:
        xi = np.asarray(xi, dtype=float)
        scaled = (xi - self.center) / self.radii
        h = np.array([float(scaled @ scaled) - 1.0])
        jac = (2.0 * scaled / self.radii)[:, None]
        return ConstraintEval(h=h, jac_h=jac)

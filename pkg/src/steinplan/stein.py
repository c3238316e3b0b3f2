"""Trajectory-space kernel, SVGD/SVN directions, BFGS curvature and the KSD diagnostic.

Particles are flattened decision vectors.  The kernel is a generalized RBF
over per-DOF blocks,

    k(xi, xj) = (1/n_q) sum_k exp(-(1/sig_k^2) (xi_k - xj_k)' M_k (xi_k - xj_k)),

normalized by the number of blocks n_q so that k(x, x) = 1.  The metric M_k
defaults to the prior covariance block of that DOF; its inverse can be chosen
instead at construction.  All directions treat the particle set as a frozen
snapshot (Jacobi-style sweep): per-target quantities never depend on other
targets' updates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

LOG2 = float(np.log(2.0))


@dataclass(frozen=True)
class TrajectoryKernelSpec:
    """Blockwise generalized-RBF kernel over flattened decision vectors.

    ``metrics`` holds one symmetric PSD matrix per DOF block, laid out
    contiguously in the decision vector; ``lengthscales`` the matching
    sigma_k.  With ``normalize`` the kernel value at zero displacement is 1
    regardless of the number of blocks.  ``lengthscale_factor`` widens (or
    narrows) whatever ``calibrate_lengthscales`` picks; it is a per-scenario
    constant, fixed before the run.
    """

    metrics: tuple
    lengthscales: tuple
    normalize: bool = True
    lengthscale_factor: float = 1.0

    def __post_init__(self):
        if len(self.metrics) == 0:
            raise ConfigError("kernel needs at least one block metric")
        if len(self.metrics) != len(self.lengthscales):
            raise ConfigError("one lengthscale per metric block required")
        if not float(self.lengthscale_factor) > 0:
            raise ConfigError(
                f"lengthscale_factor must be positive, got {self.lengthscale_factor}")
        object.__setattr__(self, "metrics", tuple(np.asarray(m, dtype=float) for m in self.metrics))
        object.__setattr__(self, "lengthscales", tuple(float(s) for s in self.lengthscales))
        for m in self.metrics:
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ConfigError(f"metric blocks must be square, got shape {m.shape}")
            scale = max(np.abs(m).max(), 1.0)
            if not np.allclose(m, m.T, atol=1e-8 * scale):
                raise ConfigError("metric blocks must be symmetric")
            if np.linalg.eigvalsh(0.5 * (m + m.T))[0] < -1e-8 * scale:
                raise ConfigError("metric blocks must be positive semidefinite")
        for s in self.lengthscales:
            if not s > 0:
                raise ConfigError(f"kernel lengthscale must be positive, got {s}")

    @property
    def n_blocks(self) -> int:
        return len(self.metrics)

    @property
    def dim(self) -> int:
        return sum(m.shape[0] for m in self.metrics)

    @property
    def slices(self):
        out, start = [], 0
        for m in self.metrics:
            out.append(slice(start, start + m.shape[0]))
            start += m.shape[0]
        return out


def calibrate_lengthscales(particles: np.ndarray, spec: TrajectoryKernelSpec) -> TrajectoryKernelSpec:
    """Set each block lengthscale so the median pairwise kernel factor is 1/2,
    then widen by the spec's fixed per-scenario factor.

    Meant to run once on the initial particle set; the schedule-free kernel
    then stays fixed for the whole run.
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    n = particles.shape[0]
    if n < 2:
        return spec
    iu = np.triu_indices(n, k=1)
    sigmas = []
    for sl, metric in zip(spec.slices, spec.metrics):
        x = particles[:, sl]
        gram = x @ metric @ x.T
        diag = np.diag(gram)
        sq = diag[:, None] + diag[None, :] - 2.0 * gram
        med = float(np.median(sq[iu]))
        base = np.sqrt(med / LOG2) if med > 0 else 1.0
        sigmas.append(spec.lengthscale_factor * base)
    return replace(spec, lengthscales=tuple(sigmas))


def _check_dim(vec, spec, name):
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (spec.dim,):
        raise ConfigError(f"{name} has shape {vec.shape}, kernel expects ({spec.dim},)")
    return vec


def trajectory_kernel(xi, xj, spec: TrajectoryKernelSpec):
    """Kernel value k(xi, xj) and its gradient with respect to xj.

    The gradient of each block factor exp(-q/sig^2), q = d' M d with
    d = xi_k - xj_k, is (2/sig^2) exp(-q/sig^2) M d per block (and zero in
    the other blocks).
    """
    xi = _check_dim(xi, spec, "xi")
    xj = _check_dim(xj, spec, "xj")
    norm = spec.n_blocks if spec.normalize else 1
    value = 0.0
    grad = np.zeros(spec.dim)
    for sl, metric, sigma in zip(spec.slices, spec.metrics, spec.lengthscales):
        d = xi[sl] - xj[sl]
        md = metric @ d
        factor = np.exp(-float(d @ md) / sigma**2)
        value += factor
        grad[sl] = (2.0 / sigma**2) * factor * md
    return value / norm, grad / norm


@dataclass
class SteinState:
    """Frozen per-sweep cache: scores, curvature, kernel Gram and gradients.

    ``grads[i, j]`` is the gradient of k(x_i, x_j) with respect to the second
    argument x_j.  ``hessians`` holds per-particle approximations of
    -d^2 log p (BFGS blocks) and may be None for first-order sweeps.
    """

    particles: np.ndarray
    scores: np.ndarray
    gram: np.ndarray
    grads: np.ndarray
    anneal: float = 1.0
    hessians: np.ndarray | None = None


def _pairwise_blocks(particles, spec):
    """Per-block pairwise kernel factors and metric products.

    Returns lists (factors, mx) with factors[k][i, j] = exp(-q_k(i,j)/sig_k^2)
    and mx[k] = X_k M_k, enough to rebuild values, gradients and the Stein
    kernel trace term without touching O(N^2 d^2) memory.
    """
    factors, mx = [], []
    for sl, metric, sigma in zip(spec.slices, spec.metrics, spec.lengthscales):
        x = particles[:, sl]
        p = x @ metric
        gram = p @ x.T
        diag = np.diag(gram)
        sq = np.maximum(diag[:, None] + diag[None, :] - 2.0 * gram, 0.0)
        factors.append(np.exp(-sq / sigma**2))
        mx.append(p)
    return factors, mx


def build_stein_state(particles, scores, spec: TrajectoryKernelSpec,
                      anneal: float = 1.0, hessians=None) -> SteinState:
    """Evaluate the kernel Gram matrix and all pairwise kernel gradients."""
    particles = np.asarray(particles, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if particles.ndim != 2 or particles.shape[1] != spec.dim:
        raise ConfigError(f"particles must have shape (N, {spec.dim})")
    if scores.shape != particles.shape:
        raise ConfigError("scores must match particle array shape")
    if hessians is not None:
        hessians = np.asarray(hessians, dtype=float)
        expected = (particles.shape[0], spec.dim, spec.dim)
        if hessians.shape != expected:
            raise ConfigError(f"hessians must have shape {expected}")
        for block in hessians:
            if not np.allclose(block, block.T, atol=1e-8 * max(1.0, np.abs(block).max())):
                raise ConfigError("per-particle Hessian approximations must be symmetric")
    n = particles.shape[0]
    norm = spec.n_blocks if spec.normalize else 1
    factors, mx = _pairwise_blocks(particles, spec)
    gram = sum(factors) / norm
    grads = np.zeros((n, n, spec.dim))
    for sl, sigma, fac, p in zip(spec.slices, spec.lengthscales, factors, mx):
        # grad of k(x_i, x_j) wrt x_j, block k: (2/sig^2) fac_ij M (x_i - x_j)
        coeff = (2.0 / sigma**2) * fac / norm
        grads[:, :, sl] = coeff[:, :, None] * (p[:, None, :] - p[None, :, :])
    return SteinState(particles=particles, scores=scores, gram=gram, grads=grads,
                      anneal=anneal, hessians=hessians)


def svgd_direction(particles, scores, spec: TrajectoryKernelSpec, target,
                   anneal: float = 1.0) -> np.ndarray:
    """Empirical SVGD direction at the target point.

    phi(y) = (1/N) sum_i [ anneal * score_i * k(x_i, y) + grad_{x_i} k(x_i, y) ],

    the second term being the repulsion (gradient with respect to the first,
    source, argument).  Annealing scales the score term only.
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    target = _check_dim(target, spec, "target")
    n = particles.shape[0]
    phi = np.zeros(spec.dim)
    for i in range(n):
        value, grad_j = trajectory_kernel(particles[i], target, spec)
        phi += anneal * scores[i] * value - grad_j
    return phi / n


def svn_block_hessian(particles, hessians, spec: TrajectoryKernelSpec,
                      target) -> np.ndarray:
    """Block-diagonal SVN operator at the target point.

    H(y) = (1/N) sum_i [ -d^2 log p(x_i) k(x_i, y)^2 + grad k(y, x_i) grad k(y, x_i)' ],

    with ``hessians[i]`` the (symmetric) approximation of -d^2 log p(x_i).
    The curvature term is never annealed: during warmup the weakened score
    runs against the full metric, so early repulsion-dominated steps stay
    tempered by the prior.  Levenberg damping is the solver's business, not
    added here.
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    hessians = np.asarray(hessians, dtype=float)
    target = _check_dim(target, spec, "target")
    n = particles.shape[0]
    if hessians.shape != (n, spec.dim, spec.dim):
        raise ConfigError(f"hessians must have shape {(n, spec.dim, spec.dim)}")
    out = np.zeros((spec.dim, spec.dim))
    for i in range(n):
        block = hessians[i]
        if not np.allclose(block, block.T, atol=1e-8 * max(1.0, np.abs(block).max())):
            raise ConfigError("per-particle Hessian approximations must be symmetric")
        value, grad_j = trajectory_kernel(particles[i], target, spec)
        # grad of k(y, x_i) wrt y equals grad_j by symmetry of the kernel.
        out += block * value**2 + np.outer(grad_j, grad_j)
    return out / n


def all_directions(state: SteinState) -> np.ndarray:
    """SVGD directions for every particle as target, from one cached sweep."""
    n = state.particles.shape[0]
    attract = state.anneal * (state.gram.T @ state.scores)
    repulse = -state.grads.sum(axis=0)
    return (attract + repulse) / n


def all_hessians(state: SteinState) -> np.ndarray:
    """SVN operators for every particle as target, from one cached sweep.

    Annealing never touches the curvature: see ``svn_block_hessian``.
    """
    if state.hessians is None:
        raise ConfigError("state was built without per-particle Hessians")
    n, d = state.particles.shape
    k2 = state.gram**2
    flat = state.hessians.reshape(n, d * d)
    out = (k2.T @ flat).reshape(n, d, d)
    # sum_i grad_ij grad_ij' as one batched GEMM per target j
    g = np.ascontiguousarray(state.grads.transpose(1, 0, 2))
    out += g.transpose(0, 2, 1) @ g
    return out / n


def bfgs_init(score: np.ndarray) -> np.ndarray:
    """Initial curvature block: identity scaled by the score magnitude."""
    score = np.asarray(score, dtype=float)
    return max(float(np.linalg.norm(score)), 1e-8) * np.eye(score.shape[0])


def bfgs_update(mat: np.ndarray, step: np.ndarray, grad_diff: np.ndarray) -> np.ndarray:
    """Standard BFGS update of a Hessian approximation.

    H' = H - (H s s' H) / (s' H s) + (y y') / (y' s).

    The update is skipped (H returned unchanged) when the curvature condition
    s' y > 1e-10 |s| |y| fails, which keeps the blocks positive definite.
    """
    s = np.asarray(step, dtype=float)
    y = np.asarray(grad_diff, dtype=float)
    sy = float(s @ y)
    if sy <= 1e-10 * np.linalg.norm(s) * np.linalg.norm(y) or sy == 0.0:
        return mat
    hs = mat @ s
    shs = float(s @ hs)
    if shs <= 0.0:
        return mat
    out = mat - np.outer(hs, hs) / shs + np.outer(y, y) / sy
    return 0.5 * (out + out.T)


def ksd(particles, scores, spec: TrajectoryKernelSpec) -> float:
    """Empirical (V-statistic) kernelized Stein discrepancy.

    KSD^2 = (1/N^2) sum_ij [ s_i' s_j k_ij + (s_i - s_j)' grad_j k_ij
                             + trace(grad_i grad_j k_ij) ],

    using that grad_i k = -grad_j k for this kernel.  Diagnostic only; the
    diagonal terms of the V-statistic make it strictly positive even for a
    perfect sample.
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    n = particles.shape[0]
    if n < 2:
        raise ConfigError("KSD needs at least two particles")
    state = build_stein_state(particles, scores, spec)
    total = float(np.einsum("ia,ja,ij->", scores, scores, state.gram))
    diff = scores[:, None, :] - scores[None, :, :]
    total += float(np.einsum("ijd,ijd->", diff, state.grads))
    norm = spec.n_blocks if spec.normalize else 1
    factors, mx = _pairwise_blocks(particles, spec)
    for metric, sigma, fac, p in zip(spec.metrics, spec.lengthscales, factors, mx):
        # trace of the mixed second derivative of one block factor:
        # (2/sig^2) e [ tr M - (2/sig^2) |M d|^2 ]
        msq = np.sum((p[:, None, :] - p[None, :, :]) ** 2, axis=-1)
        tr = np.trace(metric)
        total += float(np.sum((2.0 / sigma**2) * fac * (tr - (2.0 / sigma**2) * msq))) / norm
    return max(total / n**2, 0.0)


def anneal_scale(iteration: int, warmup_len: int) -> float:
    """Linear annealing ramp on the score term.

    Rises as iteration/warmup_len, floored at 1/warmup_len so the score never
    vanishes entirely, and capped at 1.  A warmup of zero disables annealing.
    """
    if iteration < 0:
        raise ConfigError(f"iteration must be >= 0, got {iteration}")
    if warmup_len <= 0:
        return 1.0
    return min(1.0, max(iteration, 1) / warmup_len)

"""Reduced-rank Gaussian-process priors over position/velocity trajectories.

A velocity-level GP with stationary kernel k is expanded in the Laplacian
eigenbasis of the interval [-L, L]:

    k(t, t') ~= sum_j S(sqrt(lam_j)) phi_j(t) phi_j(t'),

where phi_j(t) = sqrt(1/L) sin(pi j (t + L) / (2 L)), lam_j = (pi j / (2 L))^2
and S is the spectral density of k.  Because positions are exact time
integrals of the velocity, every block of the joint position/velocity
covariance has a closed form in terms of phi_j and its antiderivative:

    Cov(v(t), v(s)) = k(t, s) + sig_n^2 * delta(t - s)
    Cov(x(t), v(s)) = sum_j S_j I_j(t) phi_j(s)
    Cov(x(t), x(s)) = var(x_0) + sum_j S_j I_j(t) I_j(s) + min(t, s) sig_n^2

with I_j(t) = int_0^t phi_j(tau) dtau.  The white-noise floor sig_n^2 on the
velocity integrates to the Brownian min(t, s) term on the position block.

Time runs over [0, T] and is shifted to the centred coordinate u = t - T/2
before touching the basis, so the grid sits in the interior of [-L, L] and
boundary attenuation is negligible (L defaults to 1.25 T, which puts the grid
in the middle 40% of the domain).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .errors import ConfigError, NumericalError

KERNEL_FAMILIES = ("matern32", "squared_exponential")

#: Default ratio between the domain radius L and the grid horizon T.
DOMAIN_RADIUS_SCALE = 1.25


@dataclass(frozen=True)
class HsgpSpec:
    """Parameters of the reduced-rank velocity kernel.

    Attributes
    ----------
    kernel_family : str
        One of ``matern32`` or ``squared_exponential``.
    lengthscale : float
        Kernel lengthscale in time units, > 0.
    variance : float
        Kernel variance sigma^2, >= 0.
    noise : float
        White-noise floor sigma_n^2 on the velocity, >= 0.
    n_features : int
        Number of eigenfunctions m.  Zero is allowed as a degenerate
        diagnostic case (the kernel is then identically zero); building a
        prior requires m >= 1.
    domain_radius : float
        Half-width L of the expansion domain, in time units.
    """

    kernel_family: str
    lengthscale: float
    variance: float
    noise: float = 0.0
    n_features: int = 64
    domain_radius: float = 1.0

    def __post_init__(self):
        if self.kernel_family not in KERNEL_FAMILIES:
            raise ConfigError(
                f"unknown kernel family {self.kernel_family!r}; "
                f"expected one of {KERNEL_FAMILIES}"
            )
        if not self.lengthscale > 0:
            raise ConfigError(f"lengthscale must be positive, got {self.lengthscale}")
        if self.variance < 0:
            raise ConfigError(f"variance must be >= 0, got {self.variance}")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if self.n_features < 0 or int(self.n_features) != self.n_features:
            raise ConfigError(f"n_features must be a nonnegative integer, got {self.n_features}")
        if not self.domain_radius > 0:
            raise ConfigError(f"domain_radius must be positive, got {self.domain_radius}")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of n_nodes support times on [0, horizon]."""

    horizon: float
    n_nodes: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.n_nodes < 2:
            raise ConfigError(f"need at least two grid nodes, got {self.n_nodes}")

    @property
    def dt(self) -> float:
        return self.horizon / (self.n_nodes - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_nodes)

    def to_domain(self, t):
        """Shift times on [0, T] to the centred expansion coordinate."""
        return np.asarray(t, dtype=float) - 0.5 * self.horizon


@dataclass(frozen=True)
class BoundaryCondition:
    """Start distribution and goal used to shape the prior mean.

    The velocity mean is the constant (goal_mean - start_mean) / T, so the
    position mean interpolates start and goal.  Setting goal_mean equal to
    start_mean gives the zero-mean (pure diffusion) prior.
    """

    start_mean: float
    start_var: float
    goal_mean: float

    def __post_init__(self):
        if self.start_var < 0:
            raise ConfigError(f"start_var must be >= 0, got {self.start_var}")


def spectral_density(spec: HsgpSpec, omega):
    """Spectral density S(omega) of the chosen stationary kernel.

    Uses the angular-frequency convention S(w) = int k(r) exp(-i w r) dr,
    under which Matern-3/2 with unit parameters gives S(0) = 4 / sqrt(3) and
    the squared exponential gives S(0) = sqrt(2 pi).
    """
    omega = np.asarray(omega, dtype=float)
    ell = spec.lengthscale
    if spec.kernel_family == "matern32":
        return 12.0 * np.sqrt(3.0) * spec.variance * ell / (3.0 + (ell * omega) ** 2) ** 2
    return spec.variance * ell * np.sqrt(2.0 * np.pi) * np.exp(-0.5 * (ell * omega) ** 2)


def _check_domain(t, radius):
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > radius):
        raise ConfigError(f"basis input outside the active domain [-{radius}, {radius}]")
    return t


def basis_function(j, t, domain_radius):
    """Eigenfunction phi_j(t) = sqrt(1/L) sin(pi j (t + L) / (2 L)).

    ``j`` counts from 1; ``t`` is a centred domain coordinate with
    |t| <= domain_radius.  Both arguments broadcast.
    """
    j = np.asarray(j)
    if np.any(j < 1):
        raise ConfigError("feature index j counts from 1")
    t = _check_domain(t, domain_radius)
    big_l = domain_radius
    return np.sqrt(1.0 / big_l) * np.sin(np.pi * j * (t + big_l) / (2.0 * big_l))


def integrated_basis(j, t, domain_radius):
    """Antiderivative I_j(t) = int_0^t phi_j(tau) dtau, in closed form.

    I_j(t) = sqrt(1/L) * (2 L / (pi j)) * [cos(pi j / 2) - cos(pi j (t + L) / (2 L))].
    """
    j = np.asarray(j)
    if np.any(j < 1):
        raise ConfigError("feature index j counts from 1")
    t = _check_domain(t, domain_radius)
    big_l = domain_radius
    scale = 2.0 * np.sqrt(big_l) / (np.pi * j)
    return scale * (np.cos(0.5 * np.pi * j) - np.cos(np.pi * j * (t + big_l) / (2.0 * big_l)))


def _features(spec: HsgpSpec):
    """Feature indices 1..m and spectral weights S(sqrt(lam_j))."""
    j = np.arange(1, spec.n_features + 1)
    omega = np.pi * j / (2.0 * spec.domain_radius)
    return j, spectral_density(spec, omega)


def velocity_kernel(spec: HsgpSpec, t, s):
    """Reduced-rank kernel value sum_j S_j phi_j(t) phi_j(s).

    Inputs are centred domain coordinates (see TimeGrid.to_domain).  The
    white-noise floor is not included; it only enters covariance matrices,
    on the diagonal.
    """
    if spec.n_features == 0:
        return np.zeros(np.broadcast(np.asarray(t), np.asarray(s)).shape)[()]
    j, weights = _features(spec)
    pt = basis_function(j, np.asarray(t, dtype=float)[..., None], spec.domain_radius)
    ps = basis_function(j, np.asarray(s, dtype=float)[..., None], spec.domain_radius)
    return np.sum(weights * pt * ps, axis=-1)


def _grid_features(spec: HsgpSpec, grid: TimeGrid):
    """Basis and integrated-basis matrices over the mapped grid.

    Returns (weights, Phi, Iv) with Phi[i, j] = phi_j(u_i) and
    Iv[i, j] = int_0^{t_i} phi_j(u(tau)) dtau, the integral running over
    original time with the shift map absorbed into the endpoints.
    """
    if spec.domain_radius <= 0.5 * grid.horizon:
        raise ConfigError(
            "domain_radius must exceed half the grid horizon so the mapped grid "
            f"stays inside the active domain (L={spec.domain_radius}, T={grid.horizon})"
        )
    j, weights = _features(spec)
    u = grid.to_domain(grid.times)
    u0 = grid.to_domain(0.0)
    phi = basis_function(j, u[:, None], spec.domain_radius)
    iv = integrated_basis(j, u[:, None], spec.domain_radius) - integrated_basis(
        j, u0, spec.domain_radius
    )
    return weights, phi, iv


def joint_covariance(spec: HsgpSpec, grid: TimeGrid, x0_var: float):
    """Covariance blocks of the joint position/velocity prior on the grid.

    Returns (Cxx, Cxv, Cvv).  Cxx carries the start variance and the
    Brownian min(t, s) noise term, Cvv carries the noise floor on its
    diagonal, and the cross block Cxv is purely the smooth reduced-rank
    part, matching the displayed covariance formulas in the module
    docstring.
    """
    if x0_var < 0:
        raise ConfigError(f"x0_var must be >= 0, got {x0_var}")
    weights, phi, iv = _grid_features(spec, grid)
    t = grid.times
    cxx = x0_var + (iv * weights) @ iv.T + spec.noise * np.minimum.outer(t, t)
    cxv = (iv * weights) @ phi.T
    cvv = (phi * weights) @ phi.T + spec.noise * np.eye(grid.n_nodes)
    return cxx, cxv, cvv


def cholesky_with_jitter(mat: np.ndarray):
    """Lower Cholesky factor, adding diagonal jitter if the factorization fails.

    Jitter starts at 1e-12 * trace / dim and is escalated tenfold at most six
    times before giving up with a NumericalError that reports the smallest
    eigenvalue.
    """
    dim = mat.shape[0]
    base = 1e-12 * np.trace(mat) / dim
    if base <= 0:
        base = 1e-12
    jitter = 0.0
    for attempt in range(7):
        try:
            factor = np.linalg.cholesky(mat + jitter * np.eye(dim))
            return factor, jitter
        except np.linalg.LinAlgError:
            jitter = base * 10.0**attempt
    smallest = float(np.linalg.eigvalsh(mat)[0])
    raise NumericalError(
        f"matrix is not positive definite even after jitter {jitter:.3e} "
        f"(smallest eigenvalue {smallest:.3e})",
        smallest_eigenvalue=smallest,
    )


@dataclass
class JointGpPrior:
    """Gaussian prior over one degree of freedom's stacked (position, velocity) nodes.

    ``mean`` has length 2 n_t with positions first, ``cov`` is the matching
    block covariance and ``chol`` its lower Cholesky factor (computed with
    ``jitter`` added to the diagonal).
    """

    grid: TimeGrid
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(repr=False)
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def build_joint_prior(spec: HsgpSpec, grid: TimeGrid, boundary: BoundaryCondition) -> JointGpPrior:
    """Assemble the joint prior from kernel spec, grid and boundary condition."""
    if spec.n_features < 1:
        raise ConfigError("building a prior requires at least one feature")
    vel_mean_value = (boundary.goal_mean - boundary.start_mean) / grid.horizon
    t = grid.times
    mean = np.concatenate([boundary.start_mean + vel_mean_value * t,
                           np.full(grid.n_nodes, vel_mean_value)])
    cxx, cxv, cvv = joint_covariance(spec, grid, boundary.start_var)
    cov = np.block([[cxx, cxv], [cxv.T, cvv]])
    cov = 0.5 * (cov + cov.T)
    chol, jitter = cholesky_with_jitter(cov)
    return JointGpPrior(grid=grid, mean=mean, cov=cov, chol=chol, jitter=jitter)


def sample_prior(prior: JointGpPrior, n: int, seed: int) -> np.ndarray:
    """Draw n joint trajectories, one per row, deterministically from the seed."""
    if n < 1:
        raise ConfigError(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, prior.dim))
    return prior.mean + z @ prior.chol.T


@dataclass(frozen=True)
class Observation:
    """A noisy pointwise observation of the trajectory at a grid node."""

    kind: str  # "position" or "velocity"
    node: int
    value: float
    noise_var: float

    def __post_init__(self):
        if self.kind not in ("position", "velocity"):
            raise ConfigError(f"observation kind must be position or velocity, got {self.kind!r}")
        if self.noise_var < 0:
            raise ConfigError(f"noise_var must be >= 0, got {self.noise_var}")


def _observation_rows(prior: JointGpPrior, observations) -> np.ndarray:
    rows = np.zeros((len(observations), prior.dim))
    n_t = prior.grid.n_nodes
    for k, obs in enumerate(observations):
        if not 0 <= obs.node < n_t:
            raise ConfigError(f"observation node {obs.node} outside grid of {n_t} nodes")
        offset = 0 if obs.kind == "position" else n_t
        rows[k, offset + obs.node] = 1.0
    return rows


def condition_prior(prior: JointGpPrior, observations) -> JointGpPrior:
    """Condition the joint prior on noisy position/velocity observations.

    Standard Gaussian conditioning: with selection matrix H and noise R,

        mean' = mean + K H' (H K H' + R)^-1 (y - H mean)
        K'    = K - K H' (H K H' + R)^-1 H K.

    Raises NumericalError when the observation Gram matrix is singular.
    """
    if len(observations) == 0:
        return prior
    h = _observation_rows(prior, observations)
    y = np.array([obs.value for obs in observations], dtype=float)
    r = np.array([obs.noise_var for obs in observations], dtype=float)
    kh = prior.cov @ h.T
    gram = h @ kh + np.diag(r)
    gram = 0.5 * (gram + gram.T)
    # The Gram is PSD by construction, so Cholesky doubles as the singularity
    # check (plain solve can miss exact singularity on some LAPACK paths).
    try:
        gram_chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(gram)[0])
        raise NumericalError(
            f"singular observation Gram matrix (smallest eigenvalue {smallest:.3e})",
            smallest_eigenvalue=smallest,
        ) from None
    gain = cho_solve((gram_chol, True), kh.T).T
    mean = prior.mean + gain @ (y - h @ prior.mean)
    cov = prior.cov - gain @ kh.T
    cov = 0.5 * (cov + cov.T)
    chol, jitter = cholesky_with_jitter(cov)
    return JointGpPrior(grid=prior.grid, mean=mean, cov=cov, chol=chol, jitter=jitter)


def restrict_prior(prior: JointGpPrior, indices) -> JointGpPrior:
    """Marginal of the prior over a subset of stacked node indices.

    For a Gaussian the marginal is just the corresponding sub-mean and
    sub-covariance.  Used to drop clamped nodes from the decision vector.
    """
    indices = np.asarray(indices, dtype=int)
    cov = prior.cov[np.ix_(indices, indices)]
    chol, jitter = cholesky_with_jitter(cov)
    return JointGpPrior(
        grid=prior.grid, mean=prior.mean[indices], cov=cov, chol=chol, jitter=jitter
    )


def prior_quadratic_form(prior: JointGpPrior, xi: np.ndarray):
    """Value and gradient of 0.5 * (xi - mean)' K^-1 (xi - mean)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (prior.dim,):
        raise ConfigError(f"expected shape {(prior.dim,)}, got {xi.shape}")
    resid = xi - prior.mean
    grad = cho_solve((prior.chol, True), resid)
    return 0.5 * float(resid @ grad), grad

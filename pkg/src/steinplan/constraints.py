"""Constraint linearization containers, null-space projection and KKT solvers.

Equality-constrained Newton directions come from the saddle system

    [ H + mu I   J ] [ delta ]   [ phi ]
    [    J'      0 ] [ lam   ] = [ -h  ],

solved by factoring the damped curvature block and eliminating through the
Schur complement S = J' (H + mu I)^-1 J.  Inequalities g <= 0 enter through
squared slack variables, g + s^2 / 2 = 0, which augments the system with a
slack block and a second multiplier; the same factor-then-Schur path applies
to the augmented blocks.  Constraints are always evaluated at, and only act
on, the particle being updated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, NumericalError, SchurSingularError

#: Relative truncation threshold for pseudo-inverses and Schur-rank checks.
PINV_TOL = 1e-10

#: Floor inside the slack initialization sqrt.
SLACK_FLOOR = 1e-6

_EMPTY = np.zeros(0)


def _as_matrix(mat, rows, name):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != rows:
        raise ConfigError(f"{name} must be a matrix with {rows} rows, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ConfigError(f"{name} contains non-finite entries")
    return mat


@dataclass(frozen=True)
class ConstraintEval:
    """Constraint values and Jacobians at one particle.

    ``jac_h`` and ``jac_g`` store one column per constraint (shape d x m),
    so J' delta approximates the constraint change along a step delta.
    """

    h: np.ndarray
    jac_h: np.ndarray
    g: np.ndarray = field(default_factory=lambda: _EMPTY.copy())
    jac_g: np.ndarray | None = None

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        jac_h = np.asarray(self.jac_h, dtype=float)
        if jac_h.ndim != 2:
            raise ConfigError(f"jac_h must be 2-d, got shape {jac_h.shape}")
        if jac_h.shape[1] != h.shape[0]:
            raise ConfigError(
                f"jac_h has {jac_h.shape[1]} columns but h has {h.shape[0]} entries")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(jac_h))):
            raise ConfigError("constraint values and Jacobians must be finite")
        g = np.atleast_1d(np.asarray(self.g, dtype=float))
        jac_g = self.jac_g
        if jac_g is None:
            jac_g = np.zeros((jac_h.shape[0], g.shape[0]))
        jac_g = _as_matrix(jac_g, jac_h.shape[0], "jac_g")
        if jac_g.shape[1] != g.shape[0]:
            raise ConfigError(
                f"jac_g has {jac_g.shape[1]} columns but g has {g.shape[0]} entries")
        if not np.all(np.isfinite(g)):
            raise ConfigError("constraint values and Jacobians must be finite")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "jac_h", jac_h)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "jac_g", jac_g)

    @classmethod
    def unconstrained(cls, dim: int) -> "ConstraintEval":
        return cls(h=np.zeros(0), jac_h=np.zeros((dim, 0)))

    @property
    def dim(self) -> int:
        return self.jac_h.shape[0]

    @property
    def n_eq(self) -> int:
        return self.h.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.g.shape[0]


@dataclass(frozen=True)
class SlackState:
    """Squared-slack variables for inequality constraints, plus the drift weight beta."""

    s: np.ndarray
    beta: float

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.s, dtype=float))
        if not np.all(np.isfinite(s)):
            raise ConfigError("slack vector must be finite")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        object.__setattr__(self, "s", s)


@dataclass(frozen=True)
class KktSolution:
    """Directions, multipliers and residual norms of one KKT solve."""

    delta_x: np.ndarray
    delta_s: np.ndarray
    lam_h: np.ndarray
    lam_g: np.ndarray
    primal_residual: float
    dual_residual: float


def init_slack(g) -> np.ndarray:
    """Initial slack s_i = sqrt(max(-2 g_i, eps)), so g + s^2/2 ~ 0 where feasible."""
    g = np.atleast_1d(np.asarray(g, dtype=float))
    return np.sqrt(np.maximum(-2.0 * g, SLACK_FLOOR))


def nullspace_projection(jac, tol: float = PINV_TOL) -> np.ndarray:
    """Orthogonal projector onto the complement of the column space of ``jac``.

    Equals I - J (J'J)^-1 J' for full-rank J; rank deficiency is handled by
    truncating singular values below tol * sigma_max, so vacuous constraint
    directions leave the projector as the identity.
    """
    jac = np.asarray(jac, dtype=float)
    if jac.ndim != 2:
        raise ConfigError(f"jacobian must be 2-d, got shape {jac.shape}")
    if not np.all(np.isfinite(jac)):
        raise ConfigError("jacobian must be finite")
    dim = jac.shape[0]
    if jac.shape[1] == 0:
        return np.eye(dim)
    u, sing, _ = np.linalg.svd(jac, full_matrices=False)
    if sing.size == 0 or sing[0] == 0.0:
        return np.eye(dim)
    ur = u[:, sing > tol * sing[0]]
    return np.eye(dim) - ur @ ur.T


def csvgd_step(phi, ceval: ConstraintEval, tol: float = PINV_TOL) -> np.ndarray:
    """Projected SVGD step with linearized feasibility restoration.

    delta = P phi - pinv(J') h, so J' delta = -h for full-rank J: the Stein
    direction moves in the constraint tangent space while the special
    solution pulls the particle back onto the linearized manifold.
    """
    if ceval.n_ineq:
        raise ConfigError("csvgd_step handles equality constraints only")
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (ceval.dim,):
        raise ConfigError(f"phi must have shape ({ceval.dim},), got {phi.shape}")
    if ceval.n_eq == 0:
        return phi.copy()
    proj = nullspace_projection(ceval.jac_h, tol)
    restore = np.linalg.pinv(ceval.jac_h.T, rcond=tol) @ ceval.h
    return proj @ phi - restore


def _check_curvature(mat, name="H"):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ConfigError(f"{name} must be square, got shape {mat.shape}")
    scale = max(np.abs(mat).max(), 1.0)
    if not np.allclose(mat, mat.T, atol=1e-8 * scale):
        raise ConfigError(f"{name} must be symmetric")
    return mat


def _factor_spd(mat):
    try:
        return cho_factor(mat, lower=True)
    except np.linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(mat)[0])
        raise NumericalError(
            f"damped curvature block not positive definite "
            f"(smallest eigenvalue {smallest:.3e})",
            smallest_eigenvalue=smallest,
        ) from None


def _schur_factor(schur):
    schur = 0.5 * (schur + schur.T)
    eig = np.linalg.eigvalsh(schur)
    if eig.size and (eig[-1] <= 0.0 or eig[0] <= PINV_TOL * eig[-1]):
        raise SchurSingularError(
            f"constraint Schur complement singular at tolerance "
            f"(eigenvalue range [{eig[0]:.3e}, {eig[-1]:.3e}])",
            smallest_eigenvalue=float(eig[0]) if eig.size else 0.0,
        )
    return cho_factor(schur, lower=True)


def csvn_kkt_solve(hess, phi, ceval: ConstraintEval, damping: float) -> KktSolution:
    """Equality-constrained SVN direction via the Schur complement.

    Factors H + mu I once, forms S = J' (H + mu I)^-1 J, solves for the
    multiplier and back-substitutes.  Raises SchurSingularError when S is
    singular at tolerance (callers should increase damping and retry) and
    NumericalError when the damped curvature block cannot be factored.
    """
    if ceval.n_ineq:
        raise ConfigError("csvn_kkt_solve handles equality constraints only; "
                          "use slack_kkt_solve for inequalities")
    hess = _check_curvature(hess)
    dim = ceval.dim
    if hess.shape[0] != dim:
        raise ConfigError(f"H is {hess.shape[0]}x{hess.shape[0]} but constraints expect d={dim}")
    phi = np.asarray(phi, dtype=float)
    if damping < 0:
        raise ConfigError(f"damping must be >= 0, got {damping}")
    damped = hess + damping * np.eye(dim)
    factor = _factor_spd(damped)
    if ceval.n_eq == 0:
        delta = cho_solve(factor, phi)
        dual = float(np.linalg.norm(damped @ delta - phi))
        return KktSolution(delta_x=delta, delta_s=_EMPTY.copy(), lam_h=_EMPTY.copy(),
                           lam_g=_EMPTY.copy(), primal_residual=0.0, dual_residual=dual)
    jac = ceval.jac_h
    w = cho_solve(factor, jac)
    schur = jac.T @ w
    schur_factor = _schur_factor(schur)
    lam = cho_solve(schur_factor, w.T @ phi + ceval.h)
    delta = cho_solve(factor, phi) - w @ lam
    primal = float(np.linalg.norm(jac.T @ delta + ceval.h))
    dual = float(np.linalg.norm(damped @ delta + jac @ lam - phi))
    return KktSolution(delta_x=delta, delta_s=_EMPTY.copy(), lam_h=lam,
                       lam_g=_EMPTY.copy(), primal_residual=primal, dual_residual=dual)


def slack_kkt_solve(hess, phi, ceval: ConstraintEval, slack: SlackState,
                    damping: float) -> KktSolution:
    """Squared-slack KKT solve for mixed equality/inequality constraints.

    Primal block diag(H + mu I, mu I), constraint block [[Jh, Jg], [0, diag(s)]],
    right-hand side ([phi; -beta s], -[h; g + s^2/2]).  The damping mu fills
    the otherwise-zero slack-slack block, acting as a squared penalty on the
    slack rate of change.  Reduces exactly to csvn_kkt_solve when there are
    no inequalities.
    """
    hess = _check_curvature(hess)
    dim = ceval.dim
    m_g = ceval.n_ineq
    if slack.s.shape[0] != m_g:
        raise ConfigError(f"slack length {slack.s.shape[0]} != number of inequalities {m_g}")
    if m_g == 0:
        return csvn_kkt_solve(hess, phi, ceval, damping)
    if damping <= 0:
        raise ConfigError("slack solve needs strictly positive damping for the slack block")
    phi = np.asarray(phi, dtype=float)
    s = slack.s
    damped = hess + damping * np.eye(dim)
    factor = _factor_spd(damped)

    jac = np.hstack([ceval.jac_h, ceval.jac_g])          # d x (mh + mg)
    slack_rows = np.hstack([np.zeros((m_g, ceval.n_eq)), np.diag(s)])
    b_top = phi
    b_slack = -slack.beta * s
    c_vec = np.concatenate([ceval.h, ceval.g + 0.5 * s**2])

    # Apply the block-diagonal primal inverse: cho_solve on top, /mu below.
    w_top = cho_solve(factor, jac)
    ainv_b_top = cho_solve(factor, b_top)
    schur = jac.T @ w_top + slack_rows.T @ slack_rows / damping
    schur_factor = _schur_factor(schur)
    rhs = jac.T @ ainv_b_top + slack_rows.T @ b_slack / damping + c_vec
    lam = cho_solve(schur_factor, rhs)
    delta_x = ainv_b_top - w_top @ lam
    delta_s = (b_slack - slack_rows @ lam) / damping
    lam_h, lam_g = lam[:ceval.n_eq], lam[ceval.n_eq:]

    primal = float(np.linalg.norm(
        np.concatenate([ceval.jac_h.T @ delta_x + ceval.h,
                        ceval.jac_g.T @ delta_x + s * delta_s + ceval.g + 0.5 * s**2])))
    dual = float(np.linalg.norm(
        np.concatenate([damped @ delta_x + jac @ lam - phi,
                        damping * delta_s + s * lam_g - b_slack])))
    return KktSolution(delta_x=delta_x, delta_s=delta_s, lam_h=lam_h, lam_g=lam_g,
                       primal_residual=primal, dual_residual=dual)


def solve_kkt_with_retry(hess, phi, ceval: ConstraintEval, damping: float,
                         slack: SlackState | None = None, max_retries: int = 5):
    """KKT solve with the doubling-damping retry protocol.

    Returns (solution, damping_used, retries).  Damping doubles on each
    solver failure, at most ``max_retries`` times, then the last error
    propagates.
    """
    mu = damping
    for attempt in range(max_retries + 1):
        try:
            if slack is not None and ceval.n_ineq:
                return slack_kkt_solve(hess, phi, ceval, slack, mu), mu, attempt
            return csvn_kkt_solve(hess, phi, ceval, mu), mu, attempt
        except (SchurSingularError, NumericalError):
            if attempt == max_retries:
                raise
            mu = 2.0 * mu if mu > 0 else 1e-8
    raise AssertionError("unreachable")

"""Tests for null-space projection and the Schur-complement KKT solvers.

Every solve is checked against a dense assembly of the same saddle system
solved with a generic linear solver, and the projector against an
orthonormal basis of the Jacobian's left null space.
"""

import numpy as np
import pytest
from scipy.linalg import null_space

from steinplan import ConfigError, NumericalError, SchurSingularError
from steinplan.constraints import (
    ConstraintEval,
    SlackState,
    csvgd_step,
    csvn_kkt_solve,
    init_slack,
    nullspace_projection,
    slack_kkt_solve,
    solve_kkt_with_retry,
)


def random_equality_eval(rng, dim, m):
    jac = rng.standard_normal((dim, m))
    h = rng.standard_normal(m)
    return ConstraintEval(h=h, jac_h=jac)


def random_spd(rng, dim, shift=1.0):
    a = rng.standard_normal((dim, dim))
    return a @ a.T + shift * np.eye(dim)


def dense_equality_oracle(hess, phi, ceval, damping):
    d, m = ceval.dim, ceval.n_eq
    mat = np.zeros((d + m, d + m))
    mat[:d, :d] = hess + damping * np.eye(d)
    mat[:d, d:] = ceval.jac_h
    mat[d:, :d] = ceval.jac_h.T
    rhs = np.concatenate([phi, -ceval.h])
    sol = np.linalg.solve(mat, rhs)
    return sol[:d], sol[d:]


def dense_slack_oracle(hess, phi, ceval, slack, damping):
    d, mh, mg = ceval.dim, ceval.n_eq, ceval.n_ineq
    s = slack.s
    n = d + mg + mh + mg
    mat = np.zeros((n, n))
    rhs = np.zeros(n)
    mat[:d, :d] = hess + damping * np.eye(d)
    mat[d:d + mg, d:d + mg] = damping * np.eye(mg)
    mat[:d, d + mg:d + mg + mh] = ceval.jac_h
    mat[:d, d + mg + mh:] = ceval.jac_g
    mat[d:d + mg, d + mg + mh:] = np.diag(s)
    mat[d + mg:d + mg + mh, :d] = ceval.jac_h.T
    mat[d + mg + mh:, :d] = ceval.jac_g.T
    mat[d + mg + mh:, d:d + mg] = np.diag(s)
    rhs[:d] = phi
    rhs[d:d + mg] = -slack.beta * s
    rhs[d + mg:d + mg + mh] = -ceval.h
    rhs[d + mg + mh:] = -(ceval.g + 0.5 * s**2)
    sol = np.linalg.solve(mat, rhs)
    return sol[:d], sol[d:d + mg], sol[d + mg:d + mg + mh], sol[d + mg + mh:]


# ---------------------------------------------------------------------------
# projection


def test_projection_axis_constraint():
    jac = np.array([[1.0], [0.0]])
    assert np.allclose(nullspace_projection(jac), np.diag([0.0, 1.0]), atol=1e-14)


def test_projection_zero_jacobian_is_identity():
    assert np.allclose(nullspace_projection(np.zeros((3, 1))), np.eye(3))
    assert np.allclose(nullspace_projection(np.zeros((3, 0))), np.eye(3))


def test_projection_matches_nullspace_basis_oracle():
    rng = np.random.default_rng(0)
    jac = rng.standard_normal((6, 2))
    basis = null_space(jac.T)  # orthonormal basis of the complement
    oracle = basis @ basis.T
    assert np.allclose(nullspace_projection(jac), oracle, atol=1e-12)


def test_projection_identities_incl_rank_deficient():
    rng = np.random.default_rng(1)
    for trial in range(200):
        dim = rng.integers(2, 9)
        m = rng.integers(1, dim + 2)
        jac = rng.standard_normal((dim, m))
        if trial % 3 == 0 and m >= 2:
            jac[:, -1] = jac[:, 0]  # force rank deficiency
        if trial % 7 == 0:
            jac[:, rng.integers(m)] = 0.0
        p = nullspace_projection(jac)
        assert np.allclose(p, p.T, atol=1e-10)
        assert np.allclose(p @ p, p, atol=1e-10)
        assert np.max(np.abs(jac.T @ p)) < 1e-10 * max(1.0, np.abs(jac).max())


# ---------------------------------------------------------------------------
# projected SVGD step


def test_csvgd_tangent_direction_passthrough():
    rng = np.random.default_rng(2)
    jac = rng.standard_normal((5, 2))
    ceval = ConstraintEval(h=np.zeros(2), jac_h=jac)
    phi = nullspace_projection(jac) @ rng.standard_normal(5)
    delta = csvgd_step(phi, ceval)
    assert np.allclose(delta, phi, atol=1e-10)
    assert np.max(np.abs(jac.T @ delta)) < 1e-10


def test_csvgd_pure_restoration():
    rng = np.random.default_rng(3)
    jac = rng.standard_normal((6, 2))
    h = rng.standard_normal(2)
    ceval = ConstraintEval(h=h, jac_h=jac)
    delta = csvgd_step(np.zeros(6), ceval)
    assert np.allclose(jac.T @ delta, -h, atol=1e-10)


def test_csvgd_linearized_feasibility_random():
    rng = np.random.default_rng(4)
    for _ in range(50):
        dim = rng.integers(3, 10)
        m = rng.integers(1, dim)
        ceval = random_equality_eval(rng, dim, m)
        phi = rng.standard_normal(dim)
        delta = csvgd_step(phi, ceval)
        assert np.linalg.norm(ceval.jac_h.T @ delta + ceval.h) < 1e-8


def test_csvgd_unconstrained_returns_phi():
    ceval = ConstraintEval.unconstrained(4)
    phi = np.arange(4.0)
    assert np.allclose(csvgd_step(phi, ceval), phi)


def test_csvgd_rejects_inequalities():
    ceval = ConstraintEval(h=np.zeros(1), jac_h=np.ones((3, 1)),
                           g=np.array([-1.0]), jac_g=np.ones((3, 1)))
    with pytest.raises(ConfigError):
        csvgd_step(np.zeros(3), ceval)


# ---------------------------------------------------------------------------
# equality KKT


def test_kkt_unconstrained_is_damped_newton():
    rng = np.random.default_rng(5)
    hess = random_spd(rng, 4)
    phi = rng.standard_normal(4)
    sol = csvn_kkt_solve(hess, phi, ConstraintEval.unconstrained(4), damping=0.3)
    oracle = np.linalg.solve(hess + 0.3 * np.eye(4), phi)
    assert np.allclose(sol.delta_x, oracle, atol=1e-10)
    assert sol.lam_h.size == 0


def test_kkt_single_particle_newton_equivalence():
    # A one-particle SVN sweep is exactly damped Newton on log p: the kernel
    # is 1 and its gradient zero, so phi is the score and H the curvature.
    rng = np.random.default_rng(6)
    hess = random_spd(rng, 3)
    score = rng.standard_normal(3)
    mu = 1e-3 * np.trace(hess) / 3
    sol = csvn_kkt_solve(hess, score, ConstraintEval.unconstrained(3), damping=mu)
    standalone = np.linalg.solve(hess + mu * np.eye(3), score)
    assert np.allclose(sol.delta_x, standalone, atol=1e-12)


def test_kkt_matches_dense_oracle():
    rng = np.random.default_rng(7)
    for _ in range(60):
        dim = int(rng.integers(3, 12))
        m = int(rng.integers(1, dim))
        hess = random_spd(rng, dim)
        ceval = random_equality_eval(rng, dim, m)
        phi = rng.standard_normal(dim)
        mu = float(rng.uniform(1e-4, 0.5))
        sol = csvn_kkt_solve(hess, phi, ceval, mu)
        dx, lam = dense_equality_oracle(hess, phi, ceval, mu)
        scale = max(1.0, np.linalg.norm(dx))
        assert np.linalg.norm(sol.delta_x - dx) <= 1e-8 * scale
        assert np.allclose(sol.lam_h, lam, atol=1e-8 * max(1.0, np.linalg.norm(lam)))
        assert sol.primal_residual <= 1e-8 * max(1.0, np.linalg.norm(ceval.h))
        assert sol.dual_residual <= 1e-8 * max(1.0, np.linalg.norm(phi))


def test_kkt_identity_metric_matches_projection():
    rng = np.random.default_rng(8)
    jac = rng.standard_normal((5, 2))
    ceval = ConstraintEval(h=np.zeros(2), jac_h=jac)
    phi = nullspace_projection(jac) @ rng.standard_normal(5)
    kkt = csvn_kkt_solve(np.eye(5), phi, ceval, damping=0.0)
    assert np.allclose(kkt.delta_x, csvgd_step(phi, ceval), atol=1e-10)


def test_kkt_redundant_constraints_raise_schur_signal():
    rng = np.random.default_rng(9)
    jac = rng.standard_normal((5, 1))
    jac = np.hstack([jac, jac])  # exactly dependent columns
    ceval = ConstraintEval(h=np.zeros(2), jac_h=jac)
    with pytest.raises(SchurSingularError):
        csvn_kkt_solve(np.eye(5), np.zeros(5), ceval, damping=1e-3)


def test_kkt_indefinite_block_raises_numerical_error():
    ceval = ConstraintEval.unconstrained(2)
    with pytest.raises(NumericalError) as excinfo:
        csvn_kkt_solve(np.diag([1.0, -2.0]), np.ones(2), ceval, damping=0.0)
    assert excinfo.value.smallest_eigenvalue == pytest.approx(-2.0)


def test_kkt_asymmetric_hessian_rejected():
    ceval = ConstraintEval.unconstrained(2)
    with pytest.raises(ConfigError):
        csvn_kkt_solve(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones(2), ceval, 0.1)


def test_kkt_damping_monotonically_shrinks_step():
    rng = np.random.default_rng(10)
    hess = random_spd(rng, 5)
    phi = rng.standard_normal(5)
    ceval = ConstraintEval.unconstrained(5)
    norms = [np.linalg.norm(csvn_kkt_solve(hess, phi, ceval, mu).delta_x)
             for mu in (0.0, 0.1, 1.0, 10.0)]
    assert all(a > b for a, b in zip(norms, norms[1:]))


# ---------------------------------------------------------------------------
# slack KKT


def test_slack_stationary_feasible_point_is_fixed():
    # Strictly inactive inequality with vanishing gradient at the point:
    # g = -2, s = 2 gives g + s^2/2 = 0, phi = 0, so nothing should move.
    dim = 4
    ceval = ConstraintEval(h=np.zeros(0), jac_h=np.zeros((dim, 0)),
                           g=np.array([-2.0]), jac_g=np.zeros((dim, 1)))
    slack = SlackState(s=np.array([2.0]), beta=1e-3)
    hess = np.eye(dim)
    sol = slack_kkt_solve(hess, np.zeros(dim), ceval, slack, damping=1e-3)
    assert np.allclose(sol.delta_x, 0.0, atol=1e-12)
    assert np.allclose(sol.delta_s, 0.0, atol=1e-12)
    assert sol.lam_g[0] == pytest.approx(-slack.beta)


def test_slack_matches_dense_oracle():
    rng = np.random.default_rng(11)
    for _ in range(60):
        dim = int(rng.integers(4, 10))
        mh = int(rng.integers(0, 3))
        mg = int(rng.integers(1, 4))
        hess = random_spd(rng, dim)
        ceval = ConstraintEval(
            h=rng.standard_normal(mh), jac_h=rng.standard_normal((dim, mh)),
            g=rng.standard_normal(mg), jac_g=rng.standard_normal((dim, mg)))
        slack = SlackState(s=init_slack(ceval.g), beta=float(rng.uniform(1e-4, 1e-1)))
        mu = float(rng.uniform(1e-3, 0.5))
        phi = rng.standard_normal(dim)
        sol = slack_kkt_solve(hess, phi, ceval, slack, mu)
        dx, ds, lh, lg = dense_slack_oracle(hess, phi, ceval, slack, mu)
        scale = max(1.0, np.linalg.norm(np.concatenate([dx, ds])))
        assert np.linalg.norm(sol.delta_x - dx) <= 1e-8 * scale
        assert np.linalg.norm(sol.delta_s - ds) <= 1e-8 * scale
        assert np.allclose(sol.lam_h, lh, atol=1e-7 * max(1.0, np.abs(lh).max() if lh.size else 1.0))
        assert np.allclose(sol.lam_g, lg, atol=1e-7 * max(1.0, np.abs(lg).max()))
        assert sol.primal_residual <= 1e-8 * max(1.0, np.linalg.norm(np.concatenate([ceval.h, ceval.g])))


def test_slack_reduces_to_equality_solver():
    rng = np.random.default_rng(12)
    hess = random_spd(rng, 5)
    ceval = random_equality_eval(rng, 5, 2)
    phi = rng.standard_normal(5)
    slack = SlackState(s=np.zeros(0), beta=1e-3)
    a = slack_kkt_solve(hess, phi, ceval, slack, damping=0.05)
    b = csvn_kkt_solve(hess, phi, ceval, damping=0.05)
    assert np.allclose(a.delta_x, b.delta_x, atol=1e-13)
    assert np.allclose(a.lam_h, b.lam_h, atol=1e-13)


def test_slack_solver_requires_positive_damping():
    ceval = ConstraintEval(h=np.zeros(0), jac_h=np.zeros((2, 0)),
                           g=np.array([-0.5]), jac_g=np.ones((2, 1)))
    slack = SlackState(s=init_slack(ceval.g), beta=1e-3)
    with pytest.raises(ConfigError):
        slack_kkt_solve(np.eye(2), np.zeros(2), ceval, slack, damping=0.0)


# ---------------------------------------------------------------------------
# slack initialization


def test_init_slack_values():
    assert init_slack(np.array([-0.5]))[0] == pytest.approx(1.0)
    assert init_slack(np.array([0.3]))[0] == pytest.approx(np.sqrt(1e-6))
    assert init_slack(np.array([0.0]))[0] == pytest.approx(np.sqrt(1e-6))
    g = np.array([-0.5, 0.0, 2.0, -3.0])
    s = init_slack(g)
    assert np.all(s > 0)
    feasible = g <= -0.5 * 1e-6
    assert np.allclose((g + 0.5 * s**2)[feasible], 0.0, atol=1e-12)


# ---------------------------------------------------------------------------
# retry protocol


def test_retry_doubles_damping_until_solvable():
    # Indefinite curvature with eigenvalue -1: initial damping 0.1 fails,
    # doubling reaches PD after a few retries.
    hess = np.diag([2.0, -1.0])
    phi = np.array([1.0, 1.0])
    ceval = ConstraintEval.unconstrained(2)
    sol, mu, retries = solve_kkt_with_retry(hess, phi, ceval, damping=0.1)
    assert retries >= 1
    assert mu > 1.0
    assert np.allclose((hess + mu * np.eye(2)) @ sol.delta_x, phi, atol=1e-10)


def test_retry_gives_up_after_max_retries():
    rng = np.random.default_rng(13)
    jac = rng.standard_normal((4, 1))
    ceval = ConstraintEval(h=np.zeros(2), jac_h=np.hstack([jac, jac]))
    with pytest.raises(SchurSingularError):
        solve_kkt_with_retry(np.eye(4), np.zeros(4), ceval, damping=1e-3, max_retries=3)


# ---------------------------------------------------------------------------
# validation


def test_constraint_eval_validation():
    with pytest.raises(ConfigError):
        ConstraintEval(h=np.zeros(2), jac_h=np.zeros((4, 3)))
    with pytest.raises(ConfigError):
        ConstraintEval(h=np.array([np.inf]), jac_h=np.zeros((4, 1)))
    with pytest.raises(ConfigError):
        ConstraintEval(h=np.zeros(1), jac_h=np.zeros((4, 1)),
                       g=np.zeros(2), jac_g=np.zeros((4, 1)))
    with pytest.raises(ConfigError):
        SlackState(s=np.array([1.0]), beta=0.0)


def test_constraint_eval_defaults_empty_inequalities():
    ceval = ConstraintEval(h=np.zeros(1), jac_h=np.ones((3, 1)))
    assert ceval.n_ineq == 0
    assert ceval.jac_g.shape == (3, 0)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from osdl.coder import (CoderConfig, SolverError, _quasi_norm, _solve_spd, group_norms, loss, omega,
                        optimal_z, solve_code, variational_bound, zeta)
from osdl.groups import from_groups, toroid_groups, tree_groups


def singletons(n):
    return from_groups(n, [[i] for i in range(n)])


def random_structure(rng, n):
    """Random overlapping groups with positive weights covering range(n)."""
    groups = [list(rng.choice(n, size=rng.integers(1, n + 1), replace=False))
              for _ in range(rng.integers(1, 6))]
    covered = set(i for g in groups for i in g)
    groups += [[i] for i in range(n) if i not in covered]
    gs = from_groups(n, groups)
    w = gs.weights * rng.uniform(0.2, 2.0, size=gs.weights.shape)
    return type(gs)(n, gs.groups, w)


# ---------------------------------------------------------------- omega


def test_omega_zero():
    assert omega(np.zeros(5), singletons(5), 0.5) == 0.0


def test_omega_single_nonzero():
    a = np.zeros(6)
    a[3] = 4.0
    for eta in (0.3, 0.5, 1.0, 1.5):
        assert omega(a, singletons(6), eta) == pytest.approx(4.0, rel=1e-14)


def test_omega_quasi_norm_value():
    a = np.array([1.0, 1.0, 0, 0, 0])
    assert omega(a, singletons(5), 0.5) == pytest.approx(4.0, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12), st.sampled_from([0.25, 0.5, 1.0, 1.5]))
def test_singleton_reduction(vals, eta):
    a = np.array(vals)
    direct = np.sum(np.abs(a) ** eta) ** (1 / eta) if np.any(a) else 0.0
    got = omega(a, singletons(a.size), eta)
    assert got == pytest.approx(direct, rel=1e-12, abs=1e-300)


def test_quasi_norm_no_underflow():
    v = np.full(4, 1e-200)
    assert _quasi_norm(v, 1 / 3) == pytest.approx(1e-200 * 4**3, rel=1e-12)


# ---------------------------------------------------------------- optimal_z


def test_optimal_z_one_active_group():
    gs = tree_groups(2)  # groups {0,1,2}, {1}, {2}
    a = np.array([3.0, 0.0, 0.0])
    z = optimal_z(a, gs, 0.5)
    np.testing.assert_allclose(z, [3.0, 0.0, 0.0], rtol=1e-14)


def test_optimal_z_zero():
    np.testing.assert_array_equal(optimal_z(np.zeros(4), singletons(4), 0.5), np.zeros(4))


def test_optimal_z_eta_one():
    np.testing.assert_allclose(optimal_z(np.array([3.0, 4.0]), singletons(2), 1.0), [3.0, 4.0])


def test_optimal_z_minimizes_bound():
    rng = np.random.default_rng(1)
    gs = random_structure(rng, 6)
    a = rng.normal(size=6)
    p = 0.5 / 1.5
    z = optimal_z(a, gs, 0.5)
    best = variational_bound(a, z, gs, p)
    for _ in range(200):
        zz = z * np.exp(rng.normal(scale=0.3, size=z.size))
        assert variational_bound(a, zz, gs, p) >= best - 1e-12


@pytest.mark.parametrize("eta", [0.5, 1.0, 1.5])
def test_variational_identity(eta):
    rng = np.random.default_rng(int(eta * 10))
    for _ in range(50):
        n = int(rng.integers(1, 12))
        gs = random_structure(rng, n)
        a = rng.normal(size=n) * rng.uniform(0.01, 100)
        z = optimal_z(a, gs, eta)
        lhs = 0.5 * (a @ (zeta(np.where(z > 0, z, np.inf), gs) * a) + _quasi_norm(z, eta / (2 - eta)))
        assert lhs == pytest.approx(omega(a, gs, eta), rel=1e-8)
        assert variational_bound(a, z, gs, eta / (2 - eta)) == pytest.approx(omega(a, gs, eta), rel=1e-8)


# ---------------------------------------------------------------- loss


def test_loss_examples():
    gs = singletons(2)
    x = np.array([1.0, 0.0])
    assert loss(x, np.eye(2), np.array([1.0, 1.0]), gs, 2.0, 1.0) == pytest.approx(4.5)
    assert loss(x, np.eye(2), np.zeros(2), gs, 2.0, 1.0) == pytest.approx(0.5)
    assert loss(x, np.eye(2), x, gs, 0.0, 1.0) == 0.0


def test_loss_independent_evaluation():
    rng = np.random.default_rng(3)
    D = rng.normal(size=(4, 3))
    x = rng.normal(size=4)
    a = rng.normal(size=3)
    gs = tree_groups(2)
    norms = [np.linalg.norm(a), abs(a[1]), abs(a[2])]
    expected = 0.5 * np.sum((x - D @ a) ** 2) + 0.7 * (sum(np.sqrt(norms))) ** 2
    assert loss(x, D, a, gs, 0.7, 0.5) == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------- solve_code


def test_config_defaults_and_validation():
    cfg = CoderConfig(kappa=1.0)
    assert cfg.eta == 0.5 and cfg.inner_iters == 5 and cfg.epsilon == 1e-5
    assert cfg.aux_exponent == pytest.approx(1 / 3)
    assert CoderConfig(kappa=1.0, eta=1.5).aux_exponent == pytest.approx(3.0)
    for bad in (dict(kappa=0), dict(kappa=1, eta=2), dict(kappa=1, eta=0),
                dict(kappa=1, inner_iters=0), dict(kappa=1, epsilon=0.1)):
        with pytest.raises(ValueError):
            CoderConfig(**bad)


def test_small_kappa_least_squares():
    res = solve_code(np.array([1.0, 2.0]), np.eye(2), singletons(2), CoderConfig(kappa=1e-12))
    np.testing.assert_allclose(res.alpha, [1.0, 2.0], atol=1e-6)


def test_lasso_example():
    cfg = CoderConfig(kappa=1.0, eta=1.0, inner_iters=20)
    res = solve_code(np.array([3.0]), np.ones((1, 1)), singletons(1), cfg)
    assert res.alpha[0] == pytest.approx(2.0, abs=1e-3)


def test_huge_kappa_shrinks_to_zero():
    rng = np.random.default_rng(5)
    gs = tree_groups(2)
    for _ in range(10):
        D = rng.normal(size=(3, 3))
        x = rng.normal(size=3) * 10
        res = solve_code(x, D, gs, CoderConfig(kappa=1e6))
        assert np.linalg.norm(res.alpha) <= 1e-3 * np.linalg.norm(x)


def test_huge_kappa_matches_generic_minimizer():
    rng = np.random.default_rng(6)
    D = rng.normal(size=(3, 3))
    x = rng.normal(size=3)
    gs = tree_groups(2)
    cfg = CoderConfig(kappa=1e6, eta=1.0)
    res = solve_code(x, D, gs, cfg)
    ref = minimize(lambda a: loss(x, D, a, gs, cfg.kappa, cfg.eta), x0=np.full(3, 0.3),
                   method="Nelder-Mead", options=dict(xatol=1e-12, fatol=1e-12, maxiter=20000))
    assert np.linalg.norm(ref.x) <= 1e-3 * np.linalg.norm(x)
    assert np.linalg.norm(res.alpha - ref.x) <= 1e-3 * np.linalg.norm(x)


def test_eta_one_matches_convex_minimizer():
    # convex case: alternation converges to the global minimum
    rng = np.random.default_rng(8)
    D = rng.normal(size=(6, 3))
    x = rng.normal(size=6)
    gs = tree_groups(2)
    cfg = CoderConfig(kappa=0.3, eta=1.0, inner_iters=300)
    res = solve_code(x, D, gs, cfg)
    ref = minimize(lambda a: loss(x, D, a, gs, cfg.kappa, cfg.eta), x0=res.alpha + 0.1,
                   method="Nelder-Mead", options=dict(xatol=1e-10, fatol=1e-12, maxiter=20000))
    assert loss(x, D, res.alpha, gs, 0.3, 1.0) <= ref.fun + 1e-6


def test_stationarity_residual():
    rng = np.random.default_rng(9)
    for _ in range(50):
        d_x, d_a = rng.integers(1, 15), 15
        D = rng.normal(size=(d_x, d_a))
        x = rng.normal(size=d_x) * rng.uniform(0.1, 10)
        cfg = CoderConfig(kappa=float(2.0 ** rng.integers(-14, 2)), eta=float(rng.choice([0.5, 1.0, 1.5])))
        res = solve_code(x, D, tree_groups(4), cfg)
        A = D.T @ D + cfg.kappa * np.diag(zeta(res.z, tree_groups(4)))
        assert np.linalg.norm(A @ res.alpha - D.T @ x) <= 1e-8 * (1 + np.linalg.norm(x))
        assert np.all(res.z >= cfg.epsilon) and np.isfinite(res.objective)


def test_objective_is_j_at_returned_pair():
    rng = np.random.default_rng(10)
    gs = toroid_groups(3, 1)
    D = rng.normal(size=(5, 9))
    x = rng.normal(size=5)
    cfg = CoderConfig(kappa=0.1)
    res = solve_code(x, D, gs, cfg)
    r = x - D @ res.alpha
    J = 0.5 * r @ r + 0.1 * variational_bound(res.alpha, res.z, gs, cfg.aux_exponent)
    assert res.objective == pytest.approx(J, rel=1e-12)
    assert len(res.history) == cfg.inner_iters
    assert res.history[-1] == pytest.approx(loss(x, D, res.alpha, gs, 0.1, 0.5), rel=1e-12)
    # J upper-bounds the loss
    assert res.objective >= loss(x, D, res.alpha, gs, 0.1, 0.5) - 1e-12


def smoothing_slack(x, D, gs, cfg, k):
    """Exact bound on the loss increase from round k to k + 1."""
    prev = solve_code(x, D, gs, CoderConfig(**{**cfg.__dict__, "inner_iters": k}))
    z = optimal_z(prev.alpha, gs, cfg.eta)
    p = cfg.aux_exponent
    return 0.5 * cfg.kappa * (_quasi_norm(np.maximum(z, cfg.epsilon), p) - _quasi_norm(z, p))


@pytest.mark.parametrize("eta", [0.5, 1.0, 1.5])
def test_monotone_alternation(eta):
    rng = np.random.default_rng(int(100 * eta))
    for _ in range(100):
        gs = random_structure(rng, int(rng.integers(2, 8)))
        D = rng.normal(size=(int(rng.integers(1, 8)), gs.code_dim))
        x = rng.normal(size=D.shape[0])
        cfg = CoderConfig(kappa=float(rng.uniform(1e-3, 2)), eta=eta, inner_iters=8)
        h = solve_code(x, D, gs, cfg).history
        for k in range(1, len(h)):
            slack = smoothing_slack(x, D, gs, cfg, k)
            assert h[k] <= h[k - 1] + slack + 1e-12 * (1 + h[k - 1])
            if eta >= 1:
                # smoothing costs at most kappa * |G| * epsilon when the aux exponent is >= 1
                assert h[k] <= h[k - 1] + cfg.kappa * gs.n_groups * cfg.epsilon + 1e-12 * (1 + h[k - 1])


def test_zero_signal():
    res = solve_code(np.zeros(4), np.random.default_rng(0).normal(size=(4, 7)), tree_groups(3),
                     CoderConfig(kappa=0.5))
    np.testing.assert_array_equal(res.alpha, np.zeros(7))


def test_nonneg_hook():
    rng = np.random.default_rng(11)
    D = rng.normal(size=(6, 7))
    x = rng.normal(size=6)
    res = solve_code(x, D, tree_groups(3), CoderConfig(kappa=0.1, nonneg=True))
    assert np.all(res.alpha >= 0)


def test_shape_errors():
    gs = singletons(3)
    with pytest.raises(ValueError):
        solve_code(np.ones(2), np.ones((3, 3)), gs, CoderConfig(kappa=1))
    with pytest.raises(ValueError):
        solve_code(np.ones(2), np.ones((2, 4)), gs, CoderConfig(kappa=1))
    with pytest.raises(ValueError):
        solve_code(np.ones(0), np.ones((0, 3)), gs, CoderConfig(kappa=1))


def test_non_finite_input_rejected():
    with pytest.raises(ValueError):
        solve_code(np.ones(1), np.array([[np.nan]]), singletons(1), CoderConfig(kappa=1))


def test_singular_system_raises_with_iteration():
    with pytest.raises(SolverError) as info:
        _solve_spd(-np.eye(2), np.ones(2), 4)
    assert info.value.iteration == 4


def test_solver_error_carries_iteration():
    err = SolverError("boom", 3)
    assert err.iteration == 3 and "3" in str(err)


def test_group_norms_weighted():
    gs = tree_groups(2)
    w = gs.weights * 2.0
    gs2 = type(gs)(3, gs.groups, w)
    a = np.array([1.0, 2.0, 2.0])
    np.testing.assert_allclose(group_norms(a, gs2), 2 * np.array([3.0, 2.0, 2.0]))

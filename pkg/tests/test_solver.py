import math

import numpy as np
import pytest

from flatreg.errors import ConfigurationError, DimensionError, ConvergenceError, StageError, ValidationError
from flatreg.graph import build_fusion_graph, prim_mst
from flatreg.solver import (FlatConfig, back_transform_error, bic_score, build_design,
                            coordinate_descent, default_lambda_grid, fit_flat, initial_estimate,
                            kkt_residual, lasso_objective, loglog_multiplier, penalty_identity,
                            select_initial, select_lambdas, soft_threshold, spatial_graph)
from flatreg.spatial import CoefficientField, SpatialDataset, coefficient_distance_matrix
from oracles import admm_fused, dist_matrix, fista, kruskal, lasso_obj, reparam_design
from conftest import small_dataset


def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0
    np.testing.assert_array_equal(soft_threshold(np.array([-2, 0, 2.0]), 2.0), 0)
    with pytest.raises(ValueError):
        soft_threshold(1.0, -1.0)


def test_cd_matches_fista_plain_lasso():
    rng = np.random.default_rng(0)
    for _ in range(5):
        X = rng.normal(size=(15, 25))
        y = rng.normal(size=15)
        lam = rng.uniform(0.1, 2.0)
        res = coordinate_descent(X, y, lam, tol=1e-10, max_sweeps=100000)
        ref = fista(X, y, lam)
        assert res.objective == pytest.approx(lasso_obj(X, y, ref, lam), abs=1e-8)
        assert kkt_residual(X, y, res.theta, lam) <= 1e-4


def test_cd_zero_penalty_is_least_squares():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 4))
    y = rng.normal(size=30)
    res = coordinate_descent(X, y, 0.0, tol=1e-12, max_sweeps=100000)
    np.testing.assert_allclose(res.theta, np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-8)


def test_cd_large_lambda_all_zero():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(10, 6))
    y = rng.normal(size=10)
    res = coordinate_descent(X, y, np.abs(X.T @ y).max() * 1.01)
    np.testing.assert_array_equal(res.theta, 0)
    assert res.sweeps == 1


def test_cd_zero_column_pinned():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(10, 3))
    X[:, 1] = 0
    res = coordinate_descent(X, rng.normal(size=10), 0.1, theta0=np.ones(3))
    assert res.theta[1] == 0


def test_cd_debug_history_monotone():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 40))
    res = coordinate_descent(X, rng.normal(size=20), 0.3, debug=True)
    assert np.all(np.diff(res.history) <= 1e-9 * np.abs(res.history[1:]))


def test_cd_raises_and_keeps_iterate():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(20, 40))
    with pytest.raises(ConvergenceError) as ei:
        coordinate_descent(X, rng.normal(size=20), 1e-3, tol=1e-14, max_sweeps=1)
    assert ei.value.theta.shape == (40,)
    res = coordinate_descent(X, rng.normal(size=20), 1e-3, tol=1e-14, max_sweeps=1,
                             raise_on_failure=False)
    assert not res.converged


def test_cd_input_checks():
    with pytest.raises(ValidationError):
        coordinate_descent(np.ones((3, 2)), np.ones(4), 0.1)
    with pytest.raises(ConfigurationError):
        coordinate_descent(np.ones((3, 2)), np.ones(3), -0.1)


def _flat_instance(seed, n, p):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(size=(n, 2))
    X = np.column_stack([rng.normal(size=(n, p - 1)), np.ones(n)]) if p > 1 else rng.normal(size=(n, 1))
    y = rng.normal(size=n)
    init = CoefficientField(rng.normal(size=(n, p)))
    return SpatialDataset(coords, X, y), init


def test_flat_objective_matches_oracle():
    for seed in range(6):
        ds, init = _flat_instance(seed, 7, 2)
        l1, l2 = 0.05, 0.02
        fit = fit_flat(ds, FlatConfig(lambda1=l1, lambda2=l2, cd_tolerance=1e-12,
                                      max_sweeps=200000), initial=init)
        Dt = coefficient_distance_matrix(init)
        edges = [(i, j) for i, j, _ in kruskal(Dt)]
        pi = np.array([1.0 / max(Dt[i, j], 1e-6) for i, j in edges])
        Xt, _ = reparam_design(edges, pi, l2 / l1, ds.covariates)
        ref = fista(Xt, ds.response, l1)
        assert fit.objective == pytest.approx(lasso_obj(Xt, ds.response, ref, l1), abs=1e-7)


def test_identities_hold():
    ds, init = _flat_instance(7, 25, 3)
    for l1, l2 in [(0.01, 0.01), (0.1, 0.001), (1.0, 3.0)]:
        fit = fit_flat(ds, FlatConfig(lambda1=l1, lambda2=l2), initial=init)
        lhs, rhs = penalty_identity(fit)
        assert abs(lhs - rhs) <= 1e-8 * max(1.0, lhs)
        assert back_transform_error(fit) <= 1e-8


def test_fit_recovers_piecewise_constant():
    ds, B = small_dataset(n=60, p=2, seed=3, noise=0.01)
    fit = fit_flat(ds, FlatConfig(lambda1=1e-3, lambda2=1e-4), initial=CoefficientField(B))
    assert np.sqrt(np.mean((fit.beta.beta - B) ** 2)) < 0.1
    assert fit.converged


def test_fit_flat_rejects_mismatched_initial():
    ds, B = small_dataset(n=20)
    with pytest.raises(DimensionError):
        fit_flat(ds, FlatConfig(lambda1=1e-3, lambda2=1e-4), initial=CoefficientField(B[:5]))


def test_fit_flat_labels_failing_stage():
    ds, B = small_dataset(n=20)
    with pytest.raises(StageError) as ei:
        fit_flat(ds, FlatConfig(lambda1=1e-3, lambda2=1e-4, max_sweeps=1, cd_tolerance=1e-15),
                 initial=CoefficientField(B + np.random.default_rng(0).normal(size=B.shape)))
    assert ei.value.stage == "coordinate_descent"
    assert isinstance(ei.value.cause, ConvergenceError)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        FlatConfig(lambda1=1.0)
    with pytest.raises(ConfigurationError):
        FlatConfig(lambda1=-1.0, lambda2=1.0)
    with pytest.raises(ConfigurationError):
        FlatConfig(gamma=0)
    with pytest.raises(ConfigurationError):
        FlatConfig(lambda_grid=[])
    assert FlatConfig().auto


def _eq2(ds, beta, lam, tree_edges):
    r = ds.response - np.einsum("ik,ik->i", ds.covariates, beta)
    tv = sum(np.abs(beta[i] - beta[j]).sum() for i, j in tree_edges)
    return r @ r / ds.n + lam * tv


def test_initial_estimate_matches_direct_objective():
    for seed in range(4):
        ds, _ = _flat_instance(seed + 20, 8, 2)
        lam = 0.05
        fit = initial_estimate(ds, lam, tol=1e-12, max_sweeps=200000)
        edges = [(i, j) for i, j, _ in kruskal(dist_matrix(ds.coords))]
        D = np.zeros((len(edges), ds.n))
        for e, (i, j) in enumerate(edges):
            D[e, i], D[e, j] = 1.0, -1.0
        # (1/n) RSS + lam TV  ==  (2/n) [0.5 RSS + (n lam / 2) TV]
        ref_beta = admm_fused(ds.covariates, ds.response, D, np.full(len(edges), 0.5 * ds.n * lam))
        ours, ref = _eq2(ds, fit.beta.beta, lam, edges), _eq2(ds, ref_beta, lam, edges)
        assert ours <= ref + 1e-9
        assert ours == pytest.approx(ref, abs=1e-7)


def test_initial_large_lambda_is_pooled_ols():
    ds, _ = small_dataset(n=25, seed=4)
    fit = initial_estimate(ds, 1e6)
    ols = np.linalg.lstsq(ds.covariates, ds.response, rcond=None)[0]
    np.testing.assert_allclose(fit.beta.beta, np.tile(ols, (ds.n, 1)), atol=1e-6)
    assert fit.df == ds.p


def test_bic():
    assert bic_score(2.0, 10, 3) == pytest.approx(10 * math.log(0.2) + 3 * math.log(10))
    assert bic_score(2.0, 10, 3, 2.0) - bic_score(2.0, 10, 3) == pytest.approx(3 * math.log(10))
    assert loglog_multiplier(200, 3) == pytest.approx(math.log(math.log(600)))


def test_select_initial_is_bic_argmin():
    ds, _ = small_dataset(n=40, seed=5)
    sel = select_initial(ds)
    assert sel.lam == min(sel.scores, key=lambda k: (sel.scores[k], k))


def test_select_lambdas_grid_and_ties():
    ds, B = small_dataset(n=30, seed=6)
    init = CoefficientField(B + 0.01)
    grid = [(0.1, 0.01), (0.01, 0.001), (0.001, 0.001)]
    sel = select_lambdas(ds, grid=grid, initial=init)
    assert set(sel.scores) == set(grid)
    assert sel.best == min(sel.scores, key=lambda k: (sel.scores[k], k[0], k[1]))
    assert (sel.fit.lambda1, sel.fit.lambda2) == sel.best


def test_default_grid_shape():
    ds, B = small_dataset(n=20, seed=7)
    fg = build_fusion_graph(dist_matrix(B), ratio=1.0)
    g = default_lambda_grid(ds, build_design(ds, fg))
    assert len(g) == 64
    ratios = sorted({round(b / a, 10) for a, b in g})
    assert ratios[0] == pytest.approx(0.01) and ratios[-1] == pytest.approx(1.0)


def test_spatial_graph_uses_coordinates():
    ds, _ = small_dataset(n=15, seed=8)
    fg = spatial_graph(ds)
    assert fg.tree.total_weight == pytest.approx(prim_mst(dist_matrix(ds.coords)).total_weight)

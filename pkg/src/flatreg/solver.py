"""FLAT estimator: tree-fused lasso over an adaptive minimum spanning tree.

Pipeline for one fit:

1. initial coefficients from a unit-weight fused lasso on the spatial MST;
2. MST on the pairwise distances between initial coefficient vectors;
3. adaptive edge weights ``1 / d ** gamma``;
4. reparameterize ``theta_k = H_tilde @ beta_k`` so the problem becomes
   ``0.5 * ||y - X_tilde theta||^2 + lambda1 * ||theta||_1``;
5. cyclic coordinate descent, then ``beta_k = H_tilde^{-1} theta_k``.

With ``theta_k = [diag(pi) H beta_k ; (lambda2 / lambda1) 1^T beta_k]`` the
L1 penalty equals ``lambda1 * sum ||diag(pi) H beta_k||_1 +
lambda2 * sum |1^T beta_k|`` (absolute column sums, not entrywise).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._cd import cd_solve
from .errors import (ConfigurationError, ConvergenceError, FlatError, GridError,
                     StageError, ValidationError)
from .graph import (DISTANCE_FLOOR, FusionGraph, adaptive_weights, build_h_tilde,
                    build_incidence, prim_mst)
from .spatial import (CoefficientField, SpatialDataset, coefficient_distance_matrix,
                      euclidean_distance_matrix)

log = logging.getLogger(__name__)

DESIGN_BUDGET = 4000 * 4000 * 5
INIT_RATIO = 1e-4
LEVEL_TOL = 1e-6


def soft_threshold(x, lam):
    """``sign(x) * max(|x| - lam, 0)``; works on scalars and arrays."""
    if np.any(np.asarray(lam) < 0):
        raise ValueError("threshold must be nonnegative")
    out = np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FlatConfig:
    lambda1: float | None = None
    lambda2: float | None = None
    gamma: float = 1.0
    cd_tolerance: float = 1e-6
    max_sweeps: int = 10000
    lambda_grid: tuple | None = None
    init_lambda: float | None = None
    distance_floor: float = DISTANCE_FLOOR

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "init_lambda"):
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be positive, got {v}")
        if (self.lambda1 is None) != (self.lambda2 is None):
            raise ConfigurationError("lambda1 and lambda2 must be given together")
        if not self.gamma > 0:
            raise ConfigurationError("gamma must be positive")
        if not self.cd_tolerance > 0:
            raise ConfigurationError("cd_tolerance must be positive")
        if int(self.max_sweeps) < 1:
            raise ConfigurationError("max_sweeps must be a positive integer")
        if not self.distance_floor > 0:
            raise ConfigurationError("distance_floor must be positive")
        if self.lambda_grid is not None:
            grid = tuple((float(a), float(b)) for a, b in self.lambda_grid)
            if not grid:
                raise ConfigurationError("lambda_grid must be non-empty")
            if any(not (a > 0 and b > 0) for a, b in grid):
                raise ConfigurationError("lambda_grid entries must be positive")
            object.__setattr__(self, "lambda_grid", grid)

    @property
    def auto(self) -> bool:
        return self.lambda1 is None


@dataclass(frozen=True)
class CDResult:
    theta: np.ndarray
    objective: float
    sweeps: int
    converged: bool
    history: np.ndarray = field(repr=False, default=None)
    passes: int = 0


@dataclass(frozen=True, eq=False)
class Design:
    """Reparameterized design ``[diag(x_1) Hinv, ..., diag(x_p) Hinv]``."""

    X: np.ndarray
    col_sq: np.ndarray
    n: int
    p: int


@dataclass(frozen=True, eq=False)
class FlatFit:
    beta: CoefficientField
    theta: np.ndarray
    objective: float
    sweeps: int
    converged: bool
    config: FlatConfig
    graph: FusionGraph
    lambda1: float
    lambda2: float
    df: int
    rss: float
    initial: CoefficientField | None = None

    @property
    def theta_matrix(self) -> np.ndarray:
        return self.theta.reshape(self.beta.p, self.beta.n).T

    def summary(self) -> dict:
        return {"objective": self.objective, "sweeps": self.sweeps, "converged": self.converged,
                "lambda1": self.lambda1, "lambda2": self.lambda2, "df": self.df, "rss": self.rss}


# --- coordinate descent ------------------------------------------------------

def coordinate_descent(X, y, lambda1: float, tol: float = 1e-6, max_sweeps: int = 10000,
                       theta0=None, penalty_weights=None, debug: bool = False,
                       raise_on_failure: bool = True, max_passes: int | None = None) -> CDResult:
    """Lasso ``0.5 ||y - X theta||^2 + lambda1 * sum w_j |theta_j|`` by exact
    cyclic coordinate descent. Stops once a full sweep moves theta by less
    than ``tol`` in L2 norm. Zero columns are pinned at 0.

    Between full sweeps, passes over the current non-zero coordinates run
    until they settle; only full sweeps count against ``max_sweeps``.
    """
    X = np.asfortranarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n, m = X.shape
    if y.shape != (n,):
        raise ValidationError(f"response length {y.shape} does not match design rows {n}")
    if lambda1 < 0:
        raise ConfigurationError("lambda1 must be nonnegative")
    w = np.ones(m) if penalty_weights is None else np.asarray(penalty_weights, dtype=float)
    pen = np.ascontiguousarray(lambda1 * w)
    col_sq = np.einsum("ij,ij->j", X, X)
    theta0 = np.zeros(m) if theta0 is None else np.array(theta0, dtype=float)
    history = np.full(max_sweeps if debug else 1, np.nan)
    if max_passes is None:
        max_passes = 100 * max_sweeps
    theta, obj, sweeps, passes, converged, delta = cd_solve(
        X, y, pen, theta0, col_sq, float(tol), int(max_sweeps), int(max_passes), history)
    if debug:
        h = history[:sweeps]
        bad = np.nonzero(np.diff(h) > 1e-9 * np.maximum(1.0, np.abs(h[1:])))[0]
        if bad.size:
            raise AssertionError(f"objective increased at sweep {bad[0] + 1}")
    if not converged and raise_on_failure:
        raise ConvergenceError(f"coordinate descent did not converge in {sweeps} sweeps / {passes} passes "
                               f"(last step {delta:.3g}, tol {tol:g})",
                               theta=theta, sweeps=sweeps, delta=delta, objective=obj)
    return CDResult(theta, float(obj), int(sweeps), bool(converged),
                    history[:sweeps] if debug else None, int(passes))


def lasso_objective(X, y, theta, lambda1, penalty_weights=None) -> float:
    r = y - X @ theta
    w = 1.0 if penalty_weights is None else np.asarray(penalty_weights)
    return float(0.5 * r @ r + lambda1 * np.sum(w * np.abs(theta)))


def kkt_residual(X, y, theta, lambda1, penalty_weights=None) -> float:
    """Largest violation of the lasso optimality conditions."""
    g = X.T @ (y - X @ theta)
    pen = lambda1 * (np.ones_like(theta) if penalty_weights is None else np.asarray(penalty_weights))
    nz = theta != 0
    viol = np.where(nz, np.abs(g - pen * np.sign(theta)), np.maximum(np.abs(g) - pen, 0.0))
    return float(viol.max()) if viol.size else 0.0


# --- design ------------------------------------------------------------------

def build_design(ds: SpatialDataset, fg: FusionGraph, budget: int = DESIGN_BUDGET) -> Design:
    n, p = ds.n, ds.p
    if fg.n != n:
        raise ValidationError(f"graph has {fg.n} vertices, dataset has {n} locations")
    if n * n * p > budget:
        raise ConfigurationError(f"design needs {n * n * p} entries, budget is {budget}")
    Hinv = fg.inverse_dense()
    X = np.empty((n, n * p), order="F")
    for k in range(p):
        X[:, k * n:(k + 1) * n] = ds.covariates[:, k][:, None] * Hinv
    col_sq = np.einsum("ij,ij->j", X, X)
    X.setflags(write=False)
    return Design(X, col_sq, n, p)


def _back_transform(fg: FusionGraph, theta: np.ndarray, p: int) -> np.ndarray:
    return fg.solve(theta.reshape(p, fg.n).T)


def fused_levels(beta: np.ndarray, fg: FusionGraph, tol: float = LEVEL_TOL) -> int:
    """Number of tree-connected groups of equal coefficients, summed over columns."""
    beta = np.asarray(beta).reshape(fg.n, -1)
    diffs = np.abs(fg.H @ beta)
    return int(np.sum(diffs > tol) + beta.shape[1])


def bic_score(rss: float, n: int, df: int, multiplier: float = 1.0) -> float:
    """``n log(RSS/n) + multiplier * log(n) * df``."""
    return float(n * math.log(max(rss, 1e-300) / n) + multiplier * math.log(n) * df)


def loglog_multiplier(n: int, p: int) -> float:
    """``log(log(n p))``, the inflated BIC factor used to pick the initializer."""
    return math.log(math.log(max(n * p, 16)))


def _fit_on_design(ds, fg, design, lambda1, tol, max_sweeps, theta0=None, penalty_weights=None,
                   debug=False):
    res = coordinate_descent(design.X, ds.response, lambda1, tol, max_sweeps, theta0=theta0,
                             penalty_weights=penalty_weights, debug=debug)
    beta = _back_transform(fg, res.theta, ds.p)
    rss = float(np.sum((ds.response - np.einsum("ik,ik->i", ds.covariates, beta)) ** 2))
    return res, beta, rss


# --- initial estimate (unit-weight fused lasso on the spatial MST) -----------

@dataclass(frozen=True, eq=False)
class InitialFit:
    beta: CoefficientField
    lam: float
    theta: np.ndarray
    graph: FusionGraph
    sweeps: int
    df: int
    rss: float
    scores: dict = field(default_factory=dict)


def spatial_graph(ds: SpatialDataset) -> FusionGraph:
    tree = prim_mst(euclidean_distance_matrix(ds))
    return build_h_tilde(build_incidence(tree), np.ones(ds.n - 1), INIT_RATIO, tree=tree)


def _init_penalty_weights(n, p):
    # the scaled-sum row is left unpenalized, so the fit solves the
    # fused objective exactly rather than with a small sum penalty
    w = np.ones(n * p)
    w[n - 1::n] = 0.0
    return w


def _pooled_ols(ds: SpatialDataset) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(ds.covariates, ds.response, rcond=None)
    return coef


def init_lambda_max(ds: SpatialDataset, design: Design) -> float:
    """Smallest ``lambda`` at which every spatial edge is fused."""
    r = ds.response - ds.covariates @ _pooled_ols(ds)
    g = np.abs(design.X.T @ r)
    g[ds.n - 1::ds.n] = 0.0
    return float(2.0 * g.max() / ds.n)


def initial_estimate(ds: SpatialDataset, init_lambda: float, tol: float = 1e-6,
                     max_sweeps: int = 10000, graph: FusionGraph | None = None,
                     design: Design | None = None, theta0=None) -> InitialFit:
    """Minimize ``(1/n) RSS + init_lambda * sum_k sum_{edges} |beta_k(i) - beta_k(j)|``
    over the spatial-distance MST."""
    if not init_lambda > 0:
        raise ConfigurationError("init_lambda must be positive")
    fg = graph or spatial_graph(ds)
    design = design or build_design(ds, fg)
    lam_cd = 0.5 * ds.n * init_lambda
    w = _init_penalty_weights(ds.n, ds.p)
    try:
        res, beta, rss = _fit_on_design(ds, fg, design, lam_cd, tol, max_sweeps, theta0=theta0,
                                        penalty_weights=w)
    except ConvergenceError as exc:
        exc.beta = _back_transform(fg, exc.theta, ds.p)
        raise
    return InitialFit(CoefficientField(beta, ds.covariate_names), float(init_lambda), res.theta,
                      fg, res.sweeps, fused_levels(beta, fg), rss)


def default_init_grid(ds: SpatialDataset, design: Design, size: int = 10) -> list[float]:
    lmax = init_lambda_max(ds, design)
    return [float(v) for v in lmax * np.logspace(0, -4, size)]


def select_initial(ds: SpatialDataset, grid=None, tol: float = 1e-6,
                   max_sweeps: int = 10000, bic_multiplier: float | None = None) -> InitialFit:
    """BIC choice of the initializer's lambda, warm-started from large to small.

    The df penalty is scaled by ``bic_multiplier`` (default ``log(log(n p))``):
    with n observations and n p free coefficients the plain BIC keeps picking
    the near-interpolating end of the path.
    """
    mult = loglog_multiplier(ds.n, ds.p) if bic_multiplier is None else float(bic_multiplier)
    fg = spatial_graph(ds)
    design = build_design(ds, fg)
    grid = sorted(set(float(v) for v in (grid or default_init_grid(ds, design))), reverse=True)
    best, scores, failures = None, {}, {}
    theta = None
    for lam in grid:
        try:
            fit = initial_estimate(ds, lam, tol, max_sweeps, graph=fg, design=design, theta0=theta)
        except ConvergenceError as exc:
            failures[lam] = str(exc)
            continue
        theta = fit.theta
        s = bic_score(fit.rss, ds.n, fit.df, mult)
        scores[lam] = s
        if best is None or s < scores[best.lam] or (s == scores[best.lam] and lam < best.lam):
            best = fit
    if best is None:
        raise GridError("every initial-lambda grid point failed", failures)
    return replace(best, scores=scores)


# --- FLAT --------------------------------------------------------------------

def adaptive_graph(initial: CoefficientField, ratio: float, gamma: float = 1.0,
                   floor: float = DISTANCE_FLOOR) -> FusionGraph:
    Dt = coefficient_distance_matrix(initial)
    tree = prim_mst(Dt)
    pi = adaptive_weights(tree, Dt, gamma, floor)
    return build_h_tilde(build_incidence(tree), pi, ratio, tree=tree)


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except FlatError as exc:
        raise StageError(name, exc) from exc


def _initial_for(ds, config, initial):
    if initial is not None:
        return initial
    if config.init_lambda is not None:
        return _stage("initial_estimate", initial_estimate, ds, config.init_lambda,
                      config.cd_tolerance, config.max_sweeps).beta
    return _stage("initial_estimate", select_initial, ds, None, config.cd_tolerance,
                  config.max_sweeps).beta


def _make_fit(ds, config, fg, res, beta, rss, l1, l2, initial):
    return FlatFit(beta=CoefficientField(beta, ds.covariate_names), theta=res.theta,
                   objective=res.objective, sweeps=res.sweeps, converged=res.converged,
                   config=config, graph=fg, lambda1=float(l1), lambda2=float(l2),
                   df=fused_levels(beta, fg), rss=rss, initial=initial)


def fit_flat(ds: SpatialDataset, config: FlatConfig | None = None,
             initial: CoefficientField | None = None, debug: bool = False) -> FlatFit:
    """Fit FLAT. With ``lambda1``/``lambda2`` unset the pair is chosen by
    :func:`select_lambdas` over ``config.lambda_grid`` (or the default grid)."""
    config = config or FlatConfig()
    if config.auto:
        return select_lambdas(ds, config.lambda_grid, config, initial=initial).fit
    initial = _initial_for(ds, config, initial)
    initial.check_matches(ds)
    l1, l2 = config.lambda1, config.lambda2
    fg = _stage("graph", adaptive_graph, initial, l2 / l1, config.gamma, config.distance_floor)
    design = _stage("design", build_design, ds, fg)
    res, beta, rss = _stage("coordinate_descent", _fit_on_design, ds, fg, design, l1,
                            config.cd_tolerance, config.max_sweeps, debug=debug)
    return _make_fit(ds, config, fg, res, beta, rss, l1, l2, initial)


@dataclass(frozen=True, eq=False)
class Selection:
    best: tuple
    scores: dict
    fit: FlatFit
    failures: dict = field(default_factory=dict)


def default_lambda_grid(ds: SpatialDataset, design: Design, size: int = 8) -> list[tuple]:
    """8 x 8 log grid: lambda1 in [1e-3, 1e1] * max|X_tilde^T y| / n and
    lambda2 in lambda1 * [1e-2, 1]. The scaled-sum columns are left out of the
    max since their scale depends on the ratio being searched."""
    g = np.abs(design.X.T @ ds.response)
    g[ds.n - 1::ds.n] = 0.0
    ref = g.max() / ds.n
    l1s = ref * np.logspace(-3, 1, size)
    ratios = np.logspace(-2, 0, size)
    return [(float(a), float(a * r)) for a in l1s for r in ratios]


def select_lambdas(ds: SpatialDataset, grid=None, config: FlatConfig | None = None,
                   initial: CoefficientField | None = None) -> Selection:
    """Fit every ``(lambda1, lambda2)`` pair and keep the BIC minimizer
    ``n log(RSS/n) + log(n) df``; ties go to smaller lambda1, then lambda2.

    Pairs sharing ``lambda2/lambda1`` share one factorization and design and
    are fitted from large to small ``lambda1`` with warm starts.
    """
    config = config or FlatConfig()
    initial = _initial_for(ds, config, initial)
    initial.check_matches(ds)
    Dt = coefficient_distance_matrix(initial)
    tree = prim_mst(Dt)
    H = build_incidence(tree)
    pi = adaptive_weights(tree, Dt, config.gamma, config.distance_floor)
    if grid is None:
        ref_fg = build_h_tilde(H, pi, 1.0, tree=tree)
        grid = default_lambda_grid(ds, build_design(ds, ref_fg))
    grid = [(float(a), float(b)) for a, b in grid]
    if not grid:
        raise ConfigurationError("lambda grid is empty")
    by_ratio: dict = {}
    for a, b in grid:
        by_ratio.setdefault(round(b / a, 12), []).append((a, b))
    scores, failures, fits = {}, {}, {}
    for ratio in sorted(by_ratio):
        fg = build_h_tilde(H, pi, ratio, tree=tree)
        design = build_design(ds, fg)
        theta = None
        for a, b in sorted(by_ratio[ratio], reverse=True):
            try:
                res, beta, rss = _fit_on_design(ds, fg, design, a, config.cd_tolerance,
                                                config.max_sweeps, theta0=theta)
            except ConvergenceError as exc:
                failures[(a, b)] = str(exc)
                continue
            theta = res.theta
            cfg = replace(config, lambda1=a, lambda2=b, lambda_grid=None)
            fit = _make_fit(ds, cfg, fg, res, beta, rss, a, b, initial)
            scores[(a, b)] = bic_score(rss, ds.n, fit.df)
            fits[(a, b)] = fit
    if not scores:
        raise GridError("every lambda grid point failed", failures)
    best = min(scores, key=lambda k: (scores[k], k[0], k[1]))
    sel = Selection(best=best, scores=scores, fit=fits[best], failures=failures)
    return sel


def penalty_identity(fit: FlatFit) -> tuple[float, float]:
    """Both sides of ``lambda1 sum ||theta_k||_1 ==
    lambda1 sum ||diag(pi) H beta_k||_1 + lambda2 sum |1^T beta_k|``."""
    beta = fit.beta.beta
    lhs = fit.lambda1 * np.abs(fit.theta).sum()
    rhs = (fit.lambda1 * np.abs(fit.graph.weighted_differences(beta)).sum()
           + fit.lambda2 * np.abs(beta.sum(axis=0)).sum())
    return float(lhs), float(rhs)


def back_transform_error(fit: FlatFit) -> float:
    """``max |H_tilde beta_k - theta_k|`` over all k."""
    return float(np.abs(fit.graph.forward(fit.beta.beta) - fit.theta_matrix).max())

"""Comparison estimators: Gaussian-kernel GWR and the spatial-MST fused lasso (SCC)."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ValidationError
from .solver import initial_estimate, select_initial
from .spatial import CoefficientField, SpatialDataset, euclidean_distance_matrix

log = logging.getLogger(__name__)

RIDGE = 1e-8


@dataclass(frozen=True)
class GwrConfig:
    bandwidth: float | str = "auto"
    kernel: str = "gaussian"
    grid_size: int = 25

    def __post_init__(self):
        if self.kernel != "gaussian":
            raise ConfigurationError("only the gaussian kernel is supported")
        if self.bandwidth != "auto":
            b = float(self.bandwidth)
            if not b > 0:
                raise ConfigurationError("bandwidth must be positive")
            object.__setattr__(self, "bandwidth", b)


def gaussian_weights(D, bandwidth: float) -> np.ndarray:
    if np.isinf(bandwidth):
        return np.ones_like(D)
    return np.exp(-(D ** 2) / (2.0 * bandwidth ** 2))


def _local_solve(X, y, W):
    """Row i of the result solves the ridge-guarded WLS with weights ``W[i]``.

    Rows whose unguarded normal matrix is rank deficient (smallest
    eigenvalue below ``RIDGE`` relative to the largest) are flagged: the
    ridge makes them solvable but the estimate is not identified.
    """
    n, p = X.shape
    A = np.einsum("ij,jk,jl->ikl", W, X, X)
    ev = np.linalg.eigvalsh(A)
    singular = ev[:, 0] <= RIDGE * np.maximum(ev[:, -1], 1.0)
    A = A + RIDGE * np.eye(p)
    b = np.einsum("ij,jk,j->ik", W, X, y)
    out = np.full((n, p), np.nan)
    flagged = np.zeros(n, dtype=bool)
    try:
        out[:] = np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for i in range(n):
            try:
                out[i] = np.linalg.solve(A[i], b[i])
            except np.linalg.LinAlgError:
                flagged[i] = True
    flagged |= singular | ~np.all(np.isfinite(out), axis=1)
    return out, flagged


def gwr_cv_score(ds: SpatialDataset, bandwidth: float, D=None) -> float:
    """Leave-one-out squared prediction error."""
    D = euclidean_distance_matrix(ds) if D is None else D
    W = gaussian_weights(D, bandwidth)
    np.fill_diagonal(W, 0.0)
    B, flagged = _local_solve(ds.covariates, ds.response, W)
    if flagged.any():
        return np.inf
    resid = ds.response - np.einsum("ik,ik->i", ds.covariates, B)
    return float(resid @ resid)


def bandwidth_grid(D, size: int = 25) -> np.ndarray:
    off = D[~np.eye(D.shape[0], dtype=bool)]
    nn = np.min(np.where(np.eye(D.shape[0], dtype=bool), np.inf, D), axis=1)
    lo = max(float(np.median(nn)), 1e-12)
    hi = max(float(off.max()) * 2.0, lo * 10)
    return np.logspace(np.log10(lo), np.log10(hi), size)


def select_bandwidth(ds: SpatialDataset, size: int = 25, D=None) -> tuple[float, dict]:
    D = euclidean_distance_matrix(ds) if D is None else D
    scores = {float(b): gwr_cv_score(ds, b, D) for b in bandwidth_grid(D, size)}
    best = min(scores, key=lambda b: (scores[b], b))
    return best, scores


def fit_gwr(ds: SpatialDataset, config: GwrConfig | None = None) -> CoefficientField:
    """Local weighted least squares at every location with weights
    ``exp(-d^2 / (2 b^2))``. Rows whose local system cannot be solved are
    filled with pooled OLS and marked in ``flagged``."""
    config = config or GwrConfig()
    if ds.n <= ds.p:
        raise ValidationError("GWR needs n > p")
    D = euclidean_distance_matrix(ds)
    if config.bandwidth == "auto":
        bw, _ = select_bandwidth(ds, config.grid_size, D)
    else:
        bw = config.bandwidth
    B, flagged = _local_solve(ds.covariates, ds.response, gaussian_weights(D, bw))
    if flagged.any():
        log.warning("GWR: %d local systems singular; rows flagged", int(flagged.sum()))
        pooled, *_ = np.linalg.lstsq(ds.covariates, ds.response, rcond=None)
        B[flagged] = pooled
    cf = CoefficientField(B, ds.covariate_names, flagged=flagged)
    object.__setattr__(cf, "bandwidth", float(bw))
    return cf


def fit_scc(ds: SpatialDataset, lam: float | str = "auto", tol: float = 1e-6,
            max_sweeps: int = 10000) -> CoefficientField:
    """Unit-weight fused lasso over the spatial MST (the FLAT initializer's
    objective); ``lam='auto'`` picks lambda by BIC."""
    if lam == "auto":
        return select_initial(ds, tol=tol, max_sweeps=max_sweeps).beta
    return initial_estimate(ds, float(lam), tol, max_sweeps).beta

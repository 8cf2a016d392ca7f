"""Clustering agreement (Rand, adjusted Rand) and geometry (silhouette,
Calinski-Harabasz) scores.

Noise points (label -1) are treated as singleton clusters by the agreement
scores and dropped by the geometry scores.
"""
from __future__ import annotations

import warnings

import numpy as np

from .errors import DimensionError, UndefinedMetricError
from .spatial import pairwise_distances

NOISE = -1


def _pair(truth, pred):
    t = np.asarray(truth).ravel()
    p = np.asarray(pred).ravel()
    if t.shape != p.shape:
        raise DimensionError(f"label vectors differ in length: {t.size} vs {p.size}")
    if t.size < 2:
        raise UndefinedMetricError("need at least two labels")
    return t, p


def noise_as_singletons(labels) -> np.ndarray:
    """Give every noise point its own fresh label."""
    lab = np.asarray(labels).astype(np.int64).copy()
    noise = lab == NOISE
    if noise.any():
        start = lab.max() + 1 if (~noise).any() else 0
        lab[noise] = start + np.arange(noise.sum())
    return lab


def contingency(truth, pred) -> np.ndarray:
    t, p = _pair(truth, pred)
    _, ti = np.unique(t, return_inverse=True)
    _, pi = np.unique(p, return_inverse=True)
    C = np.zeros((ti.max() + 1, pi.max() + 1), dtype=np.int64)
    np.add.at(C, (ti, pi), 1)
    return C


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2.0


def rand_index(truth, pred) -> float:
    """``(a + b) / C(n, 2)``: a = pairs together in both, b = apart in both."""
    t, p = _pair(truth, pred)
    C = contingency(t, p)
    total = _comb2(t.size)
    same_both = _comb2(C).sum()
    same_t = _comb2(C.sum(axis=1)).sum()
    same_p = _comb2(C.sum(axis=0)).sum()
    diff_both = total - same_t - same_p + same_both
    return float((same_both + diff_both) / total)


def adjusted_rand_index(truth, pred) -> float:
    t, p = _pair(truth, pred)
    C = contingency(t, p)
    total = _comb2(t.size)
    index = _comb2(C).sum()
    a = _comb2(C.sum(axis=1)).sum()
    b = _comb2(C.sum(axis=0)).sum()
    expected = a * b / total
    max_index = 0.5 * (a + b)
    if max_index == expected:
        # both partitions trivial (all together, or all apart) and identical
        return 1.0
    return float((index - expected) / (max_index - expected))


def _non_noise(X, labels):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    lab = np.asarray(labels).ravel()
    if X.shape[0] != lab.size:
        raise DimensionError("points and labels differ in length")
    keep = lab != NOISE
    return X[keep], lab[keep]


def silhouette_samples(X, labels) -> np.ndarray:
    """Per-point silhouette for non-noise points (in their original order).
    Points in singleton clusters score 0."""
    X, lab = _non_noise(X, labels)
    ids = np.unique(lab)
    if ids.size < 2:
        raise UndefinedMetricError("silhouette needs at least two non-noise clusters")
    D = pairwise_distances(X)
    idx = np.searchsorted(ids, lab)
    sums = np.zeros((X.shape[0], ids.size))
    np.add.at(sums.T, idx, D)
    sizes = np.bincount(idx, minlength=ids.size).astype(float)
    own = sizes[idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        a = sums[np.arange(X.shape[0]), idx] / (own - 1)
        means = sums / sizes
    means[np.arange(X.shape[0]), idx] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    s[own == 1] = 0.0
    return s


def silhouette(X, labels) -> float:
    return float(np.mean(silhouette_samples(X, labels)))


def calinski_harabasz(X, labels) -> float:
    """Between-cluster over within-cluster dispersion times ``(n-k)/(k-1)``.

    Returns ``inf`` (with a warning) when every cluster is a single point
    value, i.e. zero within-cluster dispersion.
    """
    X, lab = _non_noise(X, labels)
    ids, idx = np.unique(lab, return_inverse=True)
    n, k = X.shape[0], ids.size
    if k < 2:
        raise UndefinedMetricError("Calinski-Harabasz needs at least two clusters")
    if k > n - 1:
        raise UndefinedMetricError("Calinski-Harabasz needs k <= n - 1")
    c = X.mean(axis=0)
    between = within = 0.0
    for j in range(k):
        pts = X[idx == j]
        cj = pts.mean(axis=0)
        between += pts.shape[0] * np.sum((cj - c) ** 2)
        within += np.sum((pts - cj) ** 2)
    if within == 0.0:
        warnings.warn("zero within-cluster dispersion; Calinski-Harabasz is infinite",
                      RuntimeWarning, stacklevel=2)
        return float("inf")
    return float(between / (k - 1) / (within / (n - k)))

"""DBSCAN on coefficient vectors and (eps, min_pts) grid selection."""
from __future__ import annotations

import json
import math
import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NoAdmissibleClusteringError, UndefinedMetricError
from .metrics import NOISE, calinski_harabasz, silhouette
from .spatial import CoefficientField, pairwise_distances


@dataclass(frozen=True, eq=False)
class ClusterResult:
    labels: np.ndarray  # -1 noise, clusters 1..k
    epsilon: float
    min_pts: int
    k: int

    @property
    def noise_fraction(self) -> float:
        return float(np.mean(self.labels == NOISE)) if self.labels.size else 0.0


def _points(data) -> np.ndarray:
    if isinstance(data, CoefficientField):
        return data.beta
    X = np.asarray(data, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def canonical_labels(labels) -> np.ndarray:
    """Renumber clusters 1..k by first occurrence; noise stays -1."""
    lab = np.asarray(labels)
    out = np.full(lab.shape, NOISE, dtype=np.int64)
    mapping = {}
    for i, v in enumerate(lab.tolist()):
        if v == NOISE:
            continue
        if v not in mapping:
            mapping[v] = len(mapping) + 1
        out[i] = mapping[v]
    return out


def dbscan(data, epsilon: float, min_pts: int, D=None) -> ClusterResult:
    """DBSCAN with Euclidean distance. A point is core when its closed
    eps-ball (itself included) holds at least ``min_pts`` points. Points are
    scanned in id order; a border point joins the first cluster that reaches
    it. Labels are renumbered by first occurrence."""
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    if int(min_pts) < 1:
        raise ConfigurationError("min_pts must be >= 1")
    X = _points(data)
    n = X.shape[0]
    D = pairwise_distances(X) if D is None else D
    adj = D <= epsilon
    core = adj.sum(axis=1) >= min_pts
    nbrs = [np.flatnonzero(row) for row in adj]
    labels = np.zeros(n, dtype=np.int64)  # 0 = unvisited
    cid = 0
    for i in range(n):
        if labels[i] != 0:
            continue
        if not core[i]:
            labels[i] = NOISE
            continue
        cid += 1
        labels[i] = cid
        queue = deque(nbrs[i].tolist())
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cid
                continue
            if labels[j] != 0:
                continue
            labels[j] = cid
            if core[j]:
                queue.extend(nbrs[j].tolist())
    labels = canonical_labels(labels)
    k = int(labels.max()) if (labels > 0).any() else 0
    return ClusterResult(labels, float(epsilon), int(min_pts), k)


def default_eps_grid(data, size: int = 12) -> list[float]:
    """``size`` log-spaced values from 1% to ~32% of the data's diameter
    (bounding-box diagonal). Smaller radii only split a fitted field into
    near-identical fused levels."""
    X = _points(data)
    span = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0)))
    if span == 0:
        span = 1.0
    return [float(v) for v in span * np.logspace(-2, -0.5, size)]


DEFAULT_MINPTS = (3, 5, 10)


def _key(eps, mp):
    return f"eps={eps:.6g},minpts={mp}"


def select_clustering(data, epsilon_grid=None, minpts_grid=None, k_max: int = 12,
                      max_noise: float = 0.2):
    """Try every (eps, min_pts); keep the highest silhouette among results
    with ``2 <= k <= k_max`` and noise fraction ``<= max_noise``. Ties go to
    higher Calinski-Harabasz, then smaller eps.

    Returns ``(ClusterResult, table)`` where ``table`` maps
    ``"eps=..,minpts=.."`` to per-point scores.
    """
    X = _points(data)
    eps_grid = list(epsilon_grid) if epsilon_grid is not None else default_eps_grid(X)
    mp_grid = list(minpts_grid) if minpts_grid is not None else list(DEFAULT_MINPTS)
    if not eps_grid or not mp_grid:
        raise ConfigurationError("clustering grids must be non-empty")
    D = pairwise_distances(X)
    table, best, best_key = {}, None, None
    for eps in sorted(eps_grid):
        for mp in mp_grid:
            res = dbscan(X, eps, mp, D=D)
            row = {"epsilon": float(eps), "min_pts": int(mp), "k": res.k,
                   "noise_fraction": res.noise_fraction, "admissible": False,
                   "silhouette": None, "calinski_harabasz": None}
            if 2 <= res.k <= k_max and res.noise_fraction <= max_noise:
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", RuntimeWarning)
                        sc = silhouette(X, res.labels)
                        ch = calinski_harabasz(X, res.labels)
                except UndefinedMetricError:
                    sc = ch = None
                if sc is not None:
                    row.update(admissible=True, silhouette=sc, calinski_harabasz=ch)
                    key = (sc, ch, -eps)
                    if best is None or key > best_key:
                        best, best_key = res, key
            table[_key(eps, mp)] = row
    if best is None:
        raise NoAdmissibleClusteringError(
            f"no admissible clustering among {len(table)} grid points", table)
    return best, table


def score_table_json(table: dict) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        return v
    return json.dumps({k: {f: clean(v) for f, v in row.items()} for k, row in table.items()},
                      indent=2, sort_keys=True)

"""Spanning trees, signed incidence matrices and the invertible H-tilde map.

For a tree with edges ``l = (i, j)``, ``H[l, i] = +1`` and ``H[l, j] = -1``
(``i < j``). Stacking the edge-weighted rows ``diag(pi) H`` over a scaled
all-ones row gives a square matrix ``H_tilde`` which is invertible whenever
all weights and the scale are positive. ``theta = H_tilde @ beta`` turns the
tree-fused penalty into a plain L1 penalty on ``theta``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, NonFiniteError, ValidationError

DISTANCE_FLOOR = 1e-6


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


@dataclass(frozen=True, eq=False)
class SpanningTree:
    n: int
    edges: tuple  # ((i, j, weight), ...) with i < j

    def __post_init__(self):
        edges = tuple((int(i), int(j), float(w)) for i, j, w in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(edges) != self.n - 1:
            raise ValidationError(f"a spanning tree on {self.n} vertices needs {self.n - 1} edges, got {len(edges)}")
        uf = _UnionFind(self.n)
        for i, j, w in edges:
            if not (0 <= i < j < self.n):
                raise ValidationError(f"bad edge ({i}, {j}); need 0 <= i < j < n")
            if not np.isfinite(w) or w < 0:
                raise ValidationError(f"edge ({i}, {j}) has invalid weight {w}")
            if not uf.union(i, j):
                raise ValidationError(f"edge ({i}, {j}) closes a cycle")

    @property
    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))

    @property
    def edge_index(self) -> np.ndarray:
        return np.array([(i, j) for i, j, _ in self.edges], dtype=np.int64).reshape(-1, 2)

    def adjacency(self) -> list[list[int]]:
        nbrs = [[] for _ in range(self.n)]
        for i, j, _ in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "weight"])
        for i, j, wt in self.edges:
            w.writerow([i, j, repr(wt)])
        return buf.getvalue()


def prim_mst(D) -> SpanningTree:
    """Minimum spanning tree of the complete graph with weights ``D``.

    Starts at vertex 0. The next vertex is the one with the smallest
    connection cost, ties going to the lowest vertex index; a vertex's
    parent only changes on a strict improvement.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValidationError("distance matrix must be square")
    n = D.shape[0]
    if n < 2:
        raise ValidationError("need at least two vertices")
    if not np.all(np.isfinite(D)):
        raise NonFiniteError("distance matrix contains non-finite values")
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    key = D[0].copy()
    parent = np.zeros(n, dtype=np.int64)
    edges = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, key)
        v = int(np.argmin(cand))
        u = int(parent[v])
        edges.append((min(u, v), max(u, v), float(D[u, v])))
        in_tree[v] = True
        better = (~in_tree) & (D[v] < key)
        key[better] = D[v][better]
        parent[better] = v
    return SpanningTree(n, tuple(edges))


def build_incidence(tree: SpanningTree) -> sp.csr_matrix:
    m = len(tree.edges)
    if m == 0:
        return sp.csr_matrix((0, tree.n))
    e = tree.edge_index
    rows = np.repeat(np.arange(m), 2)
    cols = e.ravel()
    vals = np.tile([1.0, -1.0], m)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, tree.n))


def adaptive_weights(tree: SpanningTree, coef_dist, gamma: float = 1.0,
                     floor: float = DISTANCE_FLOOR) -> np.ndarray:
    """Edge weights ``1 / max(d, floor) ** gamma`` from coefficient distances."""
    if gamma <= 0:
        raise ConfigurationError("gamma must be positive")
    if floor <= 0:
        raise ConfigurationError("distance floor must be positive")
    coef_dist = np.asarray(coef_dist, dtype=float)
    e = tree.edge_index
    d = coef_dist[e[:, 0], e[:, 1]]
    return 1.0 / np.maximum(d, floor) ** gamma


@dataclass(frozen=True, eq=False)
class FusionGraph:
    tree: SpanningTree
    H: sp.csr_matrix
    pi: np.ndarray
    ratio: float
    h_tilde: sp.csc_matrix
    _lu: object

    @property
    def n(self) -> int:
        return self.tree.n

    def solve(self, theta) -> np.ndarray:
        return apply_h_tilde_inverse(self, theta)

    def forward(self, beta) -> np.ndarray:
        """``H_tilde @ beta`` (beta may be (n,) or (n, p))."""
        return self.h_tilde @ np.asarray(beta, dtype=float)

    def inverse_dense(self) -> np.ndarray:
        return self._lu.solve(np.eye(self.n))

    def weighted_differences(self, beta) -> np.ndarray:
        """``diag(pi) H beta``."""
        return self.pi[:, None] * (self.H @ np.asarray(beta, dtype=float).reshape(self.n, -1))

    def with_ratio(self, ratio: float) -> "FusionGraph":
        return build_h_tilde(self.H, self.pi, ratio, tree=self.tree)


def build_h_tilde(H, pi, ratio: float, tree: SpanningTree | None = None) -> FusionGraph:
    H = sp.csr_matrix(H, dtype=float)
    m, n = H.shape
    pi = np.asarray(pi, dtype=float)
    if m != n - 1:
        raise ConfigurationError(f"incidence matrix must be (n-1) x n, got {H.shape}")
    if pi.shape != (m,):
        raise ConfigurationError(f"need {m} edge weights, got shape {pi.shape}")
    if not np.all(np.isfinite(pi)) or np.any(pi <= 0):
        raise ConfigurationError("edge weights must be finite and positive")
    if not np.isfinite(ratio) or ratio <= 0:
        raise ConfigurationError(f"ratio lambda2/lambda1 must be positive, got {ratio}")
    if tree is None:
        coo = H.tocoo()
        ends = {}
        for r, c, v in zip(coo.row, coo.col, coo.data):
            ends.setdefault(int(r), {})[1 if v > 0 else -1] = int(c)
        tree = SpanningTree(n, tuple((ends[l][1], ends[l][-1], 1.0) for l in range(m)))
    Ht = sp.vstack([sp.diags(pi) @ H, sp.csr_matrix(np.full((1, n), float(ratio)))]).tocsc()
    try:
        lu = splu(Ht)
    except RuntimeError as exc:
        raise ConfigurationError(f"H_tilde factorization failed: {exc}") from exc
    U = lu.U.diagonal()
    if not np.all(np.isfinite(U)) or np.any(U == 0):
        raise ConfigurationError("H_tilde is singular")
    pi = pi.copy()
    pi.setflags(write=False)
    return FusionGraph(tree=tree, H=H, pi=pi, ratio=float(ratio), h_tilde=Ht, _lu=lu)


def apply_h_tilde_inverse(fg: FusionGraph, theta) -> np.ndarray:
    """Solve ``H_tilde @ beta = theta``; ``theta`` may be (n,) or (n, p)."""
    theta = np.asarray(theta, dtype=float)
    return fg._lu.solve(np.ascontiguousarray(theta))


def build_fusion_graph(D, coef_dist=None, ratio: float = 1.0, gamma: float = 1.0,
                       floor: float = DISTANCE_FLOOR) -> FusionGraph:
    """MST on ``D``; unit weights when ``coef_dist`` is None, else adaptive."""
    tree = prim_mst(D)
    H = build_incidence(tree)
    if coef_dist is None:
        pi = np.ones(tree.n - 1)
    else:
        pi = adaptive_weights(tree, coef_dist, gamma, floor)
    return build_h_tilde(H, pi, ratio, tree=tree)

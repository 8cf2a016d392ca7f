"""Slow, independent reference implementations used only by the tests."""
import itertools

import numpy as np


def dist_matrix(P):
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    n = len(P)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            D[i, j] = np.sqrt(np.sum((P[i] - P[j]) ** 2))
    return D


def _connected(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a
    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


def exhaustive_mst_weight(D):
    """Minimum over all (n-1)-edge subsets that form a spanning tree."""
    n = len(D)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    best = np.inf
    for sub in itertools.combinations(pairs, n - 1):
        if _connected(n, sub):
            best = min(best, sum(D[i, j] for i, j in sub))
    return best


def kruskal(D):
    n = len(D)
    order = sorted((D[i, j], i, j) for i in range(n) for j in range(i + 1, n))
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a
    out = []
    for w, i, j in order:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            out.append((i, j, w))
    return out


def reparam_design(coords_tree_edges, pi, ratio, X):
    """Dense ``[diag(x_k) Htilde^{-1}]_k`` built from scratch."""
    n, p = X.shape
    Ht = np.zeros((n, n))
    for e, (i, j) in enumerate(coords_tree_edges):
        Ht[e, i] = pi[e]
        Ht[e, j] = -pi[e]
    Ht[n - 1, :] = ratio
    Hinv = np.linalg.inv(Ht)
    return np.hstack([X[:, [k]] * Hinv for k in range(p)]), Ht


def lasso_obj(X, y, theta, lam, w=None):
    w = np.ones_like(theta) if w is None else w
    r = y - X @ theta
    return 0.5 * r @ r + lam * np.sum(w * np.abs(theta))


def duality_gap(X, y, theta, lam):
    """Lasso primal minus dual value at the scaled residual (all weights 1)."""
    r = y - X @ theta
    c = np.abs(X.T @ r).max()
    nu = r * (min(1.0, lam / c) if c > 0 else 1.0)
    dual = 0.5 * y @ y - 0.5 * (y - nu) @ (y - nu)
    return lasso_obj(X, y, theta, lam) - dual


def fista(X, y, lam, w=None, tol=1e-10, max_iter=2_000_000):
    """Accelerated proximal gradient with adaptive restart.

    With unit weights it stops once the duality gap is below ``tol``;
    otherwise once the iterate moves less than ``tol`` relative to its size.
    """
    m = X.shape[1]
    unit = w is None
    w = np.ones(m) if w is None else w
    L = np.linalg.norm(X, 2) ** 2
    x = np.zeros(m)
    z = x.copy()
    t = 1.0
    f_old = np.inf
    for it in range(max_iter):
        g = X.T @ (X @ z - y)
        u = z - g / L
        x_new = np.sign(u) * np.maximum(np.abs(u) - lam * w / L, 0.0)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        f = lasso_obj(X, y, x_new, lam, w)
        if f > f_old and t > 1.0:
            # momentum overshot: restart from the last accepted iterate
            z, t = x.copy(), 1.0
            continue
        z = x_new + (t - 1) / t_new * (x_new - x)
        step = np.linalg.norm(x_new - x)
        x, t, f_old = x_new, t_new, f
        if unit:
            if it % 20 == 0 and duality_gap(X, y, x, lam) <= tol:
                break
        elif step <= tol * max(1.0, np.linalg.norm(x)):
            break
    return x


def pair_rand(a, b):
    a, b = list(a), list(b)
    n = len(a)
    agree = tot = 0
    ss = sd = ds_ = dd = 0
    for i in range(n):
        for j in range(i + 1, n):
            same_a, same_b = a[i] == a[j], b[i] == b[j]
            tot += 1
            agree += same_a == same_b
            ss += same_a and same_b
            sd += same_a and not same_b
            ds_ += (not same_a) and same_b
            dd += (not same_a) and (not same_b)
    return agree / tot, (ss, sd, ds_, dd)


def pair_ari(a, b):
    """ARI from pair counts (Hubert-Arabie form)."""
    _, (ss, sd, ds_, dd) = pair_rand(a, b)
    num = 2.0 * (ss * dd - sd * ds_)
    den = (ss + sd) * (sd + dd) + (ss + ds_) * (ds_ + dd)
    return 1.0 if den == 0 else num / den


def silhouette_direct(X, labels):
    X = np.asarray(X, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    labels = list(labels)
    vals = []
    for i in range(len(X)):
        if labels[i] == -1:
            continue
        own = [j for j in range(len(X)) if labels[j] == labels[i] and j != i]
        if not own:
            vals.append(0.0)
            continue
        a = np.mean([np.linalg.norm(X[i] - X[j]) for j in own])
        b = min(np.mean([np.linalg.norm(X[i] - X[j]) for j in range(len(X)) if labels[j] == c])
                for c in set(labels) if c not in (labels[i], -1))
        vals.append((b - a) / max(a, b))
    return float(np.mean(vals))


def chi_direct(X, labels):
    X = np.asarray(X, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    labels = np.asarray(labels)
    keep = labels != -1
    X, labels = X[keep], labels[keep]
    n = len(X)
    cs = sorted(set(labels.tolist()))
    mu = X.mean(axis=0)
    B = sum(np.sum(labels == c) * np.sum((X[labels == c].mean(axis=0) - mu) ** 2) for c in cs)
    W = sum(np.sum((X[labels == c] - X[labels == c].mean(axis=0)) ** 2) for c in cs)
    k = len(cs)
    return (B / (k - 1)) / (W / (n - k))


def dbscan_closure(X, eps, min_pts):
    """Clusters as transitive closures of the core-core eps graph; a border
    point joins the earliest-founded cluster with a core within eps.
    Clusters are founded in order of their smallest core id."""
    D = dist_matrix(X)
    n = len(D)
    A = D <= eps
    core = A.sum(axis=1) >= min_pts
    R = (A & core[:, None] & core[None, :]) | np.eye(n, dtype=bool)
    for _ in range(n):
        R = R | ((R.astype(int) @ R.astype(int)) > 0)
    founders = []
    comp = -np.ones(n, dtype=int)
    for i in range(n):
        if core[i] and comp[i] < 0:
            members = [j for j in range(n) if core[j] and R[i, j]]
            for j in members:
                comp[j] = len(founders)
            founders.append(i)
    labels = -np.ones(n, dtype=int)
    labels[core] = comp[core]
    for b in range(n):
        if core[b]:
            continue
        reach = [comp[c] for c in range(n) if core[c] and A[b, c]]
        if reach:
            labels[b] = min(reach)
    # renumber by first occurrence, 1-based
    out, seen = -np.ones(n, dtype=int), {}
    for i, v in enumerate(labels):
        if v >= 0:
            seen.setdefault(v, len(seen) + 1)
            out[i] = seen[v]
    return out


def admm_fused(X, y, D, w, rho=1.0, iters=50000, tol=1e-13):
    """min_b 0.5 ||y - sum_k x_k * b_k||^2 + sum_k ||w * (D b_k)||_1 by ADMM
    on z = D b (same D for every coefficient column). Returns b as (n, p)."""
    n, p = X.shape
    m = D.shape[0]
    A = np.hstack([np.diag(X[:, k]) for k in range(p)])      # (n, n p)
    Dk = np.kron(np.eye(p), D)                                # (m p, n p)
    wk = np.tile(w, p)
    M = A.T @ A + rho * Dk.T @ Dk
    Minv = np.linalg.inv(M)
    b = np.zeros(n * p)
    z = np.zeros(m * p)
    u = np.zeros(m * p)
    for _ in range(iters):
        b = Minv @ (A.T @ y + rho * Dk.T @ (z - u))
        Db = Dk @ b
        v = Db + u
        z_new = np.sign(v) * np.maximum(np.abs(v) - wk / rho, 0.0)
        u += Db - z_new
        done = np.linalg.norm(z_new - z) < tol and np.linalg.norm(Db - z_new) < tol
        z = z_new
        if done:
            break
    return b.reshape(p, n).T

"""Numba kernel for cyclic coordinate descent on a weighted-L1 least squares.

Minimizes ``0.5 * ||y - X theta||^2 + sum_j pen[j] * |theta_j|`` by exact
coordinate minimization. Full sweeps alternate with sweeps restricted to the
current non-zero set; convergence is only declared on a full sweep.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


@njit(cache=True)
def _objective(r, theta, pen):
    f = 0.5 * np.dot(r, r)
    for j in range(theta.shape[0]):
        f += pen[j] * abs(theta[j])
    return f


@njit(cache=True)
def _sweep(X, col_sq, pen, theta, r, active_only):
    n, m = X.shape
    d2 = 0.0
    for j in range(m):
        if col_sq[j] <= 0.0:
            continue
        old = theta[j]
        if active_only and old == 0.0:
            continue
        g = 0.0
        for i in range(n):
            g += X[i, j] * r[i]
        new = _soft(g + col_sq[j] * old, pen[j]) / col_sq[j]
        if new != old:
            step = new - old
            for i in range(n):
                r[i] -= X[i, j] * step
            theta[j] = new
            d2 += step * step
    return np.sqrt(d2)


def _support_step(X, y, pen, theta, r):
    """One exact line search on the current support with signs held fixed.

    The direction is a Newton step on the range of the support Gram matrix
    plus the negative gradient projected on its null space, so it is always
    a descent direction even when the support columns are collinear. The
    step is clipped where the first coordinate would reach zero. Returns
    the distance moved (0 when stalled).
    """
    A = np.flatnonzero(theta)
    if A.size == 0:
        return 0.0
    XA = X[:, A]
    s = np.sign(theta[A])
    g = XA.T @ r - pen[A] * s
    w, V = np.linalg.eigh(XA.T @ XA)
    keep = w > max(w[-1], 1.0) * 1e-10
    Vg = V.T @ g
    d = V[:, keep] @ (Vg[keep] / w[keep]) + V[:, ~keep] @ Vg[~keep]
    slope = float(g @ d)
    if not slope > 0.0:
        return 0.0
    Xd = XA @ d
    curv = float(Xd @ Xd)
    t = slope / curv if curv > 0.0 else np.inf
    shrink = d * s < 0
    ratios = -theta[A][shrink] / d[shrink]
    t_max = float(ratios.min()) if ratios.size else np.inf
    hit = t_max <= t
    t = min(t, t_max)
    if not (0.0 < t < np.inf):
        return 0.0
    old = theta[A]
    new = old + t * d
    if hit:
        new[np.flatnonzero(shrink)[np.argmin(ratios)]] = 0.0
        new[s * new < 0] = 0.0
    r -= XA @ (new - old)
    theta[A] = new
    return float(np.linalg.norm(new - old))


def cd_solve(X, y, pen, theta0, col_sq, tol, max_sweeps, max_passes, history):
    """Returns (theta, objective, sweeps, passes, converged, last_delta).

    ``sweeps`` counts full sweeps (bounded by ``max_sweeps``); ``passes``
    counts all passes including active-set ones (bounded by ``max_passes``).
    ``history`` receives the objective after every full sweep.

    Between full sweeps the support is refined by exact sign-fixed solves
    (see :func:`_support_step`) followed by active-set sweeps, falling back
    to plain active-set sweeps when the support Gram matrix is singular.
    """
    m = X.shape[1]
    theta = theta0.copy()
    theta[col_sq <= 0.0] = 0.0
    r = y - X @ theta
    sweeps = 0
    passes = 0
    delta = np.inf
    converged = False
    hlen = history.shape[0]
    while sweeps < max_sweeps and passes < max_passes:
        delta = _sweep(X, col_sq, pen, theta, r, False)
        if sweeps < hlen:
            history[sweeps] = _objective(r, theta, pen)
        sweeps += 1
        passes += 1
        if delta < tol:
            converged = True
            break
        for _ in range(m + 1):
            if passes >= max_passes or _support_step(X, y, pen, theta, r) == 0.0:
                break
            passes += 1
            d_act = _sweep(X, col_sq, pen, theta, r, True)
            passes += 1
            if d_act < tol:
                break
        while passes < max_passes:
            d_act = _sweep(X, col_sq, pen, theta, r, True)
            passes += 1
            if d_act < tol:
                break
    return theta, _objective(r, theta, pen), sweeps, passes, converged, delta

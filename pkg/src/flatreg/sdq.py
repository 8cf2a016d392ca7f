"""Spatial difference quotients: finite-difference gradient magnitudes of a
scalar field sampled at locations."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, GridGeometryError, ValidationError

SIN_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SdqField:
    values: np.ndarray  # NaN where undefined
    method: str
    defined: np.ndarray

    def to_csv(self, coords) -> str:
        coords = np.asarray(coords)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", *[f"x{d + 1}" for d in range(coords.shape[1])], "sdq"])
        for i, v in enumerate(self.values.tolist()):
            w.writerow([i, *map(repr, coords[i].tolist()), "" if not self.defined[i] else repr(v)])
        return buf.getvalue()


def _check(coords, values):
    coords = np.asarray(coords, dtype=float)
    values = np.asarray(values, dtype=float).ravel()
    if coords.ndim != 2 or coords.shape[0] != values.size:
        raise DimensionError("need one value per location")
    if not (np.all(np.isfinite(coords)) and np.all(np.isfinite(values))):
        raise ValidationError("coordinates and values must be finite")
    return coords, values


def _grid_index(coords):
    axes = [np.unique(coords[:, d]) for d in range(coords.shape[1])]
    if int(np.prod([a.size for a in axes])) != coords.shape[0]:
        raise GridGeometryError("locations are not a full rectilinear grid; use sdq_nn")
    idx = np.column_stack([np.searchsorted(a, coords[:, d]) for d, a in enumerate(axes)])
    lookup = -np.ones([a.size for a in axes], dtype=np.int64)
    lookup[tuple(idx.T)] = np.arange(coords.shape[0])
    if np.any(lookup < 0):
        raise GridGeometryError("duplicate grid locations; use sdq_nn")
    return axes, idx, lookup


def sdq_axis(coords, values) -> SdqField:
    """Per-axis quotient against the next grid point along each axis (the
    previous one on the far edge); an axis with a single grid line contributes 0."""
    coords, values = _check(coords, values)
    axes, idx, lookup = _grid_index(coords)
    total = np.zeros(values.size)
    for d, a in enumerate(axes):
        if a.size < 2:
            continue
        step = np.where(idx[:, d] + 1 < a.size, 1, -1)
        nb_idx = idx.copy()
        nb_idx[:, d] += step
        nb = lookup[tuple(nb_idx.T)]
        dist = np.abs(a[nb_idx[:, d]] - a[idx[:, d]])
        total += ((values - values[nb]) / dist) ** 2
    return SdqField(np.sqrt(total), "axis", np.ones(values.size, dtype=bool))


def two_nearest(coords) -> np.ndarray:
    """Indices (n, 2) of each point's two nearest other points; ties by lower id."""
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    if n < 3:
        raise ValidationError("need at least three locations")
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    ids = np.arange(n)
    out = np.empty((n, 2), dtype=np.int64)
    for i in range(n):
        out[i] = np.lexsort((ids, d[i]))[:2]
    return out


def sdq_nn(coords, values) -> SdqField:
    """Quotient from the two nearest neighbours ``j, k`` of each point, with
    ``g`` the angle between ``s_j - s_i`` and ``s_k - s_i``::

        D^2 = [dj^2/a^2 + dk^2/b^2 - 2 dj dk cos(g) / (a b)] / sin(g)^2

    where ``dj = v_i - v_j``, ``a = |s_j - s_i|`` (likewise ``k``, ``b``).
    Points whose neighbours are (nearly) collinear with them are undefined.
    """
    coords, values = _check(coords, values)
    nb = two_nearest(coords)
    j, k = nb[:, 0], nb[:, 1]
    u = coords[j] - coords
    v = coords[k] - coords
    a = np.linalg.norm(u, axis=1)
    b = np.linalg.norm(v, axis=1)
    ok = (a > 0) & (b > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_g = np.einsum("ij,ij->i", u, v) / (a * b)
        if coords.shape[1] == 2:
            cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        else:
            cross = np.linalg.norm(np.cross(u, v), axis=1)
        sin_g = cross / (a * b)
        sin2 = sin_g ** 2
        ok &= sin_g >= SIN_TOL
        dj = values - values[j]
        dk = values - values[k]
        q = (dj ** 2 / a ** 2 + dk ** 2 / b ** 2 - 2.0 * dj * dk * cos_g / (a * b)) / sin2
    out = np.where(ok, np.sqrt(np.maximum(q, 0.0)), np.nan)
    return SdqField(out, "nearest_neighbor", ok)

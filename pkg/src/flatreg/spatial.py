"""Core data types, validation, distance matrices and CSV ingestion."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError, ValidationError


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Location:
    id: int
    coords: tuple

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.coords):
            raise NonFiniteError(f"location {self.id} has non-finite coordinates")
        if len(self.coords) not in (2, 3):
            raise DimensionError("coordinates must be 2- or 3-dimensional")


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    """Regression input: ``y(s_i) = beta(s_i)^T x(s_i) + noise``.

    ``coords`` is (n, d) with d in {2, 3}; ``covariates`` is (n, p);
    ``response`` has length n. Ids are implicitly ``0..n-1``. An intercept is
    an explicit all-ones covariate column.
    """

    coords: np.ndarray
    covariates: np.ndarray
    response: np.ndarray
    covariate_names: tuple = ()

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        X = np.asarray(self.covariates, dtype=float)
        y = np.asarray(self.response, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if coords.ndim != 2 or coords.shape[1] not in (2, 3):
            raise DimensionError(f"coords must be (n, 2) or (n, 3), got {coords.shape}")
        n = coords.shape[0]
        if X.ndim != 2 or X.shape[0] != n:
            raise DimensionError(f"covariates have {X.shape[0]} rows, expected {n}")
        if y.ndim != 1 or y.shape[0] != n:
            raise DimensionError(f"response has length {y.shape[0]}, expected {n}")
        if X.shape[1] < 1:
            raise DimensionError("need at least one covariate")
        for name, a in (("coords", coords), ("covariates", X), ("response", y)):
            if not np.all(np.isfinite(a)):
                raise NonFiniteError(f"{name} contains non-finite values")
        names = tuple(self.covariate_names) or tuple(f"cov{k + 1}" for k in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DimensionError(f"{len(names)} covariate names for {X.shape[1]} columns")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "covariates", _frozen(X))
        object.__setattr__(self, "response", _frozen(y))
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def locations(self) -> list[Location]:
        return [Location(i, tuple(c)) for i, c in enumerate(self.coords.tolist())]

    def subset(self, idx) -> "SpatialDataset":
        idx = np.asarray(idx)
        return SpatialDataset(self.coords[idx], self.covariates[idx], self.response[idx],
                              self.covariate_names)

    def standardized(self, coords: bool = False, covariates: bool = False) -> "SpatialDataset":
        """Copy with coordinates min-max scaled to [0, 1] per axis and/or
        non-constant covariate columns z-scored. Constant columns (e.g. an
        intercept) are left alone."""
        C = self.coords.copy()
        X = self.covariates.copy()
        if coords:
            lo, hi = C.min(axis=0), C.max(axis=0)
            span = np.where(hi > lo, hi - lo, 1.0)
            C = (C - lo) / span
        if covariates:
            sd = X.std(axis=0)
            varying = sd > 0
            X[:, varying] = (X[:, varying] - X[:, varying].mean(axis=0)) / sd[varying]
        return SpatialDataset(C, X, self.response, self.covariate_names)


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Per-location coefficients; ``beta[i, k]`` is beta_k(s_i)."""

    beta: np.ndarray
    covariate_names: tuple = ()
    flagged: np.ndarray | None = field(default=None)

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.ndim != 2:
            raise DimensionError(f"beta must be 2-D, got shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise NonFiniteError("coefficient field contains non-finite values")
        names = tuple(self.covariate_names) or tuple(f"cov{k + 1}" for k in range(b.shape[1]))
        if len(names) != b.shape[1]:
            raise DimensionError(f"{len(names)} names for {b.shape[1]} coefficient columns")
        object.__setattr__(self, "beta", _frozen(b))
        object.__setattr__(self, "covariate_names", names)
        if self.flagged is not None:
            f = np.asarray(self.flagged, dtype=bool).copy()
            if f.shape != (b.shape[0],):
                raise DimensionError("flagged mask must have one entry per location")
            f.setflags(write=False)
            object.__setattr__(self, "flagged", f)

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    @property
    def p(self) -> int:
        return self.beta.shape[1]

    def check_matches(self, ds: SpatialDataset) -> None:
        if self.beta.shape != (ds.n, ds.p):
            raise DimensionError(f"field shape {self.beta.shape} does not match dataset ({ds.n}, {ds.p})")

    def fitted(self, ds: SpatialDataset) -> np.ndarray:
        self.check_matches(ds)
        return np.einsum("ik,ik->i", ds.covariates, self.beta)


def pairwise_distances(points) -> np.ndarray:
    """Euclidean distance matrix between the rows of ``points``."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if not np.all(np.isfinite(P)):
        raise NonFiniteError("points contain non-finite values")
    diff = P[:, None, :] - P[None, :, :]
    D = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(D, 0.0)
    return D


def euclidean_distance_matrix(ds: SpatialDataset) -> np.ndarray:
    if ds.n < 2:
        raise ValidationError("need at least two locations")
    return pairwise_distances(ds.coords)


def coefficient_distance_matrix(cf: CoefficientField) -> np.ndarray:
    return pairwise_distances(cf.beta)


# --- CSV ingestion -----------------------------------------------------------

def _parse_float(tok: str, where: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ValidationError(f"{where}: cannot parse {tok!r} as a number") from None
    if not math.isfinite(v):
        raise NonFiniteError(f"{where}: non-finite value {tok!r}")
    return v


def read_dataset_csv(path, coord_cols: Sequence[str] | None = None,
                     response_col: str | None = None) -> SpatialDataset:
    """Read ``id,x1,x2[,x3],<covariates...>,response``.

    Coordinate columns default to the run of ``x1, x2[, x3]`` right after
    ``id``; the response defaults to the last column.
    """
    text = Path(path).read_text()
    return parse_dataset_csv(text, coord_cols=coord_cols, response_col=response_col,
                             source=str(path))


def parse_dataset_csv(text: str, coord_cols=None, response_col=None, source="<csv>") -> SpatialDataset:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and not (len(r) == 1 and not r[0].strip())]
    if not rows:
        raise ValidationError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "id":
        raise ValidationError(f"{source}: header must start with 'id'")
    if coord_cols is None:
        coord_cols = [h for h in header[1:4] if h in ("x1", "x2", "x3")]
    if len(coord_cols) not in (2, 3):
        raise ValidationError(f"{source}: need 2 or 3 coordinate columns, found {coord_cols}")
    response_col = response_col or header[-1]
    for c in (*coord_cols, response_col):
        if c not in header:
            raise ValidationError(f"{source}: missing column {c!r}")
    cov_cols = [h for h in header[1:] if h not in coord_cols and h != response_col]
    if not cov_cols:
        raise ValidationError(f"{source}: no covariate columns")
    col = {h: j for j, h in enumerate(header)}
    ids, C, X, y = [], [], [], []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise ValidationError(f"{source}:{lineno}: expected {len(header)} fields, got {len(r)}")
        where = f"{source}:{lineno}"
        try:
            ids.append(int(r[0]))
        except ValueError:
            raise ValidationError(f"{where}: bad id {r[0]!r}") from None
        C.append([_parse_float(r[col[c]], where) for c in coord_cols])
        X.append([_parse_float(r[col[c]], where) for c in cov_cols])
        y.append(_parse_float(r[col[response_col]], where))
    ids = np.array(ids)
    if sorted(ids.tolist()) != list(range(len(ids))):
        raise ValidationError(f"{source}: ids must be unique and contiguous from 0")
    order = np.argsort(ids)
    return SpatialDataset(np.array(C)[order], np.array(X)[order], np.array(y)[order], tuple(cov_cols))


def dataset_to_csv(ds: SpatialDataset, response_name: str = "response") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    coord_names = [f"x{d + 1}" for d in range(ds.dim)]
    w.writerow(["id", *coord_names, *ds.covariate_names, response_name])
    for i in range(ds.n):
        w.writerow([i, *map(repr, ds.coords[i].tolist()), *map(repr, ds.covariates[i].tolist()),
                    repr(float(ds.response[i]))])
    return buf.getvalue()

"""Synthetic data: GP covariates on [0,1]^2 and piecewise-constant coefficient
surfaces, plus replication studies scoring estimation and clustering error."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigurationError, FlatError, NoAdmissibleClusteringError
from .spatial import CoefficientField, SpatialDataset, pairwise_distances

log = logging.getLogger(__name__)

GP_MAX_N = 3000


# --- surfaces ----------------------------------------------------------------

class BandsSurface(BaseModel):
    """Constant levels on intervals of one coordinate axis."""

    model_config = ConfigDict(extra="forbid", frozen=True)
    kind: Literal["bands"] = "bands"
    axis: int = Field(ge=0, le=1)
    breaks: tuple[float, ...]
    levels: tuple[float, ...]

    @model_validator(mode="after")
    def _check(self):
        if len(self.levels) != len(self.breaks) + 1:
            raise ValueError("bands need len(levels) == len(breaks) + 1")
        if list(self.breaks) != sorted(self.breaks):
            raise ValueError("breaks must be increasing")
        return self

    def regions(self, coords):
        return np.searchsorted(np.asarray(self.breaks), coords[:, self.axis], side="right")


class DiskSurface(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)
    kind: Literal["disk"] = "disk"
    center: tuple[float, float]
    radius: float = Field(gt=0)
    inside: float
    outside: float

    @property
    def levels(self):
        return (self.outside, self.inside)

    def regions(self, coords):
        d = np.hypot(coords[:, 0] - self.center[0], coords[:, 1] - self.center[1])
        return (d <= self.radius).astype(np.int64)


Surface = Annotated[Union[BandsSurface, DiskSurface], Field(discriminator="kind")]


def surface_values(surface, coords) -> tuple[np.ndarray, np.ndarray]:
    """(values, region labels starting at 1) of a surface at ``coords``."""
    reg = surface.regions(np.asarray(coords, dtype=float))
    return np.asarray(surface.levels, dtype=float)[reg], reg + 1


def default_surfaces() -> tuple:
    return (
        BandsSurface(axis=1, breaks=(0.5,), levels=(1.0, 3.0)),
        BandsSurface(axis=0, breaks=(1 / 3, 2 / 3), levels=(2.0, 4.0, 6.0)),
        DiskSurface(center=(0.5, 0.5), radius=0.3, inside=5.0, outside=2.0),
    )


class SimulationSpec(BaseModel):
    """Data-generating process ``y = b1 x1 + b2 x2 + b3 + noise``.

    The last surface multiplies the all-ones column; the others multiply GP
    covariates (mixed with correlation ``r`` for the second one).
    """

    model_config = ConfigDict(extra="forbid", frozen=True)
    n: int = Field(default=1000, ge=3, le=GP_MAX_N)
    phi: float = Field(default=0.2, gt=0)
    r: float = Field(default=0.75, ge=0, lt=1)
    sigma: float = Field(default=0.1, ge=0)
    surfaces: tuple[Surface, ...] = Field(default_factory=default_surfaces)
    reps: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)

    @field_validator("surfaces")
    @classmethod
    def _two_or_three(cls, v):
        if len(v) not in (2, 3):
            raise ValueError("need 2 or 3 surfaces (one or two GP covariates plus intercept)")
        return v

    @property
    def p(self) -> int:
        return len(self.surfaces)


# --- sampling ----------------------------------------------------------------

def exponential_covariance(coords, phi: float) -> np.ndarray:
    return np.exp(-pairwise_distances(coords) / phi)


def _cholesky_with_jitter(C):
    jitter = 1e-10
    while jitter <= 1e-6 * (1 + 1e-9):
        try:
            return np.linalg.cholesky(C + jitter * np.eye(C.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10
    raise FlatError("covariance factorization failed even with jitter 1e-6")


def sample_gp(coords, phi: float, seed=None, size: int | None = None, rng=None) -> np.ndarray:
    """Zero-mean GP draw(s) with covariance ``exp(-||s_i - s_j|| / phi)``.

    Returns shape (n,) or (size, n).
    """
    if not phi > 0:
        raise ConfigurationError("phi must be positive")
    coords = np.asarray(coords, dtype=float)
    if coords.shape[0] > GP_MAX_N:
        raise ConfigurationError(f"dense GP sampling limited to n <= {GP_MAX_N}")
    L = _cholesky_with_jitter(exponential_covariance(coords, phi))
    rng = rng if rng is not None else np.random.default_rng(seed)
    z = rng.standard_normal((1 if size is None else size, coords.shape[0]))
    out = z @ L.T
    return out[0] if size is None else out


def make_covariates(z1, z2, r: float):
    if not abs(r) < 1:
        raise ConfigurationError("|r| must be < 1")
    z1 = np.asarray(z1, dtype=float)
    return z1.copy(), r * z1 + math.sqrt(1 - r * r) * np.asarray(z2, dtype=float)


@dataclass(frozen=True, eq=False)
class DGPDraw:
    dataset: SpatialDataset
    truth: CoefficientField
    regions: np.ndarray  # (n, p) integer region labels, starting at 1


def generate_dgp(spec: SimulationSpec, seed: int | None = None, coords=None) -> DGPDraw:
    """One draw: uniform locations on [0,1]^2 (unless ``coords`` is given),
    GP covariates, ``x3 = 1`` for the last surface, Gaussian noise."""
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    if coords is None:
        coords = rng.uniform(0.0, 1.0, size=(spec.n, 2))
    coords = np.asarray(coords, dtype=float)
    chol = _cholesky_with_jitter(exponential_covariance(coords, spec.phi))
    return _assemble(spec, coords, chol, rng)


# --- replication study -------------------------------------------------------

ESTIMATION_MEASURES = ("RMSE", "MAE", "SD")
CLUSTERING_MEASURES = ("RI", "ARI", "SC", "CHI")


def replicate_seed(seed: int, t: int) -> int:
    return int(seed) ^ int(t)


def per_location_errors(estimates, truth) -> dict:
    """RMSE/MAE/SD per location and coordinate over replicates.

    ``estimates`` is (T, n, p), ``truth`` is (n, p). Returns arrays of shape
    (n, p); SD uses the 1/T normalization.
    """
    est = np.asarray(estimates, dtype=float)
    err = est - np.asarray(truth, dtype=float)[None]
    mean_est = est.mean(axis=0)
    return {
        "RMSE": np.sqrt(np.mean(err ** 2, axis=0)),
        "MAE": np.mean(np.abs(err), axis=0),
        "SD": np.sqrt(np.mean((est - mean_est[None]) ** 2, axis=0)),
    }


@dataclass(frozen=True, eq=False)
class MetricTable:
    """``estimation[(coordinate, method, measure)]`` averaged over locations;
    ``clustering[(coordinate, method, measure)]`` averaged over replicates."""

    estimation: dict
    clustering: dict
    coordinates: tuple
    methods: tuple
    diagnostics: dict = field(default_factory=dict)
    spec: dict = field(default_factory=dict)

    def value(self, measure: str, coordinate, method: str) -> float:
        coord = self.coordinates[coordinate] if isinstance(coordinate, int) else coordinate
        key = (coord, method, measure)
        return self.estimation[key] if measure in ESTIMATION_MEASURES else self.clustering[key]

    def rows(self):
        for measures, store in ((ESTIMATION_MEASURES, self.estimation),
                                (CLUSTERING_MEASURES, self.clustering)):
            for measure in measures:
                for coord in self.coordinates:
                    for method in self.methods:
                        if (coord, method, measure) in store:
                            yield measure, coord, method, store[(coord, method, measure)]

    def to_csv(self) -> str:
        lines = ["measure,coordinate,method,value"]
        for measure, coord, method, v in self.rows():
            lines.append(f"{measure},{coord},{method},{_fmt(v)}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        out = {"spec": self.spec, "diagnostics": self.diagnostics, "estimation": {}, "clustering": {}}
        for measure, coord, method, v in self.rows():
            block = "estimation" if measure in ESTIMATION_MEASURES else "clustering"
            out[block].setdefault(measure, {}).setdefault(coord, {})[method] = _json_float(v)
        return out


def _fmt(v) -> str:
    v = float(v)
    return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else "inf")


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _default_methods(flat_config=None, gwr_config=None):
    from .baselines import GwrConfig, fit_gwr
    from .solver import FlatConfig, fit_flat, select_initial

    flat_config = flat_config or FlatConfig()
    gwr_config = gwr_config or GwrConfig()
    cache = {}

    def scc(ds):
        key = id(ds)
        if key not in cache:
            cache.clear()
            cache[key] = select_initial(ds, tol=flat_config.cd_tolerance,
                                        max_sweeps=flat_config.max_sweeps).beta
        return cache[key]

    def flat(ds):
        initial = scc(ds) if flat_config.init_lambda is None else None
        return fit_flat(ds, flat_config, initial=initial).beta

    def gwr(ds):
        return fit_gwr(ds, gwr_config)

    return {"FLAT": flat, "SCC": scc, "GWR": gwr}


def cluster_scores(field_k, true_regions, eps_grid=None, minpts_grid=None) -> dict:
    """RI/ARI against ``true_regions`` and SC/CHI on the fitted values, for
    the clustering picked by :func:`select_clustering`. When nothing is
    admissible, all points are treated as one cluster (SC/CHI undefined)."""
    from .cluster import select_clustering
    from .metrics import adjusted_rand_index, calinski_harabasz, noise_as_singletons, rand_index, silhouette

    vals = np.asarray(field_k, dtype=float)
    try:
        res, _ = select_clustering(vals, eps_grid, minpts_grid)
        labels = res.labels
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sc = silhouette(vals, labels)
            chi = calinski_harabasz(vals, labels)
        admissible = True
    except NoAdmissibleClusteringError:
        labels = np.ones(vals.size, dtype=np.int64)
        sc = chi = float("nan")
        admissible = False
    pred = noise_as_singletons(labels)
    return {"RI": rand_index(true_regions, pred), "ARI": adjusted_rand_index(true_regions, pred),
            "SC": sc, "CHI": chi, "admissible": admissible}


def run_replications(spec: SimulationSpec, methods=("FLAT", "SCC", "GWR"), flat_config=None,
                     gwr_config=None, eps_grid=None, minpts_grid=None, cluster: bool = True,
                     progress=None) -> MetricTable:
    """Replicate the DGP ``spec.reps`` times and score every method.

    Locations are drawn once from ``spec.seed``; replicate ``t`` (1-based)
    redraws covariates and noise from ``seed ^ t``. ``methods`` is a sequence
    of names from {FLAT, SCC, GWR} or a mapping ``name -> fit(ds) ->
    CoefficientField``.
    """
    if spec.reps < 2:
        raise ConfigurationError("a replication study needs reps >= 2")
    if isinstance(methods, dict):
        fitters = dict(methods)
    else:
        available = _default_methods(flat_config, gwr_config)
        unknown = [m for m in methods if m not in available]
        if unknown:
            raise ConfigurationError(f"unknown methods {unknown}; choose from {sorted(available)}")
        fitters = {m: available[m] for m in methods}
    names = tuple(fitters)
    coords = np.random.default_rng(spec.seed).uniform(0.0, 1.0, size=(spec.n, 2))
    chol = _cholesky_with_jitter(exponential_covariance(coords, spec.phi))
    T = spec.reps
    estimates = {m: [] for m in names}
    clus = {m: [] for m in names}
    failures = {m: 0 for m in names}
    truth = regions = cov_names = None
    for t in range(1, T + 1):
        draw = _draw(spec, coords, chol, replicate_seed(spec.seed, t))
        truth, regions, cov_names = draw.truth.beta, draw.regions, draw.truth.covariate_names
        for m in names:
            try:
                cf = fitters[m](draw.dataset)
                cf.check_matches(draw.dataset)
            except FlatError as exc:
                failures[m] += 1
                log.warning("replicate %d: %s failed: %s", t, m, exc)
                if failures[m] > 0.1 * T:
                    raise FlatError(f"{m} failed on {failures[m]} of {T} replicates") from exc
                continue
            estimates[m].append(cf.beta)
            if cluster:
                clus[m].append([cluster_scores(cf.beta[:, k], regions[:, k], eps_grid, minpts_grid)
                                for k in range(spec.p)])
        if progress:
            progress(t, T)
    estimation, clustering = {}, {}
    diag = {"failures": failures, "replicates": T, "clustering_inadmissible": {},
            "chi_undefined": {}}
    for m in names:
        if not estimates[m]:
            raise FlatError(f"{m} produced no successful replicate")
        errs = per_location_errors(np.stack(estimates[m]), truth)
        for k, coord in enumerate(cov_names):
            for measure in ESTIMATION_MEASURES:
                estimation[(coord, m, measure)] = float(errs[measure][:, k].mean())
            if cluster:
                rows = [r[k] for r in clus[m]]
                diag["clustering_inadmissible"][f"{coord}/{m}"] = sum(not r["admissible"] for r in rows)
                for measure in CLUSTERING_MEASURES:
                    vals = np.array([r[measure] for r in rows], dtype=float)
                    ok = np.isfinite(vals)
                    if measure == "CHI":
                        diag["chi_undefined"][f"{coord}/{m}"] = int((~ok).sum())
                    clustering[(coord, m, measure)] = float(vals[ok].mean()) if ok.any() else 0.0
    return MetricTable(estimation, clustering, tuple(cov_names), names, diag,
                       spec.model_dump(mode="json"))


def _draw(spec, coords, chol, seed) -> DGPDraw:
    rng = np.random.default_rng(seed)
    return _assemble(spec, coords, chol, rng)


def _assemble(spec, coords, chol, rng) -> DGPDraw:
    n, p = coords.shape[0], spec.p
    z = rng.standard_normal((2, n)) @ chol.T
    x1, x2 = make_covariates(z[0], z[1], spec.r)
    if p == 3:
        X = np.column_stack([x1, x2, np.ones(n)])
        names = ("cov1", "cov2", "intercept")
    else:
        X = np.column_stack([x1, np.ones(n)])
        names = ("cov1", "intercept")
    B = np.empty((n, p))
    regions = np.empty((n, p), dtype=np.int64)
    for k, s in enumerate(spec.surfaces):
        B[:, k], regions[:, k] = surface_values(s, coords)
    y = np.einsum("ik,ik->i", X, B) + spec.sigma * rng.standard_normal(n)
    return DGPDraw(SpatialDataset(coords, X, y, names), CoefficientField(B, names), regions)

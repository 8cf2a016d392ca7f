"""Command-line front end: ``flatreg {simulate,fit,cluster,sdq,evaluate}``.

Every command validates its settings with a pydantic model (unknown keys are
rejected), writes plain CSV/JSON into ``--out`` and records the config hash
plus file checksums in ``manifest.json``. A ``--config`` JSON file overrides
values given as flags. Failures print a JSON error object on stderr and exit
with a nonzero code.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticError, model_validator

from .errors import FlatError, StageError
from .io import OutputDir, coefficients_to_csv, labels_to_csv, parse_coefficients_csv
from .simulation import SimulationSpec, generate_dgp, run_replications
from .spatial import CoefficientField, dataset_to_csv, read_dataset_csv

EXIT_USAGE = 2
EXIT_FAILURE = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SimulateConfig(_Strict):
    out: Path
    seed: int = Field(ge=0, lt=2 ** 64)
    n: int = Field(default=1000, ge=3, le=3000)
    phi: float = Field(default=0.2, gt=0)
    r: float = Field(default=0.75, ge=0, lt=1)
    sigma: float = Field(default=0.1, ge=0)


class FitConfig(_Strict):
    data: Path
    out: Path
    method: Literal["flat", "scc", "gwr"] = "flat"
    lambda1: float | None = Field(default=None, gt=0)
    lambda2: float | None = Field(default=None, gt=0)
    gamma: float = Field(default=1.0, gt=0)
    init_lambda: float | None = Field(default=None, gt=0)
    bandwidth: float | None = Field(default=None, gt=0)
    auto_tune: bool = False
    standardize: Literal["none", "coords", "covariates", "both"] = "none"
    cd_tolerance: float = Field(default=1e-6, gt=0)
    max_sweeps: int = Field(default=10000, ge=1)

    @model_validator(mode="after")
    def _lambdas(self):
        if self.method == "flat" and not self.auto_tune and (self.lambda1 is None or self.lambda2 is None):
            raise ValueError("flat needs --lambda1 and --lambda2, or --auto-tune")
        if self.method == "scc" and not self.auto_tune and self.lambda1 is None:
            raise ValueError("scc needs --lambda1, or --auto-tune")
        return self


class ClusterConfig(_Strict):
    coefficients: Path
    out: Path
    eps_grid: list[float] | None = None
    minpts_grid: list[int] | None = None
    mode: Literal["per_coordinate", "joint"] = "per_coordinate"
    k_max: int = Field(default=12, ge=2)
    max_noise: float = Field(default=0.2, ge=0, le=1)

    @model_validator(mode="after")
    def _grids(self):
        if self.eps_grid is not None and (not self.eps_grid or min(self.eps_grid) <= 0):
            raise ValueError("eps_grid must be non-empty and positive")
        if self.minpts_grid is not None and (not self.minpts_grid or min(self.minpts_grid) < 1):
            raise ValueError("minpts_grid must be non-empty and >= 1")
        return self


class SdqConfig(_Strict):
    coefficients: Path
    out: Path
    coordinate: int = Field(default=0, ge=0)
    method: Literal["axis", "nn"] = "nn"


class EvaluateConfig(_Strict):
    out: Path
    seed: int = Field(ge=0, lt=2 ** 64)
    reps: int = Field(default=100, ge=2)
    methods: list[Literal["FLAT", "SCC", "GWR"]] = ["FLAT", "SCC", "GWR"]
    n: int = Field(default=200, ge=3, le=3000)
    phi: float = Field(default=0.2, gt=0)
    r: float = Field(default=0.75, ge=0, lt=1)
    sigma: float = Field(default=0.1, ge=0)
    eps_grid: list[float] | None = None
    minpts_grid: list[int] | None = None
    cluster: bool = True


CONFIGS = {"simulate": SimulateConfig, "fit": FitConfig, "cluster": ClusterConfig,
           "sdq": SdqConfig, "evaluate": EvaluateConfig}


# --- commands ----------------------------------------------------------------

def _config_dict(cfg: BaseModel) -> dict:
    # the output location is not a parameter of the run
    return cfg.model_dump(mode="json", exclude={"out"})


def cmd_simulate(cfg: SimulateConfig) -> OutputDir:
    spec = SimulationSpec(n=cfg.n, phi=cfg.phi, r=cfg.r, sigma=cfg.sigma, seed=cfg.seed, reps=1)
    draw = generate_dgp(spec)
    out = OutputDir(cfg.out, _config_dict(cfg), "simulate")
    out.write("dataset.csv", dataset_to_csv(draw.dataset))
    out.write("truth.csv", coefficients_to_csv(draw.dataset.coords, draw.truth))
    out.write("regions.csv", labels_to_csv({f"region_{name}": draw.regions[:, k]
                                            for k, name in enumerate(draw.truth.covariate_names)}))
    out.write_json("spec.json", {"spec": spec.model_dump(mode="json")})
    return out


def cmd_fit(cfg: FitConfig) -> OutputDir:
    from .baselines import GwrConfig, fit_gwr, fit_scc
    from .solver import FlatConfig, fit_flat, select_initial, select_lambdas

    ds = _stage("read", read_dataset_csv, cfg.data)
    if cfg.standardize != "none":
        ds = ds.standardized(coords=cfg.standardize in ("coords", "both"),
                             covariates=cfg.standardize in ("covariates", "both"))
    info: dict = {"method": cfg.method, "n": ds.n, "p": ds.p}
    if cfg.method == "gwr":
        cf = _stage("gwr", fit_gwr, ds, GwrConfig(bandwidth=cfg.bandwidth or "auto"))
        info["bandwidth"] = getattr(cf, "bandwidth", None)
        info["flagged"] = int(cf.flagged.sum()) if cf.flagged is not None else 0
    elif cfg.method == "scc":
        if cfg.auto_tune:
            init = _stage("scc", select_initial, ds, None, cfg.cd_tolerance, cfg.max_sweeps)
            cf = init.beta
            info.update(lambda1=init.lam, df=init.df, bic={repr(k): v for k, v in init.scores.items()})
        else:
            cf = _stage("scc", fit_scc, ds, cfg.lambda1, cfg.cd_tolerance, cfg.max_sweeps)
            info["lambda1"] = cfg.lambda1
    else:
        fc = FlatConfig(lambda1=None if cfg.auto_tune else cfg.lambda1,
                        lambda2=None if cfg.auto_tune else cfg.lambda2,
                        gamma=cfg.gamma, cd_tolerance=cfg.cd_tolerance,
                        max_sweeps=cfg.max_sweeps, init_lambda=cfg.init_lambda)
        if cfg.auto_tune:
            sel = _stage("select", select_lambdas, ds, None, fc)
            fit = sel.fit
            info["bic"] = {f"{a!r},{b!r}": v for (a, b), v in sel.scores.items()}
            info["failed_grid_points"] = len(sel.failures)
        else:
            fit = fit_flat(ds, fc)
        cf = fit.beta
        info.update(fit.summary())
    resid = ds.response - cf.fitted(ds)
    info["rss"] = float(resid @ resid)
    info["rmse"] = float(np.sqrt(np.mean(resid ** 2)))
    out = OutputDir(cfg.out, _config_dict(cfg), "fit")
    out.write("coefficients.csv", coefficients_to_csv(ds.coords, cf))
    out.write_json("fit.json", info)
    return out


def cmd_cluster(cfg: ClusterConfig) -> OutputDir:
    from .cluster import select_clustering

    coords, cf = _stage("read", _read_coefficients, cfg.coefficients)
    targets = ({name: cf.beta[:, k] for k, name in enumerate(cf.covariate_names)}
               if cfg.mode == "per_coordinate" else {"joint": cf.beta})
    labels, scores = {}, {}
    for name, data in targets.items():
        best, table = _stage(f"cluster[{name}]", select_clustering, data, cfg.eps_grid,
                             cfg.minpts_grid, cfg.k_max, cfg.max_noise)
        labels[f"label_{name}" if cfg.mode == "per_coordinate" else "label"] = best.labels
        scores[name] = {"epsilon": best.epsilon, "min_pts": best.min_pts, "k": best.k,
                        "noise_fraction": best.noise_fraction, "grid": table}
    out = OutputDir(cfg.out, _config_dict(cfg), "cluster")
    out.write("labels.csv", labels_to_csv(labels))
    out.write_json("scores.json", {"mode": cfg.mode, "results": scores})
    return out


def cmd_sdq(cfg: SdqConfig) -> OutputDir:
    from .sdq import sdq_axis, sdq_nn

    coords, cf = _stage("read", _read_coefficients, cfg.coefficients)
    if cfg.coordinate >= cf.p:
        raise FlatError(f"coordinate {cfg.coordinate} out of range for p={cf.p}")
    fn = sdq_axis if cfg.method == "axis" else sdq_nn
    field = _stage("sdq", fn, coords, cf.beta[:, cfg.coordinate])
    out = OutputDir(cfg.out, _config_dict(cfg), "sdq")
    out.write("sdq.csv", field.to_csv(coords))
    return out


def cmd_evaluate(cfg: EvaluateConfig) -> OutputDir:
    spec = SimulationSpec(n=cfg.n, phi=cfg.phi, r=cfg.r, sigma=cfg.sigma, reps=cfg.reps, seed=cfg.seed)
    table = _stage("evaluate", run_replications, spec, tuple(cfg.methods),
                   eps_grid=cfg.eps_grid, minpts_grid=cfg.minpts_grid, cluster=cfg.cluster)
    out = OutputDir(cfg.out, _config_dict(cfg), "evaluate")
    out.write("metrics.csv", table.to_csv())
    out.write_json("metrics.json", table.to_dict())
    return out


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "cluster": cmd_cluster,
            "sdq": cmd_sdq, "evaluate": cmd_evaluate}


def _read_coefficients(path):
    return parse_coefficients_csv(Path(path).read_text(), source=str(path))


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except FlatError as exc:
        raise StageError(name, exc) from exc
    except OSError as exc:
        raise StageError(name, FlatError(f"{exc.strerror}: {exc.filename}")) from exc


# --- argument parsing --------------------------------------------------------

def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _methods(text):
    return [t.strip().upper() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flatreg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON file; its keys override flags")
        sp.add_argument("--out", type=Path, help="output directory")

    s = sub.add_parser("simulate", help="draw one synthetic dataset")
    common(s)
    s.add_argument("--seed", type=int)
    for name, typ in (("n", int), ("phi", float), ("r", float), ("sigma", float)):
        s.add_argument(f"--{name}", type=typ)

    f = sub.add_parser("fit", help="estimate coefficients")
    common(f)
    f.add_argument("--data", type=Path)
    f.add_argument("--method", choices=["flat", "scc", "gwr"])
    f.add_argument("--lambda1", type=float)
    f.add_argument("--lambda2", type=float)
    f.add_argument("--gamma", type=float)
    f.add_argument("--init-lambda", dest="init_lambda", type=float)
    f.add_argument("--bandwidth", type=float)
    f.add_argument("--auto-tune", dest="auto_tune", action="store_true", default=None)
    f.add_argument("--standardize", nargs="?", const="both",
                   choices=["none", "coords", "covariates", "both"])

    c = sub.add_parser("cluster", help="DBSCAN on fitted coefficients")
    common(c)
    c.add_argument("--coefficients", type=Path)
    c.add_argument("--eps-grid", dest="eps_grid", type=_floats)
    c.add_argument("--minpts-grid", dest="minpts_grid", type=_ints)
    g = c.add_mutually_exclusive_group()
    g.add_argument("--per-coordinate", dest="mode", action="store_const", const="per_coordinate")
    g.add_argument("--joint", dest="mode", action="store_const", const="joint")

    q = sub.add_parser("sdq", help="spatial difference quotient of one coefficient")
    common(q)
    q.add_argument("--coefficients", type=Path)
    q.add_argument("--coordinate", type=int)
    q.add_argument("--method", choices=["axis", "nn"])

    e = sub.add_parser("evaluate", help="replication study over synthetic draws")
    common(e)
    e.add_argument("--seed", type=int)
    e.add_argument("--reps", type=int)
    e.add_argument("--methods", type=_methods)
    for name, typ in (("n", int), ("phi", float), ("r", float), ("sigma", float)):
        e.add_argument(f"--{name}", type=typ)
    e.add_argument("--eps-grid", dest="eps_grid", type=_floats)
    e.add_argument("--minpts-grid", dest="minpts_grid", type=_ints)
    e.add_argument("--no-cluster", dest="cluster", action="store_false", default=None)
    return p


def resolve_config(args: argparse.Namespace) -> BaseModel:
    values = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    if args.config is not None:
        try:
            overrides = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise StageError("config", FlatError(f"{exc.strerror}: {args.config}")) from exc
        except json.JSONDecodeError as exc:
            raise StageError("config", FlatError(f"{args.config}: invalid JSON ({exc})")) from exc
        if not isinstance(overrides, dict):
            raise StageError("config", FlatError(f"{args.config}: expected a JSON object"))
        values.update(overrides)
    return CONFIGS[args.command].model_validate(values)


def _error(kind: str, message: str, **extra) -> dict:
    return {"error": kind, "message": message, **extra}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except PydanticError as exc:
        fields = [{"field": ".".join(map(str, e["loc"])), "message": e["msg"]} for e in exc.errors()]
        print(json.dumps(_error("ConfigError", f"invalid {args.command} configuration",
                                fields=fields)), file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(json.dumps(_error(type(exc.cause).__name__, str(exc.cause), stage=exc.stage)),
              file=sys.stderr)
        return EXIT_USAGE
    try:
        out = COMMANDS[args.command](cfg)
        manifest = out.close()
    except StageError as exc:
        print(json.dumps(_error(type(exc.cause).__name__, str(exc.cause), stage=exc.stage)),
              file=sys.stderr)
        return EXIT_FAILURE
    except FlatError as exc:
        print(json.dumps(_error(type(exc).__name__, str(exc), stage=args.command)), file=sys.stderr)
        return EXIT_FAILURE
    print(json.dumps({"command": args.command, "manifest": str(manifest),
                      "files": sorted(out.files)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())

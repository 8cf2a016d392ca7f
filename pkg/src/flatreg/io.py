"""CSV/JSON output helpers and provenance manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import DimensionError, ValidationError
from .spatial import CoefficientField, _parse_float

MANIFEST = "manifest.json"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_default)


def _default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def json_safe(v):
    """Replace non-finite floats so the output is strict JSON."""
    if isinstance(v, dict):
        return {str(k): json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [json_safe(x) for x in v]
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return json_safe(v.tolist())
    return v


def dumps(obj) -> str:
    return json.dumps(json_safe(obj), indent=2, sort_keys=True) + "\n"


class OutputDir:
    """Collects files written for one command and records them, with their
    sha256 and the config hash, in ``manifest.json``."""

    def __init__(self, path, config: dict, command: str):
        self.path = Path(path)
        self.config = config
        self.hash = config_hash(config)
        self.command = command
        self.files: dict[str, str] = {}

    def write(self, name: str, text: str) -> Path:
        self.path.mkdir(parents=True, exist_ok=True)
        target = self.path / name
        with open(target, "w", newline="") as fh:
            fh.write(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        return target

    def write_json(self, name: str, obj: dict) -> Path:
        return self.write(name, dumps({"config_hash": self.hash, **obj}))

    def close(self) -> Path:
        return self.write(MANIFEST, dumps({"command": self.command, "config_hash": self.hash,
                                           "config": self.config, "files": dict(self.files)}))


def coefficients_to_csv(coords, field: CoefficientField) -> str:
    coords = np.asarray(coords, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", *[f"x{d + 1}" for d in range(coords.shape[1])],
                *[f"beta_{name}" for name in field.covariate_names]])
    for i in range(field.n):
        w.writerow([i, *map(repr, coords[i].tolist()), *map(repr, field.beta[i].tolist())])
    return buf.getvalue()


def parse_coefficients_csv(text: str, source: str = "<csv>"):
    """Inverse of :func:`coefficients_to_csv`: returns ``(coords, field)``."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValidationError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "id":
        raise ValidationError(f"{source}: first column must be 'id'")
    xcols = [j for j, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
    bcols = [j for j, h in enumerate(header) if h.startswith("beta_")]
    if not xcols or not bcols:
        raise ValidationError(f"{source}: need x1.. coordinate and beta_* columns")
    body = [r for r in rows[1:] if r]
    coords = np.empty((len(body), len(xcols)))
    beta = np.empty((len(body), len(bcols)))
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DimensionError(f"{source}: line {i + 2} has {len(r)} fields, expected {len(header)}")
        if r[0].strip() != str(i):
            raise ValidationError(f"{source}: ids must be 0..n-1 in order (line {i + 2})")
        coords[i] = [_parse_float(r[j], f"{source}:{i + 2}") for j in xcols]
        beta[i] = [_parse_float(r[j], f"{source}:{i + 2}") for j in bcols]
    names = tuple(header[j][len("beta_"):] for j in bcols)
    return coords, CoefficientField(beta, names)


def labels_to_csv(columns: dict) -> str:
    """``columns`` maps a column name to an (n,) label array."""
    names = list(columns)
    n = len(next(iter(columns.values())))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", *names])
    for i in range(n):
        w.writerow([i, *[int(columns[c][i]) for c in names]])
    return buf.getvalue()

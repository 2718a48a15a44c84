"""Convergence reports, rate fitting and atomic CSV/JSON output."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


def fit_rate(ks, errors, floor: float = 1e-300) -> float | None:
    """Negative least-squares slope of ``log error`` against ``log k``.

    Entries with error at or below ``floor`` are ignored; ``None`` when fewer
    than two usable points remain.
    """
    ks = np.asarray(ks, dtype=float)
    errors = np.asarray(errors, dtype=float)
    keep = errors > floor
    if keep.sum() < 2:
        return None
    slope = np.polyfit(np.log(ks[keep]), np.log(errors[keep]), 1)[0]
    return float(-slope)


def observed_order(coarse: float, fine: float, ratio: float = 2.0) -> float:
    if coarse <= 0 or fine <= 0:
        return math.inf
    return math.log(coarse / fine) / math.log(ratio)


def relative_residual(a: float, b: float, scale: float | None = None) -> float:
    s = max(abs(a), abs(b)) if scale is None else scale
    d = abs(a - b)
    return d / s if s > 0 else d


@dataclass
class ConvergenceReport:
    """Outcome of a convergence study over ``k = 1..k_max``.

    ``hypotheses_ok`` says whether the supplied certificates / dominators
    verified; when false the conclusion check is skipped and ``errors`` stays
    empty.
    """

    hypotheses_ok: bool
    violations: list = field(default_factory=list)
    ks: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)        # z_id -> [abs error per k]
    rates: dict = field(default_factory=dict)         # z_id -> fitted rate or None
    converged_at: int | None = None
    monotone: bool | None = None
    notes: list = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return not self.hypotheses_ok

    def rows(self) -> list[dict]:
        out = []
        for z_id, errs in self.errors.items():
            for k, e in zip(self.ks, errs):
                out.append({"k": k, "z_id": z_id, "abs_error": e, "fitted_rate": self.rates.get(z_id)})
        return out

    def summary(self) -> dict:
        return {
            "hypotheses_ok": self.hypotheses_ok,
            "violations": [str(v) for v in self.violations[:20]],
            "n_violations": len(self.violations),
            "rates": self.rates,
            "converged_at": self.converged_at,
            "monotone": self.monotone,
            "notes": self.notes,
        }


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def write_atomic(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def write_csv(path, rows: list[dict], columns: list[str]) -> Path:
    return write_atomic(path, csv_text(rows, columns))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    return obj


def write_json(path, payload: dict) -> Path:
    return write_atomic(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")

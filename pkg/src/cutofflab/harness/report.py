"""CSV and JSON serialization of convergence reports.

Output is byte-stable for a fixed config and seed: floats are written with
``repr``, keys are sorted and nothing time-dependent is recorded.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from ..errors import IoError
from .studies import ConvergenceReport, Series

__all__ = ["CSV_COLUMNS", "SCHEMA_VERSION", "emit_report", "summary_dict", "series_rows", "load_summary"]

CSV_COLUMNS = ("study", "model", "dim", "f_kind", "f_params", "k", "L", "value")
SCHEMA_VERSION = 1


def _clean(obj: Any) -> Any:
    """Plain JSON types; NaN and infinities become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    return obj


def _num(x: float | None) -> str:
    if x is None:
        return ""
    return repr(float(x))


def series_rows(r: ConvergenceReport, s: Series) -> list[list[str]]:
    cfg = r.config
    return [
        [
            cfg.kind,
            cfg.model,
            str(p.dim),
            s.spec.f_kind,
            s.spec.f_params,
            "" if s.spec.k is None else str(s.spec.k),
            _num(p.x),
            _num(p.value),
        ]
        for p in s.points
    ]


def _csv_text(rows: Iterable[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows(rows)
    return buf.getvalue()


def _slug(series_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9.=_-]+", "_", series_id).strip("_")


def summary_dict(r: ConvergenceReport, csv_names: dict[str, str] | None = None) -> dict:
    from .. import __version__

    csv_names = csv_names or {}
    series = []
    for s in r.series:
        series.append(
            {
                "id": s.spec.id,
                "rule": s.spec.rule,
                "param": s.spec.param,
                "f_kind": s.spec.f_kind,
                "f_params": s.spec.f_params,
                "k": s.spec.k,
                "verdict": s.verdict,
                "reason": s.reason,
                "final": s.final,
                "fit": None if s.fit is None else {"rho": s.fit.rho, "C": s.fit.C, "r2": s.fit.r2, "points": s.fit.points},
                "stability": s.stability,
                "extra": s.extra,
                "csv": csv_names.get(s.spec.id),
            }
        )
    return _clean(
        {
            "tool": "cutofflab",
            "version": __version__,
            "schema": SCHEMA_VERSION,
            "study": r.study_id,
            "kind": r.config.kind,
            "model": r.config.model,
            "seed": r.config.seed,
            "config": r.config.to_dict(),
            "dims": list(r.dims),
            "grid": list(r.grid),
            "counts": r.counts(),
            "exit_code": r.exit_code,
            "extras": r.extras,
            "series": series,
        }
    )


def emit_report(r: ConvergenceReport, out_dir: str | Path, formats: Iterable[str] = ("csv", "json")) -> list[Path]:
    """Write ``<out>/<study>/series/*.csv``, ``series.csv`` (all rows) and ``summary.json``.

    An empty study still produces a header-only ``series.csv``.
    """
    formats = tuple(formats)
    bad = set(formats) - {"csv", "json"}
    if bad:
        raise ValueError(f"unknown report formats {sorted(bad)}")
    root = Path(out_dir) / r.study_id
    written: list[Path] = []
    names: dict[str, str] = {}
    try:
        if "csv" in formats:
            (root / "series").mkdir(parents=True, exist_ok=True)
            all_rows = []
            used: set[str] = set()
            for i, s in enumerate(r.series):
                name = _slug(s.spec.id) or f"series{i}"
                if name in used:
                    name = f"{name}_{i}"
                used.add(name)
                rows = series_rows(r, s)
                all_rows += rows
                path = root / "series" / f"{name}.csv"
                path.write_text(_csv_text(rows))
                names[s.spec.id] = f"series/{name}.csv"
                written.append(path)
            path = root / "series.csv"
            path.write_text(_csv_text(all_rows))
            written.append(path)
        if "json" in formats:
            root.mkdir(parents=True, exist_ok=True)
            path = root / "summary.json"
            text = json.dumps(summary_dict(r, names), sort_keys=True, indent=2, allow_nan=False)
            path.write_text(text + "\n")
            written.append(path)
    except OSError as exc:
        raise IoError(f"cannot write report under {root}: {exc}") from exc
    return written


def load_summary(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())

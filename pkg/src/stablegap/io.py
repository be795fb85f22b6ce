"""Deterministic CSV/JSON output with a manifest header.

Data files carry only inputs (config hash and seed), never timings, so equal
inputs give byte-identical files. Timings and library versions go into a
separate run manifest.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels


def to_jsonable(obj):
    """Recursively convert dataclasses, numpy scalars/arrays and nonfinite floats."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_jsonable(obj.to_dict())
        if hasattr(obj, "row"):
            return to_jsonable(obj.row())
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if not isinstance(getattr(obj, f.name), np.ndarray)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def config_hash(config: dict) -> str:
    blob = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def manifest(config: dict, seed: int | None) -> dict:
    return {"tool": "stablegap", "version": __version__, "config_hash": config_hash(config), "seed": seed}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g") if math.isfinite(v) else str(float(v))
    return str(v)


def render_csv(rows, columns, config: dict, seed: int | None, notes: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in manifest(config, seed).items():
        buf.write(f"# {k}: {v}\n")
    for k, v in (notes or {}).items():
        buf.write(f"# {k}: {_fmt(v)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        d = r if isinstance(r, dict) else r.row()
        w.writerow([_fmt(d.get(c)) for c in columns])
    return buf.getvalue()


def render_json(payload, config: dict, seed: int | None) -> str:
    doc = {"manifest": manifest(config, seed), "config": to_jsonable(config), "data": to_jsonable(payload)}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def read_csv(path) -> tuple[dict, list[dict]]:
    """Parse a file written by :func:`render_csv` into (header, rows)."""
    header, lines = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            header[k] = v
        else:
            lines.append(line)
    return header, list(csv.DictReader(lines))


def write_text(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def versions() -> dict:
    import scipy

    out = {
        "stablegap": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "kernel_backend": _kernels.BACKEND,
    }
    if _kernels.HAVE_NUMBA:
        import numba

        out["numba"] = numba.__version__
    return out


def write_run_manifest(path, config: dict, seed: int | None, timings: dict, status: str) -> None:
    doc = {**manifest(config, seed), "config": to_jsonable(config), "versions": versions(),
           "timings_s": timings, "status": status}
    write_text(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")

"""Trace CSV and metrics JSON, written atomically.

CSV columns: ``t, x0..x{n-1}, u0..u{m-1}, d0..d{m-1}, rho, eta, V, h, delta,
qp_status``.  ``u`` is the commanded input.  Numbers use ``format(v, ".17g")``
so output does not depend on locale, and lines end in ``\\n``.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from arcbf.sim import Trace


def trace_header(n: int, m: int) -> list[str]:
    return (
        ["t"]
        + [f"x{i}" for i in range(n)]
        + [f"u{i}" for i in range(m)]
        + [f"d{i}" for i in range(m)]
        + ["rho", "eta", "V", "h", "delta", "qp_status"]
    )


def _fmt(v) -> str:
    return format(float(v), ".17g")


def trace_to_csv(trace: Trace) -> str:
    n, m = trace.n, trace.m
    lines = [",".join(trace_header(n, m))]
    cols = [trace.t[:, None], trace.x, trace.u, trace.d]
    cols += [np.asarray(c, dtype=float)[:, None] for c in (trace.rho, trace.eta, trace.V, trace.h, trace.delta)]
    num = np.hstack(cols).tolist()
    for row, status in zip(num, trace.qp_status):
        lines.append(",".join(_fmt(v) for v in row) + "," + status)
    return "\n".join(lines) + "\n"


def read_trace_csv(path) -> dict:
    """Columns of a written trace as arrays (``qp_status`` as a list of str)."""
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n").split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in rows]
        out[name] = col if name == "qp_status" else np.array([float(v) for v in col])
    return out


def atomic_write_text(path, text: str) -> Path:
    """Write via a temp file in the target directory, then ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.chmod(tmp, 0o644)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    return path


def write_trace_csv(trace: Trace, path) -> Path:
    return atomic_write_text(path, trace_to_csv(trace))


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(e) for k, e in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(e) for e in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        # JSON has no inf/nan; keep them readable as strings
        return v if math.isfinite(v) else str(v)
    return v


def metrics_to_json(metrics: dict) -> str:
    return json.dumps(_jsonable(metrics), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_metrics_json(metrics: dict, path) -> Path:
    return atomic_write_text(path, metrics_to_json(metrics))


def write_table_csv(rows: list[dict], columns: list[str], path) -> Path:
    lines = [",".join(columns)]
    for r in rows:
        cells = []
        for c in columns:
            v = r.get(c, "")
            cells.append(_fmt(v) if isinstance(v, (float, int, np.floating)) and not isinstance(v, bool) else str(v))
        lines.append(",".join(cells))
    return atomic_write_text(path, "\n".join(lines) + "\n")

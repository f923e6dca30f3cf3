"""Byte-stable output files, written atomically (temp file + rename)."""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import TRACE_COLUMNS, SimulationSummary, Trace

__all__ = ["fmt", "atomic_write", "trace_csv", "table_csv", "summary_json", "to_jsonable",
           "write_trace", "write_table", "write_json"]

SUMMARY_KEYS = ("scenario", "seed", "T", "efficiency", "objective_distributed",
                "objective_optimal", "converged_round")


def fmt(v) -> str:
    """Fixed 12-significant-digit text for numbers, 0/1 for booleans, empty for None."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".12g")


def atomic_write(path, data: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def trace_csv(trace: Trace) -> str:
    rounds, n = trace.x.shape
    lines = [",".join(TRACE_COLUMNS)]
    x, xbar, lam = (np.asarray(a).tolist() for a in (trace.x, trace.xbar, trace.lam))
    for k in range(rounds):
        tail = f"{int(trace.signal[k])},{fmt(trace.sum_x[k])}"
        xr, br, lr = x[k], xbar[k], lam[k]
        t = k + 1
        for i in range(n):
            lines.append(f"{t},{i},{fmt(xr[i])},{fmt(br[i])},{fmt(lr[i])},{tail}")
    return "\n".join(lines) + "\n"


def table_csv(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(columns)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def to_jsonable(v):
    """Round floats to 12 significant digits so the JSON text is stable."""
    if isinstance(v, dict):
        return {k: to_jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [to_jsonable(x) for x in (v.tolist() if isinstance(v, np.ndarray) else v)]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return float(format(f, ".12g")) if math.isfinite(f) else None
    return v


def summary_json(summary: SimulationSummary) -> dict:
    d = summary.to_dict()
    ordered = {k: d.pop(k) for k in SUMMARY_KEYS}
    ordered.update(d)
    return ordered


def write_trace(path, trace: Trace) -> Path:
    return atomic_write(path, trace_csv(trace))


def write_table(path, columns, rows) -> Path:
    return atomic_write(path, table_csv(columns, rows))


def write_json(path, payload: dict) -> Path:
    return atomic_write(path, json.dumps(to_jsonable(payload), indent=2) + "\n")

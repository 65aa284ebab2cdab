"""Deterministic text output: every float is written with 17 significant digits."""
from __future__ import annotations

import json
import math

import numpy as np


def num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return f"{x:.17g}"


def dumps(obj) -> str:
    """Compact JSON with floats at 17 significant digits and keys in insertion order."""
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, (float, int, np.floating, np.integer, bool, np.bool_)):
        return num(obj)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def write_table(fh, header: list[str], rows, fmt: str = "csv") -> None:
    """Write rows as CSV (with header) or as JSON lines keyed by the header."""
    if fmt == "csv":
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(num(v) if not isinstance(v, str) else v for v in row) + "\n")
    elif fmt == "jsonl":
        for row in rows:
            fh.write(dumps(dict(zip(header, row))) + "\n")
    else:
        raise ValueError(f"unknown output format {fmt!r}")

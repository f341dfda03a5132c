"""JSON/CSV report emission.

Reports are plain dicts with an integer ``schema`` field, the tool version and
the run configuration.  Exact rationals are written as ``{"exact": "p/q",
"value": float}`` so both readers and plotting tools get something useful.
Keys ending in ``runtime_ms`` are timing fields and are ignored by
:func:`strip_timing` when replays are compared.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, is_dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

SCHEMA = 1
TIMING_SUFFIX = "runtime_ms"


def _version() -> str:
    from . import __version__
    return __version__


def jsonable(obj):
    """Convert report values (Fractions, numpy scalars/arrays, dataclasses) to JSON types."""
    if isinstance(obj, Fraction):
        return {"exact": f"{obj.numerator}/{obj.denominator}", "value": float(obj)}
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(obj, np.ndarray):
        return [jsonable(x) for x in obj.tolist()]
    if is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        seq = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [jsonable(x) for x in seq]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def make_report(command: str, config: dict, result: dict, passed: bool | None) -> dict:
    return {
        "schema": SCHEMA,
        "tool": "aerlab",
        "version": _version(),
        "command": command,
        "config": config,
        "pass": passed,
        "result": jsonable(result),
    }


def dumps(report: dict) -> str:
    # repr-based float formatting round-trips every double exactly
    return json.dumps(jsonable(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def strip_timing(obj):
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if not k.endswith(TIMING_SUFFIX)}
    if isinstance(obj, list):
        return [strip_timing(x) for x in obj]
    return obj


def read_report(path) -> dict:
    """Load a report; unknown fields are kept as they are."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict) or "schema" not in data:
        raise ValueError(f"{path}: not an aerlab report")
    if int(data["schema"]) > SCHEMA:
        raise ValueError(f"{path}: schema {data['schema']} is newer than supported ({SCHEMA})")
    return data


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return path


def write_json(path, report: dict) -> Path:
    return atomic_write(path, dumps(report))


def _cell(v):
    if isinstance(v, Fraction):
        v = float(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return atomic_write(path, buf.getvalue())

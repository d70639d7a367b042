"""Deterministic JSON emission: sorted keys, 17 significant digits, non-finite numbers as null."""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

__all__ = ["to_plain", "dumps", "write_report", "write_columns"]


def to_plain(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays, tuples and dataclasses into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_plain(obj.to_dict())
        return to_plain(dataclasses.asdict(obj))
    if hasattr(obj, "model_dump"):
        return to_plain(obj.model_dump(mode="json"))
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _num(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _emit(obj: Any, indent: int, level: int, out: list) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_num(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(obj)
        for i, k in enumerate(keys):
            out.append(pad + json.dumps(k) + ": ")
            _emit(obj[k], indent, level + 1, out)
            out.append(",\n" if i < len(keys) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) or v is None for v in obj):
            out.append("[" + ", ".join("null" if v is None else (_num(v) if isinstance(v, float) else str(v))
                                       for v in obj) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    out: list = []
    _emit(to_plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def write_report(obj: Any, path) -> str:
    text = dumps(obj)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def write_columns(path, header: list, columns: list) -> None:
    """Whitespace-free CSV with a '#' header line, readable by gnuplot (set datafile separator ',')."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c, float) for c in columns]
    with open(path, "w") as fh:
        fh.write("# " + ",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_num(float(v)) if math.isfinite(v) else "nan" for v in row) + "\n")

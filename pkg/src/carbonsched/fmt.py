"""Byte-stable JSON and CSV output with 17 significant digits for every float."""

from __future__ import annotations

import csv
import math
from typing import IO, Any, Iterable, Sequence


def num(x: float) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(v: Any, indent: int, depth: int) -> str:
    pad = " " * (indent * (depth + 1))
    end = " " * (indent * depth)
    if v is None:
        return "null"
    if isinstance(v, (bool, int, float)):
        return num(v)
    if isinstance(v, str):
        import json

        return json.dumps(v)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{_encode(str(k), indent, 0)}: {_encode(v[k], indent, depth + 1)}" for k in sorted(v, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        items = [pad + _encode(x, indent, depth + 1) for x in v]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(v).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON with sorted keys; floats always carry 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def write_csv(stream: IO[str], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([num(x) if isinstance(x, (int, float)) else ("" if x is None else x) for x in r])

"""Deterministic CSV and JSON writers.

Floats are written with 17 significant digits, JSON keys are sorted, and
every file starts with a comment describing its contents.  JSON has no
comment syntax, so the description goes in a top-level ``"#"`` key.
Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _to_json(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        s = fmt(obj)
        return json.dumps(s) if s in ("nan", "inf", "-inf") else s
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_to_json(obj[k], indent, level + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{_to_json(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "as_dict"):
        return _to_json(obj.as_dict(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, comment: str | None = None) -> str:
    if comment is not None:
        obj = {"#": comment, **obj}
    return _to_json(obj, 2, 0) + "\n"


def write_json(path, obj, comment: str) -> None:
    Path(path).write_text(dumps(obj, comment))


def read_json(path) -> dict:
    def special(s):
        return {"nan": math.nan, "inf": math.inf, "-inf": -math.inf}.get(s, s)

    data = json.loads(Path(path).read_text())

    def walk(o):
        if isinstance(o, dict):
            return {k: walk(v) for k, v in o.items()}
        if isinstance(o, list):
            return [walk(v) for v in o]
        return special(o) if isinstance(o, str) else o

    return walk(data)


def write_csv(path, comment_lines, header, rows) -> None:
    Path(path).write_text(csv_text(comment_lines, header, rows))


def csv_text(comment_lines, header, rows) -> str:
    buf = io.StringIO()
    for line in comment_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def read_csv_columns(path) -> dict:
    """Numeric columns of a CSV written by :func:`write_csv`."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no data")
    rows = list(csv.reader(lines))
    header, body = rows[0], rows[1:]
    if any(len(r) != len(header) for r in body):
        raise ValueError(f"{path}: ragged rows")
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}

"""Deterministic JSON writing and strict reading for the package's file
formats.

Documents are emitted with keys in exactly the order they appear in the
source mapping, and every float is printed with 17 significant digits so
that a write/read cycle reproduces each 64-bit value bit-exactly.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

__all__ = ["dumps", "dump_path", "load_path", "loads"]


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValidationError(f"non-finite value {x!r} cannot be serialized")
    return format(x, ".17g")


def _emit(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _fmt_float(float(value))
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, np.ndarray):
        return _emit(value.tolist())
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_emit(v) for v in value) + "]"
    if isinstance(value, dict):
        items = (json.dumps(str(k)) + ":" + _emit(v) for k, v in value.items())
        return "{" + ",".join(items) + "}"
    raise ValidationError(f"cannot serialize value of type {type(value).__name__}")


def dumps(doc: dict) -> str:
    return _emit(doc)


def dump_path(doc: dict, path) -> None:
    Path(path).write_text(_emit(doc) + "\n", encoding="utf-8")


def loads(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict):
        raise ParseError("top-level JSON value is not an object", offset=0)
    return doc


def load_path(path) -> dict:
    return loads(Path(path).read_text(encoding="utf-8"))

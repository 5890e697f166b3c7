"""Canonical JSON writer with 17-significant-digit floats.

``json.dumps`` emits the shortest round-trip repr, which is not a fixed
format. The artifact files promise ``%.17g`` numbers and a stable key
order, so this module writes JSON by hand.
"""

import json
import math

import numpy as np


def _fmt_float(x):
    if not math.isfinite(x):
        # JSON has no infinities; these only appear in bounds metadata.
        return json.dumps("inf" if x > 0 else ("-inf" if x < 0 else "nan"))
    s = "%.17g" % x
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _emit(obj, out, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.append(pad + json.dumps(str(k)) + ": ")
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        # numeric vectors stay on one line to keep matrices readable
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            parts = []
            for v in obj:
                buf = []
                _emit(v, buf, indent, level + 1)
                parts.append("".join(buf))
            out.append("[" + ", ".join(parts) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=1):
    out = []
    _emit(obj, out, indent, 0)
    return "".join(out) + "\n"


def dump(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def _unspecial(x):
    if isinstance(x, str) and x in ("inf", "-inf", "nan"):
        return float(x)
    return x


def load(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def to_float_array(values):
    """Array from JSON data that may hold ``"inf"`` sentinels."""
    if isinstance(values, list):
        return np.array(_deep(values), dtype=float)
    return np.asarray(_unspecial(values), dtype=float)


def _deep(v):
    if isinstance(v, list):
        return [_deep(x) for x in v]
    return _unspecial(v)

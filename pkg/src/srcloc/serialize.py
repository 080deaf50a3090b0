"""Deterministic serialization: JSON with floats at 17 significant digits.

Byte-stable output is part of the replay contract, so floats are rendered
with an explicit %.17g (full float64 round-trip precision) instead of relying
on repr, and object keys are emitted in sorted order.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np


def _render(x, out: list):
    if x is None:
        out.append("null")
    elif isinstance(x, bool):
        out.append("true" if x else "false")
    elif isinstance(x, (int, np.integer)):
        out.append(str(int(x)))
    elif isinstance(x, (float, np.floating)):
        x = float(x)
        if x != x or x in (float("inf"), float("-inf")):
            raise ValueError(f"non-finite float in record: {x!r}")
        out.append(format(x, ".17g"))
    elif isinstance(x, str):
        out.append(json.dumps(x))
    elif isinstance(x, np.ndarray):
        _render(x.tolist(), out)
    elif isinstance(x, (list, tuple)):
        out.append("[")
        for i, v in enumerate(x):
            if i:
                out.append(",")
            _render(v, out)
        out.append("]")
    elif isinstance(x, dict):
        out.append("{")
        for i, k in enumerate(sorted(x.keys())):
            if not isinstance(k, str):
                raise TypeError(f"non-string key: {k!r}")
            if i:
                out.append(",")
            out.append(json.dumps(k))
            out.append(":")
            _render(x[k], out)
        out.append("}")
    else:
        raise TypeError(f"unserializable value of type {type(x).__name__}")


def dumps(obj) -> str:
    out: list = []
    _render(obj, out)
    return "".join(out)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(dumps(rec))
            f.write("\n")


def append_jsonl(f, rec):
    f.write(dumps(rec))
    f.write("\n")


def read_jsonl(path):
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_csv(path, columns, rows):
    """Tidy CSV with the same 17-digit float rendering."""
    def cell(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".17g")
        return str(v)
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(cell(row[c]) for c in columns) + "\n")


def sha256_of_dict(d) -> str:
    return hashlib.sha256(dumps(d).encode("utf-8")).hexdigest()


def sha256_of_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def rng_for(seed: int, *key) -> np.random.Generator:
    """Deterministic RNG stream addressed by (root seed, key tuple).

    Streams: (0,) net init, (1, k) episode k, (2,) PPO shuffling,
    (3,) benchmark scenarios.  Replay rebuilds any stream in O(1).
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))

"""JSON Lines dataset files with a sidecar manifest.

One transition per line::

    {"ep":0,"t":0,"s":3,"a":1,"r":0.0,"sn":4,"d":false}

and ``<name>.manifest.json`` next to it holding the :class:`Manifest` fields.
Writing is canonical (fixed key order, ``repr`` floats), so a file read and
written again is byte-identical.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ._validation import DataFormatError
from .core import Dataset, Manifest

_KEYS = ("ep", "t", "s", "a", "r", "sn", "d")
_INT_KEYS = ("ep", "t", "s", "a", "sn")


def manifest_path(path) -> Path:
    path = Path(path)
    name = path.name[: -len(".jsonl")] if path.name.endswith(".jsonl") else path.name
    return path.with_name(name + ".manifest.json")


def format_line(ep, t, s, a, r, sn, d) -> str:
    if not math.isfinite(r):
        raise ValueError(f"reward {r!r} is not finite")
    return (
        f'{{"ep":{ep},"t":{t},"s":{s},"a":{a},"r":{float(r)!r},'
        f'"sn":{sn},"d":{"true" if d else "false"}}}'
    )


def dumps(ds: Dataset) -> str:
    rows = zip(ds.ep.tolist(), ds.t.tolist(), ds.s.tolist(), ds.a.tolist(),
               ds.r.tolist(), ds.sn.tolist(), ds.d.tolist())
    return "".join(format_line(*row) + "\n" for row in rows)


def write_dataset(ds: Dataset, path, write_manifest=True):
    path = Path(path)
    path.write_text(dumps(ds), encoding="utf-8")
    if write_manifest:
        manifest_path(path).write_text(
            json.dumps(ds.manifest.to_dict(), sort_keys=False) + "\n", encoding="utf-8"
        )
    return path


def _parse_line(line, lineno):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON ({exc.msg})", lineno) from None
    if not isinstance(obj, dict):
        raise DataFormatError("expected a JSON object", lineno)
    missing = [k for k in _KEYS if k not in obj]
    if missing:
        raise DataFormatError(f"missing field(s) {', '.join(missing)}", lineno)
    for k in _INT_KEYS:
        v = obj[k]
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise DataFormatError(f"field {k!r} must be a nonnegative integer", lineno)
    r = obj["r"]
    if isinstance(r, bool) or not isinstance(r, (int, float)) or not math.isfinite(r):
        raise DataFormatError("field 'r' must be a finite number", lineno)
    if not isinstance(obj["d"], bool):
        raise DataFormatError("field 'd' must be a boolean", lineno)
    return obj["ep"], obj["t"], obj["s"], obj["a"], float(r), obj["sn"], obj["d"]


def parse_lines(lines, manifest: Manifest | None = None) -> Dataset:
    rows = []
    prev = None
    seen = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        row = _parse_line(line, lineno)
        if prev is None or row[0] != prev[0]:
            if row[0] in seen:
                raise DataFormatError(f"episode {row[0]} is not contiguous", lineno)
            seen.add(row[0])
        if prev is not None:
            p_ep, p_t, *_ , p_sn, p_d = prev
            ep, t, s = row[0], row[1], row[2]
            if ep == p_ep:
                if t != p_t + 1:
                    raise DataFormatError("step index must ascend by one within an episode", lineno)
                if s != p_sn:
                    raise DataFormatError("'s' does not match the previous step's 'sn'", lineno)
                if p_d:
                    raise DataFormatError("episode continues after a terminal step", lineno)
        rows.append(row)
        prev = row
    cols = [np.array(c) for c in zip(*rows)] if rows else [np.array([])] * 7
    if manifest is None:
        n_s = int(max(cols[2].max(), cols[5].max())) + 1 if rows else 0
        n_a = int(cols[3].max()) + 1 if rows else 0
        manifest = Manifest(n=len(rows), n_states=n_s, n_actions=n_a)
    elif manifest.n != len(rows):
        raise DataFormatError(f"manifest declares n={manifest.n} but file has {len(rows)} transitions")
    try:
        return Dataset(*cols, manifest=manifest)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None


def read_manifest(path) -> Manifest | None:
    mpath = manifest_path(path)
    if not mpath.exists():
        return None
    try:
        obj = json.loads(mpath.read_text(encoding="utf-8"))
        return Manifest(**obj)
    except (json.JSONDecodeError, TypeError) as exc:
        raise DataFormatError(f"{mpath}: malformed manifest ({exc})") from None


def read_dataset(path) -> Dataset:
    """Load a JSON Lines dataset, using the sidecar manifest when present."""
    path = Path(path)
    manifest = read_manifest(path)
    with path.open(encoding="utf-8") as fh:
        return parse_lines(fh, manifest)

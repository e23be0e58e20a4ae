"""Binary sheet dumps and small CSV/JSON helpers shared by the reports."""

from __future__ import annotations

import csv
import io as _io
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .sheet import GridSpec, SheetPath

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "dump_path",
    "load_path",
    "path_to_bytes",
    "path_from_bytes",
    "csv_text",
    "write_text",
    "canonical_json",
]

MAGIC = b"SHTL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIQ")


def path_to_bytes(path: SheetPath) -> bytes:
    g = path.grid
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, g.m, g.n, path.dim, int(path.seed))
    body = np.ascontiguousarray(path.values, dtype="<f8").tobytes(order="C")
    return head + body


def path_from_bytes(buf: bytes) -> SheetPath:
    if len(buf) < _HEADER.size:
        raise ValueError("buffer shorter than the SHTL header")
    magic, version, m, n, d, seed = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    count = (m + 1) * (n + 1) * d
    body = buf[_HEADER.size:]
    if len(body) != 8 * count:
        raise ValueError(f"payload has {len(body)} bytes, expected {8 * count}")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(m + 1, n + 1, d)
    return SheetPath(GridSpec(m, n), d, values, seed)


def dump_path(path: SheetPath, target) -> Path:
    """Write ``path`` as header + little-endian float64 values (s, t, component order)."""
    target = Path(target)
    try:
        target.write_bytes(path_to_bytes(path))
    except OSError as exc:
        raise OSError(f"cannot write sheet dump to {target}: {exc}") from exc
    return target


def load_path(source) -> SheetPath:
    return path_from_bytes(Path(source).read_bytes())


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Deterministic CSV rendering (``repr`` floats, ``\\n`` line endings)."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def write_text(target, text: str) -> Path:
    target = Path(target)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {target}: {exc}") from exc
    return target

"""Output files: CSV tables, JSON summaries, binary phase-space snapshots.

All files of one scenario are staged in a hidden sibling directory and moved
into place with a single rename, so a failed run leaves nothing behind.
"""
from __future__ import annotations

import json
import os
import shutil
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

OUTPUT_ROOT_ENV = "QDISS_OUTPUT_ROOT"


def output_root(default: str | os.PathLike = ".") -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, default))


def fmt17(x) -> str:
    """Float text that round-trips exactly (17 significant digits)."""
    return format(float(x), ".17g")


def csv_text(columns: dict) -> str:
    """CSV with the given column order; every value printed with 17 significant digits."""
    names = list(columns)
    cols = [np.asarray(columns[k], dtype=float).ravel() for k in names]
    n = {c.size for c in cols}
    if len(n) > 1:
        raise ValueError("CSV columns differ in length")
    rows = [",".join(names)]
    for i in range(cols[0].size if cols else 0):
        rows.append(",".join(fmt17(c[i]) for c in cols))
    return "\n".join(rows) + "\n"


def read_csv(path: str | os.PathLike) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        return {k: np.empty(0) for k in header}
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: header has {len(header)} columns, rows have {data.shape[1]}")
    return {k: data[:, i] for i, k in enumerate(header)}


def snapshot_bytes(values: np.ndarray) -> bytes:
    """Two little-endian uint32 dimensions, then row-major little-endian float64 values."""
    a = np.ascontiguousarray(values, dtype="<f8")
    if a.ndim != 2:
        raise ValueError("snapshots are 2D")
    return struct.pack("<II", *a.shape) + a.tobytes()


def read_snapshot(path: str | os.PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    nx, npts = struct.unpack("<II", raw[:8])
    a = np.frombuffer(raw[8:], dtype="<f8")
    if a.size != nx * npts:
        raise ValueError("snapshot size does not match its header")
    return a.reshape(nx, npts).copy()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


@contextmanager
def staged_directory(target: str | os.PathLike):
    """Yield a staging directory; on success it replaces ``target`` atomically.

    On any exception the staging directory is removed and ``target`` is left
    untouched.
    """
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        yield stage
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    old = None
    if target.exists():
        old = target.with_name(f".{target.name}.old.{os.getpid()}")
        os.replace(target, old)
    try:
        os.replace(stage, target)
    except BaseException:
        if old is not None:
            os.replace(old, target)
        shutil.rmtree(stage, ignore_errors=True)
        raise
    if old is not None:
        shutil.rmtree(old, ignore_errors=True)


__all__ = ["OUTPUT_ROOT_ENV", "output_root", "fmt17", "csv_text", "read_csv", "snapshot_bytes",
           "read_snapshot", "json_text", "staged_directory"]

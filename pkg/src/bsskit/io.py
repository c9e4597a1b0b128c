"""Matrix file formats.

``.csv``   row-major text with a ``# rows cols`` header line
``.mat64`` magic ``BSSM``, u32 rows, u32 cols, little-endian f64 data
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"BSSM"


def write_csv(path, a) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"# {a.shape[0]} {a.shape[1]}\n")
        np.savetxt(fh, a, delimiter=",", fmt="%.17g")


def read_csv(path) -> np.ndarray:
    with open(path) as fh:
        first = fh.readline()
        if first.startswith("#"):
            parts = first[1:].split()
            rows, cols = int(parts[0]), int(parts[1])
        else:
            fh.seek(0)
            rows = cols = None
        a = np.loadtxt(fh, delimiter=",", ndmin=2)
    if rows is not None and a.shape != (rows, cols):
        if a.size == rows * cols:
            a = a.reshape(rows, cols)
        else:
            raise ValueError(f"{path}: header says {rows}x{cols}, found {a.shape}")
    return a


def write_mat64(path, a) -> None:
    a = np.atleast_2d(np.asarray(a, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", a.shape[0], a.shape[1]))
        fh.write(np.ascontiguousarray(a).tobytes())


def read_mat64(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a .mat64 file (bad magic)")
    rows, cols = struct.unpack("<II", raw[4:12])
    body = raw[12:]
    if len(body) != 8 * rows * cols:
        raise ValueError(f"{path}: truncated .mat64 payload")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).copy()


def read_matrix(path) -> np.ndarray:
    p = str(path)
    if p.endswith(".mat64"):
        return read_mat64(p)
    return read_csv(p)


def write_matrix(path, a, fmt: str | None = None) -> None:
    p = str(path)
    fmt = fmt or ("mat64" if p.endswith(".mat64") else "csv")
    if fmt == "mat64":
        write_mat64(p, a)
    elif fmt == "csv":
        write_csv(p, a)
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")

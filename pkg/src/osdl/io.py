"""Binary dictionary files.

Layout (little endian): magic ``b"OSDL"``, format version (u32), rows (u32),
columns (u32), then the matrix in row-major float64. A JSON sidecar next to
the file (``<name>.json``) records how the dictionary was produced.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

MAGIC = b"OSDL"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def dumps_dictionary(D: np.ndarray) -> bytes:
    D = np.asarray(D, dtype="<f8")
    if D.ndim != 2:
        raise ValueError("dictionary must be a matrix")
    return _HEADER.pack(MAGIC, VERSION, D.shape[0], D.shape[1]) + np.ascontiguousarray(D).tobytes()


def loads_dictionary(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise ValueError("truncated dictionary file")
    magic, version, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValueError(f"not a dictionary file (magic {magic!r})")
    if version != VERSION:
        raise ValueError(f"unsupported dictionary format version {version}")
    payload = blob[_HEADER.size:]
    if len(payload) != 8 * rows * cols:
        raise ValueError(f"expected {rows}x{cols} float64 values, got {len(payload)} bytes")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float)


def save_dictionary(path, D: np.ndarray, meta: Optional[dict] = None) -> None:
    Path(path).write_bytes(dumps_dictionary(D))
    if meta is not None:
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")


def load_dictionary(path) -> Tuple[np.ndarray, Optional[dict]]:
    D = loads_dictionary(Path(path).read_bytes())
    side = sidecar_path(path)
    meta = json.loads(side.read_text(encoding="utf-8")) if side.exists() else None
    return D, meta

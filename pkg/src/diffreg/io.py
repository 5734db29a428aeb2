"""VolumeFile: a minimal bit-exact container for scalar and vector fields.

Layout: magic ``b"VRG1"``; little-endian u32 n1, n2, n3; u8 scalar kind
(0 = float32, 1 = float64); u8 component count (1 or 3); then the
components back to back, each row-major little-endian.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import VolumeFormatError

MAGIC = b"VRG1"
_HEADER = struct.Struct("<4s3IBB")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def save_volume(path: str | os.PathLike, field: np.ndarray, single: bool = False) -> None:
    """Write a (n1, n2, n3) or (3, n1, n2, n3) float field; ``single`` stores float32."""
    a = np.asarray(field)
    if a.ndim == 3:
        comps, shape = 1, a.shape
    elif a.ndim == 4 and a.shape[0] == 3:
        comps, shape = 3, a.shape[1:]
    else:
        raise VolumeFormatError(f"expected a scalar or 3-vector field, got shape {a.shape}")
    if not np.issubdtype(a.dtype, np.floating):
        raise VolumeFormatError(f"expected floating-point data, got {a.dtype}")
    kind = 0 if single or a.dtype == np.float32 else 1
    data = np.ascontiguousarray(a, dtype=_DTYPES[kind])
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *shape, kind, comps))
        fh.write(data.tobytes(order="C"))


def load_volume(path: str | os.PathLike) -> np.ndarray:
    """Read a VolumeFile; float32 payloads are returned as float32 (no silent widening)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise VolumeFormatError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise VolumeFormatError(f"{path}: truncated header")
    magic, n1, n2, n3, kind, comps = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise VolumeFormatError(f"{path}: bad magic {magic!r}")
    if kind not in _DTYPES:
        raise VolumeFormatError(f"{path}: unknown scalar kind {kind}")
    if comps not in (1, 3):
        raise VolumeFormatError(f"{path}: component count must be 1 or 3, got {comps}")
    if min(n1, n2, n3) == 0:
        raise VolumeFormatError(f"{path}: empty grid")
    dt = _DTYPES[kind]
    expected = comps * n1 * n2 * n3 * dt.itemsize
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise VolumeFormatError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    a = np.frombuffer(payload, dtype=dt).reshape((comps, n1, n2, n3) if comps == 3 else (n1, n2, n3))
    return a.astype(dt.newbyteorder("="), copy=True)

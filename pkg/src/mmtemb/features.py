"""Binary container for precomputed image features.

Layout: ``b"MMTF"``, three little-endian uint32 (item_count, rows_per_item,
dim), then item_count * rows_per_item * dim little-endian float32 values.
``rows_per_item == 1`` holds one global (pooled) vector per image; larger
values hold a grid of spatial feature vectors.
"""
from __future__ import annotations

import struct

import numpy as np

from .embedding_io import atomic_write_bytes
from .errors import ParseError

MAGIC = b"MMTF"
_HEADER = struct.Struct("<4sIII")


def write_features(path, features):
    feats = np.asarray(features, dtype="<f4")
    if feats.ndim == 2:
        feats = feats[:, None, :]
    if feats.ndim != 3:
        raise ValueError(f"features must be (items, dim) or (items, rows, dim), got {feats.shape}")
    count, rows, dim = feats.shape
    atomic_write_bytes(path, _HEADER.pack(MAGIC, count, rows, dim) + feats.tobytes(order="C"))


def read_features(path):
    """Return a float64 array of shape (items, rows_per_item, dim)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ParseError("truncated feature header", path)
    magic, count, rows, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {MAGIC!r}", path)
    expected = count * rows * dim * 4
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise ParseError(f"expected {expected} bytes of float32 data, found {len(body)}", path)
    data = np.frombuffer(body, dtype="<f4").reshape(count, rows, dim)
    return data.astype(np.float64)

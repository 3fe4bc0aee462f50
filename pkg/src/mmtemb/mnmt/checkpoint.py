"""Versioned binary checkpoints.

Layout: ``b"MMT1"``, a little-endian uint32 byte length, a UTF-8 JSON header
(kind, config, vocabulary fingerprints, parameter names and shapes), then each
parameter as little-endian float32 in the declared order.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..embedding_io import atomic_write_bytes
from ..errors import ConfigError, ParseError
from .params import ModelConfig, ModelParams, param_shapes

MAGIC = b"MMT1"
_LEN = struct.Struct("<I")


def save_checkpoint(path, params, src_fingerprint="", tgt_fingerprint=""):
    shapes = param_shapes(params.config)
    header = {
        "kind": params.config.kind,
        "config": params.config.to_dict(),
        "src_vocab_sha256": src_fingerprint,
        "tgt_vocab_sha256": tgt_fingerprint,
        "params": [[name, list(shape)] for name, shape in shapes.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, _LEN.pack(len(blob)), blob]
    for name, shape in shapes.items():
        arr = params.arrays[name]
        if arr.shape != tuple(shape):
            raise ValueError(f"{name}: shape {arr.shape} != declared {tuple(shape)}")
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_checkpoint(path, src_fingerprint=None, tgt_fingerprint=None):
    """Read a checkpoint. Fingerprints, when given, must match the stored ones."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ParseError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", path)
    if len(raw) < 8:
        raise ParseError("truncated checkpoint header", path)
    (n,) = _LEN.unpack_from(raw, 4)
    try:
        header = json.loads(raw[8:8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"corrupt checkpoint header: {exc}", path) from None
    for key, given in (("src_vocab_sha256", src_fingerprint), ("tgt_vocab_sha256", tgt_fingerprint)):
        if given is not None and header[key] != given:
            raise ConfigError(
                f"{path}: {key} mismatch (checkpoint {header[key][:12]}, vocabulary {given[:12]})"
            )
    cfg = ModelConfig(**header["config"])
    shapes = param_shapes(cfg)
    stored = [(name, tuple(shape)) for name, shape in header["params"]]
    if stored != list(shapes.items()):
        raise ParseError("parameter layout does not match the configured model", path)
    offset = 8 + n
    arrays = {}
    for name, shape in stored:
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(raw):
            raise ParseError(f"truncated data for parameter {name}", path)
        arrays[name] = np.frombuffer(raw[offset:end], dtype="<f4").reshape(shape).astype(np.float64)
        offset = end
    if offset != len(raw):
        raise ParseError(f"{len(raw) - offset} trailing bytes after parameters", path)
    return ModelParams(cfg, arrays), header

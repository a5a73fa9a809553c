"""Bit-exact checkpoint serialization.

Layout, all little-endian:

    magic "TYCK"
    u32 format version
    u32 config blob length, then the config as UTF-8 JSON
    per tensor, sorted by name:
        u16 name length, UTF-8 name
        u8  rank
        u64 dims[rank]
        raw float32 data

Saving and reloading reproduces every parameter bit for bit, so logits from a
reloaded model match the originals exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict

import numpy as np

from .errors import SchemaError
from .model.config import ModelConfig
from .model.params import Parameters, validate_parameters

MAGIC = b"TYCK"
VERSION = 1


class BadCheckpoint(SchemaError):
    """Checkpoint file is malformed or inconsistent with its config."""


def save_checkpoint(path: str, params: Parameters, cfg: ModelConfig) -> None:
    blob = json.dumps(asdict(cfg), sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name in sorted(params):
            data = np.ascontiguousarray(params[name], dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", data.ndim))
            f.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            f.write(data.tobytes())


def _take(buf: bytes, offset: int, n: int, what: str) -> tuple[bytes, int]:
    if offset + n > len(buf):
        raise BadCheckpoint(f"truncated checkpoint while reading {what}")
    return buf[offset : offset + n], offset + n


def load_checkpoint(path: str) -> tuple[Parameters, ModelConfig]:
    with open(path, "rb") as f:
        buf = f.read()
    chunk, off = _take(buf, 0, 4, "magic")
    if chunk != MAGIC:
        raise BadCheckpoint(f"bad magic {chunk!r}")
    chunk, off = _take(buf, off, 4, "version")
    version = struct.unpack("<I", chunk)[0]
    if version != VERSION:
        raise BadCheckpoint(f"unsupported checkpoint version {version}")
    chunk, off = _take(buf, off, 4, "config length")
    (blob_len,) = struct.unpack("<I", chunk)
    chunk, off = _take(buf, off, blob_len, "config blob")
    try:
        fields = json.loads(chunk.decode("utf-8"))
        cfg = ModelConfig(**fields)
    except (ValueError, TypeError) as exc:
        raise BadCheckpoint(f"bad config blob: {exc}") from exc

    params: Parameters = {}
    while off < len(buf):
        chunk, off = _take(buf, off, 2, "tensor name length")
        (name_len,) = struct.unpack("<H", chunk)
        chunk, off = _take(buf, off, name_len, "tensor name")
        name = chunk.decode("utf-8")
        chunk, off = _take(buf, off, 1, "tensor rank")
        rank = chunk[0]
        chunk, off = _take(buf, off, 8 * rank, "tensor dims")
        shape = struct.unpack(f"<{rank}Q", chunk) if rank else ()
        count = 1
        for dim in shape:
            count *= dim
        chunk, off = _take(buf, off, 4 * count, f"tensor data for {name}")
        if name in params:
            raise BadCheckpoint(f"duplicate tensor {name}")
        params[name] = np.frombuffer(chunk, dtype="<f4").astype(np.float32).reshape(shape)

    try:
        validate_parameters(params, cfg)
    except SchemaError as exc:
        raise BadCheckpoint(str(exc)) from exc
    return params, cfg


def checkpoint_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()

"""Versioned binary checkpoints shared by the SWA and GAT trainers.

Layout (little-endian): 4-byte magic, u32 version, u32 metadata length,
UTF-8 JSON metadata (config, mode, parameter names/shapes in order),
then float32 parameter blobs in the declared order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .nn import Params

SWA_MAGIC = b"AGSW"
GAT_MAGIC = b"AGGT"
VERSION = 1
_HEAD = struct.Struct("<4sII")
_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, magic: bytes, meta: dict, params: Params) -> None:
    meta = dict(meta)
    meta["params"] = [{"name": k, "shape": list(v.shape)} for k, v in params.items()]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEAD.pack(magic, VERSION, len(blob)))
        f.write(blob)
        for v in params.values():
            f.write(np.ascontiguousarray(v, dtype=_F32).tobytes())


def load_checkpoint(path: str | Path, magic: bytes) -> tuple[dict, Params]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size:
        raise CheckpointError("checkpoint truncated before header")
    got_magic, version, meta_len = _HEAD.unpack_from(raw, 0)
    if got_magic != magic:
        raise CheckpointError(f"bad checkpoint magic {got_magic!r}, expected {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    meta = json.loads(raw[_HEAD.size:_HEAD.size + meta_len].decode("utf-8"))
    offset = _HEAD.size + meta_len
    params: Params = {}
    for entry in meta.pop("params"):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype=_F32, count=count, offset=offset)
        params[entry["name"]] = arr.reshape(shape).astype(np.float64)
        offset += count * 4
    return meta, params

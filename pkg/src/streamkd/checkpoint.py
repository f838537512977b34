"""Binary tensor checkpoints ("SKDL" format, version 1).

Layout, all integers little-endian::

    b"SKDL"                 magic
    u32 version             currently 1
    u64 count               number of tensors
    per tensor, in file order:
        u32 name_len, name_len bytes of UTF-8 name
        u32 rank, rank x u64 extents
        prod(extents) x f64 values, row-major

Tensors are written in sorted name order so equal contents give equal bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"SKDL"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.array(tensors[name], dtype="<f8", order="C")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not an SKDL checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<IQ", blob, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 16
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            n = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(blob, dtype="<f8", count=n, offset=pos)
            if values.size != n:
                raise CheckpointError(f"tensor {name!r} is truncated")
            pos += 8 * n
            out[name] = values.astype(np.float64).reshape(shape)
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after last tensor")
    return out


def save(path, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict[str, np.ndarray]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return loads(p.read_bytes())

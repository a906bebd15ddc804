"""Parameter checkpoint file format.

Layout (all integers little-endian):

    magic   8 bytes  "GFSSCKPT"
    version u32
    then per-tensor records until end of file:
        name_len u32, name utf-8, rank u32, extents rank*u64,
        payload product(extents) float32 little-endian

Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"GFSSCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named float32 arrays; insertion order is preserved."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    for name, array in tensors.items():
        # asarray with order="C" keeps 0-d arrays 0-d (ascontiguousarray
        # would promote them to one element vectors)
        data = np.asarray(array, dtype="<f4", order="C")
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += struct.pack("<I", data.ndim)
        blob += struct.pack(f"<{data.ndim}Q", *data.shape)
        blob += data.tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    out: dict[str, np.ndarray] = {}
    while offset < len(raw):
        (name_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        shape = struct.unpack_from(f"<{rank}Q", raw, offset)
        offset += 8 * rank
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated payload for tensor {name!r}")
        out[name] = np.frombuffer(raw[offset:end], dtype="<f4").reshape(shape).copy()
        offset = end
    return out

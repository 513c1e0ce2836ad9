"""Flat binary parameter archive.

Layout (little-endian): magic ``EGFCKPT1``, u64 entry count, then per entry
u32 name length, UTF-8 name, u32 rank, rank × u64 extents, raw f64 values.
Entries keep the model's own ordering, so save → load → save is byte-identical.
"""

from __future__ import annotations

import io
import struct

import numpy as np

MAGIC = b"EGFCKPT1"


def dumps(state: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<Q", len(state)))
    for name, arr in state.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> dict:
    view = memoryview(blob)
    if bytes(view[:8]) != MAGIC:
        raise ValueError("not an EGF checkpoint (bad magic)")
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise ValueError("truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<Q", take(8))
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = bytes(take(nlen)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
        if name in state:
            raise ValueError(f"duplicate entry {name!r}")
        state[name] = data
    if pos != len(view):
        raise ValueError("trailing bytes after checkpoint entries")
    return state


def save(path: str, state: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(state))


def load(path: str) -> dict:
    with open(path, "rb") as fh:
        return loads(fh.read())

"""Named-array checkpoints.

Layout (little-endian): magic "CLMI", version u32, entry count u32, then per
entry: name length u16, UTF-8 name, rank u8, rank x u32 dims, float32 values.
"""
from __future__ import annotations

import struct

import numpy as np

from ..errors import BadMagic, IoFailure, TruncatedPayload, UnsupportedVersion

MAGIC = b"CLMI"
VERSION = 1


def save_arrays(arrays: dict[str, np.ndarray], path) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    try:
        with open(path, "wb") as f:
            f.write(b"".join(chunks))
    except OSError as e:
        raise IoFailure(str(e)) from e


def load_arrays(path) -> dict[str, np.ndarray]:
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except OSError as e:
        raise IoFailure(str(e)) from e
    if buf[:4] != MAGIC:
        raise BadMagic(f"{path}: not a CLMI checkpoint")
    try:
        version, count = struct.unpack_from("<II", buf, 4)
        if version != VERSION:
            raise UnsupportedVersion(f"{path}: checkpoint version {version}")
        pos, out = 12, {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", buf, pos)
            name = buf[pos + 2 : pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (rank,) = struct.unpack_from("<B", buf, pos)
            dims = struct.unpack_from(f"<{rank}I", buf, pos + 1)
            pos += 1 + 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * size > len(buf):
                raise TruncatedPayload(f"{path}: entry {name!r} runs past end of file")
            out[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(dims).copy()
            pos += 4 * size
    except struct.error as e:
        raise TruncatedPayload(f"{path}: {e}") from e
    return out

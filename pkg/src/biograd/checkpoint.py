"""Binary checkpoint format.

Layout (little-endian)::

    b"BGSN" | u8 version | u32 layer count L+1 | u32 dims[L+1]
    | f32 W[0..K-1] row-major | f32 B[0..K-1] row-major | u64 seed | u32 epoch
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError
from .network import NetworkParams

MAGIC = b"BGSN"
VERSION = 1


def to_bytes(params: NetworkParams, seed: int, epoch: int) -> bytes:
    parts = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", len(params.dims))]
    parts.append(struct.pack(f"<{len(params.dims)}I", *params.dims))
    for m in (*params.W, *params.B):
        parts.append(np.ascontiguousarray(m, dtype="<f4").tobytes())
    parts.append(struct.pack("<QI", seed, epoch))
    return b"".join(parts)


def from_bytes(raw: bytes, source: str = "<checkpoint>") -> tuple[NetworkParams, int, int]:
    if raw[:4] != MAGIC:
        raise FormatError(f"{source}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 9:
        raise FormatError(f"{source}: truncated header")
    (version,) = struct.unpack("<B", raw[4:5])
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version}, expected {VERSION}")
    (n,) = struct.unpack("<I", raw[5:9])
    pos = 9 + 4 * n
    if n < 2 or len(raw) < pos:
        raise FormatError(f"{source}: bad layer list")
    dims = list(struct.unpack(f"<{n}I", raw[9:pos]))
    shapes = [(dims[i + 1], dims[i]) for i in range(n - 1)]
    shapes += [(dims[i + 1], dims[-1]) for i in range(n - 1)]
    need = pos + 4 * sum(a * b for a, b in shapes) + 12
    if len(raw) != need:
        raise FormatError(f"{source}: expected {need} bytes, found {len(raw)}")
    mats = []
    for shape in shapes:
        size = shape[0] * shape[1]
        mats.append(np.frombuffer(raw, dtype="<f4", count=size, offset=pos)
                    .reshape(shape).astype(np.float32))
        pos += 4 * size
    seed, epoch = struct.unpack("<QI", raw[pos:pos + 12])
    K = n - 1
    return NetworkParams(dims, mats[:K], mats[K:]), seed, epoch


def save(path, params: NetworkParams, seed: int, epoch: int) -> str:
    """Write atomically (temp file + rename) and return the SHA-256 digest."""
    raw = to_bytes(params, seed, epoch)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(raw).hexdigest()


def load(path) -> tuple[NetworkParams, int, int]:
    path = Path(path)
    return from_bytes(path.read_bytes(), str(path))


def digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

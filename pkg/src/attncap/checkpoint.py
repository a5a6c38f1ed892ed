"""Named float64 block container ("CKPT" files).

Layout: b"CKPT", u32 version, then per block: u32 name length, UTF-8 name,
u32 rank, rank x u32 extents, little-endian float64 payload. Blocks run to
end of file. Everything is little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError

MAGIC = b"CKPT"
VERSION = 1


def dumps(blocks: Mapping[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in blocks.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def loads(raw: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    if raw[:4] != MAGIC:
        raise DataError(f"{source}: not a checkpoint (bad magic)")
    try:
        (version,) = struct.unpack_from("<I", raw, 4)
        if version != VERSION:
            raise DataError(f"{source}: unsupported checkpoint version {version}")
        pos = 8
        blocks = {}
        while pos < len(raw):
            (n,) = struct.unpack_from("<I", raw, pos)
            name = raw[pos + 4:pos + 4 + n].decode("utf-8")
            pos += 4 + n
            (rank,) = struct.unpack_from("<I", raw, pos)
            shape = struct.unpack_from(f"<{rank}I", raw, pos + 4)
            pos += 4 + 4 * rank
            count = int(np.prod(shape)) if rank else 1
            if pos + 8 * count > len(raw):
                raise DataError(f"{source}: block {name!r} truncated")
            blocks[name] = np.frombuffer(raw, "<f8", count, pos).reshape(shape).astype(np.float64)
            pos += 8 * count
    except (struct.error, UnicodeDecodeError) as exc:
        raise DataError(f"{source}: corrupt checkpoint: {exc}") from exc
    return blocks


def save(path, blocks: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(blocks))


def load(path) -> dict[str, np.ndarray]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(raw, str(path))

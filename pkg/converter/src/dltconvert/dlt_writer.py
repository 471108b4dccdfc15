"""Standalone writer for the engine's DLT bundle format.

Layout (little-endian throughout): magic "DLT1", u32 entry count, then per
entry u32 name length, name bytes, u8 rank, rank x u32 dims, raw f32
payload; then u32 metadata count and length-prefixed key/value pairs.
Byte-identical output for identical inputs.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DLT1"


def write_dlt(
    entries: list[tuple[str, np.ndarray]],
    metadata: dict[str, str],
    path: str | Path,
) -> None:
    parts = [MAGIC, struct.pack("<I", len(entries))]
    seen = set()
    for name, arr in entries:
        if not name or name in seen:
            raise ValueError(f"tensor names must be unique and non-empty: {name!r}")
        seen.add(name)
        arr = np.ascontiguousarray(arr, dtype="<f4")
        if arr.ndim == 0:
            arr = arr.reshape(1)
        name_bytes = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    parts.append(struct.pack("<I", len(metadata)))
    for key, value in metadata.items():
        for s in (key, value):
            raw = s.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)))
            parts.append(raw)
    Path(path).write_bytes(b"".join(parts))

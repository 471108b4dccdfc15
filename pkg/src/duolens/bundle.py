"""Bit-exact serialization of named tensor collections (DLT bundles).

A bundle holds an ordered map of name -> Tensor plus string metadata, and is
the on-disk form of encoder checkpoints, fusion-head checkpoints, and
calibration state.

File layout (all integers little-endian):

    magic "DLT1"
    u32 entry count
    per entry: u32 name byte-length | name bytes (UTF-8) | u8 rank |
               rank x u32 dims | raw f32 payload
    u32 metadata count
    per pair:  u32 key length | key bytes | u32 value length | value bytes
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"DLT1"


class BundleError(ValueError):
    """Malformed or inconsistent bundle data."""


class TensorBundle:
    """Ordered name -> Tensor map with string metadata."""

    def __init__(self) -> None:
        self.entries: dict[str, Tensor] = {}
        self.metadata: dict[str, str] = {}

    def add(self, name: str, tensor: Tensor) -> None:
        if not name:
            raise BundleError("tensor name must be non-empty")
        if name in self.entries:
            raise BundleError(f"duplicate tensor name: {name!r}")
        self.entries[name] = tensor

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self.entries[name]
        except KeyError:
            raise BundleError(f"bundle has no tensor named {name!r}") from None

    def __len__(self) -> int:
        return len(self.entries)


def save_bundle(b: TensorBundle, path: str | Path) -> None:
    path = Path(path)
    parts = [MAGIC, struct.pack("<I", len(b.entries))]
    for name, tensor in b.entries.items():
        name_bytes = name.encode("utf-8")
        shape = tensor.shape
        parts.append(struct.pack("<I", len(name_bytes)))
        parts.append(name_bytes)
        parts.append(struct.pack("<B", len(shape)))
        parts.append(struct.pack(f"<{len(shape)}I", *shape))
        parts.append(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
    parts.append(struct.pack("<I", len(b.metadata)))
    for key, value in b.metadata.items():
        for s in (key, value):
            raw = s.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)))
            parts.append(raw)
    try:
        path.write_bytes(b"".join(parts))
    except OSError as exc:
        raise BundleError(f"cannot write bundle to {path}: {exc}") from exc


class _Reader:
    def __init__(self, buf: bytes, path: Path) -> None:
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise BundleError(f"corrupt bundle at {what} in {self.path}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]


def load_bundle(path: str | Path) -> TensorBundle:
    """Inverse of save_bundle; round-trips payload bytes exactly."""
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise BundleError(f"cannot read bundle from {path}: {exc}") from exc

    r = _Reader(buf, path)
    if r.take(4, "magic") != MAGIC:
        raise BundleError(f"not a DLT bundle: {path}")
    out = TensorBundle()
    n_entries = r.u32("entry count")
    for _ in range(n_entries):
        name_len = r.u32("entry name length")
        name = r.take(name_len, "entry name").decode("utf-8")
        rank = r.u8(f"entry {name!r}")
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank, f"entry {name!r}"))
        count = 1
        for dim in shape:
            count *= dim
        payload = r.take(4 * count, f"entry {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        if name in out.entries:
            raise BundleError(f"duplicate tensor name in {path}: {name!r}")
        out.add(name, Tensor(arr))
    n_meta = r.u32("metadata count")
    for _ in range(n_meta):
        key = r.take(r.u32("metadata key"), "metadata key").decode("utf-8")
        value = r.take(r.u32("metadata value"), "metadata value").decode("utf-8")
        if key in out.metadata:
            raise BundleError(f"duplicate metadata key in {path}: {key!r}")
        out.metadata[key] = value
    if r.pos != len(buf):
        raise BundleError(f"trailing bytes after bundle content in {path}")
    return out

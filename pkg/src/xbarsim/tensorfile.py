"""Minimal binary tensor container for model weights.

Layout (all integers little-endian):

* magic ``b"XBTF"``, then format version (uint32, currently 1), then the
  tensor count (uint32);
* per tensor: name length (uint16) + UTF-8 name, rank (uint8), each
  dimension (uint32), then the values as little-endian IEEE-754 float32 in
  row-major order.

Round trips are byte-exact: loading and re-saving a valid file reproduces
the identical bytes, and any array whose values are float32-representable
survives save -> load bitwise.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"XBTF"
VERSION = 1


class TensorFileError(Exception):
    """Malformed container: bad magic, truncation, or inconsistent records."""


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named arrays in insertion order; values are stored as float32."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, values in tensors.items():
        encoded = name.encode("utf-8")
        if not encoded or len(encoded) > 0xFFFF:
            raise TensorFileError(f"invalid tensor name {name!r}")
        arr = np.ascontiguousarray(values, dtype="<f4")
        if arr.ndim > 0xFF:
            raise TensorFileError(f"tensor {name!r} rank {arr.ndim} too large")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.path = path
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            raise TensorFileError(
                f"{self.path}: truncated at byte {self.offset} "
                f"(wanted {n} more, have {len(self.blob) - self.offset})")
        out = self.blob[self.offset:self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_tensors(path) -> dict[str, np.ndarray]:
    """Read a container back as float64 arrays (values remain f32-exact)."""
    path = Path(path)
    reader = _Reader(path.read_bytes(), str(path))
    if reader.take(len(MAGIC)) != MAGIC:
        raise TensorFileError(f"{path}: bad magic, not a tensor container")
    version, count = reader.unpack("<II")
    if version != VERSION:
        raise TensorFileError(f"{path}: unsupported version {version}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        if name in tensors:
            raise TensorFileError(f"{path}: duplicate tensor {name!r}")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        n_values = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = reader.take(4 * n_values)
        values = np.frombuffer(raw, dtype="<f4").reshape(shape)
        tensors[name] = values.astype(np.float64)
    if reader.offset != len(reader.blob):
        raise TensorFileError(
            f"{path}: {len(reader.blob) - reader.offset} trailing bytes")
    return tensors

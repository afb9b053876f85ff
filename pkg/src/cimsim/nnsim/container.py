"""Binary weight container (CIMW).

Layout, all little-endian:
    magic   4 bytes  b"CIMW"
    version u32
    count   u32      number of tensors
  per tensor:
    name_len u16, name utf-8
    ndim     u32, dims u32 * ndim
    data     f32 * prod(dims), row-major
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CIMW"
VERSION = 1


def write_cimw(path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_cimw(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError("not a CIMW file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"unsupported CIMW version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(4 * n), dtype="<f4").reshape(shape)
            out[name] = data.astype(np.float64)
        return out

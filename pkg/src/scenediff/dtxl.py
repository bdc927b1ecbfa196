"""DTXL tensor files: magic "DTXL", u32 version=1, u32 rank, rank x u64
dims, then f32 little-endian row-major payload."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DTXL"
VERSION = 1


def write_dtxl(path: str | Path, tensor: np.ndarray) -> None:
    tensor = np.asarray(tensor)
    header = MAGIC + struct.pack("<II", VERSION, tensor.ndim)
    header += struct.pack(f"<{tensor.ndim}Q", *tensor.shape)
    payload = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_dtxl(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a DTXL file")
    version, rank = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported DTXL version {version}")
    dims = struct.unpack_from(f"<{rank}Q", raw, 12)
    offset = 12 + 8 * rank
    count = int(np.prod(dims)) if rank else 1
    expected = offset + 4 * count
    if len(raw) != expected:
        raise ValueError(f"{path}: payload size mismatch")
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
    return data.reshape(dims).astype(np.float64)

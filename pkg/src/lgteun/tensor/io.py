"""MST1 binary tensor files.

Layout: ``b"MST1"``, u8 dtype code (0 = float32, 1 = float64), u8 rank,
``rank`` little-endian u64 extents, then the row-major little-endian payload.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from lgteun.errors import FormatError

MAGIC = b"MST1"
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def write_record(fh: BinaryIO, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype not in _CODES:
        raise FormatError(f"unsupported dtype {arr.dtype}; expected float32 or float64")
    code = _CODES[arr.dtype]
    fh.write(MAGIC)
    fh.write(struct.pack("<BB", code, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def read_record(fh: BinaryIO, source: str = "<stream>") -> np.ndarray:
    magic = fh.read(4)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    head = fh.read(2)
    if len(head) != 2:
        raise FormatError(f"{source}: truncated header")
    code, rank = struct.unpack("<BB", head)
    if code not in _DTYPES:
        raise FormatError(f"{source}: unknown dtype code {code}")
    raw = fh.read(8 * rank)
    if len(raw) != 8 * rank:
        raise FormatError(f"{source}: truncated extents")
    shape = struct.unpack(f"<{rank}Q", raw)
    if any(n < 1 for n in shape):
        raise FormatError(f"{source}: zero extent in {shape}")
    dtype = _DTYPES[code]
    nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = fh.read(nbytes)
    if len(payload) != nbytes:
        raise FormatError(f"{source}: payload length {len(payload)} != expected {nbytes}")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))


def save_tensor(path, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_record(fh, arr)


def load_tensor(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        arr = read_record(fh, str(path))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after tensor payload")
    return arr

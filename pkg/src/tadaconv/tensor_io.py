"""Binary tensor files.

Layout (little endian, no alignment padding)::

    offset 0   b"TADA"
    offset 4   u8  version (1)
    offset 5   u8  dtype   (0 = float32, 1 = float64)
    offset 6   u8  ndim    (>= 1)
    offset 7   u8  reserved, must be 0
    offset 8   ndim x u64 dims (each >= 1)
    then       row-major scalar data
"""
from __future__ import annotations

import os
import struct

import numpy as np

__all__ = ["TensorFormatError", "encode_tensor", "decode_tensor", "write_tensor", "read_tensor"]

MAGIC = b"TADA"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class TensorFormatError(ValueError):
    """Malformed tensor file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def encode_tensor(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype not in _CODES:
        raise TypeError(f"only float32/float64 tensors can be stored, got {arr.dtype}")
    if arr.ndim < 1 or arr.ndim > 255:
        raise ValueError(f"tensor rank must be in [1, 255], got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"every dimension must be >= 1, got {arr.shape}")
    code = _CODES[arr.dtype]
    header = MAGIC + struct.pack("<BBBB", VERSION, code, arr.ndim, 0) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 8:
        raise TensorFormatError(f"truncated header: need 8 bytes, got {len(buf)}", len(buf))
    if buf[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}", 0)
    version, code, ndim, reserved = struct.unpack_from("<BBBB", buf, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}", 4)
    if code not in _DTYPES:
        raise TensorFormatError(f"unknown dtype code {code}", 5)
    if ndim < 1:
        raise TensorFormatError("ndim must be at least 1", 6)
    if reserved != 0:
        raise TensorFormatError(f"reserved byte is {reserved}, expected 0", 7)
    dims_end = 8 + 8 * ndim
    if len(buf) < dims_end:
        raise TensorFormatError(f"truncated dims: need {dims_end} bytes, got {len(buf)}", len(buf))
    dims = struct.unpack_from(f"<{ndim}Q", buf, 8)
    for i, d in enumerate(dims):
        if d < 1:
            raise TensorFormatError(f"dimension {i} is {d}", 8 + 8 * i)
    dtype = _DTYPES[code]
    expected = int(np.prod(dims, dtype=object)) * dtype.itemsize
    actual = len(buf) - dims_end
    if actual != expected:
        raise TensorFormatError(f"data length mismatch: expected {expected} bytes, got {actual}", dims_end)
    arr = np.frombuffer(buf, dtype=dtype, offset=dims_end).reshape(dims)
    return arr.astype(dtype.newbyteorder("="), copy=True)


def write_tensor(path: str | os.PathLike, arr) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_tensor(arr))


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_tensor(fh.read())

"""Binary record layout shared by the dataset file and the stratum segments.

Every file starts with a 10-byte header, ``b"SPRW"`` + format version
(uint16) + feature dimension (uint32), followed by packed little-endian
records::

    label    int8      -1 or +1
    version  uint32    ensemble version the weight was computed against
    weight   float64
    features float32 x dim
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, StorageError

MAGIC = b"SPRW"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHI")
HEADER_SIZE = HEADER.size


def record_dtype(dim: int) -> np.dtype:
    return np.dtype([
        ("label", "<i1"),
        ("version", "<u4"),
        ("weight", "<f8"),
        ("features", "<f4", (dim,)),
    ])


def record_size(dim: int) -> int:
    return record_dtype(dim).itemsize


def make_records(X, y, weight=1.0, version=0) -> np.ndarray:
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 2:
        raise InvalidInputError("feature matrix must be 2-d")
    recs = np.zeros(X.shape[0], dtype=record_dtype(X.shape[1]))
    recs["label"] = y
    recs["version"] = version
    recs["weight"] = weight
    recs["features"] = X
    return recs


def write_header(fh, dim: int) -> None:
    fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, dim))


def read_header(fh, path=None) -> int:
    raw = fh.read(HEADER_SIZE)
    if len(raw) != HEADER_SIZE:
        raise StorageError(f"truncated header in {path}")
    magic, version, dim = HEADER.unpack(raw)
    if magic != MAGIC:
        raise StorageError(f"bad magic {magic!r} in {path}")
    if version != FORMAT_VERSION:
        raise StorageError(f"unsupported format version {version} in {path}")
    return dim


def write_records(path, records: np.ndarray) -> None:
    dim = records.dtype["features"].shape[0]
    with open(path, "wb") as fh:
        write_header(fh, dim)
        fh.write(records.tobytes())


class RecordFile:
    """Sequential reader over a record file."""

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, "rb") as fh:
            self.dim = read_header(fh, self.path)
        self.dtype = record_dtype(self.dim)
        payload = os.path.getsize(self.path) - HEADER_SIZE
        if payload % self.dtype.itemsize:
            raise StorageError(f"{self.path} size is not a whole number of records")
        self.count = payload // self.dtype.itemsize

    def read(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        stop = self.count if stop is None else min(stop, self.count)
        n = max(stop - start, 0)
        with open(self.path, "rb") as fh:
            fh.seek(HEADER_SIZE + start * self.dtype.itemsize)
            return np.fromfile(fh, dtype=self.dtype, count=n)

    def chunks(self, chunk_records: int = 65536):
        with open(self.path, "rb") as fh:
            fh.seek(HEADER_SIZE)
            left = self.count
            while left > 0:
                n = min(chunk_records, left)
                yield np.fromfile(fh, dtype=self.dtype, count=n)
                left -= n

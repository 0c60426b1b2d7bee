"""Text datasets to the binary record store, shuffled out of core.

Input is parsed in chunks; each chunk is shuffled and spilled to a run file.
The runs are then interleaved in a seeded random order (every run keeps its
internal order), which yields a uniformly random permutation of the whole
dataset while reading and writing each run sequentially.
"""

from __future__ import annotations

import csv
import json
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .records import RecordFile, make_records, record_dtype, write_header

FORMATS = ("csv", "sparse-text")


@dataclass
class DatasetManifest:
    path: str
    dimension: int
    count: int
    format: str
    seed: int
    record_size: int

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        return cls(**json.loads(Path(path).read_text()))


def manifest_path(store_path) -> Path:
    p = Path(store_path)
    return p.with_name(p.name + ".manifest.json")


def parse_label(text: str, lineno: int) -> int:
    try:
        v = float(text)
    except ValueError:
        raise InvalidInputError(f"line {lineno}: cannot parse label {text!r}") from None
    if v == 1:
        return 1
    if v in (0, -1):
        return -1
    raise InvalidInputError(f"line {lineno}: label must be one of -1, 0, +1; got {text!r}")


def _iter_csv(path, dim):
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            label = parse_label(row[0].strip(), lineno)
            try:
                feats = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise InvalidInputError(f"line {lineno}: {exc}") from None
            if dim is None:
                dim = len(feats)
            elif len(feats) != dim:
                raise InvalidInputError(f"line {lineno}: expected {dim} features, found {len(feats)}")
            yield lineno, label, feats


def _sparse_dim(path) -> int:
    top = 0
    with open(path) as fh:
        for line in fh:
            for tok in line.split()[1:]:
                if ":" in tok:
                    top = max(top, int(tok.split(":", 1)[0]))
    return top


def _iter_sparse(path, dim):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            label = parse_label(parts[0], lineno)
            feats = [0.0] * dim
            for tok in parts[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx, val = int(idx_s), float(val_s)
                except ValueError:
                    raise InvalidInputError(f"line {lineno}: bad token {tok!r}") from None
                if not 1 <= idx <= dim:
                    raise InvalidInputError(f"line {lineno}: index {idx} outside 1..{dim}")
                feats[idx - 1] = val
            yield lineno, label, feats


def _check_finite(lineno, feats):
    if not all(np.isfinite(feats)):
        raise InvalidInputError(f"line {lineno}: non-finite feature value")


def ingest(input_path, fmt: str, output_path, seed: int = 0, dim: int | None = None,
           chunk_records: int = 100_000) -> DatasetManifest:
    if fmt not in FORMATS:
        raise InvalidInputError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if fmt == "sparse-text" and dim is None:
        dim = _sparse_dim(input_path)
    rows = _iter_csv(input_path, dim) if fmt == "csv" else _iter_sparse(input_path, dim)

    rng = np.random.default_rng(seed)
    output_path = Path(output_path)
    with tempfile.TemporaryDirectory(prefix="ingest-", dir=output_path.parent or ".") as tmp:
        runs = []
        labels, feats = [], []

        def spill():
            X = np.asarray(feats, dtype=np.float64)
            if X.ndim != 2:
                X = X.reshape(len(feats), -1)
            recs = make_records(X, np.asarray(labels, dtype=np.int8))
            recs = recs[rng.permutation(len(recs))]
            run = Path(tmp) / f"run{len(runs):06d}.bin"
            recs.tofile(run)
            runs.append((run, len(recs)))
            labels.clear()
            feats.clear()

        for lineno, label, x in rows:
            _check_finite(lineno, x)
            if dim is None:
                dim = len(x)
            labels.append(label)
            feats.append(x)
            if len(labels) >= chunk_records:
                spill()
        if labels:
            spill()
        if dim is None:
            raise InvalidInputError(f"{input_path}: no examples found")

        dtype = record_dtype(dim)
        counts = np.array([c for _, c in runs], dtype=np.int64)
        order = rng.permutation(np.repeat(np.arange(len(runs), dtype=np.int32), counts))
        handles = [open(p, "rb") for p, _ in runs]
        try:
            with open(output_path, "wb") as out:
                write_header(out, dim)
                for lo in range(0, order.size, chunk_records):
                    block = order[lo:lo + chunk_records]
                    buf = np.empty(block.size, dtype=dtype)
                    for r in np.unique(block):
                        where = np.flatnonzero(block == r)
                        buf[where] = np.fromfile(handles[r], dtype=dtype, count=where.size)
                    out.write(buf.tobytes())
        finally:
            for h in handles:
                h.close()

    total = int(counts.sum())
    manifest = DatasetManifest(str(output_path), dim, total, fmt, seed, dtype.itemsize)
    manifest.write(manifest_path(output_path))
    return manifest


def write_dataset(X, y, output_path, seed: int | None = 0) -> DatasetManifest:
    """Store in-memory arrays as a record file (shuffled unless seed is None)."""
    recs = make_records(X, y)
    if seed is not None:
        recs = recs[np.random.default_rng(seed).permutation(len(recs))]
    output_path = Path(output_path)
    with open(output_path, "wb") as fh:
        write_header(fh, recs.dtype["features"].shape[0])
        fh.write(recs.tobytes())
    dim = recs.dtype["features"].shape[0]
    manifest = DatasetManifest(str(output_path), dim, len(recs), "array", -1 if seed is None else seed,
                               recs.dtype.itemsize)
    manifest.write(manifest_path(output_path))
    return manifest


def read_dataset(path):
    """Whole record file as ``(X, y)``; for evaluation-sized data."""
    recs = RecordFile(path).read()
    return recs["features"], recs["label"].astype(np.int64)

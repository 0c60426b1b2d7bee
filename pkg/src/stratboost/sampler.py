"""Weighted sampling from a disk-resident, weight-stratified store.

Stratum ``k`` holds the examples whose last computed weight lies in
``[2**k, 2**(k+1))``.  To draw an example the sampler picks a stratum with
probability proportional to its total weight, then reads records from the
head of that stratum.  Each record is brought up to date with the current
ensemble and appended to the tail of the stratum ``k'`` of its refreshed
weight.  If it stayed in band (``k' == k``) it is accepted with probability
``w / 2**(k+1)``, which is at least one half; a record that moved is not a
draw from ``k`` at all and is only relocated.  Acceptance inside a band is
thus exactly proportional to the current weight.

Each stratum is a FIFO kept as a directory of append-only segment files with
a head cursor; consumed segments are deleted.  A small in-memory buffer sits
at either end.

``mv_sample`` is the flat systematic (minimal variance) sampler used to draw
the first sample straight from the shuffled dataset file.
"""

from __future__ import annotations

import logging
import math
import os
import shutil
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyStoreError, InsufficientDataError, InvalidInputError, StorageError
from .records import HEADER_SIZE, RecordFile, read_header, record_dtype, write_header
from .scanner import refresh_weights
from .weak_learner import Ensemble

log = logging.getLogger(__name__)

DEFAULT_SEGMENT_BYTES = 16 << 20
DEFAULT_BUFFER_RECORDS = 4096
RECOUNT_EVERY = 1_000_000
MANIFEST = "strata.manifest"


def stratum_index(weight) -> int:
    """``floor(log2(weight))``, exact for every positive double."""
    if np.ndim(weight) == 0:
        if not (weight > 0 and math.isfinite(weight)):
            raise InvalidInputError(f"weight must be positive and finite, got {weight}")
        return math.frexp(weight)[1] - 1
    w = np.asarray(weight, dtype=np.float64)
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise InvalidInputError("weights must be positive and finite")
    return np.frexp(w)[1].astype(np.int64) - 1


def accept_probability(weight):
    k = stratum_index(weight)
    return np.asarray(weight) / np.ldexp(1.0, np.asarray(k) + 1)


@dataclass
class _Segment:
    path: Path
    records: int = 0  # flushed records in the file


class Stratum:
    def __init__(self, root: Path, k: int, dim: int, segment_bytes: int = DEFAULT_SEGMENT_BYTES,
                 buffer_records: int = DEFAULT_BUFFER_RECORDS):
        self.k = k
        self.dim = dim
        self.dtype = record_dtype(dim)
        self.dir = Path(root) / f"k{k:+04d}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.segment_records = max(1, (segment_bytes - HEADER_SIZE) // self.dtype.itemsize)
        self.buffer_records = buffer_records
        self.segments: deque[_Segment] = deque()
        self.head_offset = 0  # records consumed from segments[0]
        self.head = np.empty(0, dtype=self.dtype)
        self.tail: list[np.ndarray] = []
        self.tail_count = 0
        self.count = 0
        self.weight_sum = 0.0
        self.ops = 0
        self._next_seg = 0

    # -- bookkeeping ---------------------------------------------------------

    def _touch(self, n: int) -> None:
        self.ops += n
        if self.ops >= RECOUNT_EVERY:
            self.recount()

    def recount(self) -> None:
        """Exact recomputation of count and weight_sum from every record."""
        total = 0.0
        count = 0
        for arr in self._iter_all():
            total += float(np.sum(arr["weight"]))
            count += len(arr)
        self.count = count
        self.weight_sum = total
        self.ops = 0

    def _iter_all(self):
        yield self.head
        for i, seg in enumerate(self.segments):
            start = self.head_offset if i == 0 else 0
            yield self._read_segment(seg, start, seg.records)
        yield from self.tail

    def records(self) -> np.ndarray:
        """All live records in FIFO order (for audits and tests)."""
        parts = list(self._iter_all())
        return np.concatenate(parts) if parts else np.empty(0, dtype=self.dtype)

    # -- disk I/O ------------------------------------------------------------

    def _new_segment(self) -> _Segment:
        path = self.dir / f"seg{self._next_seg:08d}.bin"
        self._next_seg += 1
        try:
            with open(path, "wb") as fh:
                write_header(fh, self.dim)
        except OSError as exc:
            raise StorageError(f"cannot create segment {path}: {exc}", self.k) from exc
        seg = _Segment(path)
        self.segments.append(seg)
        return seg

    def _read_segment(self, seg: _Segment, start: int, stop: int) -> np.ndarray:
        try:
            with open(seg.path, "rb") as fh:
                read_header(fh, seg.path)
                fh.seek(HEADER_SIZE + start * self.dtype.itemsize)
                arr = np.fromfile(fh, dtype=self.dtype, count=stop - start)
        except OSError as exc:
            raise StorageError(f"cannot read {seg.path}: {exc}", self.k) from exc
        if len(arr) != stop - start:
            raise StorageError(f"short read from {seg.path}", self.k)
        return arr

    def flush(self) -> None:
        if not self.tail:
            return
        data = np.concatenate(self.tail)
        self.tail.clear()
        self.tail_count = 0
        pos = 0
        try:
            while pos < len(data):
                if not self.segments or self.segments[-1].records >= self.segment_records:
                    self._new_segment()
                seg = self.segments[-1]
                room = self.segment_records - seg.records
                part = data[pos:pos + room]
                with open(seg.path, "ab") as fh:
                    fh.write(part.tobytes())
                seg.records += len(part)
                pos += len(part)
        except OSError as exc:
            raise StorageError(f"cannot append to stratum: {exc}", self.k) from exc

    def _fill_head(self) -> None:
        while self.segments:
            seg = self.segments[0]
            if self.head_offset < seg.records:
                stop = min(seg.records, self.head_offset + self.buffer_records)
                self.head = self._read_segment(seg, self.head_offset, stop)
                self.head_offset = stop
                return
            if len(self.segments) == 1:
                break
            self.segments.popleft()
            self.head_offset = 0
            try:
                os.remove(seg.path)
            except OSError as exc:
                raise StorageError(f"cannot delete consumed segment {seg.path}: {exc}", self.k) from exc
        if self.tail:
            # disk drained; hand the unflushed tail straight to the head
            self.head = np.concatenate(self.tail)
            self.tail.clear()
            self.tail_count = 0

    # -- FIFO operations -----------------------------------------------------

    def append(self, recs: np.ndarray) -> None:
        if len(recs) == 0:
            return
        self.tail.append(np.array(recs, dtype=self.dtype, copy=True))
        self.tail_count += len(recs)
        self.count += len(recs)
        self.weight_sum += float(np.sum(recs["weight"]))
        if self.tail_count >= self.buffer_records:
            self.flush()
        self._touch(len(recs))

    def pop(self, m: int) -> np.ndarray:
        """Remove and return up to ``m`` records from the head."""
        out = []
        got = 0
        while got < m and self.count - got > 0:
            if len(self.head) == 0:
                self._fill_head()
                if len(self.head) == 0:
                    break
            take = self.head[:m - got]
            self.head = self.head[len(take):]
            out.append(take)
            got += len(take)
        if not out:
            return np.empty(0, dtype=self.dtype)
        recs = np.concatenate(out)
        self.count -= len(recs)
        self.weight_sum -= float(np.sum(recs["weight"]))
        if self.count == 0:
            self.weight_sum = 0.0
        self.weight_sum = max(self.weight_sum, 0.0)
        self._touch(len(recs))
        return recs

    def unread(self, recs: np.ndarray) -> None:
        """Put records back at the head, in order, as if never popped."""
        if len(recs) == 0:
            return
        self.head = np.concatenate([recs, self.head])
        self.count += len(recs)
        self.weight_sum += float(np.sum(recs["weight"]))

    def describe(self) -> str:
        segs = " ".join(f"{s.path.name}:{s.records}" for s in self.segments) or "-"
        return (f"stratum {self.k} count {self.count} weight_sum {self.weight_sum!r} "
                f"head_offset {self.head_offset} segments {segs}")


@dataclass
class SampleSet:
    """A fresh in-memory sample: every weight is 1, stamped at ``version``."""

    records: np.ndarray
    target_size: int
    version: int

    @property
    def nbytes(self) -> int:
        return self.records.nbytes

    def __len__(self):
        return len(self.records)


class StratifiedStore:
    def __init__(self, root, dim: int, segment_bytes: int = DEFAULT_SEGMENT_BYTES,
                 buffer_records: int = DEFAULT_BUFFER_RECORDS):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.dim = dim
        self.dtype = record_dtype(dim)
        self.segment_bytes = segment_bytes
        self.buffer_records = buffer_records
        self.strata: dict[int, Stratum] = {}
        self.steps = 0
        self.accepted = 0

    @classmethod
    def from_record_file(cls, path, root, chunk_records: int = 65536, **kw) -> "StratifiedStore":
        rf = RecordFile(path)
        store = cls(root, rf.dim, **kw)
        for chunk in rf.chunks(chunk_records):
            store.insert(chunk)
        return store

    def _stratum(self, k: int) -> Stratum:
        s = self.strata.get(k)
        if s is None:
            s = Stratum(self.root, k, self.dim, self.segment_bytes, self.buffer_records)
            self.strata[k] = s
        return s

    def insert(self, recs: np.ndarray) -> None:
        if len(recs) == 0:
            return
        ks = stratum_index(recs["weight"])
        if ks.min() == ks.max():
            self._stratum(int(ks[0])).append(recs)
            return
        order = np.argsort(ks, kind="stable")
        ks_sorted = ks[order]
        bounds = np.flatnonzero(np.diff(ks_sorted)) + 1
        for grp in np.split(order, bounds):
            self._stratum(int(ks[grp[0]])).append(recs[grp])

    @property
    def count(self) -> int:
        return sum(s.count for s in self.strata.values())

    def weight_table(self) -> tuple:
        """Nonempty strata indices and their normalised weights."""
        ks = np.array(sorted(k for k, s in self.strata.items() if s.count > 0), dtype=np.int64)
        if ks.size == 0:
            return ks, np.empty(0)
        w = np.array([self.strata[k].weight_sum for k in ks])
        w = np.maximum(w, 0.0)
        total = w.sum()
        if not total > 0:
            w = np.array([float(self.strata[k].count) for k in ks])
            total = w.sum()
        return ks, w / total

    def select_stratum(self, rng: np.random.Generator) -> int:
        ks, p = self.weight_table()
        if ks.size == 0:
            raise EmptyStoreError("all strata are empty")
        i = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
        return int(ks[min(i, ks.size - 1)])

    def _draw(self, k: int, snapshot: Ensemble, rng: np.random.Generator, wanted: int,
              chunk: int) -> list:
        """Read from stratum ``k`` until ``wanted`` records are accepted or it
        runs dry.  Returns the accepted records (copies, refreshed)."""
        stratum = self.strata[k]
        accepted = []
        while wanted > 0 and stratum.count > 0:
            raw = stratum.pop(max(chunk, 2 * wanted))
            recs = raw.copy()
            w = refresh_weights(recs, snapshot)
            stay = stratum_index(w) == k
            acc = stay & (rng.random(len(recs)) < w / math.ldexp(1.0, k + 1))
            cum = np.cumsum(acc)
            if cum[-1] >= wanted:
                used = int(np.searchsorted(cum, wanted)) + 1
            else:
                used = len(recs)
            stratum.unread(raw[used:])
            self.steps += used
            self.insert(recs[:used])
            hits = recs[:used][acc[:used]]
            accepted.append(hits)
            wanted -= len(hits)
        self.accepted += sum(len(a) for a in accepted)
        return accepted

    def sample_step(self, snapshot: Ensemble, rng: np.random.Generator, stratum: int | None = None):
        """One read from a (selected) stratum; the record if accepted, else None
        (rejected, or moved to another stratum by its refreshed weight)."""
        k = self.select_stratum(rng) if stratum is None else stratum
        s = self.strata.get(k)
        if s is None or s.count == 0:
            raise EmptyStoreError(f"stratum {k} is empty")
        raw = s.pop(1)
        recs = raw.copy()
        w = refresh_weights(recs, snapshot)
        stay = stratum_index(float(w[0])) == k
        ok = stay and bool(rng.random() < w[0] / math.ldexp(1.0, k + 1))
        self.steps += 1
        self.insert(recs)
        if ok:
            self.accepted += 1
            return recs[0].copy()
        return None

    def assemble_sample(self, snapshot: Ensemble, n: int, rng: np.random.Generator,
                        batch: int = 1024, chunk: int = 64) -> SampleSet:
        """Collect ``n`` accepted records into a unit-weight sample.

        Strata are chosen ``batch`` at a time from the current weight table;
        for each choice records are read from that stratum until one is
        accepted.
        """
        if n < 1:
            raise InvalidInputError("sample size must be >= 1")
        if self.count < n:
            raise InsufficientDataError(f"store holds {self.count} records, sample needs {n}")
        parts = []
        got = 0
        while got < n:
            ks, p = self.weight_table()
            if ks.size == 0:
                raise InsufficientDataError("store ran dry while assembling a sample")
            counts = rng.multinomial(min(batch, n - got), p)
            for k, m in zip(ks, counts):
                if m == 0:
                    continue
                hits = self._draw(int(k), snapshot, rng, int(m), chunk)
                for h in hits:
                    parts.append(h)
                    got += len(h)
        # hits arrive grouped by stratum; the scanner needs a random order
        recs = np.concatenate(parts)[:n]
        recs = recs[rng.permutation(len(recs))]
        recs["weight"] = 1.0
        recs["version"] = snapshot.version
        return SampleSet(recs, n, snapshot.version)

    # -- maintenance ---------------------------------------------------------

    def flush(self) -> None:
        for s in self.strata.values():
            s.flush()

    def audit(self) -> list:
        """Records whose weight is outside their stratum's band."""
        bad = []
        for k, s in self.strata.items():
            recs = s.records()
            if len(recs) == 0:
                continue
            ks = stratum_index(recs["weight"])
            for i in np.flatnonzero(ks != k):
                bad.append((k, int(ks[i]), float(recs["weight"][i])))
        return bad

    def all_records(self) -> np.ndarray:
        parts = [s.records() for _, s in sorted(self.strata.items())]
        parts = [p for p in parts if len(p)]
        return np.concatenate(parts) if parts else np.empty(0, dtype=self.dtype)

    def write_manifest(self) -> Path:
        self.flush()
        path = self.root / MANIFEST
        lines = ["stratboost-store 1", f"dimension {self.dim}"]
        for k in sorted(self.strata):
            lines.append(self.strata[k].describe())
        tmp = path.with_suffix(".tmp")
        tmp.write_text("\n".join(lines) + "\n")
        os.replace(tmp, path)
        return path

    def close(self, remove: bool = False) -> None:
        if remove:
            shutil.rmtree(self.root, ignore_errors=True)
        else:
            self.write_manifest()


def mv_select(weights: np.ndarray, theta: float, offset: float, carry: float = 0.0):
    """Systematic selection over one block of weights.

    Returns ``(accepted_mask, new_carry)``.  Weights are capped at ``theta`` so
    an example is selected at most once; an example is selected when the
    running total crosses a point ``offset + j * theta``.
    """
    if not theta > 0:
        raise InvalidInputError("theta must be positive")
    if not 0 <= offset < theta:
        raise InvalidInputError("offset must lie in [0, theta)")
    w = np.minimum(np.asarray(weights, dtype=np.float64), theta)
    c_after = carry + np.cumsum(w)
    c_before = np.concatenate(([carry], c_after[:-1]))
    crossed = np.floor((c_after - offset) / theta) > np.floor((c_before - offset) / theta)
    return crossed, (float(c_after[-1]) if w.size else carry)


def mv_sample(stream, theta: float, offset: float):
    """Yield the examples of a ``(example, weight)`` stream selected by
    systematic sampling with spacing ``theta`` and starting point ``offset``."""
    if not theta > 0:
        raise InvalidInputError("theta must be positive")
    if not 0 <= offset < theta:
        raise InvalidInputError("offset must lie in [0, theta)")
    c = 0.0
    for example, weight in stream:
        if not weight > 0:
            raise InvalidInputError("weights must be positive")
        before = c
        c += min(weight, theta)
        if math.floor((c - offset) / theta) > math.floor((before - offset) / theta):
            yield example


def initial_sample(path, n: int, rng: np.random.Generator, chunk_records: int = 65536) -> SampleSet:
    """Systematic sample of ``n`` records from a shuffled record file.

    Weights come from the file (all 1 after ingest), spacing is total/n, so
    exactly ``n`` records are selected.
    """
    rf = RecordFile(path)
    if rf.count < n:
        raise InsufficientDataError(f"dataset has {rf.count} records, sample needs {n}")
    total = 0.0
    for chunk in rf.chunks(chunk_records):
        total += float(np.sum(chunk["weight"]))
    # a hair under total/n so rounding yields n or n+1 selections, never n-1
    theta = total / n * (1.0 - 1e-12)
    offset = rng.random() * theta
    carry = 0.0
    parts = []
    for chunk in rf.chunks(chunk_records):
        mask, carry = mv_select(chunk["weight"], theta, offset, carry)
        parts.append(chunk[mask])
    recs = np.concatenate(parts)[:n].copy()
    if len(recs) < n:
        raise InsufficientDataError(f"systematic pass selected {len(recs)} of {n} records")
    recs["weight"] = 1.0
    recs["version"] = 0
    return SampleSet(recs, n, 0)

"""Sequential scan of the in-memory sample with early stopping.

The scanner walks the sample one example at a time (cyclically, from where the
previous search stopped), refreshes each example's weight against the current
ensemble, and keeps the stopping-rule statistics of every candidate split.
The first candidate whose statistics satisfy the stopping rule at a check
point is returned.  If a whole pass goes by without a fire, the search fails
and reports the largest empirical edge it saw so the caller can lower gamma.

Candidate statistics are accumulated with per-bin histograms: for a split on
feature ``f`` at cut ``j`` the correlation sum is ``2 * P_j - T`` where ``P_j``
is the weighted label sum over bins ``<= j`` inside the leaf and ``T`` the
leaf total.  ``v`` and the example count are shared by all candidates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import MAX_WEIGHT, MIN_WEIGHT, StampedExample
from .errors import InvalidInputError
from .stopping import ScanState, StoppingConfig, fires
from .weak_learner import BinningConfig, Ensemble, SplitRule, scope_mask

log = logging.getLogger(__name__)

GAMMA_FLOOR = 0.001
SHRINK_FACTOR = 0.9


@dataclass(frozen=True)
class Fired:
    rule: SplitRule
    gamma_used: float
    empirical_edge: float
    state: ScanState
    scanned: int


@dataclass(frozen=True)
class Exhausted:
    max_empirical_edge: float
    best_rule: SplitRule | None
    scanned: int


def shrink_gamma(max_empirical_edge: float, gamma_floor: float = GAMMA_FLOOR) -> float:
    if not math.isfinite(max_empirical_edge):
        raise InvalidInputError("max_empirical_edge must be finite")
    return max(SHRINK_FACTOR * max(max_empirical_edge, gamma_floor), gamma_floor)


def update_weight(ex: StampedExample, snapshot: Ensemble) -> StampedExample:
    if ex.last_version > snapshot.version:
        raise InvalidInputError(
            f"example stamped at version {ex.last_version}, snapshot is {snapshot.version}")
    s = snapshot.delta_score(ex.last_version, ex.example.features)
    w = ex.last_weight * math.exp(-ex.example.label * s)
    w = min(max(w, MIN_WEIGHT), MAX_WEIGHT)
    return StampedExample(ex.example, w, snapshot.version)


def refresh_weights(records: np.ndarray, snapshot: Ensemble, rows=None) -> np.ndarray:
    """Bring stamped weights of ``records[rows]`` up to ``snapshot`` in place.

    Returns the refreshed weights of those rows.
    """
    if rows is None:
        rows = slice(None)
    sub = records[rows]
    versions = sub["version"].astype(np.int64)
    if versions.size and versions.max() > snapshot.version:
        raise InvalidInputError("record stamped with a version newer than the snapshot")
    w = sub["weight"].astype(np.float64)
    stale = versions < snapshot.version
    if np.any(stale):
        idx = np.flatnonzero(stale)
        s = snapshot.delta_scores(sub["features"][idx], versions[idx])
        w[idx] = np.clip(w[idx] * np.exp(-sub["label"][idx] * s), MIN_WEIGHT, MAX_WEIGHT)
        records["weight"][rows] = w
        records["version"][rows] = snapshot.version
    return w


def leaf_ids(leaves, X: np.ndarray) -> np.ndarray:
    """Index of the leaf containing each row; leaves partition the space."""
    ids = np.full(X.shape[0], -1, dtype=np.int64)
    for i, leaf in enumerate(leaves):
        ids[scope_mask(leaf, X)] = i
    return ids


class Scanner:
    """Owns the in-memory sample and the read cursor into it."""

    def __init__(self, records: np.ndarray, bins: BinningConfig, cfg: StoppingConfig,
                 max_cells: int = 2_000_000, group_blocks: int = 8):
        self.bins = bins
        self.cfg = cfg
        self.max_cells = max_cells
        self.group_blocks = max(1, group_blocks)
        self.reset_sample(records)

    def reset_sample(self, records: np.ndarray) -> None:
        if len(records) == 0:
            raise InvalidInputError("cannot scan an empty sample")
        self.records = records
        # features never change within a sample, so bin them once
        self.binned = self.bins.bin_index(records["features"])
        self.cursor = 0

    def _chunk_size(self, cells_per_block: int) -> int:
        ci = self.cfg.check_interval
        blocks = max(1, self.max_cells // max(cells_per_block, 1))
        return int(min(max(ci * blocks, ci), 1 << 14))

    def scan(self, snapshot: Ensemble, leaves, gamma: float, *, early_stop: bool = True):
        if not 0 < gamma < 0.5:
            raise InvalidInputError(f"gamma must lie in (0, 0.5), got {gamma}")
        recs = self.records
        n = len(recs)
        cfg = self.cfg
        ci = cfg.check_interval
        leaves = list(leaves)
        L = len(leaves)
        d = self.bins.dim
        J = self.bins.max_cuts
        if J == 0 or L == 0:
            return Exhausted(0.0, None, 0)
        nb = J + 1
        valid = np.arange(J)[None, :] < self.bins.counts[:, None]  # (d, J)
        debug = log.isEnabledFor(logging.DEBUG)
        # debug lines need exact statistics at every check point
        g = 1 if debug or not early_stop else self.group_blocks
        shape = (L, d, nb)
        feat_offsets = np.arange(d, dtype=np.int64) * nb

        def corr(Gs):
            P = np.cumsum(Gs, axis=-1)
            return 2.0 * P[..., :J] - P[..., nb - 1:nb]

        G = np.zeros(shape)
        W = V = 0.0
        count = 0
        pos = self.cursor
        chunk = self._chunk_size(L * d * nb)

        while count < n:
            c = min(chunk, n - count)
            rows = (pos + np.arange(c)) % n
            w = refresh_weights(recs, snapshot, rows)
            wy = w * recs["label"][rows]
            cell = (leaf_ids(leaves, recs["features"][rows]) * (d * nb))[:, None] + feat_offsets + self.binned[rows]
            wy_rep = np.repeat(wy, d)

            after = count + np.arange(1, c + 1)
            checks = np.flatnonzero((after % ci == 0) | (after == n))
            blk = np.searchsorted(checks, np.arange(c), side="left")
            grp = blk // g
            ngrp = int(grp[-1]) + 1

            Hg = np.bincount((grp[:, None] * (L * d * nb) + cell).ravel(), weights=wy_rep,
                             minlength=ngrp * L * d * nb).reshape((ngrp,) + shape)
            Gg = G[None] + np.cumsum(Hg, axis=0)
            Wg = W + np.cumsum(np.bincount(grp, weights=w, minlength=ngrp))
            Vg = V + np.cumsum(np.bincount(grp, weights=w * w, minlength=ngrp))
            A_end = corr(Gg)

            if early_stop:
                W0 = np.concatenate(([W], Wg[:-1]))
                V0 = np.concatenate(([V], Vg[:-1]))
                if g == 1:
                    live = np.ones(ngrp, dtype=bool)
                else:
                    A_start = np.concatenate((corr(G)[None], A_end[:-1]))
                    near = np.where(valid, np.minimum(np.abs(A_start), np.abs(A_end)), 0.0)
                    # |A| moves by at most the weight added inside the group and
                    # the threshold is at least c*sqrt(v*b) anywhere in it
                    bound = near.reshape(ngrp, -1).max(axis=1) + (Wg - W0) - gamma * W0
                    last = np.minimum((np.arange(ngrp) + 1) * g, checks.size) - 1
                    live = (after[checks[last]] > cfg.t0) & (bound > 0) & (bound > cfg.c * np.sqrt(V0 * cfg.b))
                for q in np.flatnonzero(live):
                    hit = self._scan_group(q, g, grp, blk, checks, after, cell, wy_rep, w, shape,
                                           Gg[q - 1] if q else G, W0[q], V0[q], corr, valid, gamma,
                                           leaves, debug)
                    if hit is not None:
                        rule, corr_b, wb, vb, consumed, check_row = hit
                        self.cursor = (pos + check_row + 1) % n
                        m = corr_b - gamma * wb
                        return Fired(rule, gamma, float(corr_b / wb), ScanState(float(m), float(vb), consumed),
                                     consumed)

            G = Gg[-1]
            W, V = float(Wg[-1]), float(Vg[-1])
            A_last = A_end[-1]
            count += c
            pos = (pos + c) % n

        edges = np.where(valid[None], A_last / W, -np.inf)
        signed = np.stack([edges, np.where(valid[None], -A_last / W, -np.inf)], axis=-1)
        flat = int(np.argmax(signed))
        li, f, j, p = np.unravel_index(flat, (L, d, J, 2))
        best_rule = SplitRule(leaves[li], int(f), float(self.bins.thresholds[f][j]), 1 if p == 0 else -1)
        return Exhausted(float(signed.reshape(-1)[flat]), best_rule, n)

    def _scan_group(self, q, g, grp, blk, checks, after, cell, wy_rep, w, shape, G0, W0, V0, corr,
                    valid, gamma, leaves, debug):
        """Exact statistics at every check point of group ``q``; first fire or None."""
        L, d, nb = shape
        J = nb - 1
        sel = np.flatnonzero(grp == q)
        b0 = q * g
        local = blk[sel] - b0
        nblk = int(local[-1]) + 1
        H = np.bincount((local[:, None] * (L * d * nb) + cell[sel]).ravel(),
                        weights=wy_rep.reshape(-1, d)[sel].ravel(),
                        minlength=nblk * L * d * nb).reshape((nblk,) + shape)
        A = corr(G0[None] + np.cumsum(H, axis=0))
        Wc = W0 + np.cumsum(np.bincount(local, weights=w[sel], minlength=nblk))
        Vc = V0 + np.cumsum(np.bincount(local, weights=w[sel] ** 2, minlength=nblk))
        cnt = after[checks[b0:b0 + nblk]]
        if debug:
            best = np.abs(np.where(valid[None, None], A, 0.0)).reshape(nblk, -1).max(axis=1) / Wc
            for b in range(nblk):
                log.debug("scanned=%d n_eff=%.6g best_edge=%.6g gamma=%.6g",
                          cnt[b], Wc[b] ** 2 / Vc[b], best[b], gamma)
        hit = self._first_fire(A, Wc, Vc, cnt, gamma, valid[None, None, :, :, None])
        if hit is None:
            return None
        b, flat = hit
        li, f, j, p = np.unravel_index(flat, (L, d, J, 2))
        pol = 1 if p == 0 else -1
        rule = SplitRule(leaves[li], int(f), float(self.bins.thresholds[f][j]), pol)
        return rule, pol * A[b, li, f, j], Wc[b], Vc[b], int(cnt[b]), int(checks[b0 + b])

    def _first_fire(self, A, Wc, Vc, cnt, gamma, valid5):
        live = cnt > self.cfg.t0
        if not np.any(live):
            return None
        # loglog >= 0, so m > c*sqrt(v*b) is necessary; screen blocks on it first
        nblk = A.shape[0]
        absmax = np.abs(np.where(valid5[..., 0], A, 0.0)).reshape(nblk, -1).max(axis=1)
        mmax = absmax - gamma * Wc
        screen = live & (mmax > 0) & (mmax > self.cfg.c * np.sqrt(Vc * self.cfg.b))
        for b in np.flatnonzero(screen):
            M = np.stack([A[b] - gamma * Wc[b], -A[b] - gamma * Wc[b]], axis=-1)
            ok = fires(M, Vc[b], cnt[b], self.cfg) & valid5[0]
            if np.any(ok):
                return b, int(np.argmax(ok.ravel()))
        return None


def scan(sample, snapshot: Ensemble, bins: BinningConfig, leaves, gamma: float,
         cfg: StoppingConfig):
    """One search from the start of ``sample`` (records array or list of
    ``StampedExample``)."""
    if len(sample) == 0:
        raise InvalidInputError("cannot scan an empty sample")
    if not isinstance(sample, np.ndarray):
        from .records import record_dtype
        recs = np.zeros(len(sample), dtype=record_dtype(sample[0].example.dim))
        for i, ex in enumerate(sample):
            recs[i] = (ex.example.label, ex.last_version, ex.last_weight, ex.example.features)
        sample = recs
    return Scanner(sample, bins, cfg).scan(snapshot, leaves, gamma)

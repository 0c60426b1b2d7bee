"""Training loop: scanner and sampler workers driven by one coordinator.

The coordinator keeps the ensemble.  Each round it asks the scanner for a
certified rule at the current gamma; a fired rule is appended with weight
``rule_weight(gamma)``, a failed search lowers gamma.  After every append the
effective sample size of the in-memory sample is checked, and when
``n_eff / n`` falls below ``ess_threshold`` the sampler is asked for a fresh
unit-weight sample drawn from the stratified store.
"""

from __future__ import annotations

import logging
import math
import queue
import tempfile
import threading
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable

import numpy as np

from .core import effective_sample_size, rule_weight
from .errors import InvalidInputError
from .records import RecordFile, record_size
from .sampler import StratifiedStore, initial_sample
from .scanner import GAMMA_FLOOR, SHRINK_FACTOR, Exhausted, Fired, Scanner, refresh_weights, shrink_gamma
from .stopping import DEFAULT_CHECK_INTERVAL, DEFAULT_T0, StoppingConfig, default_config
from .weak_learner import BinningConfig, Ensemble, Tree, build_bins

log = logging.getLogger(__name__)


@dataclass
class BoostConfig:
    sample_size: int = 10_000
    ess_threshold: float = 0.25
    max_rules: int = 100
    gamma_init: float = 0.25
    gamma_floor: float = GAMMA_FLOOR
    max_leaves: int = 4
    bins: int = 64
    stop_c: float = 1.0
    stop_sigma: float | None = None  # None: 0.001 / number of candidates
    stop_t0: int = DEFAULT_T0
    stop_check_interval: int = DEFAULT_CHECK_INTERVAL
    time_budget: float | None = None  # seconds
    sampler_batch: int = 1024
    segment_bytes: int = 16 << 20
    concurrent: bool = True

    def __post_init__(self):
        if self.sample_size < 1:
            raise InvalidInputError("sample_size must be >= 1")
        if not 0 < self.ess_threshold <= 1:
            raise InvalidInputError("ess_threshold must lie in (0, 1]")
        if self.max_rules < 0:
            raise InvalidInputError("max_rules must be >= 0")
        if not 0 < self.gamma_init < 0.5:
            raise InvalidInputError("gamma_init must lie in (0, 0.5)")
        if not 0 < self.gamma_floor < 0.5:
            raise InvalidInputError("gamma_floor must lie in (0, 0.5)")
        if self.max_leaves < 2:
            raise InvalidInputError("max_leaves must be >= 2")
        if self.bins < 1:
            raise InvalidInputError("bins must be >= 1")

    def stopping(self, bins: BinningConfig) -> StoppingConfig:
        if self.stop_sigma is not None:
            return StoppingConfig.from_sigma(self.stop_sigma, c=self.stop_c, t0=self.stop_t0,
                                             check_interval=self.stop_check_interval)
        n_cand = max(1, 2 * int(bins.counts.sum()) * (self.max_leaves - 1))
        cfg = default_config(n_cand, t0=self.stop_t0, check_interval=self.stop_check_interval)
        return StoppingConfig(c=self.stop_c, b=cfg.b, t0=cfg.t0, check_interval=cfg.check_interval)


def ess_ratio(weights, n: int) -> float:
    return effective_sample_size(weights) / n


def init_gamma(previous: Tree | None, cfg: BoostConfig) -> float:
    if previous is None or not previous.gammas:
        return cfg.gamma_init
    g = max(previous.gammas)
    return min(max(g, cfg.gamma_floor), math.nextafter(0.5, 0.0))


def sample_size_for_budget(memory_mb: float, dim: int) -> int:
    """Largest sample whose records fit in ``memory_mb`` megabytes."""
    return int(memory_mb * (1 << 20)) // record_size(dim)


@dataclass
class RuleRecord:
    index: int
    gamma: float
    alpha: float
    edge: float
    scanned: int
    ess_ratio: float
    sample_loss: float  # mean in-memory weight, relative to the epoch start
    wall: float
    epoch: int

    def line(self) -> str:
        return " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                        for k, v in asdict(self).items())


@dataclass
class TrainResult:
    ensemble: Ensemble
    bins: BinningConfig
    stopping: StoppingConfig
    history: list = field(default_factory=list)
    swaps: int = 0
    stop_reason: str = ""
    peak_sample_bytes: int = 0
    scanned_total: int = 0
    store: StratifiedStore | None = None
    swap_ess: list = field(default_factory=list)


class _Worker:
    """A thread that serves requests one at a time over a pair of queues."""

    def __init__(self, name: str, handler: Callable, concurrent: bool = True):
        self.handler = handler
        self.concurrent = concurrent
        if concurrent:
            self.requests: queue.Queue = queue.Queue()
            self.replies: queue.Queue = queue.Queue()
            self.thread = threading.Thread(target=self._run, name=name, daemon=True)
            self.thread.start()

    def _run(self):
        while True:
            msg = self.requests.get()
            if msg is None:
                return
            try:
                self.replies.put((True, self.handler(*msg)))
            except BaseException as exc:  # propagated to the coordinator
                self.replies.put((False, exc))

    def call(self, *args):
        if not self.concurrent:
            return self.handler(*args)
        self.requests.put(args)
        ok, value = self.replies.get()
        if not ok:
            raise value
        return value

    def close(self):
        if self.concurrent:
            self.requests.put(None)
            self.thread.join()


def train(dataset, cfg: BoostConfig, seed: int = 0, workdir=None,
          callback: Callable | None = None) -> TrainResult:
    """Boost on the shuffled record file ``dataset``.

    ``callback(result, event)`` is invoked after every fired rule with event
    ``"rule"`` and after every sample swap with event ``"swap"``.
    """
    rf = RecordFile(dataset)
    if rf.count == 0:
        raise InvalidInputError("dataset is empty")
    n = min(cfg.sample_size, rf.count)
    rng = np.random.default_rng(seed)
    sample_rng, store_rng = rng.spawn(2)

    sample = initial_sample(dataset, n, sample_rng)
    bins = build_bins(sample.records["features"], cfg.bins)
    stop_cfg = cfg.stopping(bins)
    result = TrainResult(Ensemble(), bins, stop_cfg, peak_sample_bytes=sample.nbytes)
    if cfg.max_rules == 0:
        result.stop_reason = "max_rules"
        return result

    tmp = None
    if workdir is None:
        tmp = tempfile.TemporaryDirectory(prefix="stratboost-")
        workdir = tmp.name
    store = StratifiedStore.from_record_file(dataset, Path(workdir) / "strata",
                                             segment_bytes=cfg.segment_bytes)
    scanner = Scanner(sample.records, bins, stop_cfg)

    def do_scan(snapshot, leaves, gamma):
        return scanner.scan(snapshot, leaves, gamma)

    def do_swap(records):
        scanner.reset_sample(records)

    def do_sample(snapshot):
        return store.assemble_sample(snapshot, n, store_rng, batch=cfg.sampler_batch)

    scan_worker = _Worker("scanner", lambda op, *a: do_scan(*a) if op == "scan" else do_swap(*a),
                          cfg.concurrent)
    sample_worker = _Worker("sampler", do_sample, cfg.concurrent)

    start = time.perf_counter()
    ensemble = Ensemble()
    tree = Tree(cfg.max_leaves)
    gamma = cfg.gamma_init
    epoch = 0
    records = sample.records
    try:
        while ensemble.version < cfg.max_rules:
            if cfg.time_budget is not None and time.perf_counter() - start > cfg.time_budget:
                result.stop_reason = "time_budget"
                break
            outcome = scan_worker.call("scan", ensemble, list(tree.leaves), gamma)
            result.scanned_total += outcome.scanned
            if isinstance(outcome, Exhausted):
                target = SHRINK_FACTOR * min(outcome.max_empirical_edge, gamma)
                if outcome.best_rule is None or target < cfg.gamma_floor:
                    result.stop_reason = "gamma_floor"
                    break
                gamma = min(shrink_gamma(outcome.max_empirical_edge, cfg.gamma_floor), target)
                log.info("search failed max_edge=%.6g new_gamma=%.6g", outcome.max_empirical_edge, gamma)
                continue

            assert isinstance(outcome, Fired)
            alpha = rule_weight(gamma)
            ensemble = ensemble.append(outcome.rule, alpha)
            tree.split(outcome.rule, gamma)
            weights = refresh_weights(records, ensemble)
            ratio = ess_ratio(weights, len(records))
            rec = RuleRecord(ensemble.version - 1, gamma, alpha, outcome.empirical_edge,
                             outcome.scanned, ratio, float(np.mean(weights)),
                             time.perf_counter() - start, epoch)
            result.history.append(rec)
            result.ensemble = ensemble
            log.info("rule %s", rec.line())
            if callback is not None:
                callback(result, "rule")

            if tree.full:
                previous, tree = tree, Tree(cfg.max_leaves)
                gamma = init_gamma(previous, cfg)

            if ratio < cfg.ess_threshold and ensemble.version < cfg.max_rules:
                new = sample_worker.call(ensemble)
                records = new.records
                scan_worker.call("swap", records)
                result.swaps += 1
                result.swap_ess.append(ess_ratio(refresh_weights(records, ensemble), len(records)))
                result.peak_sample_bytes = max(result.peak_sample_bytes, new.nbytes)
                epoch += 1
                log.info("swap epoch=%d version=%d", epoch, ensemble.version)
                if callback is not None:
                    callback(result, "swap")
        else:
            result.stop_reason = "max_rules"
    finally:
        scan_worker.close()
        sample_worker.close()
        result.store = store
        if tmp is not None:
            store.close(remove=True)
            tmp.cleanup()
        else:
            store.write_manifest()
    result.ensemble = ensemble
    return result

"""Command line entry point: ``stratboost <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .booster import sample_size_for_budget, train
from .config import ConfigError, config_echo, load_config
from .errors import EmptyStoreError, InsufficientDataError, InvalidInputError, StorageError
from .ingest import FORMATS, ingest, read_dataset
from .metrics import evaluate_file, report_from_scores
from .records import RecordFile, make_records, record_size
from .scanner import Scanner
from .stopping import default_config
from .synth import planted_stump
from .weak_learner import ROOT, Ensemble, build_bins, dump_model, load_model

log = logging.getLogger("stratboost")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stratboost", description="Out-of-core boosting with early-stopped rule search.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    ing = sub.add_parser("ingest", help="convert csv / sparse text to a shuffled record store")
    ing.add_argument("input")
    ing.add_argument("--format", choices=FORMATS, default="csv")
    ing.add_argument("--output", required=True)
    ing.add_argument("--dim", type=int, default=None, help="dimension for sparse text")
    ing.add_argument("--seed", type=int, default=0)

    tr = sub.add_parser("train", help="train an ensemble on a record store")
    tr.add_argument("--config")
    tr.add_argument("--data", required=True)
    tr.add_argument("--model", required=True)
    tr.add_argument("--memory-budget", type=float, default=None, metavar="MB")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--log", default=None, help="write one key=value line per fired rule")
    tr.add_argument("--workdir", default=None, help="keep the stratified store here")

    pr = sub.add_parser("predict", help="print one score per example")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--output", default=None)

    ev = sub.add_parser("eval", help="exp loss and AUROC of a model on a record store")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--train-log", default=None)
    ev.add_argument("--csv", default=None, help="time series output when --train-log is given")

    bs = sub.add_parser("bench-scan", help="examples scanned per fired rule, early stopping vs full scan")
    bs.add_argument("--data", default=None, help="record store; default is a synthetic planted stump")
    bs.add_argument("--synthetic", type=int, default=1_000_000, metavar="N")
    bs.add_argument("--dim", type=int, default=10)
    bs.add_argument("--edge", type=float, default=0.3)
    bs.add_argument("--gamma", type=float, default=0.25)
    bs.add_argument("--bins", type=int, default=64)
    bs.add_argument("--memory-budget", type=float, default=None, metavar="MB")
    bs.add_argument("--seed", type=int, default=0)
    return p


def _cmd_ingest(args) -> int:
    m = ingest(args.input, args.format, args.output, seed=args.seed, dim=args.dim)
    print(f"path={m.path} dimension={m.dimension} count={m.count} format={m.format} seed={m.seed}")
    return 0


def _cmd_train(args) -> int:
    if not args.config:
        raise UsageError("train requires --config")
    rf = RecordFile(args.data)
    cfg = load_config(args.config)
    if args.memory_budget is not None:
        cap = sample_size_for_budget(args.memory_budget, rf.dim)
        if cap < 1:
            raise UsageError("--memory-budget is smaller than one record")
        cfg.sample_size = min(cfg.sample_size, cap)
    log_fh = open(args.log, "w") if args.log else None

    def on_event(result, event):
        if event == "rule" and log_fh is not None:
            log_fh.write(result.history[-1].line() + "\n")
            log_fh.flush()

    try:
        result = train(args.data, cfg, seed=args.seed, workdir=args.workdir, callback=on_event)
    finally:
        if log_fh is not None:
            log_fh.close()
    echo = config_echo(cfg)
    echo["seed"] = args.seed
    Path(args.model).write_text(dump_model(result.ensemble, rf.dim, result.bins, echo))
    print(f"rules={result.ensemble.version} swaps={result.swaps} stop_reason={result.stop_reason} "
          f"scanned={result.scanned_total} sample_bytes={result.peak_sample_bytes}")
    return 0


def _cmd_predict(args) -> int:
    model = load_model(Path(args.model).read_text())
    rf = RecordFile(args.data)
    if rf.dim != model.dim:
        raise InvalidInputError(f"data dimension {rf.dim} does not match model dimension {model.dim}")
    out = open(args.output, "w") if args.output else sys.stdout
    try:
        for chunk in rf.chunks():
            for s in model.ensemble.scores(chunk["features"]).tolist():
                out.write(f"{s!r}\n")
    finally:
        if args.output:
            out.close()
    return 0


def parse_log(path) -> list:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rows.append(dict(tok.split("=", 1) for tok in line.split()))
    return rows


def _cmd_eval(args) -> int:
    model = load_model(Path(args.model).read_text())
    rf = RecordFile(args.data)
    if rf.dim != model.dim:
        raise InvalidInputError(f"data dimension {rf.dim} does not match model dimension {model.dim}")
    report = evaluate_file(model.ensemble, args.data)
    for line in report.lines():
        print(line)
    if args.train_log:
        if not args.csv:
            raise UsageError("--train-log needs --csv")
        X, y = read_dataset(args.data)
        rows = parse_log(args.train_log)
        ens = model.ensemble
        raw = np.zeros(len(y))
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rules", "wall", "gamma", "ess_ratio", "epoch", "exp_loss", "auroc", "accuracy"])
            done = 0
            for row in rows:
                upto = int(row["index"]) + 1
                if upto > ens.version:
                    break
                raw += ens.raw_scores(X, done, upto)
                done = upto
                rep = report_from_scores(raw, y)
                writer.writerow([upto, row.get("wall"), row.get("gamma"), row.get("ess_ratio"),
                                 row.get("epoch"), repr(rep.exp_loss), repr(rep.auroc), repr(rep.accuracy)])
    return 0


def _cmd_bench_scan(args) -> int:
    if args.data:
        rf = RecordFile(args.data)
        n = rf.count
        if args.memory_budget is not None:
            n = min(n, sample_size_for_budget(args.memory_budget, rf.dim))
        recs = rf.read(0, n)
        recs["weight"] = 1.0
        recs["version"] = 0
    else:
        n = args.synthetic
        if args.memory_budget is not None:
            n = min(n, sample_size_for_budget(args.memory_budget, args.dim))
        X, y = planted_stump(n, args.dim, args.edge, seed=args.seed)
        recs = make_records(X, y)
    bins = build_bins(recs["features"][:100_000], args.bins)
    stop = default_config(max(1, 2 * int(bins.counts.sum())))
    scanner = Scanner(recs, bins, stop)

    t = time.perf_counter()
    early = scanner.scan(Ensemble(), [ROOT], args.gamma)
    t_early = time.perf_counter() - t
    scanner.cursor = 0
    t = time.perf_counter()
    full = scanner.scan(Ensemble(), [ROOT], args.gamma, early_stop=False)
    t_full = time.perf_counter() - t

    early_rule = getattr(early, "rule", None)
    print(f"sample_size={len(recs)}")
    print(f"record_bytes={record_size(recs.dtype['features'].shape[0])}")
    print(f"early_fired={early_rule is not None}")
    print(f"early_scanned={early.scanned}")
    print(f"full_scanned={full.scanned}")
    print(f"scan_ratio={early.scanned / full.scanned!r}")
    if early_rule is not None:
        print(f"early_rule=feature:{early_rule.feature},threshold:{early_rule.threshold!r},"
              f"polarity:{early_rule.polarity}")
        print(f"early_edge={early.empirical_edge!r}")
    best = full.best_rule
    print(f"full_rule=feature:{best.feature},threshold:{best.threshold!r},polarity:{best.polarity}")
    print(f"full_edge={full.max_empirical_edge!r}")
    print(f"same_rule={early_rule == best}")
    print(f"early_seconds={t_early:.4f}")
    print(f"full_seconds={t_full:.4f}")
    return 0


COMMANDS = {
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "bench-scan": _cmd_bench_scan,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(name)s %(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"stratboost: usage error: {exc}", file=sys.stderr)
        return 2
    except (InvalidInputError, StorageError, InsufficientDataError, EmptyStoreError, OSError) as exc:
        print(f"stratboost: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

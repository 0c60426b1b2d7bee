"""Average exponential loss and AUROC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import clamp_score
from .errors import InvalidInputError, UndefinedMetricError
from .records import RecordFile
from .weak_learner import Ensemble


@dataclass(frozen=True)
class MetricReport:
    exp_loss: float
    auroc: float
    n_examples: int
    accuracy: float | None = None

    def lines(self) -> list:
        out = [f"exp_loss={self.exp_loss!r}", f"auroc={self.auroc!r}", f"n_examples={self.n_examples}"]
        if self.accuracy is not None:
            out.append(f"accuracy={self.accuracy!r}")
        return out


def exp_loss_from_scores(scores, labels) -> float:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.size == 0:
        raise InvalidInputError("exp_loss of an empty dataset")
    return float(np.mean(np.exp(-clamp_score(s) * y)))


def exp_loss(ensemble: Ensemble, X, y) -> float:
    X = np.atleast_2d(np.asarray(X))
    if len(y) == 0:
        raise InvalidInputError("exp_loss of an empty dataset")
    return exp_loss_from_scores(ensemble.scores(X), y)


def auroc(scores, labels) -> float:
    """Mann-Whitney estimate; tied scores earn half credit."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs at least one positive and one negative label")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(s.size)
    # average ranks over ties
    _, first, counts = np.unique(sorted_s, return_index=True, return_counts=True)
    avg = first + (counts + 1) / 2.0
    ranks[order] = np.repeat(avg, counts)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(ensemble: Ensemble, X, y) -> MetricReport:
    return report_from_scores(ensemble.scores(np.asarray(X)), np.asarray(y))


def evaluate_file(ensemble: Ensemble, path, chunk_records: int = 65536) -> MetricReport:
    rf = RecordFile(path)
    scores, labels = [], []
    for chunk in rf.chunks(chunk_records):
        scores.append(ensemble.scores(chunk["features"]))
        labels.append(chunk["label"].astype(np.int64))
    if not scores:
        raise InvalidInputError("exp_loss of an empty dataset")
    return report_from_scores(np.concatenate(scores), np.concatenate(labels))


def report_from_scores(scores, y) -> MetricReport:
    acc = float(np.mean(np.where(scores > 0, 1, -1) == y))
    try:
        area = auroc(scores, y)
    except UndefinedMetricError:
        area = float("nan")
    return MetricReport(exp_loss_from_scores(scores, y), area, int(y.size), acc)

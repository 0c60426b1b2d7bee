"""Candidate weak rules, leaf-wise trees and the additive ensemble.

A weak rule is a single split scoped to one leaf of the tree being grown.
Inside its leaf it predicts ``polarity`` when ``x[feature] <= threshold`` and
``-polarity`` otherwise; outside the leaf it abstains with 0.  Each fired split
joins the ensemble with its own weight, and the tree only decides which leaves
are open for the next search.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .core import LabeledExample, clamp_score
from .errors import InvalidInputError

LE = 1
GT = -1

# (feature, threshold, side) with side LE (x <= t) or GT (x > t)
Condition = tuple
Scope = tuple

ROOT: Scope = ()


@dataclass(frozen=True)
class BinningConfig:
    bins_per_feature: int
    thresholds: tuple  # one sorted float64 array per feature

    def __post_init__(self):
        for cuts in self.thresholds:
            if len(cuts) > max(self.bins_per_feature - 1, 0):
                raise InvalidInputError("too many thresholds for bins_per_feature")
            if len(cuts) > 1 and np.any(np.diff(cuts) <= 0):
                raise InvalidInputError("thresholds must be strictly increasing")

    @property
    def dim(self) -> int:
        return len(self.thresholds)

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(c) for c in self.thresholds], dtype=np.int64)

    @property
    def max_cuts(self) -> int:
        return int(self.counts.max(initial=0))

    def bin_index(self, X: np.ndarray) -> np.ndarray:
        """Bin of every value: the number of thresholds strictly below it.

        ``x <= thresholds[f][j]`` holds exactly when ``bin <= j``.
        """
        X = np.asarray(X)
        out = np.empty(X.shape, dtype=np.int16)
        for f, cuts in enumerate(self.thresholds):
            out[:, f] = np.searchsorted(cuts, X[:, f].astype(np.float64), side="left")
        return out


def _as_matrix(sample) -> np.ndarray:
    if isinstance(sample, np.ndarray):
        return np.atleast_2d(sample)
    rows = [ex.features if isinstance(ex, LabeledExample) else np.asarray(ex) for ex in sample]
    if not rows:
        return np.empty((0, 0))
    return np.vstack(rows)


def build_bins(sample, bins_per_feature: int = 64) -> BinningConfig:
    """Cut points at the interior quantiles of ``sample``.

    ``sample`` is a feature matrix or a list of ``LabeledExample``.  Duplicate
    quantiles collapse, and cuts at or above a feature's maximum are dropped
    since they cannot separate anything.
    """
    X = _as_matrix(sample)
    if X.shape[0] == 0:
        raise InvalidInputError("cannot build bins from an empty sample")
    if bins_per_feature < 1:
        raise InvalidInputError("bins_per_feature must be >= 1")
    X = X.astype(np.float64)
    qs = np.arange(1, bins_per_feature) / bins_per_feature
    thresholds = []
    for f in range(X.shape[1]):
        col = X[:, f]
        if qs.size == 0:
            thresholds.append(np.empty(0))
            continue
        cuts = np.unique(np.quantile(col, qs))
        cuts = cuts[cuts < col.max()]
        thresholds.append(cuts)
    return BinningConfig(bins_per_feature, tuple(thresholds))


@dataclass(frozen=True)
class SplitRule:
    scope: Scope
    feature: int
    threshold: float
    polarity: int = 1

    def children(self) -> tuple:
        return (
            self.scope + ((self.feature, self.threshold, LE),),
            self.scope + ((self.feature, self.threshold, GT),),
        )


def in_scope(scope: Scope, x) -> bool:
    for f, t, side in scope:
        if (x[f] <= t) != (side == LE):
            return False
    return True


def scope_mask(scope: Scope, X: np.ndarray) -> np.ndarray:
    mask = np.ones(X.shape[0], dtype=bool)
    for f, t, side in scope:
        le = X[:, f] <= t
        mask &= le if side == LE else ~le
    return mask


def predict_rule(rule: SplitRule, x, dim: int | None = None) -> int:
    x = np.asarray(x)
    if x.ndim != 1 or (dim is not None and x.shape[0] != dim):
        raise InvalidInputError("feature vector does not match the dimension")
    needed = max([rule.feature] + [c[0] for c in rule.scope])
    if needed >= x.shape[0]:
        raise InvalidInputError("feature vector does not match the dimension")
    if not in_scope(rule.scope, x):
        return 0
    return rule.polarity if x[rule.feature] <= rule.threshold else -rule.polarity


def predict_rule_batch(rule: SplitRule, X: np.ndarray) -> np.ndarray:
    h = np.where(X[:, rule.feature] <= rule.threshold, rule.polarity, -rule.polarity).astype(np.int8)
    if rule.scope:
        h[~scope_mask(rule.scope, X)] = 0
    return h


def candidate_rules(bins: BinningConfig, open_leaves: Sequence[Scope]) -> list:
    """Every (leaf, feature, threshold, polarity) in that nesting order."""
    return [
        SplitRule(leaf, f, float(t), pol)
        for leaf in open_leaves
        for f, cuts in enumerate(bins.thresholds)
        for t in cuts
        for pol in (1, -1)
    ]


@dataclass
class Tree:
    """Leaf-wise growth bookkeeping; the fired splits live in the ensemble."""

    max_leaves: int = 4
    leaves: list = field(default_factory=lambda: [ROOT])
    gammas: list = field(default_factory=list)

    def __post_init__(self):
        if self.max_leaves < 2:
            raise InvalidInputError("max_leaves must be >= 2")

    @property
    def full(self) -> bool:
        return len(self.leaves) >= self.max_leaves

    def split(self, rule: SplitRule, gamma: float) -> None:
        if self.full:
            raise InvalidInputError("tree already has max_leaves leaves")
        try:
            pos = self.leaves.index(rule.scope)
        except ValueError:
            raise InvalidInputError("rule scope is not an open leaf of this tree") from None
        self.leaves[pos:pos + 1] = list(rule.children())
        self.gammas.append(gamma)


@dataclass(frozen=True)
class Ensemble:
    """Immutable weighted rule list; ``version`` is the number of rules."""

    rules: tuple = ()

    @property
    def version(self) -> int:
        return len(self.rules)

    def __len__(self):
        return len(self.rules)

    def append(self, rule: SplitRule, alpha: float) -> "Ensemble":
        if not alpha > 0:
            raise InvalidInputError("rule weight must be positive")
        return Ensemble(self.rules + ((rule, float(alpha)),))

    def partial_score(self, x, start: int = 0, stop: int | None = None) -> float:
        stop = self.version if stop is None else stop
        return float(sum(a * predict_rule(r, x) for r, a in self.rules[start:stop]))

    def score(self, x) -> float:
        return float(clamp_score(self.partial_score(x)))

    def delta_score(self, from_version: int, x) -> float:
        if not 0 <= from_version <= self.version:
            raise InvalidInputError(f"from_version {from_version} outside [0, {self.version}]")
        return self.partial_score(x, from_version)

    @cached_property
    def _arrays(self):
        """Rules as padded arrays; a padded condition has side 0 (always true)."""
        R = self.version
        depth = max([len(r.scope) for r, _ in self.rules], default=0)
        feat = np.zeros(R, dtype=np.int64)
        thr = np.zeros(R)
        pol = np.zeros(R)
        alpha = np.zeros(R)
        cf = np.zeros((R, depth), dtype=np.int64)
        ct = np.zeros((R, depth))
        cs = np.zeros((R, depth), dtype=np.int8)
        for i, (rule, a) in enumerate(self.rules):
            feat[i], thr[i], pol[i], alpha[i] = rule.feature, rule.threshold, rule.polarity, a
            for j, (f, t, side) in enumerate(rule.scope):
                cf[i, j], ct[i, j], cs[i, j] = f, t, side
        return feat, thr, pol, alpha, cf, ct, cs

    def predictions(self, X: np.ndarray, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Matrix of rule outputs, rows of ``X`` by rules ``start:stop``."""
        feat, thr, pol, _, cf, ct, cs = (a[start:stop] for a in self._arrays)
        X = np.asarray(X)
        h = np.where(X[:, feat] <= thr, pol, -pol)
        for j in range(cf.shape[1]):
            le = X[:, cf[:, j]] <= ct[:, j]
            ok = np.where(cs[:, j] == LE, le, np.where(cs[:, j] == GT, ~le, True))
            h = np.where(ok, h, 0.0)
        return h

    def _row_chunks(self, m: int, width: int):
        step = max(1, 4_000_000 // max(width * (1 + self._arrays[4].shape[1]), 1))
        for lo in range(0, m, step):
            yield slice(lo, min(lo + step, m))

    def raw_scores(self, X: np.ndarray, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Unclamped sum over rules ``start:stop``."""
        X = np.asarray(X)
        out = np.zeros(X.shape[0])
        alpha = self._arrays[3][start:stop]
        if alpha.size == 0:
            return out
        for sl in self._row_chunks(X.shape[0], alpha.size):
            out[sl] = self.predictions(X[sl], start, stop) @ alpha
        return out

    def scores(self, X: np.ndarray) -> np.ndarray:
        return clamp_score(self.raw_scores(np.asarray(X)))

    def delta_scores(self, X: np.ndarray, from_versions: np.ndarray) -> np.ndarray:
        """Per-row sum over rules with index >= that row's ``from_version``."""
        X = np.asarray(X)
        from_versions = np.asarray(from_versions, dtype=np.int64)
        out = np.zeros(X.shape[0])
        if from_versions.size == 0:
            return out
        if from_versions.max() > self.version or from_versions.min() < 0:
            raise InvalidInputError("stamp version newer than the ensemble")
        lo = int(from_versions.min())
        if lo == self.version:
            return out
        if from_versions.max() == lo:
            return self.raw_scores(X, lo)
        alpha = self._arrays[3][lo:]
        idx = np.arange(lo, self.version)
        for sl in self._row_chunks(X.shape[0], alpha.size):
            h = self.predictions(X[sl], lo)
            live = idx[None, :] >= from_versions[sl, None]
            out[sl] = (h * live) @ alpha
        return out


# -- model text format ------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _scope_str(scope: Scope) -> str:
    if not scope:
        return "-"
    return ";".join(f"{f}:{_fmt(t)}:{'le' if side == LE else 'gt'}" for f, t, side in scope)


def _parse_scope(text: str) -> Scope:
    if text == "-":
        return ROOT
    out = []
    for part in text.split(";"):
        f, t, side = part.split(":")
        out.append((int(f), float(t), LE if side == "le" else GT))
    return tuple(out)


def dump_model(ensemble: Ensemble, dim: int, bins: BinningConfig | None = None,
               config: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write("stratboost-model 1\n")
    buf.write(f"dimension {dim}\n")
    if bins is not None:
        buf.write(f"bins {bins.bins_per_feature}\n")
        for f, cuts in enumerate(bins.thresholds):
            buf.write(f"cuts {f}" + "".join(" " + _fmt(c) for c in cuts) + "\n")
    for key, value in sorted((config or {}).items()):
        buf.write(f"config {key} = {value}\n")
    buf.write(f"rules {ensemble.version}\n")
    for i, (rule, alpha) in enumerate(ensemble.rules):
        buf.write(f"{i} {_scope_str(rule.scope)} {rule.feature} {_fmt(rule.threshold)} "
                  f"{rule.polarity:+d} {_fmt(alpha)}\n")
    return buf.getvalue()


@dataclass
class Model:
    ensemble: Ensemble
    dim: int
    bins: BinningConfig | None = None
    config: dict = field(default_factory=dict)


def load_model(text: str) -> Model:
    lines = iter(text.splitlines())
    if next(lines, "").split()[:1] != ["stratboost-model"]:
        raise InvalidInputError("not a model file")
    dim = None
    nbins = None
    cuts = {}
    config = {}
    rules = []
    expected = None
    for line in lines:
        if not line.strip():
            continue
        head, _, rest = line.partition(" ")
        if head == "dimension":
            dim = int(rest)
        elif head == "bins":
            nbins = int(rest)
        elif head == "cuts":
            parts = rest.split()
            cuts[int(parts[0])] = np.array([float(v) for v in parts[1:]])
        elif head == "config":
            key, _, value = rest.partition(" = ")
            config[key.strip()] = value.strip()
        elif head == "rules":
            expected = int(rest)
        else:
            idx, scope, feat, thr, pol, alpha = line.split()
            if int(idx) != len(rules):
                raise InvalidInputError(f"rule index {idx} out of order")
            rules.append((SplitRule(_parse_scope(scope), int(feat), float(thr), int(pol)), float(alpha)))
    if dim is None:
        raise InvalidInputError("model file has no dimension line")
    if expected is not None and expected != len(rules):
        raise InvalidInputError(f"model declares {expected} rules but holds {len(rules)}")
    bins = None
    if nbins is not None:
        bins = BinningConfig(nbins, tuple(cuts.get(f, np.empty(0)) for f in range(dim)))
    return Model(Ensemble(tuple(rules)), dim, bins, config)

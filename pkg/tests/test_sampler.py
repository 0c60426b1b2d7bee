import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stratboost.errors import EmptyStoreError, InsufficientDataError, InvalidInputError
from stratboost.ingest import write_dataset
from stratboost.records import make_records
from stratboost.sampler import (
    MANIFEST,
    StratifiedStore,
    accept_probability,
    initial_sample,
    mv_sample,
    mv_select,
    stratum_index,
)
from stratboost.weak_learner import ROOT, Ensemble, SplitRule


def test_stratum_index_examples():
    assert stratum_index(1.0) == 0
    assert stratum_index(1.5) == 0
    assert stratum_index(2.0) == 1
    assert stratum_index(0.5) == -1
    assert stratum_index(0.49) == -2
    assert stratum_index(math.nextafter(4.0, 0)) == 1
    assert stratum_index(5e-324) == -1074  # smallest subnormal is 2**-1074
    for bad in (0.0, -1.0, float("inf"), float("nan")):
        with pytest.raises(InvalidInputError):
            stratum_index(bad)


@settings(max_examples=200)
@given(st.floats(1e-300, 1e300))
def test_stratum_band_and_acceptance(w):
    k = stratum_index(w)
    assert 2.0 ** k <= w < 2.0 ** (k + 1)
    assert 0.5 <= float(accept_probability(w)) < 1.0


def test_stratum_index_vectorised():
    w = np.array([0.3, 1.0, 7.9, 8.0])
    assert stratum_index(w).tolist() == [-2, 0, 2, 3]


def _store(tmp_path, weights, dim=2, **kw):
    X = np.zeros((len(weights), dim), dtype=np.float32)
    X[:, 0] = np.arange(len(weights))
    recs = make_records(X, np.ones(len(weights)), np.asarray(weights, dtype=float))
    store = StratifiedStore(tmp_path / "store", dim, **kw)
    store.insert(recs)
    return store, recs


def test_insert_routes_by_stratum(tmp_path):
    store, _ = _store(tmp_path, [1.0, 1.5, 2.0, 3.0, 0.25])
    assert sorted(store.strata) == [-2, 0, 1]
    assert store.strata[0].count == 2 and store.strata[0].weight_sum == 2.5
    assert store.count == 5
    assert store.audit() == []


def test_select_stratum_frequencies(tmp_path):
    store, _ = _store(tmp_path, [1.0] * 10 + [8.0] * 5)
    ks, p = store.weight_table()
    assert ks.tolist() == [0, 3]
    assert p == pytest.approx([0.2, 0.8])
    rng = np.random.default_rng(0)
    picks = np.array([store.select_stratum(rng) for _ in range(20000)])
    assert np.mean(picks == 3) == pytest.approx(0.8, abs=0.015)


def test_empty_store(tmp_path):
    store = StratifiedStore(tmp_path / "s", 2)
    with pytest.raises(EmptyStoreError):
        store.select_stratum(np.random.default_rng(0))
    with pytest.raises(InsufficientDataError):
        store.assemble_sample(Ensemble(), 1, np.random.default_rng(0))


def test_sample_step_conserves_records(tmp_path):
    store, recs = _store(tmp_path, np.linspace(0.5, 20, 200))
    rng = np.random.default_rng(1)
    snap = Ensemble().append(SplitRule(ROOT, 0, 100.0, 1), 0.3)
    accepted = 0
    for _ in range(2000):
        if store.sample_step(snap, rng) is not None:
            accepted += 1
    assert store.count == 200
    assert store.steps == 2000 and store.accepted == accepted
    assert 0.5 <= accepted / 2000 < 1.0
    assert store.audit() == []
    ids = np.sort(store.all_records()["features"][:, 0])
    assert np.array_equal(ids, np.arange(200))


def test_assemble_is_proportional_to_weight(tmp_path):
    w = np.array([1.0, 3.0, 6.0, 12.0, 50.0])
    store, _ = _store(tmp_path, np.repeat(w, 40))
    rng = np.random.default_rng(2)
    hits = np.zeros(5)
    for _ in range(40):
        s = store.assemble_sample(Ensemble(), 200, rng)
        ids = s.records["features"][:, 0].astype(int) // 40
        hits += np.bincount(ids, minlength=5)
        assert (s.records["weight"] == 1).all() and s.version == 0
    expect = w / w.sum() * hits.sum()
    chi2 = float(np.sum((hits - expect) ** 2 / expect))
    assert chi2 < 18.5  # 4 dof, p = 0.001
    assert store.count == 200


def test_weights_refreshed_on_read(tmp_path):
    store, _ = _store(tmp_path, [1.0] * 50)
    snap = Ensemble().append(SplitRule(ROOT, 0, 1000.0, 1), 1.0)  # every label +1 is predicted +1
    s = store.assemble_sample(snap, 20, np.random.default_rng(3))
    assert len(s) == 20 and s.version == 1
    recs = store.all_records()
    touched = recs[recs["version"] == 1]
    assert len(touched) >= 20
    assert np.allclose(touched["weight"], math.exp(-1.0))
    assert store.audit() == []


def test_segment_rollover_and_deletion(tmp_path):
    store, recs = _store(tmp_path, np.full(500, 1.0), segment_bytes=400, buffer_records=16)
    store.flush()
    stratum = store.strata[0]
    segs = sorted(stratum.dir.glob("seg*.bin"))
    assert len(segs) > 10
    for p in segs:
        assert p.stat().st_size <= 400
    rng = np.random.default_rng(4)
    for _ in range(5):
        store.assemble_sample(Ensemble().append(SplitRule(ROOT, 0, 1e9, 1), 0.2), 100, rng)
    store.flush()
    assert store.count == 500
    assert not segs[0].exists()
    ids = np.sort(store.all_records()["features"][:, 0])
    assert np.array_equal(ids, np.arange(500))
    assert store.audit() == []


def test_manifest_and_close(tmp_path):
    store, _ = _store(tmp_path, [1.0, 4.0])
    path = store.write_manifest()
    assert path.name == MANIFEST
    text = path.read_text().splitlines()
    assert text[0] == "stratboost-store 1"
    assert any(line.startswith("stratum 2 count 1") for line in text)
    store.close(remove=True)
    assert not (tmp_path / "store").exists()


def test_mv_sample_examples():
    items = [("a", 1.0), ("b", 1.0), ("c", 1.0), ("d", 1.0)]
    assert list(mv_sample(items, 2.0, 0.5)) == ["a", "c"]
    assert list(mv_sample([("x", 5.0), ("y", 5.0)], 1.0, 0.0)) == ["x", "y"]
    with pytest.raises(InvalidInputError):
        list(mv_sample(items, 0.0, 0.0))
    with pytest.raises(InvalidInputError):
        list(mv_sample(items, 1.0, 1.0))
    with pytest.raises(InvalidInputError):
        list(mv_sample([("a", 0.0)], 1.0, 0.0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 5.0), min_size=1, max_size=200), st.floats(0.1, 3.0), st.floats(0, 1))
def test_mv_select_count_and_block_split(weights, theta, u):
    w = np.array(weights)
    offset = u * theta * 0.999
    mask, carry = mv_select(w, theta, offset)
    total = np.minimum(w, theta).sum()
    assert abs(mask.sum() - total / theta) <= 1
    assert carry == pytest.approx(total)
    cut = len(w) // 2
    m1, c1 = mv_select(w[:cut], theta, offset)
    m2, _ = mv_select(w[cut:], theta, offset, c1)
    assert np.array_equal(np.concatenate([m1, m2]), mask)
    assert list(mv_sample(zip(range(len(w)), w), theta, offset)) == list(np.flatnonzero(mask))


def test_initial_sample_exact_size(tmp_path):
    X = np.random.default_rng(0).random((1234, 3))
    y = np.ones(1234)
    write_dataset(X, y, tmp_path / "d.bin")
    for n in (1, 100, 617, 1234):
        s = initial_sample(tmp_path / "d.bin", n, np.random.default_rng(n), chunk_records=100)
        assert len(s) == n
        assert len(np.unique(s.records["features"][:, 0])) == n
    with pytest.raises(InsufficientDataError):
        initial_sample(tmp_path / "d.bin", 1235, np.random.default_rng(0))

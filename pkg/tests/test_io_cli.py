import hashlib
import math

import numpy as np
import pytest

from stratboost.cli import main, parse_log
from stratboost.config import ConfigError, config_echo, load_config, parse_config
from stratboost.errors import InvalidInputError, StorageError
from stratboost.ingest import DatasetManifest, ingest, manifest_path, read_dataset, write_dataset
from stratboost.records import RecordFile, make_records, record_size, write_records
from stratboost.synth import smooth_logistic


def _digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_csv_ingest_maps_labels(tmp_path):
    src = tmp_path / "a.csv"
    src.write_text("1,0.5,2\n0,1.5,3\n1,2.5,4\n")
    m = ingest(src, "csv", tmp_path / "a.bin", seed=0)
    assert (m.count, m.dimension) == (3, 2)
    X, y = read_dataset(tmp_path / "a.bin")
    assert sorted(y.tolist()) == [-1, 1, 1]
    rows = {tuple(x): l for x, l in zip(X.tolist(), y.tolist())}
    assert rows == {(0.5, 2.0): 1, (1.5, 3.0): -1, (2.5, 4.0): 1}
    assert DatasetManifest.read(manifest_path(tmp_path / "a.bin")) == m


def test_sparse_ingest_densifies(tmp_path):
    src = tmp_path / "s.txt"
    src.write_text("+1 3:0.5 7:1.0\n-1 1:2\n")
    ingest(src, "sparse-text", tmp_path / "s.bin", dim=10)
    X, y = read_dataset(tmp_path / "s.bin")
    row = X[y == 1][0]
    expect = np.zeros(10, dtype=np.float32)
    expect[2], expect[6] = 0.5, 1.0
    assert np.array_equal(row, expect)
    assert RecordFile(tmp_path / "s.bin").dim == 10


def test_parse_errors_carry_line_numbers(tmp_path):
    bad = tmp_path / "b.csv"
    bad.write_text("1,0.5\n2,0.1\n")
    with pytest.raises(InvalidInputError, match="line 2"):
        ingest(bad, "csv", tmp_path / "b.bin")
    bad.write_text("1,0.5\n-1,0.1,0.2\n")
    with pytest.raises(InvalidInputError, match="line 2"):
        ingest(bad, "csv", tmp_path / "b.bin")
    sp = tmp_path / "b.txt"
    sp.write_text("1 1:0.5\n1 11:3\n")
    with pytest.raises(InvalidInputError, match="line 2"):
        ingest(sp, "sparse-text", tmp_path / "b.bin", dim=10)


def test_ingest_byte_identical_and_shuffled(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.random((5000, 3))
    src = tmp_path / "big.csv"
    with open(src, "w") as fh:
        for i, x in enumerate(X.tolist()):
            fh.write(f"{i % 2},{x[0]!r},{x[1]!r},{float(i)!r}\n")
    ingest(src, "csv", tmp_path / "o1.bin", seed=7, chunk_records=700)
    ingest(src, "csv", tmp_path / "o2.bin", seed=7, chunk_records=700)
    ingest(src, "csv", tmp_path / "o3.bin", seed=8, chunk_records=700)
    assert _digest(tmp_path / "o1.bin") == _digest(tmp_path / "o2.bin")
    assert _digest(tmp_path / "o1.bin") != _digest(tmp_path / "o3.bin")
    Xo, yo = read_dataset(tmp_path / "o1.bin")
    order = Xo[:, 2].astype(int)
    assert sorted(order.tolist()) == list(range(5000))
    assert np.corrcoef(order, np.arange(5000))[0, 1] < 0.1
    # float32 round trip and exact labels
    assert np.array_equal(Xo[:, 0], X[order, 0].astype(np.float32))
    assert np.array_equal(yo, np.where(order % 2 == 1, 1, -1))


def test_record_file_errors(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises((InvalidInputError, StorageError)):
        RecordFile(p)
    recs = make_records(np.ones((3, 2)), [1, -1, 1])
    write_records(tmp_path / "ok.bin", recs)
    rf = RecordFile(tmp_path / "ok.bin")
    assert rf.count == 3 and rf.dim == 2
    assert record_size(2) == 1 + 4 + 8 + 8


def test_config_parsing(tmp_path):
    cfg = parse_config("# comment\nsample_size = 500\nstop.c = 2 # inline\nconcurrent = no\n")
    assert cfg == {"sample_size": 500, "stop_c": 2.0, "concurrent": False}
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("bogus = 1")
    with pytest.raises(ConfigError):
        parse_config("sample_size = 1.5")
    p = tmp_path / "c.cfg"
    p.write_text("max_rules = 7\n")
    c = load_config(p)
    assert c.max_rules == 7
    assert config_echo(c)["stop.t0"] == 256


def _dataset(tmp_path, n=20_000, dim=4, seed=0):
    X, y = smooth_logistic(n, dim, seed=seed)
    write_dataset(X, y, tmp_path / "d.bin")
    return tmp_path / "d.bin"


def test_cli_usage_errors(tmp_path, capsys):
    data = _dataset(tmp_path, 1000)
    assert main(["train", "--data", str(data), "--model", str(tmp_path / "m")]) == 2
    assert "usage error" in capsys.readouterr().err
    assert main(["train", "--bogus"]) == 2
    assert main([]) == 2
    cfg = tmp_path / "c.cfg"
    cfg.write_text("nonsense = 3\n")
    assert main(["train", "--config", str(cfg), "--data", str(data), "--model", str(tmp_path / "m")]) == 2


def test_cli_runtime_error_is_one_line(tmp_path, capsys):
    assert main(["predict", "--model", str(tmp_path / "missing"), "--data", str(tmp_path / "x")]) == 1
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and err.startswith("stratboost: error:")


def test_cli_predict_empty_model(tmp_path, capsys):
    data = _dataset(tmp_path, 300)
    cfg = tmp_path / "c.cfg"
    cfg.write_text("max_rules = 0\nsample_size = 100\n")
    model = tmp_path / "m.txt"
    assert main(["train", "--config", str(cfg), "--data", str(data), "--model", str(model)]) == 0
    capsys.readouterr()
    assert main(["predict", "--model", str(model), "--data", str(data)]) == 0
    out = capsys.readouterr().out.split()
    assert len(out) == 300 and all(float(v) == 0.0 for v in out)


def test_cli_train_eval_round_trip(tmp_path, capsys):
    data = _dataset(tmp_path)
    cfg = tmp_path / "c.cfg"
    cfg.write_text("max_rules = 12\nbins = 16\n")
    model, log, csvp = tmp_path / "m.txt", tmp_path / "train.log", tmp_path / "ts.csv"
    budget = 0.05  # MB
    rc = main(["train", "--config", str(cfg), "--data", str(data), "--model", str(model),
               "--memory-budget", str(budget), "--log", str(log), "--seed", "3"])
    assert rc == 0
    out = capsys.readouterr().out
    fields = dict(tok.split("=") for tok in out.split())
    assert int(fields["sample_bytes"]) <= budget * (1 << 20)
    rows = parse_log(log)
    assert len(rows) == int(fields["rules"]) > 0
    assert main(["eval", "--model", str(model), "--data", str(data), "--train-log", str(log),
                 "--csv", str(csvp)]) == 0
    report = dict(line.split("=") for line in capsys.readouterr().out.split())
    assert float(report["exp_loss"]) < 1.0 and 0.5 < float(report["auroc"]) <= 1.0
    lines = csvp.read_text().splitlines()
    assert lines[0].split(",")[:2] == ["rules", "wall"]
    assert len(lines) == len(rows) + 1
    last = lines[-1].split(",")
    assert math.isclose(float(last[5]), float(report["exp_loss"]), rel_tol=1e-12)
    text = model.read_text()
    assert "config seed = 3" in text


def test_cli_ingest(tmp_path, capsys):
    src = tmp_path / "a.csv"
    src.write_text("1,0.5\n0,1.5\n")
    assert main(["ingest", str(src), "--output", str(tmp_path / "a.bin")]) == 0
    assert "count=2" in capsys.readouterr().out


def test_cli_bench_scan_small(tmp_path, capsys):
    assert main(["bench-scan", "--synthetic", "50000", "--dim", "4", "--bins", "16"]) == 0
    out = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    assert out["early_fired"] == "True"
    assert int(out["early_scanned"]) < int(out["full_scanned"]) == 50000
    assert out["early_rule"].startswith("feature:0,")

import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest

from airgrad.cli import main

pytestmark = pytest.mark.usefixtures("data_dir")


@pytest.fixture()
def env_data(data_dir, monkeypatch):
    monkeypatch.setenv("AIRGRAD_MNIST_DIR", str(data_dir))
    return data_dir


def _read_metrics(path):
    with open(path) as fh:
        assert fh.readline().startswith("# schema:")
        return list(csv.DictReader(fh))


def _tiny_train_args(out, extra=()):
    return ["train", "--K", "10", "--M", "4", "--T", "1", "--seed", "3",
            "--methods", "mrc,perfect", "--out", str(out), *extra]


def test_train_zero_rounds_reports_initial_accuracy(env_data, tmp_path):
    assert main(["train", "--K", "10", "--M", "4", "--T", "0", "--seed", "3",
                 "--methods", "perfect", "--out", str(tmp_path)]) == 0
    files = list(tmp_path.glob("*.metrics.csv"))
    assert len(files) == 1
    rows = _read_metrics(files[0])
    assert len(rows) == 1
    assert rows[0]["round"] == "0"
    assert 0.0 <= float(rows[0]["accuracy"]) <= 1.0
    assert (tmp_path / files[0].name.replace(".metrics.csv", ".manifest.json")).exists()


def test_train_rows_per_method_and_round(env_data, tmp_path):
    assert main(_tiny_train_args(tmp_path)) == 0
    rows = _read_metrics(next(tmp_path.glob("*.metrics.csv")))
    # one round-0 row plus one per round for each method
    assert len(rows) == 2 * 2
    assert {r["method"] for r in rows} == {"mrc", "perfect"}


def test_train_rerun_is_identical_modulo_timing(env_data, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(_tiny_train_args(out_a)) == 0
    assert main(_tiny_train_args(out_b)) == 0
    rows_a = _read_metrics(next(out_a.glob("*.metrics.csv")))
    rows_b = _read_metrics(next(out_b.glob("*.metrics.csv")))
    for ra, rb in zip(rows_a, rows_b):
        ra.pop("wall_ms"), rb.pop("wall_ms")
        assert ra == rb


def test_usage_error_exit_code(env_data, tmp_path):
    assert main(["train", "--K", "-5", "--out", str(tmp_path)]) == 2
    assert main(["train", "--methods", "zf", "--out", str(tmp_path)]) == 2


def test_data_error_exit_code(tmp_path, monkeypatch):
    monkeypatch.delenv("AIRGRAD_MNIST_DIR", raising=False)
    assert main(["train", "--K", "10", "--M", "4", "--T", "0",
                 "--out", str(tmp_path)]) == 3
    monkeypatch.setenv("AIRGRAD_MNIST_DIR", str(tmp_path / "nope"))
    assert main(["train", "--K", "10", "--M", "4", "--T", "0",
                 "--out", str(tmp_path)]) == 3


def test_config_file_with_flag_override(env_data, tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"K": 20, "M": 4, "T": 0, "seed": 9,
                                    "methods": "perfect",
                                    "batch": {"mode": "minibatch", "lo": 1, "hi": 5}}))
    assert main(["train", "--config", str(cfg_file), "--K", "10",
                 "--out", str(tmp_path)]) == 0
    manifest = json.loads(next(tmp_path.glob("*.manifest.json")).read_text())
    assert manifest["config"]["n_devices"] == 10  # flag wins
    assert manifest["config"]["batch"]["mode"] == "minibatch"
    assert manifest["config"]["rounds"] == 0


def test_config_file_unknown_key(env_data, tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"bogus": 1}))
    assert main(["train", "--config", str(cfg_file), "--out", str(tmp_path)]) == 2


def test_prop1_command(tmp_path):
    assert main(["prop1", "--M", "8", "--K", "6", "--support", "2",
                 "--trials", "20000", "--seed", "5", "--out", str(tmp_path)]) == 0
    path = next(tmp_path.glob("prop1-*.csv"))
    with open(path) as fh:
        assert fh.readline().startswith("# schema:")
        rows = list(csv.DictReader(fh))
    assert [r["case"] for r in rows] == ["1", "2", "3"]
    values = [float(r["analytical"]) for r in rows]
    assert values[0] >= values[1] >= values[2]
    assert all(float(r["rel_error"]) <= 0.05 for r in rows)


def test_prop1_rejects_oversized_support(tmp_path):
    assert main(["prop1", "--M", "8", "--K", "6", "--support", "6",
                 "--out", str(tmp_path)]) == 2


def test_complexity_fixed_istar(tmp_path):
    assert main(["complexity", "--K-list", "100,200", "--M-list", "25",
                 "--istar", "10", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "complexity-seed1.csv") as fh:
        assert fh.readline().startswith("# schema:")
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    byk = {r["K"]: r for r in rows}
    assert float(byk["100"]["C_mrc"]) == 10100
    assert float(byk["100"]["C_lmmse"]) == 512550
    ratio = float(byk["200"]["ratio_general"])
    assert 0 < ratio < 1


def test_complexity_bad_istar(tmp_path):
    assert main(["complexity", "--istar", "many", "--out", str(tmp_path)]) == 2


def test_train_debug_dumps(env_data, tmp_path):
    assert main(["train", "--K", "10", "--M", "4", "--T", "1", "--seed", "3",
                 "--methods", "proposed", "--out", str(tmp_path),
                 "--dump-channels", "--dump-recovery"]) == 0
    debug = next(tmp_path.glob("*.debug"))
    with open(debug / "channels.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10 * 4 * 10  # devices x antennas x taps
    assert {r["round"] for r in rows} == {"1"}
    with open(debug / "recovery.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and rows[0]["method"] == "proposed"
    by_resource = {}
    for r in rows:
        by_resource.setdefault(r["resource"], []).append(r)
    first = by_resource["1"]
    assert [int(r["iteration"]) for r in first] == list(range(1, len(first) + 1))
    assert int(first[0]["istar"]) <= 10
    assert float(first[0]["threshold"]) > 0


def test_sparsity_command_small(env_data, tmp_path):
    assert main(["sparsity", "--K", "10", "--M", "4", "--T", "1", "--seed", "3",
                 "--methods", "mrc", "--out", str(tmp_path)]) == 0
    cdf_path = next(tmp_path.glob("sparsity-*.csv"))
    with open(cdf_path) as fh:
        assert fh.readline().startswith("# schema:")
        rows = list(csv.DictReader(fh))
    variants = {r["variant"] for r in rows}
    assert variants == {"permuted", "unpermuted"}
    for variant in variants:
        sub = [r for r in rows if r["variant"] == variant]
        assert len(sub) == 101
        assert float(sub[-1]["cdf"]) == pytest.approx(1.0)
        cdf = [float(r["cdf"]) for r in sub]
        assert all(a <= b + 1e-12 for a, b in zip(cdf, cdf[1:]))
    summary = json.loads(next(tmp_path.glob("sparsity-*.summary.json")).read_text())
    for variant in ("permuted", "unpermuted"):
        s = summary[variant]
        assert 0 <= s["zero_fraction_defined"] <= 1
        assert s["samples_kept"] > 0

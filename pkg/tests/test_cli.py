import json

import numpy as np
import pytest

from unifl import load_instance, mpnn
from unifl.cli import main
from unifl.datasets import geo_config, load_split, split_counts, write_dataset


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_exact_on_fixture(capsys, pair_path):
    code, out, _ = run(capsys, "exact", "--in", pair_path)
    rep = json.loads(out)
    assert code == 0 and rep["total"] == 1.5 and rep["facilities"] == [0]
    assert len(rep["config_digest"]) == 16


def test_solve_deterministic_probabilities(capsys, tmp_path, pair_path):
    # c = 2 on the pair gives p = 1 everywhere, so every sample is identical
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "solve", "--in", pair_path, "--algo", "simple", "--samples", "1000",
                     "--out", str(out))
    rep = json.loads(out.read_text())
    assert code == 0 and rep["std_error"] == 0.0 and rep["total"] == 2.0
    assert rep["total"] == rep["open_cost"] + rep["connection_cost"]
    assert rep["ratio_vs"] == "exact" and rep["ratio"] >= 1


def test_solve_is_idempotent(capsys, tmp_path):
    inst = tmp_path / "g.unifl"
    assert run(capsys, "gen", "--n", "60", "--seed", "3", "--out", str(inst))[0] == 0
    first = json.loads(run(capsys, "solve", "--in", str(inst), "--c", "0.3", "--samples", "50")[1])
    second = json.loads(run(capsys, "solve", "--in", str(inst), "--c", "0.3", "--samples", "50")[1])
    for key in ("total", "std_error", "config_digest"):
        assert first[key] == second[key]


def test_gen_radii_eval_export(capsys, tmp_path):
    inst = tmp_path / "g.unifl"
    code, out, _ = run(capsys, "gen", "--n", "80", "--dim", "2", "--components", "8", "--std", "0.6",
                       "--scale", "12", "--seed", "1", "--out", str(inst))
    assert code == 0 and json.loads(out)["n"] == 80
    radii = tmp_path / "r.json"
    assert run(capsys, "radii", "--in", str(inst), "--out", str(radii))[0] == 0
    assert len(json.loads(radii.read_text())) == 80
    probs = tmp_path / "p.json"
    probs.write_text(json.dumps([0.3] * 80))
    code, out, _ = run(capsys, "eval", "--in", str(inst), "--probs", str(probs), "--metric", "squared")
    rep = json.loads(out)
    assert code == 0 and rep["total"] == pytest.approx(rep["open_direct"] + rep["open_forced"] + rep["connection"])
    lp = tmp_path / "m.lp"
    assert run(capsys, "export-ilp", "--in", str(inst), "--out", str(lp))[0] == 0
    assert lp.read_text().startswith("\\ UniFL")


def test_calibrate(capsys):
    code, out, _ = run(capsys, "calibrate", "--n", "300", "--components", "30", "--scale", "21.9",
                       "--repeats", "2")
    rep = json.loads(out)
    assert code == 0 and rep["repeats"] == 2 and rep["mean_degree"] > 0


def test_dataset_train_tune_solve_bench(capsys, tmp_path):
    data = tmp_path / "data"
    code, out, _ = run(capsys, "gen-dataset", "--dir", str(data), "--count", "10", "--n", "30", "--seed", "2")
    assert code == 0 and json.loads(out)["splits"] == {"train": 8, "val": 1, "test": 1}
    assert len(load_split(str(data), "train")) == 8

    code, out, _ = run(capsys, "tune", "--data", str(data), "--grid-n", "10")
    assert code == 0 and json.loads(out)["best_c"] > 0

    params = tmp_path / "params.json"
    code, out, _ = run(capsys, "train", "--data", str(data), "--k", "8", "--hidden", "4", "--steps", "2",
                       "--out", str(params))
    rep = json.loads(out)
    assert code == 0 and rep["epochs_run"] == 2 and rep["val_loss"][0] >= min(rep["val_loss"])
    MpnnParams = mpnn.MpnnParams.load(str(params))
    assert MpnnParams.disc.k == 8

    test_inst = data / "test" / "test-00000.unifl"
    code, out, _ = run(capsys, "solve", "--in", str(test_inst), "--algo", "mpnn", "--params", str(params),
                       "--samples", "20")
    assert code == 0 and json.loads(out)["params_digest"] == MpnnParams.digest()

    code, out, _ = run(capsys, "solve", "--in", str(test_inst), "--algo", "recursive", "--samples", "5",
                       "--recompute-radii", "--dump-samples")
    assert code == 0 and len(json.loads(out)["sample_totals"]) == 5

    csv_path = tmp_path / "bench.csv"
    code, out, _ = run(capsys, "bench", "--dir", str(data), "--k", "8", "--hidden", "4", "--steps", "1",
                       "--samples", "20", "--recursive-grid-n", "3", "--recursive-tune-samples", "1",
                       "--csv", str(csv_path))
    rep = json.loads(out)
    assert code == 0
    assert [r["candidate"] for r in rep["rows"]] == ["SimpleUniformFL", "RecursiveUniformFL", "MPNN"]
    assert set(rep["rows"][0]) >= {"open", "connection", "total", "timing_ms", "ratio"}
    assert csv_path.read_text().startswith("candidate")


def test_errors_have_nonzero_exit(capsys, tmp_path):
    code, _, err = run(capsys, "exact", "--in", str(tmp_path / "missing.unifl"))
    assert code == 2 and "missing.unifl" in err
    bad = tmp_path / "bad.unifl"
    bad.write_text("unifl v1 2\n0 1\n")
    code, _, err = run(capsys, "radii", "--in", str(bad))
    assert code == 2 and "line 2" in err
    big = tmp_path / "big.unifl"
    big.write_text("unifl v1 30\n")
    assert run(capsys, "exact", "--in", str(big))[0] == 2
    assert run(capsys, "solve", "--in", str(bad.parent / "x"), "--algo", "mpnn")[0] == 2
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == 2


def test_thread_limit_env(capsys, monkeypatch, pair_path):
    monkeypatch.setenv("UNIFL_THREADS", "1")
    assert run(capsys, "exact", "--in", pair_path)[0] == 0
    monkeypatch.setenv("UNIFL_THREADS", "zero")
    assert run(capsys, "exact", "--in", pair_path)[0] == 2


def test_dataset_helpers(tmp_path):
    assert split_counts(10) == {"train": 8, "val": 1, "test": 1}
    assert sum(split_counts(17).values()) == 17
    cfg = geo_config(100)
    assert cfg.components == 10 and cfg.domain_scale == pytest.approx(40 * np.sqrt(0.1))
    write_dataset(str(tmp_path), 5, 12, seed=1)
    assert load_instance(str(tmp_path / "train" / "train-00000.unifl")).n == 12

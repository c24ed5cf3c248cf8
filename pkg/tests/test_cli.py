import json

import numpy as np
import pytest

from cobranch.cli import main


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_generate_data_writes_bundle(tmp_path, capsys):
    cfg = _write(
        tmp_path / "synth.cfg",
        "k_source = 3\nk_target = 2\nn_source = 30\nn_target = 20\n"
        "input_dim = 8\nlatent_dim = 4\nshared_dims = 5\nseed = 7\n",
    )
    out = tmp_path / "dataset"
    assert main(["generate-data", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "data.txt").exists()
    assert (out / "truth.txt").exists()
    meta = json.loads((out / "config.json").read_text())
    assert meta["k_target"] == 2
    assert "30 source" in capsys.readouterr().out


def test_pretrain_finetune_evaluate_pipeline(tmp_path, capsys):
    synth = _write(
        tmp_path / "synth.cfg",
        "k_source = 3\nk_target = 3\nn_source = 45\nn_target = 36\n"
        "input_dim = 8\nlatent_dim = 4\nshared_dims = 5\nnoise_sigma = 0.1\nseed = 3\n",
    )
    train = _write(
        tmp_path / "train.cfg",
        "batch_size = 12\nhidden_dim = 12\nfeature_dim = 6\npretrain_epochs = 2\n"
        "finetune_epochs = 2\nkmeans_restarts = 2\nlr_pretrain = 0.02\nlr_finetune = 0.01\n"
        "alpha = 0.99\nseed = 0\n",
    )
    dataset = tmp_path / "dataset"
    pre = tmp_path / "pre"
    fin = tmp_path / "fin"
    assert main(["generate-data", "--config", synth, "--out", str(dataset)]) == 0
    assert main(["pretrain", "--config", train, "--data", str(dataset), "--out", str(pre)]) == 0
    assert (pre / "b0.ckpt").exists() and (pre / "b1.ckpt").exists()
    assert (pre / "pretrain_history.csv").read_text().count("\n") == 1 + 2 * 2
    assert main([
        "finetune", "--config", train, "--data", str(dataset),
        "--checkpoints", str(pre), "--out", str(fin),
        "--ablation", "full", "--balance", "on",
    ]) == 0
    captured = capsys.readouterr().out
    record = json.loads((fin / "metrics.json").read_text())
    assert set(record) == {"B0", "B1"}
    assert set(record["B0"]) == {"acc", "nmi", "ari", "uniformity"}
    assert (fin / "history.csv").exists()
    assert sorted(fin.glob("labels_epoch_*.txt"))
    assert '"B0"' in captured

    labels_file = sorted(fin.glob("labels_epoch_*.txt"))[-1]
    assert main([
        "evaluate", "--labels", str(labels_file), "--truth", str(dataset / "truth.txt"),
        "--branch", "1", "--k", "3",
    ]) == 0
    scored = json.loads(capsys.readouterr().out)
    assert set(scored) == {"acc", "nmi", "ari", "uniformity"}
    assert 0.0 <= scored["acc"] <= 1.0


def test_evaluate_on_crafted_files(tmp_path, capsys):
    labels = _write(tmp_path / "labels.txt", "0 0 1\n1 0 1\n2 1 0\n3 1 0\n")
    truth = _write(tmp_path / "truth.txt", "0 5\n1 5\n2 6\n3 6\n")
    assert main(["evaluate", "--labels", labels, "--truth", truth]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["acc"] == 1.0
    assert record["nmi"] == pytest.approx(1.0)
    assert record["uniformity"] == pytest.approx(np.log(2.0))


def test_sinkhorn_demo_prints_assignment(capsys):
    assert main(["sinkhorn-demo", "--k", "2", "--n", "4", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "row marginal err" in out
    assert "iterations" in out
    assert "converged: True" in out


def test_cli_rejects_unknown_config_keys(tmp_path):
    bad = _write(tmp_path / "bad.cfg", "not_a_field = 3\n")
    with pytest.raises(ValueError, match="unknown config keys"):
        main(["generate-data", "--config", bad, "--out", str(tmp_path / "d")])

import json

import pytest

from gift.cli import main, read_config
from gift.errors import ConfigError


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["synth", "--seed", "7", "--n-clips", "10", "--out", str(d)]) == 0
    return d


def test_synth_writes_clips(data_dir):
    names = sorted(p.name for p in data_dir.iterdir())
    assert len(names) == 11 and "manifest.json" in names


def test_unknown_flag_exit_2(capsys):
    assert main(["synth", "--banana"]) == 2
    assert "usage" in capsys.readouterr().err


def test_eval_missing_checkpoint_exit_1(data_dir, tmp_path):
    assert main(["eval", str(data_dir), "--checkpoint", str(tmp_path / "none.json")]) == 1


def test_validate_and_stats(data_dir, tmp_path, capsys):
    assert main(["validate", str(data_dir)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["n_files"] == 10 and doc["n_invalid"] == 0
    assert main(["stats", str(data_dir), "--out", str(tmp_path / "s")]) == 0
    stats = json.loads((tmp_path / "s" / "stats.json").read_text())
    assert stats["n_clips"] == 10


def test_validate_flags_bad_file(data_dir, tmp_path, capsys):
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "x.json").write_text("{not json")
    assert main(["validate", str(bad)]) == 1
    assert json.loads(capsys.readouterr().out)["n_invalid"] == 1


def test_train_forecast_eval_plot(data_dir, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tiny run\nembed_dim = 8\nepochs = 1\nbatch_size = 4\n")
    run = tmp_path / "run"
    assert main(["train", str(data_dir), "--config", str(cfg), "--out", str(run)]) == 0
    ckpt = run / "checkpoint.json"
    assert ckpt.exists() and (run / "history.csv").exists()
    clip = sorted(data_dir.glob("clip_*.json"))[0]
    capsys.readouterr()
    assert main(["forecast", str(clip), "--checkpoint", str(ckpt)]) == 0
    assert json.loads(capsys.readouterr().out)["point_estimate"] > 10
    assert main(["eval", str(data_dir), "--checkpoint", str(ckpt), "--out", str(tmp_path / "ev")]) == 0
    assert (tmp_path / "ev" / "report.csv").read_text().startswith("recall,")
    assert main(["plot-data", str(data_dir), "--checkpoint", str(ckpt), "--history",
                 str(run / "history.json"), "--out", str(tmp_path / "plots")]) == 0
    assert (tmp_path / "plots" / "loss_curve.csv").exists()
    assert (tmp_path / "plots" / "clip_errors.csv").read_text().startswith("clip_id,")


def test_eval_threads_same_report(data_dir, tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("embed_dim = 8\nepochs = 1\n")
    assert main(["train", str(data_dir), "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    ck = str(tmp_path / "r" / "checkpoint.json")
    capsys.readouterr()
    main(["eval", str(data_dir), "--checkpoint", ck])
    one = capsys.readouterr().out
    monkeypatch.setenv("GIFT_THREADS", "3")
    main(["eval", str(data_dir), "--checkpoint", ck])
    assert capsys.readouterr().out == one


def test_config_unknown_key(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("banana = 3\n")
    with pytest.raises(ConfigError):
        read_config(p)
    assert main(["synth", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_config_values_parsed(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("tau = 8   # seen frames\ndifficulty = hard\nlearning_rate = 1e-3\n")
    assert read_config(p) == {"tau": 8, "difficulty": "hard", "learning_rate": 1e-3}


def test_synth_requires_out():
    assert main(["synth"]) == 2

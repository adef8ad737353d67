"""Command-line interface: subcommands, overrides, exit codes."""

import filecmp
import json

import pytest

from dacae import load_checkpoint, load_csv, load_synthetic_sidecar
from dacae.cli import main


def write_config(tmp_path, **kw):
    cfg = {
        "synthetic": {"n_subjects": 3, "n_classes": 2, "n_channels": 4,
                      "samples_per_cell": 12, "trials_per_cell": 2, "seed": 0},
        "variants": ["AE", "DA-cAE"],
        "classifiers": ["lda"],
        "learning_rate": 0.05,
        "batch_size": 16,
        "epochs": 2,
        "out": str(tmp_path / "out"),
    }
    cfg.update(kw)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


def test_synth_writes_csv_and_sidecar(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["synth", "--config", str(cfg)]) == 0
    csv_path = tmp_path / "out" / "synthetic.csv"
    assert csv_path.is_file()
    ds = load_csv(csv_path)
    assert len(ds) == 3 * 2 * 12
    header = csv_path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "subject,trial,label,t,ch0,ch1,ch2,ch3"
    spec, T, U = load_synthetic_sidecar(csv_path)
    assert spec.n_subjects == 3 and T.shape == (2, 4) and U.shape == (3, 4)
    assert "wrote" in capsys.readouterr().out


def test_synth_seed_override_changes_data(tmp_path):
    cfg = write_config(tmp_path)
    main(["synth", "--config", str(cfg)])
    base = (tmp_path / "out" / "synthetic.csv").read_bytes()
    main(["synth", "--config", str(cfg), "--seed", "9"])
    assert (tmp_path / "out" / "synthetic.csv").read_bytes() != base


def test_train_writes_loadable_checkpoint(tmp_path, capsys):
    cfg = write_config(tmp_path, variants=["DA-cAE"])
    assert main(["train", "--config", str(cfg)]) == 0
    root = tmp_path / "out" / "train"
    params, hyper, norm, clf = load_checkpoint(root / "model.npz")
    assert hyper.variant == "DA-cAE"
    assert params.n_channels == 4 and params.n_subjects == 3
    assert norm is not None and clf is None
    log_lines = (root / "trainlog.csv").read_text().splitlines()
    assert log_lines[0].startswith("epoch,total_loss,")
    assert len(log_lines) == 3
    assert "val task accuracy" in capsys.readouterr().out


def test_loso_success_and_rerun_identical(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["loso", "--config", str(cfg)]) == 0
    first = capsys.readouterr().out
    assert "mean=" in first
    out2 = tmp_path / "out2"
    assert main(["loso", "--config", str(cfg), "--out", str(out2)]) == 0
    for rel in ("summary.csv", "AE/lda/folds.csv", "DA-cAE/lda/folds.csv"):
        assert filecmp.cmp(tmp_path / "out" / "loso" / rel,
                           out2 / "loso" / rel, shallow=False), rel


def test_loso_variant_flag_overrides(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["loso", "--config", str(cfg), "--variant", "cAE"]) == 0
    root = tmp_path / "out" / "loso"
    assert (root / "cAE" / "lda" / "folds.csv").is_file()
    assert not (root / "AE").exists()


def test_loso_diverged_exit_code(tmp_path):
    cfg = write_config(tmp_path, learning_rate=1e9, epochs=1, variants=["AE"])
    assert main(["loso", "--config", str(cfg)]) == 2


def test_unknown_config_key_exit_code(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"latent_dimension": 12}), encoding="utf-8")
    assert main(["loso", "--config", str(path)]) == 1


def test_missing_config_file_exit_code(tmp_path, capsys):
    assert main(["loso", "--config", str(tmp_path / "absent.json")]) == 1
    assert "configuration error" in capsys.readouterr().err


def test_missing_dataset_exit_code(tmp_path):
    cfg = write_config(tmp_path, dataset=str(tmp_path / "absent.csv"))
    assert main(["loso", "--config", str(cfg)]) == 1


def test_report_roundtrip(tmp_path, capsys):
    cfg = write_config(tmp_path)
    main(["loso", "--config", str(cfg)])
    capsys.readouterr()
    assert main(["report", str(tmp_path / "out" / "loso")]) == 0
    assert (tmp_path / "out" / "loso" / "report_matrix.csv").is_file()
    assert "mean=" in capsys.readouterr().out


def test_report_missing_dir_exit_code(tmp_path, capsys):
    assert main(["report", str(tmp_path / "absent")]) == 3
    assert "report error" in capsys.readouterr().err


def test_sweep_subcommand(tmp_path, capsys):
    cfg = write_config(tmp_path, epochs=1, sweep_classifier="lda",
                       sweep_lambda_n=[0.0, 0.01], sweep_lambda_a=[0.0, 0.1])
    assert main(["sweep", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "sweep" / "sweep.csv").is_file()
    assert "selected lambda_a=" in capsys.readouterr().out


def test_table3_subcommand(tmp_path, capsys):
    cfg = write_config(tmp_path, epochs=1)
    assert main(["table3", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert out.count("lambda_a=") == 10
    assert (tmp_path / "out" / "table3" / "table3.csv").is_file()


def test_datasize_subcommand(tmp_path, capsys):
    cfg = write_config(tmp_path, epochs=1, fractions=[0.5, 1.0])
    cfg_obj = json.loads(cfg.read_text())
    cfg_obj["synthetic"]["trials_per_cell"] = 4
    cfg.write_text(json.dumps(cfg_obj), encoding="utf-8")
    assert main(["datasize", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "datasize" / "curve.csv").is_file()
    assert "fraction=0.5" in capsys.readouterr().out


def test_defaults_without_config(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["synth", "--seed", "1"]) == 0
    assert (tmp_path / "out" / "synthetic.csv").is_file()

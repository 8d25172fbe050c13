import json

import pytest
import yaml

from fakebert import experiment as ex
from fakebert.cli import main
from fakebert.synthetic import write_corpus_files

PUBLISHED_RESULTS = {
    1: (0.9579, 0.0036, 0.9586, 0.9607),
    2: (0.9591, 0.0200, 0.9589, 0.9622),
    3: (0.9439, 0.0211, 0.9449, 0.9474),
    4: (0.9614, 0.0197, 0.9607, 0.9646),
    5: (0.9346, 0.0227, 0.9351, 0.9389),
}


def write_report(path, vid, acc, loss, auc, f1):
    metrics = {
        "accuracy": acc, "mean_train_loss": loss, "roc_auc": auc, "f1": f1, "precision": f1, "recall": f1,
        "confusion": {"tp": 1, "fp": 0, "tn": 1, "fn": 0}, "degenerate": [],
    }
    path.write_text(json.dumps({"variant_id": vid, "metrics": metrics}))
    return path


def test_compare_published_rows(tmp_path):
    paths = [write_report(tmp_path / f"r{v}.json", v, *row) for v, row in reversed(PUBLISHED_RESULTS.items())]
    table = ex.compare_reports(paths)
    assert [vid for vid, _ in table.rows] == [1, 2, 3, 4, 5]
    assert table.best == {"Test acc": 4, "ROC AUC": 4, "F1 score": 4, "Train loss": 1}
    csv_lines = table.to_csv().splitlines()
    assert csv_lines[0] == "Model,Test acc,Train loss,ROC AUC,F1 score"
    assert csv_lines[4] == "Model 4,0.9614,0.0197,0.9607,0.9646"
    assert "0.9614*" in table.to_text()


def test_compare_single_and_ties(tmp_path):
    one = ex.compare_reports([write_report(tmp_path / "a.json", 2, 0.5, 0.1, 0.5, 0.5)])
    assert len(one.rows) == 1
    tied = ex.compare_reports([
        write_report(tmp_path / "b.json", 3, 0.9, 0.1, 0.9, 0.9),
        write_report(tmp_path / "c.json", 1, 0.9, 0.1, 0.9, 0.9),
    ])
    assert set(tied.best.values()) == {1}


def test_compare_malformed(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ex.ReportFormatError, match="bad.json"):
        ex.compare_reports([bad])
    with pytest.raises(ValueError):
        ex.compare_reports([])


@pytest.fixture
def workspace(tmp_path):
    write_corpus_files(tmp_path, n_train=48, n_test=16)
    cfg = {
        "data": {"train": "train.csv", "test": "test.csv"},
        "tokenizer": {"max_len": 20},
        "encoder": {"tiny": True},
        "variants": [{"id": 1, "epochs": 1, "learning_rate": 1e-3}, {"id": 2, "epochs": 1, "cnn_filters": 8}],
        "training": {"batch_size": 16},
        "output_dir": "out",
        "ablation": {"top_k": 3},
    }
    (tmp_path / "cfg.yaml").write_text(yaml.safe_dump(cfg))
    return tmp_path


def test_config_roundtrip(workspace):
    cfg = ex.ExperimentConfig.from_file(workspace / "cfg.yaml")
    assert cfg.tiny and cfg.max_len == 20 and cfg.train_path == str(workspace / "train.csv")
    again = ex.ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()
    assert [s.variant_id for s in cfg.variant_specs()] == [1, 2]


def test_missing_data_path_fails_validation(workspace, capsys):
    raw = yaml.safe_load((workspace / "cfg.yaml").read_text())
    raw["data"]["train"] = "nope.csv"
    (workspace / "bad.yaml").write_text(yaml.safe_dump(raw))
    assert main(["run", "--config", str(workspace / "bad.yaml")]) == 2
    assert "validate" in capsys.readouterr().err
    assert not (workspace / "out").exists()


def test_bad_variant_override_rejected(workspace):
    cfg = ex.ExperimentConfig.from_file(workspace / "cfg.yaml")
    cfg.variants = [{"id": 2, "head": "bilstm"}]
    with pytest.raises(ex.ConfigError):
        cfg.validate()


def test_subcommands(workspace, capsys):
    cfg = str(workspace / "cfg.yaml")
    assert main(["prepare", "--config", cfg]) == 0
    prep = json.loads((workspace / "out" / "prepare.json").read_text())
    assert prep["train_size"] + prep["test_size"] == 64
    assert prep["train_size"] == 58  # round-half-up of 57.6
    assert main(["train", "--config", cfg, "--variant", "2"]) == 0
    assert (workspace / "out" / "variant_2" / "model.safetensors").exists()
    assert not (workspace / "out" / "variant_1").exists()
    assert main(["evaluate", "--config", cfg, "--variant", "2"]) == 0
    report = json.loads((workspace / "out" / "variant_2" / "report.json").read_text())
    assert report["variant_id"] == 2 and 0 <= report["metrics"]["accuracy"] <= 1
    assert main(["keywords", "--config", cfg]) == 0
    assert main(["ablate", "--config", cfg]) == 0
    assert json.loads((workspace / "out" / "ablation" / "ablation.json").read_text())["status"]
    capsys.readouterr()
    assert main(["compare", "--output", str(workspace / "out")]) == 0
    assert "Model 2" in capsys.readouterr().out


def test_run_refuses_populated_output(workspace, capsys):
    cfg = str(workspace / "cfg.yaml")
    assert main(["run", "--config", cfg]) == 0
    assert main(["run", "--config", cfg]) == 1
    assert "--overwrite" in capsys.readouterr().err
    assert main(["run", "--config", cfg, "--overwrite"]) == 0


def test_overwrite_never_clears_foreign_directory(workspace):
    foreign = workspace / "precious"
    foreign.mkdir()
    (foreign / "thesis.tex").write_text("keep me")
    assert main(["run", "--config", str(workspace / "cfg.yaml"), "--output", str(foreign), "--overwrite"]) == 1
    assert (foreign / "thesis.tex").exists()


def test_manifest_reproduces_reports(workspace):
    cfg = str(workspace / "cfg.yaml")
    assert main(["run", "--config", cfg]) == 0
    out = workspace / "out"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"]["variants"] == {"1": 1, "2": 2}
    listed = {a["path"] for a in manifest["artifacts"]}
    assert {"variant_1/report.json", "comparison.csv", "ablation/ablation.json"} <= listed
    assert main(["run", "--config", str(out / "manifest.json"), "--output", str(workspace / "again")]) == 0
    for vid in (1, 2):
        rel = f"variant_{vid}/report.json"
        assert (out / rel).read_bytes() == (workspace / "again" / rel).read_bytes()


def test_failure_names_stage_and_keeps_artifacts(workspace, monkeypatch, capsys):
    def broken(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(ex, "evaluate", broken)
    assert main(["run", "--config", str(workspace / "cfg.yaml")]) == 2
    assert "evaluate[variant 1]" in capsys.readouterr().err
    assert (workspace / "out" / "prepare.json").exists()
    assert (workspace / "out" / "variant_1" / "model.safetensors").exists()


def test_seed_flag_changes_training(workspace):
    cfg = str(workspace / "cfg.yaml")
    assert main(["run", "--config", cfg, "--seed", "0"]) == 0
    assert main(["run", "--config", cfg, "--seed", "9", "--output", str(workspace / "seed9")]) == 0
    a = json.loads((workspace / "out" / "variant_1" / "train_state.json").read_text())["epoch_losses"]
    b = json.loads((workspace / "seed9" / "variant_1" / "train_state.json").read_text())["epoch_losses"]
    assert a != b


def test_unlabeled_test_file_excluded(workspace):
    (workspace / "test.csv").write_text("id,tweet\n1,just some text\n2,more text\n")
    cfg = ex.ExperimentConfig.from_file(workspace / "cfg.yaml")
    split, info = ex.load_split(cfg)
    assert info["unlabeled_excluded"] == 2
    assert len(split.train) + len(split.test) == 48


def test_run_with_published_checkpoint_directory(workspace):
    from fakebert.corpus import load_csv
    from fakebert.encoder import tiny_encoder
    from fakebert.textprep import TokenizerSpec, build_vocab
    from test_encoder import published_layout

    ckpt = workspace / "bert"
    ckpt.mkdir()
    published_layout(ckpt, tiny_encoder(seed=4))
    texts = [r.text for r in load_csv(workspace / "train.csv")]
    TokenizerSpec(vocab=build_vocab(texts, size=1000)).save_vocab(ckpt / "vocab.txt")
    raw = yaml.safe_load((workspace / "cfg.yaml").read_text())
    raw["encoder"] = {"checkpoint": "bert"}
    (workspace / "full.yaml").write_text(yaml.safe_dump(raw))
    assert main(["run", "--config", str(workspace / "full.yaml")]) == 0
    out = workspace / "out"
    assert not (out / "encoder.safetensors").exists()
    assert (out / "vocab.txt").read_text() == (ckpt / "vocab.txt").read_text()
    assert json.loads((out / "variant_2" / "report.json").read_text())["spec"]["freeze_encoder"] is True

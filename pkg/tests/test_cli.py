import json

import pytest

from eeg_acvae.cli import main

SMALL_MODEL = {"kernel_length": 9, "filters": 2, "latent_dim": 4, "hidden": 6, "batch_size": 50,
               "stage1_epochs": 1, "stage2_epochs": 1, "monitor_every": 0}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, synthetic_corpus):
    root = tmp_path_factory.mktemp("cli")
    cfg = {"corpus": str(synthetic_corpus), "cache": str(root / "cache"), "output_dir": str(root / "runs"),
           "expected_subjects": 12, "heldout_count": 4, "smoke_subjects": 3,
           "smoke_stage1_epochs": 1, "smoke_stage2_epochs": 1, **SMALL_MODEL}
    path = root / "config.json"
    path.write_text(json.dumps(cfg))
    assert main(["prepare", "--config", str(path)]) == 0
    return root, path


def test_prepare_missing_corpus_exits_2(tmp_path, capsys):
    missing = tmp_path / "nowhere"
    code = main(["prepare", "--set", f"corpus={missing}", "--set", f"cache={tmp_path / 'c'}"])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_prepare_reports_screening_and_is_idempotent(workspace, capsys):
    root, path = workspace
    manifest = json.loads((root / "cache" / "manifest.json").read_text())
    assert len(manifest["subjects"]) == 12
    assert sum(not r["keep"] for r in manifest["screening"]) == 4
    before = (root / "cache" / "manifest.json").stat().st_mtime_ns
    assert main(["prepare", "--config", str(path)]) == 0
    assert "cache up to date" in capsys.readouterr().out
    assert (root / "cache" / "manifest.json").stat().st_mtime_ns == before


def test_invalid_variant_exits_1(workspace):
    _, path = workspace
    with pytest.raises(SystemExit) as exc:
        main(["train", "--config", str(path), "--variant", "VAE"])
    assert exc.value.code == 1
    assert main(["train", "--config", str(path), "--set", "variant=VAE"]) == 1
    assert main(["train", "--config", str(path), "--set", "no_such_key=1"]) == 1


@pytest.fixture(scope="module")
def trained(workspace):
    root, path = workspace
    runs = {}
    for variant in ("ACVAE", "CNN"):
        run = root / "runs" / variant
        assert main(["train", "--config", str(path), "--variant", variant, "--smoke",
                     "--run-dir", str(run)]) == 0
        runs[variant] = run
    return runs


def test_train_writes_stage_checkpoints(trained):
    acvae, cnn = trained["ACVAE"], trained["CNN"]
    assert (acvae / "stage1" / "manifest.json").exists() and (acvae / "stage2" / "manifest.json").exists()
    assert (cnn / "stage1" / "manifest.json").exists() and not (cnn / "stage2").exists()
    cfg = json.loads((acvae / "config.json").read_text())
    assert cfg["n_subjects"] == 3 and cfg["pool_limit"] == 3
    manifest = json.loads((acvae / "manifest.json").read_text())
    assert len(manifest["pool_subjects"]) == 3 and len(manifest["heldout_subjects"]) == 4
    assert (acvae / "history_stage1.csv").read_text().startswith("iteration,epoch")


def test_eval_is_deterministic(trained):
    run = trained["ACVAE"]
    assert main(["eval", str(run)]) == 0
    first = (run / "report.json").read_text()
    assert main(["eval", str(run)]) == 0
    assert (run / "report.json").read_text() == first
    doc = json.loads(first)
    assert len(doc["transfer"]) == 4 and doc["adversary_train"] is not None


def test_eval_missing_checkpoint_exits_3(trained, tmp_path):
    run = tmp_path / "broken"
    run.mkdir()
    (run / "config.json").write_text((trained["ACVAE"] / "config.json").read_text())
    assert main(["eval", str(run)]) == 3


def test_report_single_run(trained, tmp_path):
    run = trained["CNN"]
    assert main(["eval", str(run)]) == 0
    out = tmp_path / "rep"
    assert main(["report", str(run), "--out", str(out)]) == 0
    doc = json.loads((out / "comparison.json").read_text())
    assert len(doc["boxes"]) == 1 and doc["warnings"] == []
    assert (out / "figure.svg").read_text().lstrip().startswith("<?xml")
    assert (out / "comparison.csv").exists()


def test_report_warns_on_conflicting_configs(trained, tmp_path, capsys):
    for run in trained.values():
        main(["eval", str(run)])
    changed = tmp_path / "changed"
    changed.mkdir()
    cfg = json.loads((trained["CNN"] / "config.json").read_text())
    cfg["split_seed"] = 99
    (changed / "config.json").write_text(json.dumps(cfg))
    (changed / "report.json").write_text((trained["CNN"] / "report.json").read_text())
    out = tmp_path / "rep"
    assert main(["report", str(trained["ACVAE"]), str(changed), "--out", str(out)]) == 0
    assert "split_seed" in capsys.readouterr().out
    assert (out / "comparison.csv").read_text().startswith("# WARNING")


def test_report_without_eval_exits_3(tmp_path):
    assert main(["report", str(tmp_path), "--out", str(tmp_path / "o")]) == 3

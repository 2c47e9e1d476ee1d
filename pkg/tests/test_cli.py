import hashlib
import json
import logging

import pytest
import yaml
from click.testing import CliRunner

from evidence_select import __version__, storage
from evidence_select.cli import cli


TINY_CONFIG = {
    "generate": {
        "num_bags": 40,
        "patches_per_bag_range": [5, 9],
        "feature_dim": 8,
        "num_classes": 2,
        "num_concepts": 4,
        "evidence_per_bag_range": [2, 3],
        "seed": 5,
    },
    "train": {"epochs": 1, "learning_rate": 0.01, "predictor_hidden": 4, "selector_hidden": 4},
    "diagnostics": {
        "split": "train",
        "sections": ["snr", "same_budget", "localization"],
        "budget_fraction": 0.25,
    },
}


@pytest.fixture(autouse=True)
def restore_logging():
    """The CLI installs a handler bound to the runner's stderr; undo it after each test."""
    logger = logging.getLogger("evidence_select")
    saved = logger.handlers[:], logger.level, logger.propagate
    yield
    logger.handlers[:], level, logger.propagate = saved
    logger.setLevel(level)


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.dump(TINY_CONFIG))
    return path


def test_version(runner):
    result = runner.invoke(cli, ["version"])
    assert result.exit_code == 0
    assert result.output.strip() == __version__
    assert __version__ in runner.invoke(cli, ["--version"]).output


def test_missing_required_option_is_usage_error(runner, tmp_path):
    result = runner.invoke(cli, ["diagnose", "--data", str(tmp_path), "--report", str(tmp_path / "r.yaml")])
    assert result.exit_code == 2


def test_bad_config_reports_one_line_error(runner, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("train:\n  epoch: 3\n")
    result = runner.invoke(cli, ["generate", "--config", str(bad), "--out", str(tmp_path / "data")])
    assert result.exit_code == 1
    assert "error: config: train.epoch: unknown key" in result.output


def test_corrupt_dataset_exits_with_parse_error(runner, tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    (data / "meta.json").write_text("{not json")
    result = runner.invoke(cli, ["train", "--data", str(data), "--out", str(tmp_path / "m.ckpt")])
    assert result.exit_code == 1
    assert "error: parse:" in result.output


def test_generate_train_diagnose(runner, tmp_path, tiny_config, monkeypatch):
    monkeypatch.setenv("EVSEL_THREADS", "2")
    data = tmp_path / "data"
    ckpt = tmp_path / "model.ckpt"
    report_path = tmp_path / "reports" / "diag.yaml"

    result = runner.invoke(cli, ["generate", "--config", str(tiny_config), "--out", str(data)])
    assert result.exit_code == 0, result.output
    assert (data / "config.yaml").exists()
    assert len(storage.read_dataset(data).bags) == 40

    result = runner.invoke(cli, ["train", "--data", str(data), "--config", str(tiny_config),
                                 "--out", str(ckpt), "--mode", "hybrid"])
    assert result.exit_code == 0, result.output
    assert storage.load_checkpoint(ckpt).mode == "hybrid"
    log = ckpt.with_name(ckpt.name + ".metrics.jsonl")
    assert len([json.loads(line) for line in log.read_text().splitlines()]) == 1

    result = runner.invoke(cli, ["diagnose", "--ckpt", str(ckpt), "--data", str(data),
                                 "--report", str(report_path), "--emit-csv"])
    assert result.exit_code == 0, result.output
    doc = yaml.safe_load(report_path.read_text())
    assert doc["command"] == "diagnose"
    assert doc["config"]["train"]["mode"] == "hybrid"
    snr = doc["results"]["snr"]
    assert snr["keep_only_drop"] + snr["evidence_sufficiency"] == pytest.approx(snr["full_macro_f1"])
    evidence = storage.read_evidence(report_path.with_name("diag.evidence.jsonl"))
    assert len(evidence) == doc["results"]["bags"]
    assert (report_path.parent / "diag.same_budget.csv").exists()
    assert (report_path.parent / "diag.snr.csv").exists()


def test_diagnose_single_section(runner, tmp_path, tiny_config):
    data = tmp_path / "data"
    ckpt = tmp_path / "model.ckpt"
    runner.invoke(cli, ["generate", "--config", str(tiny_config), "--out", str(data)])
    runner.invoke(cli, ["train", "--data", str(data), "--config", str(tiny_config), "--out", str(ckpt)])
    report_path = tmp_path / "r.yaml"
    result = runner.invoke(cli, ["diagnose", "--ckpt", str(ckpt), "--data", str(data),
                                 "--report", str(report_path), "--section", "snr", "--split", "train"])
    assert result.exit_code == 0, result.output
    results = yaml.safe_load(report_path.read_text())["results"]
    assert "snr" in results and "same_budget" not in results


def test_bad_thread_setting(runner, tmp_path, tiny_config, monkeypatch):
    data = tmp_path / "data"
    ckpt = tmp_path / "model.ckpt"
    runner.invoke(cli, ["generate", "--config", str(tiny_config), "--out", str(data)])
    runner.invoke(cli, ["train", "--data", str(data), "--config", str(tiny_config), "--out", str(ckpt)])
    monkeypatch.setenv("EVSEL_THREADS", "zero")
    result = runner.invoke(cli, ["diagnose", "--ckpt", str(ckpt), "--data", str(data),
                                 "--report", str(tmp_path / "r.yaml")])
    assert result.exit_code == 1
    assert "error: config: EVSEL_THREADS" in result.output


def test_sweep_writes_one_row_per_budget(runner, tmp_path, tiny_config):
    data = tmp_path / "data"
    runner.invoke(cli, ["generate", "--config", str(tiny_config), "--out", str(data)])
    report_path = tmp_path / "sweep.yaml"
    result = runner.invoke(cli, ["sweep", "--data", str(data), "--config", str(tiny_config),
                                 "--report", str(report_path), "--rho", "0.05", "--rho", "0.5"])
    assert result.exit_code == 0, result.output
    rows = yaml.safe_load(report_path.read_text())["results"]["rows"]
    assert [r["rho"] for r in rows] == [0.05, 0.5]


def test_ablate_grounding_suite(runner, tmp_path, tiny_config):
    data = tmp_path / "data"
    runner.invoke(cli, ["generate", "--config", str(tiny_config), "--out", str(data)])
    report_path = tmp_path / "ablate.yaml"
    result = runner.invoke(cli, ["ablate", "--data", str(data), "--config", str(tiny_config),
                                 "--report", str(report_path), "--suite", "grounding", "--emit-csv"])
    assert result.exit_code == 0, result.output
    rows = yaml.safe_load(report_path.read_text())["results"]["rows"]
    assert len(rows) == 5
    assert (tmp_path / "ablate.table.csv").exists()


def test_oracle_quick(runner, tmp_path):
    report_path = tmp_path / "oracle.yaml"
    result = runner.invoke(cli, ["oracle", "--quick", "--report", str(report_path)])
    assert result.exit_code == 0, result.output
    assert "0 failed" in result.output
    suites = yaml.safe_load(report_path.read_text())["results"]["suites"]
    assert all(s["passed"] for s in suites)


def tree_digest(root):
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def test_subcommands_are_byte_reproducible(runner, tmp_path, tiny_config, monkeypatch):
    monkeypatch.setenv("EVSEL_THREADS", "1")
    out = tmp_path / "out"
    data, ckpt = out / "data", out / "model.ckpt"
    commands = [
        ["generate", "--config", str(tiny_config), "--out", str(data)],
        ["train", "--data", str(data), "--config", str(tiny_config), "--out", str(ckpt)],
        ["diagnose", "--ckpt", str(ckpt), "--data", str(data), "--report", str(out / "diag.yaml"), "--emit-csv"],
        ["sweep", "--data", str(data), "--config", str(tiny_config), "--report", str(out / "sweep.yaml"),
         "--rho", "0.05"],
        ["oracle", "--quick", "--report", str(out / "oracle.yaml")],
    ]
    digests = []
    for _ in range(2):
        for args in commands:
            result = runner.invoke(cli, args)
            assert result.exit_code == 0, result.output
        digests.append(tree_digest(out))
    assert digests[0] == digests[1]


def test_ablate_temperature_suite(runner, tmp_path, tiny_config):
    data = tmp_path / "data"
    runner.invoke(cli, ["generate", "--config", str(tiny_config), "--out", str(data)])
    report_path = tmp_path / "temperature.yaml"
    result = runner.invoke(cli, ["ablate", "--data", str(data), "--config", str(tiny_config),
                                 "--report", str(report_path), "--suite", "temperature", "--epochs", "2"])
    assert result.exit_code == 0, result.output
    rows = yaml.safe_load(report_path.read_text())["results"]["rows"]
    assert [r["variant"] for r in rows] == ["annealed", "fixed_temperature"]
    assert [r["final_temperature"] for r in rows] == [pytest.approx(0.4), 1.0]

"""
Tests for experiment configuration, stage orchestration and the command line.
Run with: pytest -q tests/test_config_cli.py
"""

import importlib
import json
import logging
import os
from pathlib import Path

import pytest

from trendlab.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from trendlab.config import DatasetConfig, load_config, parse_value, with_overrides
from trendlab.errors import ConfigError
from trendlab.pipeline import INCOMPLETE_MARKER, run_experiment

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

RUN_ARTIFACTS = (
    "series.csv",
    "denoised.csv",
    "noise.csv",
    "split.json",
    "checkpoint.npz",
    "train_report.csv",
    "train_summary.json",
    "evaluation.json",
    "evaluation.md",
    "plot_data.csv",
    "stage_denoise.json",
    "stage_train.json",
    "stage_evaluate.json",
)


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in ("TRENDLAB_OUT_DIR", "TRENDLAB_JOBS", "TRENDLAB_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


def write_config(tmp_path: Path, body: str, dataset: Path) -> Path:
    path = tmp_path / "experiment.ini"
    path.write_text(f"[dataset]\npath = {dataset}\nsymbol = SAMPLE\n\n{body}", encoding="utf-8")
    return path


def test_console_script_points_at_cli_main():
    tomllib = pytest.importorskip("tomllib")
    project = tomllib.loads((ROOT / "pyproject.toml").read_text(encoding="utf-8"))["project"]
    module, _, attribute = project["scripts"]["trendlab"].partition(":")
    assert (module, attribute) == ("trendlab.cli", "main")
    assert getattr(importlib.import_module(module), attribute) is main


def test_parse_value():
    assert parse_value("3") == 3
    assert parse_value("0.25") == 0.25
    assert parse_value("True") is True
    assert parse_value("none") is None
    assert parse_value("mlstm, slstm") == ["mlstm", "slstm"]
    assert parse_value(" text ") == "text"


def test_sample_comparison_config(sample_csv_path):
    config = load_config(CONFIGS / "sample_xlstm.ini")
    assert config.name == "sample-comparison"
    assert config.jobs == 2
    assert [run.name for run in config.runs] == ["xlstm", "tcn", "naive"]
    xlstm, tcn, naive = config.runs
    assert xlstm.model["sequence_length"] == xlstm.model["context_length"] == 50
    assert (xlstm.train.batch_size, xlstm.train.early_stop_patience) == (16, 30)
    assert (tcn.train.batch_size, tcn.train.early_stop_patience) == (256, 10)
    assert tcn.train.learning_rate == 0.001
    assert xlstm.train.learning_rate == 1e-4
    assert all(run.train.max_epochs == 5 and run.seed == 7 for run in config.runs)
    assert Path(naive.dataset.path).resolve() == sample_csv_path.resolve()
    assert naive.dataset.symbol == "SAMPLE"


def test_published_daily_config():
    config = load_config(CONFIGS / "published_daily.ini")
    run = config.select("xlstm_ts")[0]
    assert run.split.preset == "published_daily"
    assert run.denoise.zeroed_levels == (1,)
    assert tuple(run.model["block_layout"]) == ("mlstm", "slstm", "mlstm", "mlstm")
    assert run.model_settings().sequence_length == 150
    assert config.select("tcn")[0].model_settings().resolved_layers() == 5


def test_single_model_from_experiment_section(tmp_path, sample_csv_path):
    path = write_config(tmp_path, "[experiment]\nmodel = tcn\nseed = 3\n", sample_csv_path)
    config = load_config(path, seed=11)
    assert [run.name for run in config.runs] == ["tcn"]
    assert config.runs[0].seed == 11
    assert config.runs[0].train.seed == 11


def test_configuration_errors(tmp_path, sample_csv_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.ini")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(write_config(tmp_path, "[train]\nlearning_rat = 0.1\n[run.a]\nmodel = naive\n", sample_csv_path))
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(write_config(tmp_path, "[optimizer]\nlr = 1\n[run.a]\nmodel = naive\n", sample_csv_path))
    with pytest.raises(ConfigError, match="section>.<key"):
        load_config(write_config(tmp_path, "[run.a]\nmodel = naive\nmax_epochs = 3\n", sample_csv_path))
    with pytest.raises(ConfigError, match="unknown model"):
        load_config(write_config(tmp_path, "[run.a]\nmodel = lstm\n", sample_csv_path))
    with pytest.raises(ConfigError, match="context_length"):
        load_config(write_config(tmp_path, "[xlstm_ts]\nsequence_length = 20\ncontext_length = 30\n"
                                           "[run.a]\nmodel = xlstm_ts\n", sample_csv_path))
    config = load_config(CONFIGS / "sample_naive.ini")
    with pytest.raises(ConfigError, match="no run named"):
        config.select("xlstm")


def test_environment_fallbacks(tmp_path, monkeypatch):
    monkeypatch.setenv("TRENDLAB_OUT_DIR", str(tmp_path / "from-env"))
    monkeypatch.setenv("TRENDLAB_JOBS", "3")
    config = load_config(CONFIGS / "sample_naive.ini")
    assert config.out_dir == tmp_path / "from-env"
    assert config.jobs == 3
    explicit = load_config(CONFIGS / "sample_naive.ini", out_dir=tmp_path / "flag", jobs=1)
    assert explicit.out_dir == tmp_path / "flag"
    assert explicit.jobs == 1


def test_dotenv_log_level_applies_before_logging_starts(tmp_path, monkeypatch):
    (tmp_path / ".env").write_text("TRENDLAB_LOG_LEVEL=DEBUG\n", encoding="utf-8")
    monkeypatch.chdir(tmp_path)
    logger = logging.getLogger("trendlab")
    previous = logger.level
    try:
        assert main(["report", str(tmp_path)]) == EXIT_USAGE
        assert logger.level == logging.DEBUG
    finally:
        os.environ.pop("TRENDLAB_LOG_LEVEL", None)
        logger.setLevel(previous)


def test_overrides_change_only_their_fields():
    run = load_config(CONFIGS / "sample_xlstm.ini").select("tcn")[0]
    changed = with_overrides(run, max_epochs=1, levels=3)
    assert changed.train.max_epochs == 1
    assert changed.train.learning_rate == run.train.learning_rate
    assert changed.denoise.levels == 3
    assert with_overrides(run) is run
    assert changed.fingerprint("denoise") != run.fingerprint("denoise")
    assert changed.fingerprint("model") == run.fingerprint("model")


def test_naive_run_writes_every_artifact(tmp_path):
    out_dir = tmp_path / "runs"
    assert main(["run", str(CONFIGS / "sample_naive.ini"), "--out-dir", str(out_dir), "--no-logging"]) == EXIT_OK
    run_dir = out_dir / "naive"
    for name in RUN_ARTIFACTS:
        assert (run_dir / name).is_file(), name
    assert not (run_dir / INCOMPLETE_MARKER).exists()
    assert (out_dir / "report.md").is_file()

    summary = json.loads((run_dir / "train_summary.json").read_text())
    assert summary["stop_reason"] == "no_parameters"
    assert (run_dir / "train_report.csv").read_text().splitlines() == ["epoch,train_loss,val_loss,lr"]
    evaluation = json.loads((run_dir / "evaluation.json").read_text())
    assert evaluation["symbol"] == "SAMPLE"
    assert set(evaluation["partitions"]) == {"train", "validation", "test"}
    series_header = (run_dir / "series.csv").read_text().splitlines()[0]
    assert series_header == "position,timestamp,original,denoised,noise"
    denoised = (run_dir / "denoised.csv").read_text().splitlines()
    noise = (run_dir / "noise.csv").read_text().splitlines()
    assert denoised[0] == "position,timestamp,denoised"
    assert noise[0] == "position,timestamp,noise"
    assert len(denoised) == len(noise) == 1 + 1000
    report = json.loads((out_dir / "report.json").read_text())
    assert [entry["run"] for entry in report["runs"]] == ["naive"]


def test_runs_are_reproducible(tmp_path):
    config = str(CONFIGS / "sample_naive.ini")
    for name in ("first", "second"):
        assert main(["run", config, "--out-dir", str(tmp_path / name), "--no-logging"]) == EXIT_OK
    for artifact in ("series.csv", "denoised.csv", "noise.csv", "split.json", "evaluation.json", "plot_data.csv"):
        first = (tmp_path / "first" / "naive" / artifact).read_bytes()
        assert first == (tmp_path / "second" / "naive" / artifact).read_bytes(), artifact


def test_stages_compose_and_detect_staleness(tmp_path):
    config = str(CONFIGS / "sample_xlstm.ini")
    common = ["--out-dir", str(tmp_path), "--run", "tcn", "--no-logging"]
    assert main(["train", config, *common]) == EXIT_USAGE
    assert main(["denoise", config, *common]) == EXIT_OK
    assert main(["evaluate", config, *common]) == EXIT_USAGE
    assert main(["train", config, *common, "--max-epochs", "1"]) == EXIT_OK
    assert len((tmp_path / "tcn" / "train_report.csv").read_text().splitlines()) == 2
    # a different epoch limit makes the checkpoint stale for evaluation
    assert main(["evaluate", config, *common]) == EXIT_USAGE
    assert main(["evaluate", config, *common, "--max-epochs", "1"]) == EXIT_OK
    assert (tmp_path / "tcn" / "evaluation.json").is_file()
    # changing the denoiser invalidates everything downstream
    assert main(["train", config, *common, "--max-epochs", "1", "--levels", "3"]) == EXIT_USAGE


def test_report_needs_results(tmp_path, capsys):
    assert main(["report", str(tmp_path), "--no-logging"]) == EXIT_USAGE
    assert "evaluation.json" in capsys.readouterr().err


def test_missing_inputs_are_usage_errors(tmp_path, sample_csv_path):
    assert main(["run", str(tmp_path / "nope.ini"), "--no-logging"]) == EXIT_USAGE
    path = write_config(tmp_path, "[run.naive]\nmodel = naive\n", tmp_path / "missing.csv")
    assert main(["run", str(path), "--out-dir", str(tmp_path / "out"), "--no-logging"]) == EXIT_USAGE


def test_runtime_failure_marks_run_incomplete(tmp_path, sample_csv_path):
    path = write_config(tmp_path, "[tcn]\nsequence_length = 5000\n[run.tcn]\nmodel = tcn\n", sample_csv_path)
    out_dir = tmp_path / "out"
    assert main(["run", str(path), "--out-dir", str(out_dir), "--no-logging"]) == EXIT_FAILURE
    marker = (out_dir / "tcn" / INCOMPLETE_MARKER).read_text()
    assert "stage: train" in marker
    assert "InsufficientDataError" in marker


@pytest.mark.asyncio
async def test_one_failed_run_does_not_stop_the_others(tmp_path):
    run = load_config(CONFIGS / "sample_naive.ini").runs[0]
    broken = run.model_copy(update={"name": "broken", "dataset": DatasetConfig(path=tmp_path / "missing.csv")})
    outcomes = await run_experiment([broken, run], tmp_path, jobs=2)
    assert [(o.name, o.ok) for o in outcomes] == [("broken", False), ("naive", True)]
    assert outcomes[0].error.startswith("FileNotFoundError")
    assert (tmp_path / "naive" / "evaluation.json").is_file()
    assert (tmp_path / "broken" / INCOMPLETE_MARKER).is_file()

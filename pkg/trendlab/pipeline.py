"""
Stage orchestration: ingest and denoise, train, evaluate, report.

Each run owns ``<out_dir>/<run name>/``. Stages talk to each other only
through the files written there:

    series.csv            position, timestamp, original, denoised, noise
    split.json            partition bounds, realised fractions, normaliser
    checkpoint.npz        trained parameters (see ``models.checkpoint``)
    train_report.csv      epoch, train_loss, val_loss, lr
    train_summary.json    best/stopped epoch, stop reason, wall clock
    evaluation.json       per-partition regression and directional scores
    evaluation.md         the same as markdown tables
    plot_data.csv         actual vs predicted with direction flags

Every stage also writes ``stage_<name>.json`` holding a fingerprint of the
config slice and upstream inputs it consumed. A downstream stage refuses to
run when that marker is missing or does not match what it would produce now.
A failed run leaves an ``INCOMPLETE`` file naming the stage and the error.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from trendlab.config import RunConfig
from trendlab.data.series_io import Normaliser, fit_normaliser, read_csv_file, split
from trendlab.denoise.wavelet import denoise_series
from trendlab.errors import DependencyError
from trendlab.evaluation.protocol import EvaluationReport, evaluate_protocol, partition_windows
from trendlab.evaluation.report import render_markdown
from trendlab.models import build_model
from trendlab.models.base import Forecaster
from trendlab.models.checkpoint import load_checkpoint, save_checkpoint, state_fingerprint
from trendlab.training.trainer import fit

logger = logging.getLogger(__name__)

STAGES = ("denoise", "train", "evaluate")
INCOMPLETE_MARKER = "INCOMPLETE"
SERIES_FILE = "series.csv"
DENOISED_FILE = "denoised.csv"
NOISE_FILE = "noise.csv"
SPLIT_FILE = "split.json"
CHECKPOINT_FILE = "checkpoint.npz"
TRAIN_REPORT_FILE = "train_report.csv"
TRAIN_SUMMARY_FILE = "train_summary.json"
EVALUATION_FILE = "evaluation.json"
EVALUATION_MD_FILE = "evaluation.md"
PLOT_FILE = "plot_data.csv"
REPORT_FILES = ("report.md", "report.json")


class RunOutcome(BaseModel):
    name: str
    ok: bool
    run_dir: Path
    error: Optional[str] = None


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _combine(*parts: str) -> str:
    return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()


def _write_json(path: Path, payload: Dict[str, Any]) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise DependencyError(f"missing upstream artifact {path}")
    return json.loads(path.read_text(encoding="utf-8"))


# -- fingerprints ---------------------------------------------------------------

def denoise_fingerprint(run: RunConfig) -> str:
    path = Path(run.dataset.path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    return _combine(run.fingerprint("dataset", "split", "denoise_enabled", "denoise"), _sha256_file(path))


def train_fingerprint(run: RunConfig) -> str:
    return _combine(denoise_fingerprint(run), run.fingerprint("kind", "model", "train", "seed"))


def evaluate_fingerprint(run: RunConfig) -> str:
    upstream = denoise_fingerprint(run) if run.kind == "naive" else train_fingerprint(run)
    return _combine(upstream, run.fingerprint("kind", "model", "evaluation"))


def _mark_stage(run_dir: Path, stage: str, fingerprint: str, **extra: Any) -> None:
    _write_json(run_dir / f"stage_{stage}.json", {"stage": stage, "status": "complete",
                                                 "fingerprint": fingerprint, **extra})


def require_stage(run_dir: Path, stage: str, expected: str) -> Dict[str, Any]:
    """Load ``stage_<stage>.json`` and check that it was produced from the current inputs."""
    marker = run_dir / f"stage_{stage}.json"
    if not marker.is_file():
        raise DependencyError(f"{marker} is missing; run `trendlab {stage}` first")
    payload = _read_json(marker)
    if payload.get("status") != "complete" or payload.get("fingerprint") != expected:
        raise DependencyError(f"{marker} is stale (config or input changed); rerun `trendlab {stage}`")
    return payload


# -- stages ---------------------------------------------------------------------

def stage_denoise(run: RunConfig, run_dir: Path) -> None:
    """Read the dataset, split it, denoise, and fit the normaliser on the denoised training closes."""
    fingerprint = denoise_fingerprint(run)
    series = read_csv_file(run.dataset.path, run.dataset.frequency, run.dataset.symbol)
    parts = split(series, run.split.resolve(series))
    original = series.close
    if run.denoise_enabled:
        result = denoise_series(original, run.denoise, parts.bounds)
        denoised, noise = result.denoised, result.noise
        plans = [plan.model_dump(mode="json") for plan in result.plans]
    else:
        denoised, noise, plans = original.copy(), np.zeros_like(original), []
    lo, hi = parts.bounds[0]
    normaliser = fit_normaliser(denoised[lo:hi])

    frame = pd.DataFrame({
        "position": np.arange(len(series)),
        "timestamp": pd.to_datetime(series.timestamps),
        "original": original,
        "denoised": denoised,
        "noise": noise,
    })
    for name, columns in ((SERIES_FILE, ["position", "timestamp", "original", "denoised", "noise"]),
                          (DENOISED_FILE, ["position", "timestamp", "denoised"]),
                          (NOISE_FILE, ["position", "timestamp", "noise"])):
        frame[columns].to_csv(run_dir / name, index=False, float_format="%.17g", lineterminator="\n",
                              date_format="%Y-%m-%dT%H:%M:%S")
    _write_json(run_dir / SPLIT_FILE, {
        "symbol": series.symbol,
        "frequency": series.frequency,
        "bounds": [list(b) for b in parts.bounds],
        "realised_fractions": list(parts.realised_fractions),
        "normaliser": normaliser.model_dump(),
        "threshold_plans": plans,
    })
    _mark_stage(run_dir, "denoise", fingerprint)


def _load_series(run_dir: Path) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    path = run_dir / SERIES_FILE
    if not path.is_file():
        raise DependencyError(f"missing upstream artifact {path}")
    return pd.read_csv(path, float_precision="round_trip"), _read_json(run_dir / SPLIT_FILE)


def stage_train(run: RunConfig, run_dir: Path) -> None:
    require_stage(run_dir, "denoise", denoise_fingerprint(run))
    fingerprint = train_fingerprint(run)
    frame, split_info = _load_series(run_dir)
    normaliser = Normaliser(**split_info["normaliser"])
    scaled = normaliser.apply(frame["denoised"].to_numpy())
    bounds = [tuple(b) for b in split_info["bounds"]]

    model = build_model(run.kind, run.model, seed=run.seed)
    train = partition_windows(scaled, bounds[0], model.window_length)
    val = partition_windows(scaled, bounds[1], model.window_length)
    result = fit(model, train, val, run.train)

    save_checkpoint(model, run_dir / CHECKPOINT_FILE, extra={"run": run.name, "seed": run.seed})
    (run_dir / TRAIN_REPORT_FILE).write_text(result.report.to_csv(), encoding="utf-8")
    _write_json(run_dir / TRAIN_SUMMARY_FILE, {
        **result.report.model_dump(mode="json", exclude={"epochs"}),
        "parameters": model.parameter_summary().model_dump(mode="json"),
    })
    _mark_stage(run_dir, "train", fingerprint, state_fingerprint=state_fingerprint(model))


def _trained_model(run: RunConfig, run_dir: Path) -> Forecaster:
    if run.kind == "naive":
        return build_model(run.kind, run.model, seed=run.seed)
    marker = require_stage(run_dir, "train", train_fingerprint(run))
    model, _ = load_checkpoint(run_dir / CHECKPOINT_FILE)
    if state_fingerprint(model) != marker.get("state_fingerprint"):
        raise DependencyError(f"{run_dir / CHECKPOINT_FILE} does not match the recorded training run")
    return model


def stage_evaluate(run: RunConfig, run_dir: Path) -> EvaluationReport:
    require_stage(run_dir, "denoise", denoise_fingerprint(run))
    fingerprint = evaluate_fingerprint(run)
    model = _trained_model(run, run_dir)
    frame, split_info = _load_series(run_dir)
    report = evaluate_protocol(model, frame["original"].to_numpy(), frame["denoised"].to_numpy(),
                               [tuple(b) for b in split_info["bounds"]], Normaliser(**split_info["normaliser"]),
                               run.evaluation, symbol=split_info["symbol"])

    (run_dir / EVALUATION_FILE).write_text(report.to_json(), encoding="utf-8")
    label = split_info["symbol"] or run.dataset.path.stem
    notes = [f"Parameters: {model.num_parameters():,}"]
    (run_dir / EVALUATION_MD_FILE).write_text(
        render_markdown([(label, run.name, report)], title=f"Run {run.name}", notes=notes), encoding="utf-8")
    (run_dir / PLOT_FILE).write_text(report.plot_csv(frame["timestamp"].to_numpy()), encoding="utf-8")
    _mark_stage(run_dir, "evaluate", fingerprint)
    return report


STAGE_FUNCTIONS = {"denoise": stage_denoise, "train": stage_train, "evaluate": stage_evaluate}


def run_stage(run: RunConfig, out_dir: Path, stage: str) -> Path:
    """Run one stage for ``run``, labelling the run directory incomplete on failure."""
    run_dir = Path(out_dir) / run.name
    run_dir.mkdir(parents=True, exist_ok=True)
    marker = run_dir / INCOMPLETE_MARKER
    started = time.perf_counter()
    logger.info("[%s] %s started", run.name, stage)
    try:
        STAGE_FUNCTIONS[stage](run, run_dir)
    except Exception as exc:
        marker.write_text(f"stage: {stage}\nerror: {type(exc).__name__}: {exc}\n", encoding="utf-8")
        raise
    if marker.is_file() and stage == STAGES[-1]:
        marker.unlink()
    logger.info("[%s] %s finished in %.2fs", run.name, stage, time.perf_counter() - started)
    return run_dir


def run_pipeline(run: RunConfig, out_dir: Path) -> Path:
    run_dir = Path(out_dir) / run.name
    if (run_dir / INCOMPLETE_MARKER).is_file():
        (run_dir / INCOMPLETE_MARKER).unlink()
    for stage in STAGES:
        run_stage(run, out_dir, stage)
    return run_dir


async def run_experiment(runs: List[RunConfig], out_dir: Path, jobs: int = 1,
                         stage: Optional[str] = None) -> List[RunOutcome]:
    """Execute runs concurrently, at most ``jobs`` at a time; one failure does not stop the others."""
    semaphore = asyncio.Semaphore(max(1, jobs))

    async def run_one(run: RunConfig):
        async with semaphore:
            if stage is None:
                return await asyncio.to_thread(run_pipeline, run, out_dir)
            return await asyncio.to_thread(run_stage, run, out_dir, stage)

    results = await asyncio.gather(*(run_one(run) for run in runs), return_exceptions=True)
    outcomes = []
    for run, result in zip(runs, results):
        run_dir = Path(out_dir) / run.name
        if isinstance(result, BaseException):
            logger.error("[%s] failed: %s", run.name, result)
            outcomes.append(RunOutcome(name=run.name, ok=False, run_dir=run_dir,
                                       error=f"{type(result).__name__}: {result}"))
        else:
            outcomes.append(RunOutcome(name=run.name, ok=True, run_dir=run_dir))
    return outcomes


# -- report -----------------------------------------------------------------------

def collect_reports(out_dir: Path) -> List[Tuple[str, str, EvaluationReport]]:
    out_dir = Path(out_dir)
    paths = sorted(out_dir.glob(f"*/{EVALUATION_FILE}")) if out_dir.is_dir() else []
    if not paths:
        raise DependencyError(f"no run results under {out_dir}; expected <run>/{EVALUATION_FILE} "
                              f"(with {SERIES_FILE}, {SPLIT_FILE}, {CHECKPOINT_FILE}) from `trendlab run`")
    rows = []
    for path in paths:
        report = EvaluationReport.model_validate_json(path.read_text(encoding="utf-8"))
        rows.append((report.symbol or "-", path.parent.name, report))
    return rows


def write_report(out_dir: Path, title: str = "Forecast evaluation") -> Path:
    """Collect every run's ``evaluation.json`` into ``report.md`` and ``report.json``."""
    out_dir = Path(out_dir)
    rows = collect_reports(out_dir)
    incomplete = sorted(p.parent.name for p in out_dir.glob(f"*/{INCOMPLETE_MARKER}"))
    notes = [f"Run {name} is incomplete; its results may be stale." for name in incomplete]
    (out_dir / REPORT_FILES[0]).write_text(render_markdown(rows, title=title, notes=notes), encoding="utf-8")
    _write_json(out_dir / REPORT_FILES[1], {
        "runs": [{"run": run, "dataset": dataset, "evaluation": report.model_dump(mode="json")}
                 for dataset, run, report in rows],
        "incomplete": incomplete,
    })
    return out_dir / REPORT_FILES[0]

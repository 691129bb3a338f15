"""
Experiment configuration: INI files validated into pydantic models.

Example::

    [experiment]
    name = sample
    seed = 7

    [dataset]
    path = ../data/sample_daily.csv
    frequency = daily

    [split]
    preset = fractions
    fractions = 0.7, 0.15, 0.15

    [run.naive]
    model = naive

    [run.xlstm]
    model = xlstm_ts
    train.max_epochs = 5

Values are parsed as int, float, bool, ``none`` or text; a comma makes a
list. Every section supplies shared defaults; ``[run.<name>]`` sections pick a
model and may override any shared key with ``section.key``. Relative dataset
paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
import typing
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from dotenv import find_dotenv, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from trendlab.data.series_io import Frequency, PriceSeries, SplitSpec
from trendlab.denoise.wavelet import DenoiseConfig
from trendlab.errors import ConfigError
from trendlab.evaluation.protocol import EvaluationSettings
from trendlab.models import MODEL_KINDS
from trendlab.models.naive import NaiveConfig
from trendlab.models.tcn import TcnConfig
from trendlab.models.xlstm_ts import MlstmBlockConfig, SlstmBlockConfig, XlstmTsConfig
from trendlab.training.trainer import TrainConfig

ModelKind = Literal["xlstm_ts", "tcn", "naive"]

DEFAULT_OUT_DIR = "runs"
SHARED_SECTIONS = ("dataset", "split", "denoise", "xlstm_ts", "mlstm", "slstm", "tcn", "naive", "train",
                   "evaluation")
SECTION_MODELS = {
    "denoise": DenoiseConfig,
    "xlstm_ts": XlstmTsConfig,
    "mlstm": MlstmBlockConfig,
    "slstm": SlstmBlockConfig,
    "tcn": TcnConfig,
    "naive": NaiveConfig,
    "train": TrainConfig,
    "evaluation": EvaluationSettings,
}


class DatasetConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: Path = Field(description="OHLCV CSV file")
    frequency: Frequency = "daily"
    symbol: Optional[str] = Field(default=None, description="Defaults to the file stem")


class SplitConfig(BaseModel):
    """How partitions are chosen: published date ranges, explicit dates, or bar-count fractions."""

    model_config = ConfigDict(frozen=True)

    preset: Literal["published_daily", "published_hourly", "dates", "fractions"] = "fractions"
    fractions: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    train: Optional[Tuple[str, str]] = None
    validation: Optional[Tuple[str, str]] = None
    test: Optional[Tuple[str, str]] = None

    @model_validator(mode="after")
    def _dates_present(self) -> "SplitConfig":
        if self.preset == "dates" and not (self.train and self.validation and self.test):
            raise ValueError("preset 'dates' needs train, validation and test date pairs")
        return self

    def resolve(self, series: PriceSeries) -> SplitSpec:
        if self.preset == "published_daily":
            return SplitSpec.published_daily()
        if self.preset == "published_hourly":
            return SplitSpec.published_hourly()
        if self.preset == "dates":
            return SplitSpec.from_inclusive_dates(self.train, self.validation, self.test, self.fractions)
        return SplitSpec.from_fractions(series, self.fractions)


class RunConfig(BaseModel):
    """Everything one pipeline run needs; one model kind per run."""

    model_config = ConfigDict(frozen=True)

    name: str
    kind: ModelKind
    seed: int = 0
    dataset: DatasetConfig
    split: SplitConfig = Field(default_factory=SplitConfig)
    denoise_enabled: bool = True
    denoise: DenoiseConfig = Field(default_factory=DenoiseConfig)
    model: Dict[str, Any] = Field(default_factory=dict, description="Dumped config of the chosen model kind")
    train: TrainConfig = Field(default_factory=TrainConfig)
    evaluation: EvaluationSettings = Field(default_factory=EvaluationSettings)

    @model_validator(mode="after")
    def _model_config_valid(self) -> "RunConfig":
        MODEL_KINDS[self.kind][1].model_validate(self.model)
        return self

    def model_settings(self) -> BaseModel:
        return MODEL_KINDS[self.kind][1].model_validate(self.model)

    def fingerprint(self, *parts: str) -> str:
        """Hash of the named config slices; a stage is stale when its slice changes."""
        dump = self.model_dump(mode="json")
        chosen = {part: dump[part] for part in parts}
        return hashlib.sha256(json.dumps(chosen, sort_keys=True).encode("utf-8")).hexdigest()


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    seed: int = 0
    out_dir: Path = Path(DEFAULT_OUT_DIR)
    jobs: int = Field(default=1, ge=1)
    runs: List[RunConfig]
    source: Optional[Path] = None

    def select(self, run_name: Optional[str]) -> List[RunConfig]:
        if run_name is None:
            return list(self.runs)
        chosen = [run for run in self.runs if run.name == run_name]
        if not chosen:
            raise ConfigError(f"no run named {run_name!r}; available: {', '.join(r.name for r in self.runs)}")
        return chosen


# -- value parsing --------------------------------------------------------------

def parse_value(text: str) -> Any:
    text = text.strip()
    if "," in text:
        return [parse_value(item) for item in text.split(",") if item.strip()]
    lowered = text.lower()
    if lowered in ("", "none", "null"):
        return None
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _wants_sequence(annotation: Any) -> bool:
    origin = typing.get_origin(annotation)
    if origin in (tuple, list, frozenset, set):
        return True
    if origin is typing.Union:
        return any(_wants_sequence(arg) for arg in typing.get_args(annotation) if arg is not type(None))
    return False


def _section_values(model: type, items: Dict[str, str], where: str) -> Dict[str, Any]:
    values = {}
    for key, raw in items.items():
        field = model.model_fields.get(key)
        if field is None:
            raise ConfigError(f"[{where}] unknown key {key!r}; expected one of {', '.join(model.model_fields)}")
        value = parse_value(raw)
        if value is not None and _wants_sequence(field.annotation) and not isinstance(value, list):
            value = [value]
        values[key] = value
    return values


def _model_values(kind: str, sections: Dict[str, Dict[str, str]]) -> Dict[str, Any]:
    config_cls = MODEL_KINDS[kind][1]
    values = _section_values(config_cls, sections.get(kind, {}), kind)
    if kind == "xlstm_ts":
        values["mlstm"] = _section_values(MlstmBlockConfig, sections.get("mlstm", {}), "mlstm")
        values["slstm"] = _section_values(SlstmBlockConfig, sections.get("slstm", {}), "slstm")
        if "sequence_length" in values and "context_length" not in values:
            values["context_length"] = values["sequence_length"]
    return config_cls.model_validate(values).model_dump(mode="json")


def _build_run(name: str, kind: str, seed: int, sections: Dict[str, Dict[str, str]], base_dir: Path) -> RunConfig:
    if kind not in MODEL_KINDS:
        raise ConfigError(f"run {name!r}: unknown model {kind!r}; expected one of {', '.join(MODEL_KINDS)}")
    dataset = _section_values(DatasetConfig, sections.get("dataset", {}), "dataset")
    if "path" not in dataset:
        raise ConfigError(f"run {name!r}: [dataset] path is required")
    path = Path(str(dataset["path"]))
    dataset["path"] = path if path.is_absolute() else (base_dir / path)
    denoise_items = dict(sections.get("denoise", {}))
    enabled = parse_value(denoise_items.pop("enabled", "true"))

    model = _model_values(kind, sections)
    train = _section_values(TrainConfig, sections.get("train", {}), "train")
    train.setdefault("batch_size", model["batch_size"])
    train.setdefault("seed", seed)

    return RunConfig(
        name=name,
        kind=kind,
        seed=seed,
        dataset=DatasetConfig(**dataset),
        split=SplitConfig(**_section_values(SplitConfig, sections.get("split", {}), "split")),
        denoise_enabled=bool(enabled),
        denoise=DenoiseConfig(**_section_values(DenoiseConfig, denoise_items, "denoise")),
        model=model,
        train=TrainConfig.for_model(kind, **train),
        evaluation=EvaluationSettings(**_section_values(EvaluationSettings, sections.get("evaluation", {}),
                                                        "evaluation")),
    )


def load_environment() -> None:
    """Load `.env` from the working directory upwards; variables already set win."""
    load_dotenv(find_dotenv(usecwd=True), override=False)


def _env_defaults() -> Dict[str, Any]:
    load_environment()
    defaults: Dict[str, Any] = {}
    if os.getenv("TRENDLAB_OUT_DIR"):
        defaults["out_dir"] = os.environ["TRENDLAB_OUT_DIR"]
    if os.getenv("TRENDLAB_JOBS"):
        defaults["jobs"] = os.environ["TRENDLAB_JOBS"]
    return defaults


def load_config(path: Path | str, seed: Optional[int] = None, out_dir: Optional[Path | str] = None,
                jobs: Optional[int] = None) -> ExperimentConfig:
    """Read and validate an experiment file; explicit arguments beat the file, which beats the environment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    header = dict(_env_defaults())
    if parser.has_section("experiment"):
        header.update(parser["experiment"])
    experiment = {key: parse_value(str(value)) for key, value in header.items()}
    for key in ("name", "out_dir"):
        if key in experiment:
            experiment[key] = str(header[key]).strip()
    if seed is not None:
        experiment["seed"] = seed
    if out_dir is not None:
        experiment["out_dir"] = str(out_dir)
    if jobs is not None:
        experiment["jobs"] = jobs
    run_seed = int(experiment.get("seed", 0))

    shared = {section: dict(parser[section]) for section in SHARED_SECTIONS if parser.has_section(section)}
    unknown = [s for s in parser.sections() if s not in SHARED_SECTIONS and s != "experiment"
               and not s.startswith("run.")]
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {', '.join(unknown)}")

    runs = []
    try:
        run_sections = [s for s in parser.sections() if s.startswith("run.")]
        if not run_sections:
            kind = str(experiment.pop("model", "xlstm_ts"))
            runs.append(_build_run(kind, kind, run_seed, shared, path.parent))
        experiment.pop("model", None)
        for section in run_sections:
            name = section[len("run."):]
            items = dict(parser[section])
            kind = items.pop("model", None)
            if kind is None:
                raise ConfigError(f"[{section}] must name a model")
            merged = {key: dict(value) for key, value in shared.items()}
            for dotted, value in items.items():
                target, _, key = dotted.partition(".")
                if not key or target not in SHARED_SECTIONS:
                    raise ConfigError(f"[{section}] override {dotted!r} must look like <section>.<key>")
                merged.setdefault(target, {})[key] = value
            runs.append(_build_run(name, kind, run_seed, merged, path.parent))
        return ExperimentConfig(**experiment, runs=runs, source=path)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def with_overrides(run: RunConfig, max_epochs: Optional[int] = None, learning_rate: Optional[float] = None,
                   batch_size: Optional[int] = None, levels: Optional[int] = None) -> RunConfig:
    """Apply command-line stage overrides to one run."""
    train_updates = {key: value for key, value in (("max_epochs", max_epochs), ("learning_rate", learning_rate),
                                                    ("batch_size", batch_size)) if value is not None}
    updates: Dict[str, Any] = {}
    if train_updates:
        updates["train"] = TrainConfig(**{**run.train.model_dump(), **train_updates})
    if levels is not None:
        updates["denoise"] = DenoiseConfig(**{**run.denoise.model_dump(), "levels": levels})
    return run.model_copy(update=updates) if updates else run

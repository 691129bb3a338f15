from typing import Any, Dict, Union

from pydantic import BaseModel

from trendlab.errors import ConfigError
from .base import Forecaster, ParameterSummary
from .naive import NaiveConfig, NaiveForecaster
from .tcn import Tcn, TcnConfig
from .xlstm_ts import XlstmTs, XlstmTsConfig

MODEL_KINDS = {
    "xlstm_ts": (XlstmTs, XlstmTsConfig),
    "tcn": (Tcn, TcnConfig),
    "naive": (NaiveForecaster, NaiveConfig),
}


def build_model(kind: str, config: Union[BaseModel, Dict[str, Any], None] = None, seed: int = 0) -> Forecaster:
    """Construct a model of ``kind`` from a config object or its dumped dict."""
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {', '.join(MODEL_KINDS)}")
    model_cls, config_cls = MODEL_KINDS[kind]
    if config is None:
        config = config_cls()
    elif isinstance(config, dict):
        config = config_cls.model_validate(config)
    return model_cls(config, seed=seed)


__all__ = [
    "Forecaster",
    "ParameterSummary",
    "NaiveConfig",
    "NaiveForecaster",
    "Tcn",
    "TcnConfig",
    "XlstmTs",
    "XlstmTsConfig",
    "MODEL_KINDS",
    "build_model",
]

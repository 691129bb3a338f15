"""
Versioned ``.npz`` checkpoints.

Layout: ``meta`` is a JSON string (format version, model kind, model config,
free-form extras); every parameter is stored as ``param/<name>``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from trendlab.errors import DependencyError
from trendlab.models import build_model
from trendlab.models.base import Forecaster

FORMAT_VERSION = 1
PARAM_PREFIX = "param/"


def save_checkpoint(model: Forecaster, path: Union[str, Path], extra: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "config": model.config.model_dump(mode="json"),
        "extra": extra or {},
    }
    arrays = {f"{PARAM_PREFIX}{name}": value for name, value in model.state_dict().items()}
    with path.open("wb") as handle:
        np.savez(handle, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Forecaster, Dict[str, Any]]:
    """Rebuild the model recorded in ``path`` and restore its parameters exactly."""
    path = Path(path)
    if not path.exists():
        raise DependencyError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["meta"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise DependencyError(
                f"{path}: checkpoint format {meta.get('format_version')} is not supported (expected {FORMAT_VERSION})")
        state = {key[len(PARAM_PREFIX):]: archive[key] for key in archive.files if key.startswith(PARAM_PREFIX)}
    model = build_model(meta["kind"], meta["config"])
    model.load_state_dict(state)
    return model, meta


def state_fingerprint(model: Forecaster) -> str:
    """Content hash of the parameters, independent of the container bytes."""
    digest = hashlib.sha256()
    for name, value in sorted(model.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(value).tobytes())
    return digest.hexdigest()

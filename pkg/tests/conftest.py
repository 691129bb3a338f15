"""
Shared fixtures and the opt-in marker for long experiments.
Slow tests run only with TRENDLAB_RUN_SLOW=1.
"""

import os
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
SAMPLE_CSV = ROOT / "data" / "sample_daily.csv"


def pytest_collection_modifyitems(config, items):
    if os.getenv("TRENDLAB_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set TRENDLAB_RUN_SLOW=1 to run desk-scale experiments")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="module")
def sample_csv_path():
    return SAMPLE_CSV

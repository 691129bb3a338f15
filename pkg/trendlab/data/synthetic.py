"""Seeded synthetic price series on a business-day calendar."""

from typing import Optional

import numpy as np

from trendlab.data.series_io import PriceSeries

DEFAULT_START = "2000-01-03"


def business_days(n: int, start: str = DEFAULT_START) -> np.ndarray:
    return np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")


def _series(values: np.ndarray, symbol: str, start: str) -> PriceSeries:
    return PriceSeries.from_columns(business_days(len(values), start), values, symbol=symbol)


def ramp(n: int, start_value: float = 10.0, slope: float = 0.1, start: str = DEFAULT_START) -> PriceSeries:
    return _series(start_value + slope * np.arange(n, dtype=np.float64), "RAMP", start)


def sine(n: int, period: float = 64.0, amplitude: float = 1.0, level: float = 10.0,
         noise: float = 0.0, seed: Optional[int] = None, start: str = DEFAULT_START) -> PriceSeries:
    t = np.arange(n, dtype=np.float64)
    values = level + amplitude * np.sin(2.0 * np.pi * t / period)
    if noise > 0:
        values = values + np.random.default_rng(seed).normal(0.0, noise, n)
    return _series(values, "SINE", start)


def two_sines_ar(n: int = 3000, seed: int = 0, level: float = 100.0,
                 amplitudes=(6.0, 2.0), periods=(80.0, 23.0),
                 ar_coefficient: float = 0.5, noise: float = 0.6,
                 start: str = DEFAULT_START) -> PriceSeries:
    """Sum of two sines plus AR(1) noise: a trend signal buried in persistent noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=np.float64)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=2)
    signal = level + sum(a * np.sin(2.0 * np.pi * t / p + ph) for a, p, ph in zip(amplitudes, periods, phases))
    shocks = rng.normal(0.0, noise, n)
    ar = np.zeros(n)
    for i in range(1, n):
        ar[i] = ar_coefficient * ar[i - 1] + shocks[i]
    return _series(signal + ar, "SYNTH", start)


def constant_step(n: int, step: float = 1.0, seed: int = 0, level: float = 100.0,
                  start: str = DEFAULT_START) -> PriceSeries:
    """Random walk whose every move has magnitude ``step``."""
    signs = np.where(np.random.default_rng(seed).random(n - 1) < 0.5, -1.0, 1.0)
    values = level + np.concatenate([[0.0], np.cumsum(step * signs)])
    return _series(values, "STEP", start)

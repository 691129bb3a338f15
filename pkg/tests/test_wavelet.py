"""
Tests for the db4 transform and coefficient shrinkage.
Run with: pytest -q tests/test_wavelet.py
"""

import math

import numpy as np
import pytest

from trendlab.denoise.wavelet import (
    DB4,
    DenoiseConfig,
    WaveletFilterBank,
    coefficient_lengths,
    denoise,
    denoise_series,
    dwt,
    estimate_sigma,
    idwt,
    max_feasible_levels,
    signal_to_noise_db,
    soft_threshold,
)
from trendlab.errors import DecompositionError, ReconstructionError, TrendLabError


def test_db4_filter_bank_properties():
    assert DB4.length == 8
    assert sum(DB4.dec_lo) == pytest.approx(math.sqrt(2.0), abs=1e-10)
    assert sum(DB4.dec_hi) == pytest.approx(0.0, abs=1e-10)
    for taps in (DB4.dec_lo, DB4.dec_hi, DB4.rec_lo, DB4.rec_hi):
        assert np.linalg.norm(taps) == pytest.approx(1.0, abs=1e-10)


def test_corrupted_filter_bank_rejected():
    broken = DB4.model_copy(update={"dec_lo": tuple(np.array(DB4.dec_lo) * 1.01)})
    with pytest.raises(DecompositionError):
        broken.check()
    with pytest.raises(DecompositionError):
        WaveletFilterBank.from_pywt("db4").model_copy(update={"rec_hi": DB4.rec_lo}).check()


def test_constant_signal_has_no_detail():
    c = 3.5
    decomp = dwt(np.full(128, c), 3)
    for level in range(1, 4):
        assert np.max(np.abs(decomp.detail(level))) < 1e-10
    np.testing.assert_allclose(decomp.approximation, c * math.sqrt(2.0) ** 3, atol=1e-10)


def test_coefficient_lengths_match_decomposition():
    for length in (64, 101, 500):
        decomp = dwt(np.random.default_rng(length).normal(size=length), 3)
        sizes = coefficient_lengths(length, 3, 8, "symmetric")
        assert [decomp.detail(level).size for level in (1, 2, 3)] == sizes
        assert decomp.approximation.size == sizes[-1]


def test_round_trip_small_signal():
    x = np.random.default_rng(0).normal(size=64)
    assert np.max(np.abs(idwt(dwt(x, 3)) - x)) < 1e-10


def test_round_trip_sweep():
    """1000 random signals, lengths 8..512, even and odd, up to 4 feasible levels."""
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(1000):
        length = int(rng.integers(8, 513))
        levels = int(rng.integers(1, 5))
        levels = min(levels, max_feasible_levels(length))
        x = rng.normal(size=length) * rng.uniform(0.1, 100.0)
        worst = max(worst, float(np.max(np.abs(idwt(dwt(x, levels)) - x))))
    assert worst < 1e-10


def test_round_trip_odd_length():
    x = np.random.default_rng(3).normal(size=101)
    rebuilt = idwt(dwt(x, 3))
    assert rebuilt.shape == (101,)
    assert np.max(np.abs(rebuilt - x)) < 1e-10


def test_zero_coefficients_give_zero_signal():
    decomp = dwt(np.random.default_rng(1).normal(size=96), 2)
    decomp.approximation = np.zeros_like(decomp.approximation)
    for level in (1, 2):
        decomp.set_detail(level, np.zeros_like(decomp.detail(level)))
    np.testing.assert_array_equal(idwt(decomp), np.zeros(96))


def test_low_frequency_energy_stays_out_of_finest_detail():
    x = np.sin(2 * np.pi * np.arange(512) / 32.0)
    detail = dwt(x, 3).detail(1)
    assert np.sum(detail ** 2) < 0.01 * np.sum(x ** 2)


def test_infeasible_levels_rejected():
    with pytest.raises(DecompositionError, match="feasible"):
        dwt(np.zeros(8), 2)
    with pytest.raises(DecompositionError):
        dwt(np.zeros(5), 1)


def test_malformed_coefficients_rejected():
    decomp = dwt(np.random.default_rng(2).normal(size=64), 2)
    decomp.set_detail(1, decomp.detail(1)[:-1])
    with pytest.raises(ReconstructionError):
        idwt(decomp)


def test_estimate_sigma():
    assert estimate_sigma(np.full(10, 0.6745)) == pytest.approx(1.0)
    assert estimate_sigma([-1.0, 0.0, 1.0]) == pytest.approx(1.0 / 0.6745)
    noise = np.random.default_rng(7).normal(0.0, 2.0, 4096)
    assert estimate_sigma(dwt(noise, 1).detail(1)) == pytest.approx(2.0, rel=0.1)


def test_soft_threshold():
    np.testing.assert_allclose(soft_threshold([3.0], 1.0), [2.0])
    np.testing.assert_allclose(soft_threshold([-0.5], 1.0), [0.0])
    np.testing.assert_allclose(soft_threshold([-3.0], 1.0), [-2.0])
    x = np.random.default_rng(5).normal(size=50)
    np.testing.assert_array_equal(soft_threshold(x, 0.0), x)
    with pytest.raises(TrendLabError):
        soft_threshold(x, -0.1)


def test_smooth_signal_preserved():
    t = np.linspace(0.0, 1.0, 1024)
    cubic = 10.0 + t + 0.5 * t ** 2 - 0.5 * t ** 3
    result = denoise(cubic)
    assert np.max(np.abs(result.denoised - cubic) / np.abs(cubic)) < 1e-3


def test_denoising_improves_snr():
    rng = np.random.default_rng(11)
    clean = np.sin(2 * np.pi * np.arange(2048) / 64.0)
    noisy = clean + rng.normal(0.0, 0.2, clean.size)
    result = denoise(noisy)
    gain = signal_to_noise_db(clean, result.denoised) - signal_to_noise_db(clean, noisy)
    assert gain >= 6.0
    assert np.max(np.abs(result.denoised + result.noise - noisy)) < 1e-10


def test_plan_records_levels():
    result = denoise(np.random.default_rng(0).normal(size=256), DenoiseConfig(levels=4))
    plan = result.plan
    assert plan.zeroed_levels == frozenset({1})
    assert plan.thresholded_levels == frozenset({2, 3, 4})
    assert plan.threshold >= 0
    custom = DenoiseConfig(levels=3, zeroed_levels=(), thresholded_levels=(1,))
    assert custom.plan_levels() == (frozenset(), frozenset({1}))


def test_config_validation():
    with pytest.raises(ValueError):
        DenoiseConfig(levels=2, zeroed_levels=(3,))
    with pytest.raises(ValueError):
        DenoiseConfig(padding="mirror-ish")


def test_per_split_scope_denoises_each_segment():
    x = np.random.default_rng(9).normal(size=300).cumsum()
    bounds = [(0, 200), (200, 250), (250, 300)]
    per_split = denoise_series(x, DenoiseConfig(levels=2, scope="per_split"), bounds)
    assert len(per_split.plans) == 3
    np.testing.assert_allclose(per_split.denoised[200:250], denoise(x[200:250], DenoiseConfig(levels=2)).denoised)
    full = denoise_series(x, DenoiseConfig(levels=2))
    assert len(full.plans) == 1
    with pytest.raises(DecompositionError):
        denoise_series(x, DenoiseConfig(scope="per_split"))

"""
Daubechies-4 wavelet shrinkage.

The transform itself is PyWavelets; this module owns the filter-bank checks,
the coefficient bookkeeping, the noise estimate and the shrinkage plan.

Denoising recipe: decompose with symmetric padding, estimate the noise
scale from the finest detail level (MAD / 0.6745), zero the configured
high-frequency levels, soft-threshold the rest at the universal threshold
``sigma * sqrt(2 ln N)`` and reconstruct. The removed part is returned as
the noise component.
"""

from __future__ import annotations

import logging
import math
import warnings
from typing import FrozenSet, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pywt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from trendlab.errors import DecompositionError, ReconstructionError, TrendLabError

logger = logging.getLogger(__name__)

MAD_SCALE = 0.6745
FILTER_TOLERANCE = 1e-10


class WaveletFilterBank(BaseModel):
    """Decomposition and reconstruction filters of an orthogonal wavelet."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(description="Wavelet name")
    dec_lo: Tuple[float, ...] = Field(description="Decomposition lowpass")
    dec_hi: Tuple[float, ...] = Field(description="Decomposition highpass")
    rec_lo: Tuple[float, ...] = Field(description="Reconstruction lowpass")
    rec_hi: Tuple[float, ...] = Field(description="Reconstruction highpass")

    @classmethod
    def from_pywt(cls, name: str = "db4") -> "WaveletFilterBank":
        dec_lo, dec_hi, rec_lo, rec_hi = pywt.Wavelet(name).filter_bank
        bank = cls(name=name, dec_lo=tuple(dec_lo), dec_hi=tuple(dec_hi),
                   rec_lo=tuple(rec_lo), rec_hi=tuple(rec_hi))
        bank.check()
        return bank

    @property
    def length(self) -> int:
        return len(self.dec_lo)

    def check(self, tol: float = FILTER_TOLERANCE) -> None:
        """Raise ``DecompositionError`` unless sums, norms and mirror relations hold."""
        n = self.length
        problems = []
        for label, taps in (("dec_lo", self.dec_lo), ("rec_lo", self.rec_lo)):
            if abs(sum(taps) - math.sqrt(2.0)) > tol:
                problems.append(f"{label} sums to {sum(taps)!r}, expected sqrt(2)")
        for label, taps in (("dec_hi", self.dec_hi), ("rec_hi", self.rec_hi)):
            if abs(sum(taps)) > tol:
                problems.append(f"{label} sums to {sum(taps)!r}, expected 0")
        for label in ("dec_lo", "dec_hi", "rec_lo", "rec_hi"):
            taps = getattr(self, label)
            if len(taps) != n:
                problems.append(f"{label} has {len(taps)} taps, expected {n}")
            elif abs(np.linalg.norm(taps) - 1.0) > tol:
                problems.append(f"{label} has norm {np.linalg.norm(taps)!r}")
        if not problems:
            for k in range(n):
                if abs(self.rec_hi[k] - (-1) ** k * self.rec_lo[n - 1 - k]) > tol:
                    problems.append(f"rec_hi[{k}] breaks the quadrature-mirror relation")
                if abs(self.dec_hi[k] - (-1) ** (k + 1) * self.dec_lo[n - 1 - k]) > tol:
                    problems.append(f"dec_hi[{k}] breaks the quadrature-mirror relation")
        if problems:
            raise DecompositionError(f"{self.name} filter bank is invalid: " + "; ".join(problems))

    def to_pywt(self) -> pywt.Wavelet:
        return pywt.Wavelet(self.name, filter_bank=(self.dec_lo, self.dec_hi, self.rec_lo, self.rec_hi))


DB4 = WaveletFilterBank.from_pywt("db4")


class WaveletDecomposition(BaseModel):
    """Approximation plus detail arrays, deepest first, finest last."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    approximation: np.ndarray
    details: List[np.ndarray] = Field(description="Detail coefficients, deepest level first")
    levels: int
    original_length: int
    padding_mode: str = "symmetric"

    def detail(self, level: int) -> np.ndarray:
        """Detail coefficients at ``level``; level 1 is the finest."""
        return self.details[self.levels - level]

    def set_detail(self, level: int, values: np.ndarray) -> None:
        self.details[self.levels - level] = np.asarray(values, dtype=np.float64)

    def coefficient_list(self) -> List[np.ndarray]:
        return [self.approximation, *self.details]

    def clone(self) -> "WaveletDecomposition":
        return WaveletDecomposition(
            approximation=self.approximation.copy(),
            details=[d.copy() for d in self.details],
            levels=self.levels,
            original_length=self.original_length,
            padding_mode=self.padding_mode,
        )


def coefficient_lengths(length: int, levels: int, filter_length: int, padding: str) -> List[int]:
    """Coefficient length after each level, finest first."""
    sizes = []
    current = length
    for _ in range(levels):
        current = pywt.dwt_coeff_len(current, filter_length, padding)
        sizes.append(current)
    return sizes


def max_feasible_levels(length: int, filter_length: int = 8, padding: str = "symmetric") -> int:
    """Deepest level count for which every level's input is at least one filter long."""
    levels = 0
    current = length
    while current >= filter_length:
        levels += 1
        current = pywt.dwt_coeff_len(current, filter_length, padding)
    return levels


def dwt(signal, levels: int, bank: WaveletFilterBank = DB4, padding: str = "symmetric") -> WaveletDecomposition:
    values = np.asarray(signal, dtype=np.float64)
    if values.ndim != 1:
        raise DecompositionError(f"signal must be one-dimensional, got shape {values.shape}")
    if values.size < bank.length:
        raise DecompositionError(f"signal of length {values.size} is shorter than the {bank.length}-tap filter")
    feasible = max_feasible_levels(values.size, bank.length, padding)
    if levels < 1 or levels > feasible:
        raise DecompositionError(
            f"{levels} levels requested for length {values.size}; feasible range is 1..{feasible}")
    with warnings.catch_warnings():
        # pywt warns past its own conservative level bound; feasibility is checked above.
        warnings.simplefilter("ignore", UserWarning)
        coeffs = pywt.wavedec(values, bank.to_pywt(), mode=padding, level=levels)
    return WaveletDecomposition(approximation=coeffs[0], details=list(coeffs[1:]), levels=levels,
                                original_length=int(values.size), padding_mode=padding)


def idwt(decomp: WaveletDecomposition, bank: WaveletFilterBank = DB4) -> np.ndarray:
    expected = coefficient_lengths(decomp.original_length, decomp.levels, bank.length, decomp.padding_mode)
    if len(decomp.details) != decomp.levels:
        raise ReconstructionError(f"{len(decomp.details)} detail arrays for {decomp.levels} levels")
    if decomp.approximation.shape != (expected[-1],):
        raise ReconstructionError(
            f"approximation has shape {decomp.approximation.shape}, expected ({expected[-1]},)")
    for level in range(1, decomp.levels + 1):
        got = np.shape(decomp.detail(level))
        if got != (expected[level - 1],):
            raise ReconstructionError(f"level {level} details have shape {got}, expected ({expected[level - 1]},)")
    out = pywt.waverec(decomp.coefficient_list(), bank.to_pywt(), mode=decomp.padding_mode)
    return out[: decomp.original_length]


def estimate_sigma(finest_details) -> float:
    coeffs = np.asarray(finest_details, dtype=np.float64)
    if coeffs.size == 0:
        raise DecompositionError("cannot estimate noise from an empty coefficient array")
    return float(np.median(np.abs(coeffs)) / MAD_SCALE)


def soft_threshold(coefficients, threshold: float) -> np.ndarray:
    if threshold < 0:
        raise TrendLabError(f"threshold must be non-negative, got {threshold}")
    return pywt.threshold(np.asarray(coefficients, dtype=np.float64), threshold, mode="soft")


def universal_threshold(sigma: float, length: int) -> float:
    return sigma * math.sqrt(2.0 * math.log(length))


class ThresholdPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma: float = Field(ge=0, description="Noise scale estimate in signal units")
    threshold: float = Field(ge=0, description="Soft-threshold level")
    rule: Literal["soft"] = "soft"
    zeroed_levels: FrozenSet[int] = Field(description="Detail levels set to zero")
    thresholded_levels: FrozenSet[int] = Field(description="Detail levels soft-thresholded")


class DenoiseConfig(BaseModel):
    """Shrinkage settings; defaults suit daily series of a few thousand points."""

    model_config = ConfigDict(frozen=True)

    levels: int = Field(default=4, ge=1, description="Decomposition depth")
    padding: str = Field(default="symmetric", description="pywt signal extension mode")
    zeroed_levels: Tuple[int, ...] = Field(default=(1,), description="Detail levels zeroed outright")
    thresholded_levels: Optional[Tuple[int, ...]] = Field(
        default=None, description="Detail levels soft-thresholded; None means every non-zeroed level")
    scope: Literal["full", "per_split"] = Field(default="full", description="Denoise once or per split")

    @model_validator(mode="after")
    def _levels_in_range(self) -> "DenoiseConfig":
        if self.padding not in pywt.Modes.modes:
            raise ValueError(f"unknown padding mode {self.padding!r}")
        allowed = set(range(1, self.levels + 1))
        for label, chosen in (("zeroed_levels", self.zeroed_levels), ("thresholded_levels", self.thresholded_levels)):
            if chosen is not None and not set(chosen) <= allowed:
                raise ValueError(f"{label} {sorted(chosen)} must lie within 1..{self.levels}")
        return self

    def plan_levels(self) -> Tuple[FrozenSet[int], FrozenSet[int]]:
        zeroed = frozenset(self.zeroed_levels)
        if self.thresholded_levels is None:
            thresholded = frozenset(range(1, self.levels + 1)) - zeroed
        else:
            thresholded = frozenset(self.thresholded_levels) - zeroed
        return zeroed, thresholded


class DenoiseResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    denoised: np.ndarray
    noise: np.ndarray
    plans: List[ThresholdPlan] = Field(description="One plan per denoised segment")

    @property
    def plan(self) -> ThresholdPlan:
        return self.plans[0]


def shrink(decomp: WaveletDecomposition, plan: ThresholdPlan) -> WaveletDecomposition:
    out = decomp.clone()
    for level in range(1, decomp.levels + 1):
        if level in plan.zeroed_levels:
            out.set_detail(level, np.zeros_like(decomp.detail(level)))
        elif level in plan.thresholded_levels:
            out.set_detail(level, soft_threshold(decomp.detail(level), plan.threshold))
    return out


def denoise(signal, config: DenoiseConfig = DenoiseConfig(), bank: WaveletFilterBank = DB4) -> DenoiseResult:
    values = np.asarray(signal, dtype=np.float64)
    decomp = dwt(values, config.levels, bank, config.padding)
    sigma = estimate_sigma(decomp.detail(1))
    zeroed, thresholded = config.plan_levels()
    plan = ThresholdPlan(sigma=sigma, threshold=universal_threshold(sigma, values.size),
                         zeroed_levels=zeroed, thresholded_levels=thresholded)
    denoised = idwt(shrink(decomp, plan), bank)
    logger.debug("denoised %d points: sigma=%.6g threshold=%.6g", values.size, plan.sigma, plan.threshold)
    return DenoiseResult(denoised=denoised, noise=values - denoised, plans=[plan])


def denoise_series(values, config: DenoiseConfig = DenoiseConfig(),
                   bounds: Optional[Sequence[Tuple[int, int]]] = None) -> DenoiseResult:
    """Apply ``config.scope``: one pass over the whole series, or one pass per ``bounds`` segment.

    With per-split scope, points outside every segment are passed through unchanged.
    """
    values = np.asarray(values, dtype=np.float64)
    if config.scope == "full":
        return denoise(values, config)
    if not bounds:
        raise DecompositionError("per-split denoising needs partition bounds")
    denoised = values.copy()
    plans = []
    for start, stop in bounds:
        part = denoise(values[start:stop], config)
        denoised[start:stop] = part.denoised
        plans.extend(part.plans)
    return DenoiseResult(denoised=denoised, noise=values - denoised, plans=plans)


def signal_to_noise_db(clean, estimate) -> float:
    """SNR of ``estimate`` against the known ``clean`` signal, in decibels."""
    clean = np.asarray(clean, dtype=np.float64)
    error = np.asarray(estimate, dtype=np.float64) - clean
    return float(10.0 * np.log10(np.sum(clean ** 2) / np.sum(error ** 2)))

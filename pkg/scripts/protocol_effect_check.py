#!/usr/bin/env python3
"""
Desk-scale check of the denoising protocol on seeded synthetic prices.

For each seed, the same xLSTM-TS is trained once on denoised windows and once
on raw windows; both are scored on the raw prices, next to the naive baseline.
A second check runs the naive baseline on a series whose moves all have the
same magnitude, where its MASE should sit near 1.

Usage:
    python scripts/protocol_effect_check.py --runs 3
    python scripts/protocol_effect_check.py --runs 1 --points 1500 --max-epochs 10
    python scripts/protocol_effect_check.py --direction-baseline prediction
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from trendlab.data.series_io import SplitSpec, fit_normaliser, split  # noqa: E402
from trendlab.data.synthetic import constant_step, two_sines_ar  # noqa: E402
from trendlab.denoise.wavelet import DenoiseConfig, denoise_series  # noqa: E402
from trendlab.evaluation.protocol import EvaluationSettings, evaluate_protocol, partition_windows  # noqa: E402
from trendlab.logging_setup import configure_logging  # noqa: E402
from trendlab.models.naive import NaiveConfig, NaiveForecaster  # noqa: E402
from trendlab.models.xlstm_ts import MlstmBlockConfig, SlstmBlockConfig, XlstmTs, XlstmTsConfig  # noqa: E402
from trendlab.training.trainer import TrainConfig, fit  # noqa: E402

FRACTIONS = (0.7, 0.15, 0.15)
SETTINGS = EvaluationSettings()


def build_config(args: argparse.Namespace) -> XlstmTsConfig:
    rounding = args.embedding_dim
    return XlstmTsConfig(embedding_dim=args.embedding_dim, sequence_length=args.window,
                         context_length=args.window,
                         mlstm=MlstmBlockConfig(round_proj_up_to_multiple_of=rounding),
                         slstm=SlstmBlockConfig(round_proj_up_to_multiple_of=rounding))


def trained_report(inputs, original, bounds, config: XlstmTsConfig, train_config: TrainConfig, seed: int,
                   settings: EvaluationSettings):
    normaliser = fit_normaliser(inputs[bounds[0][0]:bounds[0][1]])
    scaled = normaliser.apply(inputs)
    model = XlstmTs(config, seed=seed)
    fit(model,
        partition_windows(scaled, bounds[0], config.sequence_length),
        partition_windows(scaled, bounds[1], config.sequence_length),
        train_config)
    return evaluate_protocol(model, original, inputs, bounds, normaliser, settings)


def check_seed(seed: int, args: argparse.Namespace) -> dict:
    series = two_sines_ar(args.points, seed=seed)
    parts = split(series, SplitSpec.from_fractions(series, FRACTIONS))
    bounds = parts.bounds
    original = series.close
    denoised = denoise_series(original, DenoiseConfig(levels=4)).denoised

    config = build_config(args)
    train_config = TrainConfig(learning_rate=args.learning_rate, batch_size=16, max_epochs=args.max_epochs,
                               early_stop_patience=10, seed=seed)
    settings = EvaluationSettings(direction_baseline=args.direction_baseline)
    started = time.perf_counter()
    smooth = trained_report(denoised, original, bounds, config, train_config, seed, settings)
    raw = trained_report(original, original, bounds, config, train_config, seed, settings)
    naive = evaluate_protocol(NaiveForecaster(NaiveConfig()), original, original, bounds,
                              fit_normaliser(original[bounds[0][0]:bounds[0][1]]), settings)
    return {
        "seed": seed,
        "denoised": smooth.test.directional.accuracy,
        "raw": raw.test.directional.accuracy,
        "naive": naive.test.directional.accuracy,
        "mase": smooth.test.regression.mase,
        "seconds": time.perf_counter() - started,
    }


def naive_mase_on_matched_steps(points: int) -> float:
    series = constant_step(points, seed=0)
    parts = split(series, SplitSpec.from_fractions(series, FRACTIONS))
    values = series.close
    report = evaluate_protocol(NaiveForecaster(NaiveConfig()), values, values, parts,
                               fit_normaliser(parts.train))
    return report.test.regression.mase


def main() -> int:
    parser = argparse.ArgumentParser(description="Paired denoised-vs-raw training on synthetic prices")
    parser.add_argument("--runs", type=int, default=3, help="Number of seeds")
    parser.add_argument("--points", type=int, default=3000)
    parser.add_argument("--window", type=int, default=30)
    parser.add_argument("--embedding-dim", type=int, default=16)
    parser.add_argument("--max-epochs", type=int, default=30)
    parser.add_argument("--learning-rate", type=float, default=1e-3)
    parser.add_argument("--direction-baseline", choices=["original", "denoised", "prediction"],
                        default=SETTINGS.direction_baseline, help="Price the predicted move is measured from")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args()
    configure_logging(verbose=args.verbose)

    print("Protocol effect check")
    print("=" * 72)
    print(f"{'seed':>4}  {'denoised':>9}  {'raw':>9}  {'naive':>9}  {'MASE':>7}  {'time':>7}")
    passed = True
    for seed in range(args.runs):
        row = check_seed(seed, args)
        mase = "n/a" if row["mase"] is None else f"{row['mase']:.3f}"
        print(f"{row['seed']:>4}  {row['denoised']:>9.2%}  {row['raw']:>9.2%}  {row['naive']:>9.2%}  "
              f"{mase:>7}  {row['seconds']:>6.1f}s")
        passed &= row["denoised"] >= 0.6 and row["denoised"] > row["raw"] and row["denoised"] > row["naive"]
        passed &= row["mase"] is not None and row["mase"] < 1.0

    naive_mase = naive_mase_on_matched_steps(args.points)
    print("-" * 72)
    print(f"naive MASE on equal-magnitude moves: {naive_mase:.3f} (expected within [0.8, 1.2])")
    passed &= 0.8 <= naive_mase <= 1.2
    print("=" * 72)
    print("PASS" if passed else "FAIL")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())

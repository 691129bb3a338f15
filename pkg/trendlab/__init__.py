"""
trendlab - wavelet-denoised next-step price forecasting.

Main modules:
- data.series_io: OHLCV parsing, chronological splits, scaling and windows
- denoise.wavelet: db4 decomposition and coefficient shrinkage
- core: tape-based reverse-mode differentiation and layers
- models: xLSTM-TS, TCN and naive forecasters
- training: Adam, clipping and the epoch loop
- evaluation: regression and directional metrics, report tables
- pipeline / cli: stage orchestration and the command line
"""

__version__ = "0.1.0"

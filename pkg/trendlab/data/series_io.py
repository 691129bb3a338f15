"""
Price-series ingestion, chronological splitting, scaling and windowing.

Input files follow the usual vendor OHLCV layout::

    Date,Open,High,Low,Close,Adj Close,Volume
    03/01/2000,1469.25,1478.00,1438.36,1455.22,1455.22,931800000

Dates may be DD/MM/YYYY (optionally with HH:MM[:SS]) or ISO-8601; ISO stamps
with a UTC offset are converted to naive UTC. Only the close price is
modelled; Adj Close is carried along but never used.
"""

from __future__ import annotations

import io
import logging
import re
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from trendlab.errors import (
    CsvParseError,
    DataValidationError,
    DegenerateRangeError,
    DuplicateTimestampError,
    InsufficientDataError,
    OrderingError,
    SplitError,
)

logger = logging.getLogger(__name__)

Frequency = Literal["daily", "hourly"]

REQUIRED_COLUMNS = ("date", "open", "high", "low", "close", "volume")
DATE_ALIASES = ("date", "datetime", "timestamp")
_DAY_FIRST_FORMATS = ("%d/%m/%Y", "%d/%m/%Y %H:%M", "%d/%m/%Y %H:%M:%S")
PARTITIONS = ("train", "validation", "test")


class PriceBar(BaseModel):
    """One OHLCV observation."""

    timestamp: datetime = Field(description="Time-zone naive bar timestamp")
    open: float = Field(description="Opening price")
    high: float = Field(description="Session high")
    low: float = Field(description="Session low")
    close: float = Field(description="Closing price, the modelled value")
    adj_close: float = Field(description="Adjusted close; parsed but not modelled")
    volume: float = Field(ge=0, description="Traded volume")


class PriceSeries(BaseModel):
    """Immutable column-wise price history.

    Columns are stored as read-only numpy arrays; ``timestamps`` is
    ``datetime64[s]`` and strictly increasing.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    symbol: str = Field(default="", description="Instrument identifier")
    frequency: Frequency = Field(default="daily", description="Bar frequency")
    timestamps: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    adj_close: np.ndarray
    volume: np.ndarray

    @classmethod
    def from_columns(cls, timestamps, close, *, open=None, high=None, low=None,  # noqa: A002
                     adj_close=None, volume=None, symbol: str = "",
                     frequency: Frequency = "daily") -> "PriceSeries":
        """Build and validate a series; missing OHLC columns default to ``close``."""
        close = np.asarray(close, dtype=np.float64)

        def column(values, default):
            arr = np.array(default if values is None else values, dtype=np.float64)
            arr.setflags(write=False)
            return arr

        stamps = np.array(timestamps, dtype="datetime64[s]")
        stamps.setflags(write=False)
        series = cls(
            symbol=symbol,
            frequency=frequency,
            timestamps=stamps,
            open=column(open, close),
            high=column(high, close),
            low=column(low, close),
            close=column(close, close),
            adj_close=column(adj_close, close),
            volume=column(volume, np.zeros_like(close)),
        )
        series.validate_invariants()
        return series

    def __len__(self) -> int:
        return int(self.close.shape[0])

    @property
    def bars(self) -> List[PriceBar]:
        return [
            PriceBar(
                timestamp=pd.Timestamp(self.timestamps[i]).to_pydatetime(),
                open=self.open[i], high=self.high[i], low=self.low[i], close=self.close[i],
                adj_close=self.adj_close[i], volume=self.volume[i],
            )
            for i in range(len(self))
        ]

    def take(self, start: int, stop: int) -> "PriceSeries":
        """Positional sub-series ``[start, stop)``."""
        return PriceSeries.from_columns(
            self.timestamps[start:stop], self.close[start:stop],
            open=self.open[start:stop], high=self.high[start:stop], low=self.low[start:stop],
            adj_close=self.adj_close[start:stop], volume=self.volume[start:stop],
            symbol=self.symbol, frequency=self.frequency,
        )

    def validate_invariants(self) -> None:
        n = len(self)
        for name in ("timestamps", "open", "high", "low", "adj_close", "volume"):
            if getattr(self, name).shape != (n,):
                raise DataValidationError(f"column {name} has shape {getattr(self, name).shape}, expected ({n},)")
        values = np.stack([self.open, self.high, self.low, self.close, self.adj_close, self.volume])
        if not np.all(np.isfinite(values)):
            bad = int(np.argmin(np.all(np.isfinite(values), axis=0)))
            raise DataValidationError(f"null or non-finite value at row {bad}")
        _check_bar_ranges(self.open, self.high, self.low, self.close, self.volume, lines=None)
        if n > 1:
            steps = np.diff(self.timestamps.astype(np.int64))
            if np.any(steps == 0):
                at = int(np.argmax(steps == 0)) + 1
                raise DuplicateTimestampError(f"duplicate timestamp {self.timestamps[at]} at row {at}")
            if np.any(steps < 0):
                at = int(np.argmax(steps < 0)) + 1
                raise OrderingError(f"timestamp {self.timestamps[at]} at row {at} is earlier than its predecessor")
        if self.frequency == "daily" and n:
            _check_business_days(self.timestamps, lines=None)


def _check_bar_ranges(open_, high, low, close, volume, lines: Optional[Sequence[int]]) -> None:
    bad_range = (low > open_) | (open_ > high) | (low > close) | (close > high)
    if np.any(bad_range):
        at = int(np.argmax(bad_range))
        where = lines[at] if lines is not None else None
        raise DataValidationError(
            f"bar violates low <= open/close <= high (open={open_[at]}, high={high[at]}, "
            f"low={low[at]}, close={close[at]})", where,
        )
    if np.any(volume < 0):
        at = int(np.argmax(volume < 0))
        raise DataValidationError(f"negative volume {volume[at]}", lines[at] if lines is not None else None)


def _check_business_days(stamps: np.ndarray, lines: Optional[Sequence[int]]) -> None:
    busday = np.is_busday(stamps.astype("datetime64[D]"))
    if not np.all(busday):
        at = int(np.argmin(busday))
        raise DataValidationError(
            f"daily series contains non-business day {np.datetime_as_string(stamps[at], unit='D')}",
            lines[at] if lines is not None else None,
        )


def _parse_stamps(text: pd.Series) -> pd.Series:
    """Day-first vendor formats first, then ISO-8601; offsets are converted to UTC and dropped."""
    parsed = pd.Series(pd.NaT, index=text.index, dtype="datetime64[ns]")
    for fmt in _DAY_FIRST_FORMATS:
        parsed = parsed.combine_first(pd.to_datetime(text, format=fmt, errors="coerce"))
    iso = pd.to_datetime(text, format="ISO8601", utc=True, errors="coerce").dt.tz_convert(None)
    return parsed.combine_first(iso)


def parse_timestamp(text: str) -> datetime:
    """Parse DD/MM/YYYY[ HH:MM[:SS]] or ISO-8601 into a naive UTC datetime."""
    stamp = _parse_stamps(pd.Series([text.strip()], dtype=object)).iloc[0]
    if pd.isna(stamp):
        raise ValueError(f"unrecognised date {text!r}")
    return stamp.to_pydatetime()


def _header_index(header: Sequence[str]) -> Dict[str, int]:
    names = [str(h).strip().lower().replace("_", " ") for h in header]
    index: Dict[str, int] = {}
    for pos, name in enumerate(names):
        key = "date" if name in DATE_ALIASES else name
        index.setdefault(key, pos)
    missing = [c for c in REQUIRED_COLUMNS if c not in index]
    if missing:
        raise CsvParseError(f"header is missing columns: {', '.join(c.title() for c in missing)}", 1)
    return index


def _read_cells(stream: TextIO) -> pd.DataFrame:
    """Every field as stripped text; row ``i`` of the frame is line ``i + 2`` of the file."""
    try:
        frame = pd.read_csv(stream, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise CsvParseError("no data rows") from None
    except pd.errors.ParserError as exc:
        line = re.search(r"line (\d+)", str(exc))
        raise CsvParseError(str(exc).strip(), int(line.group(1)) if line else None) from None
    return frame.fillna("").apply(lambda column: column.str.strip())


def _first_line(mask: pd.Series, lines: np.ndarray) -> int:
    return int(lines[int(np.argmax(mask.to_numpy()))])


def parse_csv(raw_text: Union[str, TextIO], frequency: Frequency = "daily", symbol: str = "") -> PriceSeries:
    """Parse OHLCV CSV text into a validated, ascending ``PriceSeries``.

    A file given in strictly descending order is reversed. Any other
    out-of-order timestamp is an ``OrderingError``. Timestamps with a UTC
    offset are converted to UTC.
    """
    stream = io.StringIO(raw_text) if isinstance(raw_text, str) else raw_text
    cells = _read_cells(stream)
    header = list(cells.columns)
    columns = _header_index(header)
    adj_col = columns.get("adj close")

    lines = np.arange(len(cells)) + 2
    keep = ~(cells == "").all(axis=1).to_numpy()
    cells, lines = cells[keep].reset_index(drop=True), lines[keep]
    if cells.empty:
        raise CsvParseError("no data rows")

    for name in REQUIRED_COLUMNS + (("adj close",) if adj_col is not None else ()):
        empty = cells.iloc[:, columns[name]] == ""
        if empty.any():
            raise DataValidationError(f"empty value in column {header[columns[name]].strip()}",
                                      _first_line(empty, lines))

    stamps = _parse_stamps(cells.iloc[:, columns["date"]])
    if stamps.isna().any():
        at = int(np.argmax(stamps.isna().to_numpy()))
        raise CsvParseError(f"unrecognised date {cells.iloc[at, columns['date']]!r}", int(lines[at]))

    numeric_names = ("open", "high", "low", "close", "volume") + (("adj close",) if adj_col is not None else ())
    numbers = {}
    for name in numeric_names:
        text = cells.iloc[:, columns[name]].str.replace(",", "", regex=False)
        values = pd.to_numeric(text, errors="coerce")
        unparsed = values.isna() & ~text.str.fullmatch(r"[+-]?nan", case=False)
        if unparsed.any():
            raise CsvParseError("non-numeric price or volume field", _first_line(unparsed, lines))
        numbers[name] = values.to_numpy(dtype=np.float64)
    numbers.setdefault("adj close", numbers["close"])
    data = np.column_stack([numbers[c] for c in ("open", "high", "low", "close", "volume", "adj close")])
    finite = np.all(np.isfinite(data), axis=1)
    if not np.all(finite):
        raise DataValidationError("null or non-finite numeric value", int(lines[int(np.argmin(finite))]))

    ts = stamps.to_numpy().astype("datetime64[s]")
    ts, data, lines = _ascending(ts, data, [int(line) for line in lines])

    open_, high, low, close, volume, adj_close = data.T
    _check_bar_ranges(open_, high, low, close, volume, lines)
    if frequency == "daily":
        _check_business_days(ts, lines)

    logger.debug("parsed %d bars for %s (%s)", len(close), symbol or "<unnamed>", frequency)
    return PriceSeries.from_columns(ts, close, open=open_, high=high, low=low, adj_close=adj_close,
                                    volume=volume, symbol=symbol, frequency=frequency)


def _ascending(ts: np.ndarray, data: np.ndarray, lines: List[int]):
    if len(ts) < 2:
        return ts, data, lines
    steps = np.diff(ts.astype(np.int64))
    if np.any(steps == 0):
        at = int(np.argmax(steps == 0)) + 1
        raise DuplicateTimestampError(f"duplicate timestamp {ts[at]}", lines[at])
    if np.all(steps < 0):
        return ts[::-1], data[::-1], lines[::-1]
    if np.any(steps < 0):
        at = int(np.argmax(steps < 0)) + 1
        raise OrderingError(f"line {lines[at]}: timestamp {ts[at]} is earlier than the previous row")
    return ts, data, lines


def read_csv_file(path: Union[str, Path], frequency: Frequency = "daily", symbol: Optional[str] = None) -> PriceSeries:
    path = Path(path)
    with path.open("r", encoding="utf-8-sig", newline="") as handle:
        return parse_csv(handle, frequency=frequency, symbol=symbol if symbol is not None else path.stem)


def series_frame(series: PriceSeries) -> pd.DataFrame:
    frame = pd.DataFrame({
        "Date": pd.to_datetime(series.timestamps),
        "Open": series.open,
        "High": series.high,
        "Low": series.low,
        "Close": series.close,
        "Adj Close": series.adj_close,
        "Volume": series.volume,
    })
    return frame


def write_series_csv(series: PriceSeries, path: Optional[Union[str, Path]] = None) -> str:
    """Canonical dump with ISO-8601 timestamps; returns the CSV text and writes it when ``path`` is given."""
    date_format = "%Y-%m-%d" if series.frequency == "daily" else "%Y-%m-%dT%H:%M:%S"
    text = series_frame(series).to_csv(index=False, date_format=date_format, float_format="%.17g",
                                       lineterminator="\n")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# -- splitting ----------------------------------------------------------------

class SplitSpec(BaseModel):
    """Three consecutive half-open timestamp ranges: train, validation, test."""

    model_config = ConfigDict(frozen=True)

    train_range: Tuple[datetime, datetime] = Field(description="[start, end) of the training partition")
    val_range: Tuple[datetime, datetime] = Field(description="[start, end) of the validation partition")
    test_range: Tuple[datetime, datetime] = Field(description="[start, end) of the test partition")
    declared_fractions: Tuple[float, float, float] = Field(description="Nominal share of each partition")

    def ranges(self) -> Tuple[Tuple[datetime, datetime], ...]:
        return (self.train_range, self.val_range, self.test_range)

    def check(self) -> None:
        if abs(sum(self.declared_fractions) - 1.0) > 0.01:
            raise SplitError(f"declared fractions {self.declared_fractions} do not sum to 1.0")
        for name, (start, end) in zip(PARTITIONS, self.ranges()):
            if end < start:
                raise SplitError(f"{name} range ends before it starts")
        if self.train_range[1] > self.val_range[0] or self.val_range[1] > self.test_range[0]:
            raise SplitError("split ranges overlap or are out of order")

    @classmethod
    def from_inclusive_dates(cls, train: Tuple[str, str], val: Tuple[str, str], test: Tuple[str, str],
                             fractions: Tuple[float, float, float]) -> "SplitSpec":
        """Ranges given as inclusive calendar dates; each end is extended to cover its whole day."""
        def half_open(pair):
            start, end = (parse_timestamp(p) for p in pair)
            return start, end.replace(hour=0, minute=0, second=0) + timedelta(days=1)

        spec = cls(train_range=half_open(train), val_range=half_open(val), test_range=half_open(test),
                   declared_fractions=fractions)
        spec.check()
        return spec

    @classmethod
    def published_daily(cls) -> "SplitSpec":
        return cls.from_inclusive_dates(("01/01/2000", "31/12/2020"), ("01/01/2021", "30/06/2022"),
                                        ("01/07/2022", "31/12/2023"), (0.86, 0.07, 0.07))

    @classmethod
    def published_hourly(cls) -> "SplitSpec":
        return cls.from_inclusive_dates(("13/07/2020", "30/06/2023"), ("01/07/2023", "31/12/2023"),
                                        ("01/01/2024", "11/07/2024"), (0.75, 0.125, 0.125))

    @classmethod
    def from_fractions(cls, series: PriceSeries, fractions: Tuple[float, float, float]) -> "SplitSpec":
        """Ranges placed at the timestamps that realise ``fractions`` by bar count."""
        n = len(series)
        n_train = int(round(fractions[0] * n))
        n_val = int(round(fractions[1] * n))
        ts = [pd.Timestamp(t).to_pydatetime() for t in series.timestamps]
        end = ts[-1] + timedelta(seconds=1)

        def at(i: int) -> datetime:
            return ts[i] if i < n else end

        spec = cls(train_range=(ts[0], at(n_train)), val_range=(at(n_train), at(n_train + n_val)),
                   test_range=(at(n_train + n_val), end), declared_fractions=tuple(fractions))
        spec.check()
        return spec


class SplitResult(BaseModel):
    """Partitions plus where they sit in the parent series."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    train: PriceSeries
    validation: PriceSeries
    test: PriceSeries
    bounds: Tuple[Tuple[int, int], Tuple[int, int], Tuple[int, int]] = Field(
        description="Half-open positional bounds of each partition in the parent series")
    realised_fractions: Tuple[float, float, float]

    def partitions(self) -> Tuple[PriceSeries, PriceSeries, PriceSeries]:
        return (self.train, self.validation, self.test)


def split(series: PriceSeries, spec: SplitSpec) -> SplitResult:
    """Partition ``series`` by the three timestamp ranges of ``spec``."""
    spec.check()
    stamps = series.timestamps
    bounds = []
    for name, (start, end) in zip(PARTITIONS, spec.ranges()):
        lo = int(np.searchsorted(stamps, np.datetime64(start, "s"), side="left"))
        hi = int(np.searchsorted(stamps, np.datetime64(end, "s"), side="left"))
        if hi <= lo:
            raise SplitError(f"{name} partition is empty for range {start} .. {end}")
        bounds.append((lo, hi))
    total = sum(hi - lo for lo, hi in bounds)
    realised = tuple((hi - lo) / total for lo, hi in bounds)
    logger.info("split %s: %s bars (fractions %s)", series.symbol or "<unnamed>",
                "/".join(str(hi - lo) for lo, hi in bounds), ", ".join(f"{f:.3f}" for f in realised))
    train, val, test = (series.take(lo, hi) for lo, hi in bounds)
    return SplitResult(train=train, validation=val, test=test, bounds=tuple(bounds), realised_fractions=realised)


# -- scaling and windowing --------------------------------------------------

class Normaliser(BaseModel):
    """Min-max scaler fitted on training closes; never clips."""

    model_config = ConfigDict(frozen=True)

    min: float = Field(description="Smallest training close")
    max: float = Field(description="Largest training close")

    def apply(self, values):
        return (np.asarray(values, dtype=np.float64) - self.min) / (self.max - self.min)

    def inverse(self, values):
        return np.asarray(values, dtype=np.float64) * (self.max - self.min) + self.min


def fit_normaliser(train: Union[PriceSeries, np.ndarray]) -> Normaliser:
    values = train.close if isinstance(train, PriceSeries) else np.asarray(train, dtype=np.float64)
    if values.size < 2 or np.unique(values).size < 2:
        raise DegenerateRangeError("normaliser needs at least two distinct training values")
    return Normaliser(min=float(values.min()), max=float(values.max()))


class WindowedDataset(BaseModel):
    """Supervised pairs: each input window and the value that follows it."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    inputs: np.ndarray = Field(description="(N, L) input windows")
    targets: np.ndarray = Field(description="(N,) next values")
    window_length: int
    source_indices: np.ndarray = Field(description="Parent-series position of each target")

    def __len__(self) -> int:
        return int(self.targets.shape[0])


def make_windows(values, window_length: int, offset: int = 0) -> WindowedDataset:
    """Window ``values`` with stride 1; ``offset`` places the sequence inside its parent series."""
    values = np.asarray(values, dtype=np.float64)
    if window_length < 1:
        raise InsufficientDataError(f"window length must be positive, got {window_length}")
    if values.shape[0] <= window_length:
        raise InsufficientDataError(
            f"series of length {values.shape[0]} is too short for windows of length {window_length}")
    inputs = np.lib.stride_tricks.sliding_window_view(values, window_length)[:-1].copy()
    targets = values[window_length:].copy()
    indices = np.arange(window_length, values.shape[0]) + offset
    return WindowedDataset(inputs=inputs, targets=targets, window_length=window_length, source_indices=indices)

"""
Tests for CSV ingestion, splitting, scaling and windowing.
Run with: pytest -q tests/test_series_io.py
"""

from datetime import datetime

import numpy as np
import pytest

from trendlab.data.series_io import (
    Normaliser,
    PriceSeries,
    SplitSpec,
    fit_normaliser,
    make_windows,
    parse_csv,
    parse_timestamp,
    read_csv_file,
    split,
    write_series_csv,
)
from trendlab.data.synthetic import business_days, ramp
from trendlab.errors import (
    CsvParseError,
    DataValidationError,
    DegenerateRangeError,
    DuplicateTimestampError,
    InsufficientDataError,
    OrderingError,
    SplitError,
)

HEADER = "Date,Open,High,Low,Close,Volume\n"


def test_parse_published_row():
    """A vendor-style row keeps its close and volume."""
    series = parse_csv(HEADER + "03/01/2000,1469.25,1478.00,1438.36,1455.22,931800000\n")
    bar = series.bars[0]
    assert bar.close == 1455.22
    assert bar.volume == 931800000
    assert bar.timestamp == datetime(2000, 1, 3)
    assert bar.adj_close == 1455.22


def test_empty_file_has_no_data_rows():
    with pytest.raises(CsvParseError, match="no data rows"):
        parse_csv("")
    with pytest.raises(CsvParseError, match="no data rows"):
        parse_csv(HEADER)


def test_duplicate_timestamp_rejected():
    text = HEADER + "03/01/2000,1,2,0.5,1.5,10\n03/01/2000,1,2,0.5,1.5,10\n"
    with pytest.raises(DuplicateTimestampError):
        parse_csv(text)


def test_descending_file_is_reversed():
    text = HEADER + "05/01/2000,3,3,3,3,1\n04/01/2000,2,2,2,2,1\n03/01/2000,1,1,1,1,1\n"
    series = parse_csv(text)
    np.testing.assert_array_equal(series.close, [1.0, 2.0, 3.0])


def test_unordered_file_rejected():
    text = HEADER + "03/01/2000,1,1,1,1,1\n05/01/2000,3,3,3,3,1\n04/01/2000,2,2,2,2,1\n"
    with pytest.raises(OrderingError):
        parse_csv(text)


def test_parse_errors_carry_line_numbers():
    with pytest.raises(CsvParseError) as missing_column:
        parse_csv("Date,Open,High,Close,Volume\n03/01/2000,1,1,1,1\n")
    assert missing_column.value.line == 1

    with pytest.raises(CsvParseError) as short_row:
        parse_csv(HEADER + "03/01/2000,1,1,1,1,1\n04/01/2000,1,1,1\n")
    assert short_row.value.line == 3

    with pytest.raises(DataValidationError) as empty_close:
        parse_csv(HEADER + "03/01/2000,1,1,1,,1\n")
    assert empty_close.value.line == 2


def test_offset_timestamps_converted_to_utc():
    text = "Date,Open,High,Low,Close,Volume\n2000-01-03T23:30:00-05:00,1,1,1,1,1\n2000-01-04T09:00:00Z,1,1,1,1,1\n"
    series = parse_csv(text, frequency="hourly")
    assert [bar.timestamp for bar in series.bars] == [datetime(2000, 1, 4, 4, 30), datetime(2000, 1, 4, 9, 0)]
    assert parse_timestamp("2021-06-30T20:00:00+02:00") == datetime(2021, 6, 30, 18, 0)
    assert parse_timestamp("30/06/2021") == datetime(2021, 6, 30)
    with pytest.raises(ValueError, match="unrecognised date"):
        parse_timestamp("June 30")


def test_non_numeric_and_unparsable_dates_report_their_line():
    with pytest.raises(CsvParseError, match="non-numeric") as text_price:
        parse_csv(HEADER + "03/01/2000,1,1,1,1,1\n04/01/2000,1,one,1,1,1\n")
    assert text_price.value.line == 3
    with pytest.raises(CsvParseError, match="unrecognised date") as bad_date:
        parse_csv(HEADER + "\n03/01/2000,1,1,1,1,1\n2000-13-45,1,1,1,1,1\n")
    assert bad_date.value.line == 4
    with pytest.raises(DataValidationError, match="non-finite"):
        parse_csv(HEADER + "03/01/2000,1,1,1,nan,1\n")


def test_bar_range_and_business_day_checks():
    with pytest.raises(DataValidationError):
        parse_csv(HEADER + "03/01/2000,1,2,0.5,3,10\n")  # close above high
    with pytest.raises(DataValidationError, match="business day"):
        parse_csv(HEADER + "01/01/2000,1,1,1,1,1\n")  # a Saturday
    hourly = parse_csv(HEADER + "01/01/2000 10:00,1,1,1,1,1\n", frequency="hourly")
    assert len(hourly) == 1


def test_iso_dates_and_round_trip(tmp_path):
    text = "timestamp,open,high,low,close,adj_close,volume\n2000-01-03,1,2,0.5,1.5,1.4,10\n2000-01-04,1.5,2,1,1.75,1.7,12\n"
    series = parse_csv(text, symbol="ABC")
    path = tmp_path / "ABC.csv"
    dumped = write_series_csv(series, path)
    again = read_csv_file(path)
    assert again.symbol == "ABC"
    np.testing.assert_array_equal(again.close, series.close)
    np.testing.assert_array_equal(again.adj_close, series.adj_close)
    assert dumped.splitlines()[1].startswith("2000-01-03,")


def test_sample_file_parses(sample_csv_path):
    series = read_csv_file(sample_csv_path)
    assert len(series) == 1000
    assert series.symbol == "sample_daily"
    assert np.all(np.diff(series.timestamps.astype(np.int64)) > 0)


def test_series_arrays_are_read_only():
    series = ramp(5)
    with pytest.raises(ValueError):
        series.close[0] = 1.0


def test_published_daily_split_boundaries():
    """Business days 2000-01-03 .. 2023-12-29 land in the published daily ranges."""
    stamps = np.arange(np.datetime64("2000-01-01"), np.datetime64("2024-01-01"))
    stamps = stamps[np.is_busday(stamps)]
    series = PriceSeries.from_columns(stamps, np.linspace(10, 20, stamps.size))
    result = split(series, SplitSpec.published_daily())
    assert str(result.train.timestamps[-1])[:10] == "2020-12-31"
    assert str(result.validation.timestamps[0])[:10] == "2021-01-01"
    assert str(result.validation.timestamps[-1])[:10] == "2022-06-30"
    assert str(result.test.timestamps[0])[:10] == "2022-07-01"
    assert str(result.test.timestamps[-1])[:10] == "2023-12-29"
    assert sum(len(p) for p in result.partitions()) == len(series)


def test_split_with_empty_partition_fails():
    series = ramp(50)
    spec = SplitSpec.from_inclusive_dates(("01/01/2000", "31/12/2010"), ("01/01/2011", "31/12/2011"),
                                          ("01/01/2012", "31/12/2012"), (0.8, 0.1, 0.1))
    with pytest.raises(SplitError, match="validation"):
        split(series, spec)


def test_split_by_fractions_counts():
    series = ramp(100)
    result = split(series, SplitSpec.from_fractions(series, (0.8, 0.1, 0.1)))
    assert [len(p) for p in result.partitions()] == [80, 10, 10]
    assert result.bounds == ((0, 80), (80, 90), (90, 100))
    assert result.realised_fractions == pytest.approx((0.8, 0.1, 0.1))


def test_normaliser():
    norm = fit_normaliser(np.array([10.0, 20.0]))
    assert norm.apply(15.0) == pytest.approx(0.5)
    assert norm.apply(10.0) == 0.0
    assert norm.apply(20.0) == 1.0
    x = np.random.default_rng(0).uniform(10.0, 20.0, 1000)
    assert np.max(np.abs(norm.inverse(norm.apply(x)) - x)) < 1e-12
    # values outside the training range are not clipped
    assert norm.apply(30.0) == pytest.approx(2.0)


def test_normaliser_needs_a_range():
    with pytest.raises(DegenerateRangeError):
        fit_normaliser(np.array([5.0, 5.0, 5.0]))
    assert Normaliser(min=0.0, max=2.0).inverse(0.5) == pytest.approx(1.0)


def test_make_windows():
    data = make_windows([0.1, 0.2, 0.3, 0.4], 2)
    np.testing.assert_allclose(data.inputs, [[0.1, 0.2], [0.2, 0.3]])
    np.testing.assert_allclose(data.targets, [0.3, 0.4])
    np.testing.assert_array_equal(data.source_indices, [2, 3])

    assert len(make_windows(np.arange(151.0), 150)) == 1

    values = np.arange(6000.0)
    big = make_windows(values, 150, offset=10)
    assert len(big) == 5850
    assert big.targets[-1] == values[-1]
    # each window ends just before its target's parent position
    assert big.inputs[7, -1] == values[big.source_indices[7] - 10 - 1]


def test_make_windows_too_short():
    with pytest.raises(InsufficientDataError):
        make_windows(np.arange(150.0), 150)


def test_business_days_skip_weekends():
    days = business_days(10)
    assert np.all(np.is_busday(days))
    assert len(np.unique(days)) == 10

import logging

import numpy as np
import pandas as pd
import pytest

from histcal.eval.series import CUMERR_COLUMNS, SERIES_COLUMNS, export_cumulative, export_series, read_series
from histcal.utils.errors import DataError, DimensionError, DomainError
from histcal.utils.time_utils import hourly_range

logger = logging.getLogger('test_code')


def test_series_round_trip(tmp_path, rng):
    stamps = hourly_range("2024-03-01T00:00:00", 12)
    ref, uncal, cal = rng.uniform(0, 80, (3, 12))
    path = export_series(stamps, ref, uncal, cal, tmp_path / "series.csv")
    frame = read_series(path)
    assert list(frame.columns) == SERIES_COLUMNS
    assert len(frame) == 12
    assert np.array_equal(frame["reference"].to_numpy(), ref)
    assert np.array_equal(frame["calibrated"].to_numpy(), cal)
    assert np.array_equal(frame["uncalibrated"].to_numpy(), uncal)
    assert frame["timestamp"][0] == np.datetime64("2024-03-01T00:00:00")
    assert path.read_text().splitlines()[1].startswith("2024-03-01T00:00:00Z,")


def test_series_without_uncalibrated(tmp_path):
    stamps = hourly_range("2024-03-01T00:00:00", 3)
    path = export_series(stamps, [1.0, 2.0, 3.0], None, [1.5, 2.5, 2.0], tmp_path / "series.csv")
    assert path.read_text().splitlines()[1] == "2024-03-01T00:00:00Z,1,,1.5"
    assert read_series(path)["uncalibrated"].isna().all()


def test_series_rejects_bad_values(tmp_path):
    stamps = hourly_range("2024-03-01T00:00:00", 3)
    with pytest.raises(DomainError):
        export_series(stamps, [1.0, np.nan, 3.0], None, [1.0, 2.0, 3.0], tmp_path / "s.csv")
    with pytest.raises(DimensionError):
        export_series(stamps, [1.0, 2.0], None, [1.0, 2.0, 3.0], tmp_path / "s.csv")
    assert not (tmp_path / "s.csv").exists()


def test_read_series_errors(tmp_path):
    with pytest.raises(DataError):
        read_series(tmp_path / "none.csv")
    other = tmp_path / "other.csv"
    other.write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        read_series(other)


def test_cumulative_export(tmp_path):
    stamps = hourly_range("2024-03-01T00:00:00", 4)
    path = export_cumulative(stamps, [0.5, 1.0, 1.0, 2.25], tmp_path / "cumerr.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == CUMERR_COLUMNS
    assert frame["cumulative_abs_error"].tolist() == [0.5, 1.0, 1.0, 2.25]
    assert frame["timestamp"].iloc[-1] == "2024-03-01T03:00:00Z"

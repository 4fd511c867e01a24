"""Plot-ready CSV exports of prediction and cumulative-error series."""

import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from histcal.utils.errors import DataError, DimensionError, DomainError
from histcal.utils.time_utils import format_timestamp, parse_timestamp

logger = logging.getLogger("SeriesExport")

SERIES_COLUMNS = ["timestamp", "reference", "uncalibrated", "calibrated"]
CUMERR_COLUMNS = ["timestamp", "cumulative_abs_error"]
FLOAT_FORMAT = "%.17g"


def _column(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if arr.shape[0] != n:
        raise DimensionError(f"{name} has {arr.shape[0]} values for {n} timestamps")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains NaN or infinite values")
    return arr


def _stamps(timestamps) -> list[str]:
    return [format_timestamp(t) for t in np.asarray(timestamps, dtype="datetime64[s]")]


def export_series(timestamps, y_ref, y_uncal: Optional[np.ndarray], y_cal, path: Path) -> Path:
    """Write timestamp, reference, uncalibrated, calibrated.

    ``y_uncal=None`` (no raw reading in label units) leaves that column blank.
    """
    n = len(timestamps)
    frame = pd.DataFrame({
        "timestamp": _stamps(timestamps),
        "reference": _column(y_ref, n, "reference"),
        "uncalibrated": np.full(n, np.nan) if y_uncal is None else _column(y_uncal, n, "uncalibrated"),
        "calibrated": _column(y_cal, n, "calibrated"),
    }, columns=SERIES_COLUMNS)
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    logger.info("wrote %d series row(s) to %s", n, path)
    return path


def read_series(path: Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"series file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip", dtype={"timestamp": str})
    if list(frame.columns) != SERIES_COLUMNS:
        raise DataError(f"series header mismatch in {path}: {list(frame.columns)}")
    frame["timestamp"] = [parse_timestamp(t) for t in frame["timestamp"]]
    return frame


def export_cumulative(timestamps, cumulative, path: Path) -> Path:
    n = len(timestamps)
    frame = pd.DataFrame({
        "timestamp": _stamps(timestamps),
        "cumulative_abs_error": _column(cumulative, n, "cumulative_abs_error"),
    }, columns=CUMERR_COLUMNS)
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path

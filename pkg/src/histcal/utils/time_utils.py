"""Timestamp parsing for sensor and feature CSV files."""

from datetime import datetime, timezone

import numpy as np


def parse_timestamp(value: str) -> np.datetime64:
    """Parse a timestamp string as Unix seconds or ISO-8601, returned as UTC datetime64[s].

    Naive ISO strings are taken to be UTC; offsets are converted to UTC.

    Raises:
        ValueError: If the string is neither format

    Examples:
        >>> str(parse_timestamp("1704067200"))
        '2024-01-01T00:00:00'
        >>> str(parse_timestamp("2024-01-01T01:00:00+01:00"))
        '2024-01-01T00:00:00'
    """
    value = value.strip()
    try:
        seconds = float(value)
        return np.datetime64(int(round(seconds)), 's')
    except ValueError:
        pass

    try:
        dt = datetime.fromisoformat(value.replace('Z', '+00:00'))
    except (ValueError, AttributeError):
        raise ValueError(
            f"Invalid timestamp format: '{value}'. "
            "Expected Unix timestamp (e.g., '1704067200') "
            "or ISO datetime (e.g., '2024-01-01T00:00:00')"
        )
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt.replace(microsecond=0), 's')


def format_timestamp(ts: np.datetime64) -> str:
    """ISO-8601 with an explicit UTC suffix."""
    return str(np.datetime64(ts, 's')) + "Z"


def hourly_range(start: str, count: int) -> np.ndarray:
    """count consecutive hourly datetime64[s] stamps starting at start."""
    first = parse_timestamp(start)
    return first + np.arange(count).astype('timedelta64[h]').astype('timedelta64[s]')


def hours(td) -> np.ndarray:
    """Convert timedelta64 values to float hours."""
    return np.asarray(td).astype('timedelta64[s]').astype(np.float64) / 3600.0

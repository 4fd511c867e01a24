import logging
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Optional

import numpy as np
import pytest

from histcal.utils.errors import ConfigError
from histcal.utils.seeds import CONSUMERS, derive_rng
from histcal.utils.serializers import config_from_dict, dumps, read_json, serialize_value, write_json
from histcal.utils.time_utils import format_timestamp, hourly_range, hours, parse_timestamp

logger = logging.getLogger('test_code')


class Color(StrEnum):
    red = "red"


@dataclass
class Inner:
    values: np.ndarray
    hidden: int = field(default=0, repr=False)


@dataclass
class Outer:
    name: str
    color: Color
    inner: Inner
    path: Path
    limit: Optional[float] = None


def test_serialize_nested_values():
    value = Outer(name="x", color=Color.red, inner=Inner(np.array([1.0, 2.5])), path=Path("/tmp/a"),
                  limit=float("inf"))
    assert serialize_value(value) == {"name": "x", "color": "red", "inner": {"values": [1.0, 2.5]},
                                      "path": "/tmp/a", "limit": "inf"}
    assert serialize_value(np.float64(0.5)) == 0.5
    assert serialize_value({1: (np.int64(3),)}) == {"1": [3]}


def test_dumps_is_sorted_and_newline_terminated():
    text = dumps({"b": 1, "a": [1, 2]})
    assert text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')


def test_write_and_read_json(tmp_path):
    path = write_json(tmp_path / "x.json", {"k": np.arange(3)})
    assert read_json(path) == {"k": [0, 1, 2]}


def test_config_from_dict():
    @dataclass
    class Small:
        a: int = 1
        b: str = "x"

    assert config_from_dict(Small, {"a": 3}) == Small(a=3)
    with pytest.raises(ConfigError):
        config_from_dict(Small, {"c": 1})
    with pytest.raises(ConfigError):
        config_from_dict(Small, [1, 2])


def test_parse_timestamp_formats():
    assert parse_timestamp("1704067200") == np.datetime64("2024-01-01T00:00:00")
    assert parse_timestamp("2024-01-01T00:00:00Z") == np.datetime64("2024-01-01T00:00:00")
    assert parse_timestamp(" 2024-01-01T01:00:00+01:00 ") == np.datetime64("2024-01-01T00:00:00")
    with pytest.raises(ValueError):
        parse_timestamp("yesterday")


def test_hourly_helpers():
    stamps = hourly_range("2024-01-01T22:00:00", 4)
    assert format_timestamp(stamps[-1]) == "2024-01-02T01:00:00Z"
    assert np.array_equal(hours(np.diff(stamps)), [1.0, 1.0, 1.0])


def test_derived_streams_are_independent_and_repeatable():
    a = derive_rng(3, "batch_source").random(5)
    assert np.array_equal(a, derive_rng(3, "batch_source").random(5))
    assert not np.array_equal(a, derive_rng(3, "batch_target_labeled").random(5))
    assert not np.array_equal(a, derive_rng(4, "batch_source").random(5))
    assert len(set(CONSUMERS.values())) == len(CONSUMERS)
    with pytest.raises(ConfigError):
        derive_rng(0, "nobody")
    with pytest.raises(ConfigError):
        derive_rng(-1, "synthetic")

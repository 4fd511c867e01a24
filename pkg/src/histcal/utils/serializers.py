import dataclasses
import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Type, TypeVar

import numpy as np

from histcal.utils.errors import ConfigError

T = TypeVar("T")


def serialize_value(value: Any, field_name: str = None) -> Any:
    """Turn dataclasses, enums, paths and numpy values into plain JSON values."""
    if value is None:
        return None

    if isinstance(value, Enum):
        return value.value

    if isinstance(value, np.ndarray):
        return [serialize_value(v) for v in value.tolist()]

    if isinstance(value, np.generic):
        value = value.item()

    if isinstance(value, float) and not math.isfinite(value):
        # JSON has no inf/nan
        return str(value)

    if isinstance(value, Path):
        return str(value)

    # Recursively handle nested dataclasses
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        nested_dict = {}
        for field in dataclasses.fields(value):
            if not field.repr:
                continue
            nested_dict[field.name] = serialize_value(getattr(value, field.name), field.name)
        return nested_dict

    if isinstance(value, (list, tuple)):
        return [serialize_value(item) for item in value]

    if isinstance(value, dict):
        return {str(k): serialize_value(v) for k, v in value.items()}

    return value


def config_from_dict(cls: Type[T], in_dict: dict, where: str = None) -> T:
    """Build a dataclass from a JSON dict, rejecting keys the class does not declare.

    Validation of the values themselves is left to the dataclass __post_init__.
    """
    where = where or cls.__name__
    if not isinstance(in_dict, dict):
        raise ConfigError(f"{where} must be a JSON object, got {type(in_dict).__name__}")
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(in_dict) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}; allowed {sorted(known)}")
    try:
        return cls(**in_dict)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from e


def dumps(value: Any, indent: int = 2) -> str:
    """Deterministic JSON text: sorted keys, trailing newline."""
    return json.dumps(serialize_value(value), indent=indent, sort_keys=True) + "\n"


def write_json(path: Path, value: Any) -> Path:
    path = Path(path)
    path.write_text(dumps(value))
    return path


def read_json(path: Path) -> Any:
    with open(path) as f:
        return json.load(f)

"""Self-describing model container.

Layout::

    b"HISTCAL1"                 8-byte magic
    uint64 little-endian        header length in bytes
    header                      UTF-8 JSON, sorted keys
    payload                     little-endian float64 arrays, back to back

The header lists layer sizes, activations, head_start, seed, the name and shape
of every payload array in payload order, and a free ``extra`` dict that the
trainer fills with the run config, histogram spec and epoch. Arrays are written
as raw bytes so a save/load round trip is bitwise exact.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Optional

import numpy as np

from histcal.model.nn_core import Activation, DenseLayer, Model
from histcal.utils.errors import DataError

logger = logging.getLogger("Checkpoint")

MAGIC = b"HISTCAL1"
FORMAT_VERSION = 1
_LE_F64 = np.dtype("<f8")


def model_arrays(model: Model) -> dict[str, np.ndarray]:
    res = {}
    for i, layer in enumerate(model.layers):
        res[f"layer{i}.weights"] = layer.weights
        res[f"layer{i}.bias"] = layer.bias
    return res


def encode_container(model: Model, extra: Optional[dict] = None,
                     extra_arrays: Optional[dict[str, np.ndarray]] = None) -> bytes:
    arrays = model_arrays(model)
    for name, arr in (extra_arrays or {}).items():
        if name in arrays:
            raise ValueError(f"extra array name '{name}' collides with a model array")
        arrays[name] = np.asarray(arr, dtype=np.float64)
    header = {
        "format": "histcal-checkpoint",
        "version": FORMAT_VERSION,
        "layer_sizes": model.layer_sizes,
        "activations": [str(a) for a in model.activations],
        "head_start": model.head_start,
        "seed": model.seed,
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in arrays.items()],
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<Q", len(header_bytes)), header_bytes]
    for arr in arrays.values():
        parts.append(np.ascontiguousarray(arr, dtype=_LE_F64).tobytes())
    return b"".join(parts)


def decode_container(data: bytes) -> tuple[Model, dict[str, Any], dict[str, np.ndarray]]:
    """Returns (model, extra header dict, non-model arrays)."""
    if data[:len(MAGIC)] != MAGIC:
        raise DataError("not a histcal checkpoint (bad magic)")
    offset = len(MAGIC)
    (header_len,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    try:
        header = json.loads(data[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"corrupt checkpoint header: {e}") from e
    offset += header_len
    if header.get("version") != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint version {header.get('version')}")
    arrays = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(data):
            raise DataError(f"checkpoint payload truncated at array '{spec['name']}'")
        arrays[spec["name"]] = np.frombuffer(data, dtype=_LE_F64, count=count,
                                             offset=offset).astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise DataError("checkpoint has trailing bytes after the payload")

    layers = []
    for i, act in enumerate(header["activations"]):
        layers.append(DenseLayer(arrays.pop(f"layer{i}.weights"),
                                 arrays.pop(f"layer{i}.bias"),
                                 Activation(act)))
    model = Model(layers=layers, head_start=header["head_start"], seed=header["seed"])
    return model, header["extra"], arrays


def save_model(path: Path, model: Model, extra: Optional[dict] = None,
               extra_arrays: Optional[dict[str, np.ndarray]] = None) -> Path:
    path = Path(path)
    path.write_bytes(encode_container(model, extra, extra_arrays))
    logger.info("wrote checkpoint %s", path)
    return path


def load_model(path: Path) -> tuple[Model, dict[str, Any], dict[str, np.ndarray]]:
    return decode_container(Path(path).read_bytes())

import logging
import struct

import numpy as np
import pytest

from histcal.data.scaling import StandardScaler
from histcal.model.checkpoint import MAGIC, decode_container, encode_container, load_model, save_model
from histcal.model.nn_core import forward, init_model
from histcal.train.config import TrainMode
from histcal.train.trainer import Checkpoint
from histcal.utils.errors import DataError, StateError
from tests.test_utils import tiny_config

logger = logging.getLogger('test_code')


def test_container_round_trip_is_bitwise(tmp_path, rng):
    model = init_model([5, 7, 4, 9], seed=21, head_layers=2)
    path = save_model(tmp_path / "m.bin", model, extra={"note": "x"}, extra_arrays={"aux": np.arange(3.0)})
    loaded, extra, arrays = load_model(path)
    assert loaded.head_start == model.head_start
    assert loaded.seed == 21
    assert loaded.activations == model.activations
    for a, b in zip(model.parameters(), loaded.parameters()):
        assert a.tobytes() == b.tobytes()
    assert extra == {"note": "x"}
    assert np.array_equal(arrays["aux"], [0.0, 1.0, 2.0])
    X = rng.standard_normal((6, 5))
    assert np.array_equal(forward(model, X)[0], forward(loaded, X)[0])


def test_container_layout():
    data = encode_container(init_model([2, 3, 4], seed=0))
    assert data[:8] == MAGIC
    (header_len,) = struct.unpack_from("<Q", data, 8)
    # payload: 2*3 + 3 + 3*4 + 4 doubles
    assert len(data) == 16 + header_len + 8 * (6 + 3 + 12 + 4)


def test_corrupt_containers_rejected():
    data = encode_container(init_model([2, 3, 4], seed=0))
    with pytest.raises(DataError):
        decode_container(b"NOTMAGIC" + data[8:])
    with pytest.raises(DataError):
        decode_container(data[:-8])
    with pytest.raises(DataError):
        decode_container(data + b"\x00")


def test_extra_array_name_collision():
    with pytest.raises(ValueError):
        encode_container(init_model([2, 3, 4], seed=0), extra_arrays={"layer0.bias": np.zeros(3)})


def make_checkpoint():
    cfg = tiny_config(mode=TrainMode.HL_MME, n_bins=6, hidden_sizes=(5,))
    model = init_model(cfg.layer_sizes(3), seed=cfg.seed)
    scaler = StandardScaler(mean=np.array([1.0, 2.0, 3.0]), std=np.array([0.5, 1.0, 2.0]))
    return Checkpoint(model=model, config=cfg, epoch=3, scaler=scaler, feature_names=["a", "b", "c"], val_r2=0.25)


def test_checkpoint_round_trip(tmp_path, rng):
    ckpt = make_checkpoint()
    loaded = Checkpoint.load(ckpt.save(tmp_path / "checkpoint.bin"))
    assert loaded.config == ckpt.config
    assert loaded.epoch == 3
    assert loaded.val_r2 == 0.25
    assert loaded.feature_names == ["a", "b", "c"]
    assert np.array_equal(loaded.scaler.mean, ckpt.scaler.mean)
    assert loaded.spec == ckpt.spec
    X = rng.standard_normal((10, 3))
    assert np.array_equal(loaded.predict(X), ckpt.predict(X))


def test_predict_applies_scaler_when_asked(rng):
    ckpt = make_checkpoint()
    raw = rng.standard_normal((4, 3)) * 3 + 1
    assert np.array_equal(ckpt.predict(raw, scaled=False), ckpt.predict(ckpt.scaler.transform(raw)))
    y = ckpt.predict(raw)
    assert np.all((y >= ckpt.spec.support_lo) & (y <= ckpt.spec.support_hi))
    ckpt.scaler = None
    with pytest.raises(StateError):
        ckpt.predict(raw, scaled=False)


def test_checkpoint_without_scaler_or_score(tmp_path):
    ckpt = make_checkpoint()
    ckpt.scaler = None
    ckpt.val_r2 = None
    loaded = Checkpoint.from_bytes(ckpt.to_bytes())
    assert loaded.scaler is None
    assert loaded.val_r2 is None
    with pytest.raises(DataError):
        Checkpoint.load(tmp_path / "missing.bin")

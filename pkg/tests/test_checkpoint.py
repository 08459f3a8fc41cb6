from __future__ import annotations

import numpy as np
import pytest

from training.checkpoint import Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from training.optimizer import AdamState
from utils.errors import FormatError, VersionError


@pytest.fixture
def checkpoint(micro_weights) -> Checkpoint:
    rng = np.random.default_rng(0)
    arrays = micro_weights.arrays()
    adam = AdamState(
        7,
        {k: rng.normal(size=v.shape) for k, v in arrays.items()},
        {k: rng.uniform(0.0, 1.0, v.shape) for k, v in arrays.items()},
    )
    return Checkpoint(micro_weights, adam, step=7, meta={"scene_seed": 3})


def test_checkpoint_roundtrip_is_exact(checkpoint, tmp_path):
    path = tmp_path / "run.lhw"
    save_checkpoint(checkpoint, path)
    loaded = load_checkpoint(path)
    assert loaded.step == 7 and loaded.adam.step == 7
    assert loaded.meta == {"scene_seed": 3}
    assert loaded.cfg == checkpoint.cfg
    for key, value in checkpoint.weights.arrays().items():
        np.testing.assert_array_equal(loaded.weights[key].data, value)
        np.testing.assert_array_equal(loaded.adam.m[key], checkpoint.adam.m[key])
        np.testing.assert_array_equal(loaded.adam.v[key], checkpoint.adam.v[key])
    assert encode_checkpoint(loaded) == path.read_bytes()


def test_f32_export_drops_optimizer_state(checkpoint):
    exported = decode_checkpoint(encode_checkpoint(checkpoint, export_f32=True))
    assert exported.step == 7 and exported.adam.step == 0
    for key, value in checkpoint.weights.arrays().items():
        np.testing.assert_array_equal(exported.weights[key].data, value.astype(np.float32).astype(np.float64))
        assert not exported.adam.m[key].any()
    assert len(encode_checkpoint(checkpoint, export_f32=True)) < len(encode_checkpoint(checkpoint)) / 4


def test_checkpoint_rejects_damage(checkpoint):
    data = encode_checkpoint(checkpoint)
    with pytest.raises(VersionError):
        decode_checkpoint(b"LHW0" + data[4:])
    with pytest.raises(VersionError):
        decode_checkpoint(data[:4] + (9).to_bytes(4, "little") + data[8:])
    with pytest.raises(FormatError, match="truncated"):
        decode_checkpoint(data[:-5])
    with pytest.raises(FormatError, match="trailing"):
        decode_checkpoint(data + b"\x01")


def test_checkpoint_needs_every_moment(checkpoint):
    adam = AdamState(1, dict(checkpoint.adam.m), dict(checkpoint.adam.v))
    adam.m.pop(next(iter(adam.m)))
    with pytest.raises(FormatError, match="moments"):
        decode_checkpoint(encode_checkpoint(Checkpoint(checkpoint.weights, adam, 1)))

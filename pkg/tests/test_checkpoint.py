import json
import zipfile

import numpy as np
import pytest
import torch

from pointvqa import config
from pointvqa.checkpoint import (load_checkpoint, load_into,
                                 model_state_numpy, rng_state_snapshot,
                                 save_checkpoint)
from pointvqa.pretrain import PretrainModel


def test_round_trip_exact(tmp_path):
    params = {"a.weight": np.arange(6, dtype=np.float32).reshape(2, 3),
              "b.bias": np.array([1.5, -2.25], dtype=np.float32)}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, config={"note": 1}, step=7)
    loaded, manifest = load_checkpoint(path)
    assert manifest["step"] == 7
    assert manifest["config"] == {"note": 1}
    assert manifest["format"] == "pointvqa-checkpoint-v1"
    for name in params:
        assert np.array_equal(loaded[name], params[name])
        assert loaded[name].dtype == np.float32


def test_archive_layout_is_plain_zip(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"w": np.zeros((2, 2), dtype=np.float32)})
    with zipfile.ZipFile(path) as zf:
        names = zf.namelist()
        assert "manifest.json" in names
        assert "tensors/w" in names
        for info in zf.infolist():
            assert info.compress_type == zipfile.ZIP_STORED
        manifest = json.loads(zf.read("manifest.json"))
        assert manifest["tensors"]["w"] == {"shape": [2, 2],
                                            "dtype": "float32"}
        assert len(zf.read("tensors/w")) == 4 * 4


def test_rng_state_snapshot_restores_numpy():
    rng = np.random.default_rng(5)
    rng.normal(size=10)
    snap = rng_state_snapshot(rng)
    expected = rng.normal(size=4)
    rng2 = np.random.default_rng()
    rng2.bit_generator.state = snap["numpy"]
    assert np.array_equal(rng2.normal(size=4), expected)
    assert "torch" in snap


def test_load_into_full_model(tmp_path):
    torch.manual_seed(0)
    model = PretrainModel(config.toy())
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model_state_numpy(model))
    params, _ = load_checkpoint(path)
    torch.manual_seed(1)
    clone = PretrainModel(config.toy())
    load_into(clone, params)
    for (n, a), b in zip(model.state_dict().items(),
                         clone.state_dict().values()):
        assert torch.allclose(a, b, atol=1e-7), n


def test_load_into_prefix_filter():
    torch.manual_seed(0)
    donor = PretrainModel(config.toy())
    params = model_state_numpy(donor)
    torch.manual_seed(1)
    target = PretrainModel(config.toy())
    before = model_state_numpy(target)
    loaded = load_into(target, params, prefixes=("detector.",))
    after = model_state_numpy(target)
    assert loaded and all(n.startswith("detector.") for n in loaded)
    for n in after:
        if n.startswith("detector."):
            assert np.allclose(after[n], params[n])
        else:
            assert np.array_equal(after[n], before[n])


def test_load_into_shape_mismatch():
    torch.manual_seed(0)
    model = PretrainModel(config.toy())
    params = model_state_numpy(model)
    name = next(iter(params))
    params[name] = np.zeros((1, 1), dtype=np.float32)
    with pytest.raises(ValueError, match="shape mismatch"):
        load_into(PretrainModel(config.toy()), params)


def test_load_into_unknown_tensor():
    with pytest.raises(KeyError, match="no match"):
        load_into(PretrainModel(config.toy()),
                  {"nonexistent.weight": np.zeros(3, dtype=np.float32)})


def test_load_into_missing_prefixed_tensor():
    torch.manual_seed(0)
    model = PretrainModel(config.toy())
    params = model_state_numpy(model)
    dropped = [n for n in params if n.startswith("detector.")][0]
    del params[dropped]
    with pytest.raises(KeyError, match="missing"):
        load_into(PretrainModel(config.toy()), params,
                  prefixes=("detector.",))

"""Checkpoint archive format.

A checkpoint is a single uncompressed zip holding:

  manifest.json       config snapshot, step counter, RNG state, and a tensor
                      table {name: {"shape": [...], "dtype": "float32"}}
  tensors/<name>      raw little-endian float32 data, C order

Parameter names are namespaced by submodule ("detector.*",
"scene_encoder.*", "fusion.*", "heads.*"). See docs/checkpoint_format.md.
"""

from __future__ import annotations

import base64
import json
import zipfile

import numpy as np
import torch


def model_state_numpy(model):
    """state_dict as float32 numpy arrays."""
    return {name: tensor.detach().cpu().numpy().astype("<f4")
            for name, tensor in model.state_dict().items()}


def rng_state_snapshot(np_rng=None):
    state = {"torch": base64.b64encode(
        torch.get_rng_state().numpy().tobytes()).decode("ascii")}
    if np_rng is not None:
        state["numpy"] = np_rng.bit_generator.state
    return state


def save_checkpoint(path, params, config=None, step=0, rng_state=None):
    """params: {name: numpy array}; config must be JSON-serializable."""
    manifest = {
        "format": "pointvqa-checkpoint-v1",
        "config": config or {},
        "step": int(step),
        "rng_state": rng_state or {},
        "tensors": {},
    }
    arrays = {}
    for name, arr in params.items():
        arr = np.ascontiguousarray(np.asarray(arr), dtype="<f4")
        manifest["tensors"][name] = {"shape": list(arr.shape),
                                     "dtype": "float32"}
        arrays[name] = arr
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, sort_keys=True))
        for name, arr in arrays.items():
            zf.writestr(f"tensors/{name}", arr.tobytes())


def load_checkpoint(path):
    """Returns (params: {name: float32 array}, manifest dict)."""
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        params = {}
        for name, meta in manifest["tensors"].items():
            raw = zf.read(f"tensors/{name}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(meta["shape"])
            params[name] = arr
    return params, manifest


def load_into(model, params, prefixes=None, strict_shapes=True):
    """Copy namespaced parameters into a model.

    When ``prefixes`` is given, only names starting with one of them are
    loaded (e.g. ("detector.", "scene_encoder.") when transferring the
    pre-trained encoder into the downstream model).
    """
    state = model.state_dict()
    loaded = []
    for name, arr in params.items():
        if prefixes is not None and not any(name.startswith(p) for p in prefixes):
            continue
        if name not in state:
            raise KeyError(f"checkpoint tensor {name!r} has no match in the model")
        target = state[name]
        if tuple(target.shape) != tuple(arr.shape):
            raise ValueError(f"shape mismatch for {name!r}: checkpoint "
                             f"{tuple(arr.shape)} vs model {tuple(target.shape)}")
        state[name] = torch.as_tensor(arr.copy(), dtype=target.dtype)
        loaded.append(name)
    if prefixes is not None:
        wanted = [n for n in state if any(n.startswith(p) for p in prefixes)]
        missing = sorted(set(wanted) - set(loaded))
        if strict_shapes and missing:
            raise KeyError(f"checkpoint is missing tensors: {missing}")
    model.load_state_dict(state)
    return loaded

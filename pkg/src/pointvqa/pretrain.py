"""Alignment pre-training of the scene encoder.

Aligns the pooled scene embedding to frozen text/image embeddings via cosine
distances while retaining the detection loss:

    total = L_det + alpha * L_text + beta * L_image

The result is a transferable checkpoint with "detector.*" and
"scene_encoder.*" namespaces.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import config as model_configs
from .checkpoint import model_state_numpy, rng_state_snapshot, save_checkpoint
from .data import AugmentConfig, augment_with_map
from .detector import Detector, assign_targets, detection_loss, scene_inputs
from .scene_encoder import SceneEncoder


@dataclass(frozen=True)
class PretrainConfig:
    alpha: float = 0.02
    beta: float = 0.02
    epochs: int = 6
    batch_size: int = 16
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    seed: int = 0
    max_steps: int | None = None
    decoupled_weight_decay: bool = False
    augment: AugmentConfig | None = AugmentConfig()
    running_window: int = 20

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def cosine_distance(u, v):
    """1 - cos(u, v), in [0, 2]. Rejects zero-norm inputs."""
    if isinstance(u, torch.Tensor) or isinstance(v, torch.Tensor):
        u = torch.as_tensor(u)
        v = torch.as_tensor(v, dtype=u.dtype, device=u.device)
        nu, nv = torch.linalg.norm(u), torch.linalg.norm(v)
        if nu.item() == 0 or nv.item() == 0:
            raise ValueError("cosine_distance is undefined for zero-norm input")
        return 1 - (u @ v) / (nu * nv)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine_distance is undefined for zero-norm input")
    return float(1 - u @ v / (nu * nv))


def pretrain_loss(scene_emb, z_text, z_image, det, cfg: PretrainConfig):
    """Total pre-training loss and its component map."""
    l_text = cosine_distance(scene_emb.z_aligned, z_text)
    l_image = cosine_distance(scene_emb.z_aligned, z_image)
    total = det + cfg.alpha * l_text + cfg.beta * l_image
    return total, {"det": det, "text": l_text, "image": l_image}


class PretrainModel(nn.Module):
    """Detector plus scene encoder, the transferable part of the pipeline."""

    def __init__(self, cfg=None):
        super().__init__()
        self.cfg = cfg or model_configs.small()
        self.detector = Detector(self.cfg)
        self.scene_encoder = SceneEncoder(self.cfg)

    def forward(self, xyz, feats):
        props = self.detector(xyz, feats)
        objects, emb = self.scene_encoder(props.features)
        return props, objects, emb


@dataclass
class PretrainResult:
    model: PretrainModel
    loss_history: list
    final_path: str | None
    best_path: str | None
    best_state: dict


def _check_embeddings(scenes, store):
    for scene in scenes:
        for modality in ("text", "image"):
            if (scene.scene_id, modality) not in store:
                raise ValueError(
                    f"scene {scene.scene_id} has no {modality} embedding in "
                    "the provider; refusing to start training")


def run_pretraining(scenes, store, cfg: PretrainConfig,
                    model_cfg=None, out_dir=None) -> PretrainResult:
    """Seeded pre-training loop over the given scenes.

    Fails fast if any scene lacks a text or image embedding. Writes a JSONL
    step log plus final/best checkpoints when out_dir is given.
    """
    scenes = list(scenes)
    _check_embeddings(scenes, store)
    torch.manual_seed(cfg.seed)
    model = PretrainModel(model_cfg)
    opt_cls = torch.optim.AdamW if cfg.decoupled_weight_decay else torch.optim.Adam
    optimizer = opt_cls(model.parameters(), lr=cfg.learning_rate,
                        weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)

    targets = {s.scene_id: (
        torch.as_tensor(store.get(s.scene_id, "text"), dtype=torch.float32),
        torch.as_tensor(store.get(s.scene_id, "image"), dtype=torch.float32),
    ) for s in scenes}

    log_f = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_f = open(os.path.join(out_dir, "pretrain_log.jsonl"), "w")

    history = []
    best = {"mean": np.inf, "state": model_state_numpy(model), "step": 0}
    step = 0
    done = False
    model.train()
    for _ in range(cfg.epochs):
        if done:
            break
        order = rng.permutation(len(scenes))
        for start in range(0, len(order), cfg.batch_size):
            batch = [scenes[i] for i in order[start:start + cfg.batch_size]]
            optimizer.zero_grad()
            sums = {"total": 0.0, "det": 0.0, "text": 0.0, "image": 0.0}
            loss = 0.0
            for scene in batch:
                if cfg.augment is not None:
                    scene, _ = augment_with_map(scene, cfg.augment, rng)
                xyz, feats = scene_inputs(scene.cloud)
                props, _, emb = model(xyz, feats)
                tg = assign_targets(props, scene.objects,
                                    model.cfg.near_radius, model.cfg.far_radius)
                det, _ = detection_loss(props, tg)
                z_text, z_image = targets[scene.scene_id]
                total, comps = pretrain_loss(emb, z_text, z_image, det, cfg)
                loss = loss + total
                sums["total"] += total.item()
                for key in ("det", "text", "image"):
                    sums[key] += comps[key].item()
            loss = loss / len(batch)
            loss.backward()
            optimizer.step()
            step += 1

            rec = {"step": step,
                   "l_total": sums["total"] / len(batch),
                   "l_det": sums["det"] / len(batch),
                   "l_text": sums["text"] / len(batch),
                   "l_image": sums["image"] / len(batch)}
            history.append(rec)
            if log_f:
                log_f.write(json.dumps(rec) + "\n")

            window = history[-cfg.running_window:]
            mean = sum(r["l_total"] for r in window) / len(window)
            if mean < best["mean"]:
                best = {"mean": mean, "state": model_state_numpy(model),
                        "step": step}
            if cfg.max_steps is not None and step >= cfg.max_steps:
                done = True
                break
    if log_f:
        log_f.close()

    final_path = best_path = None
    snapshot = {"train": {k: v for k, v in dataclasses.asdict(cfg).items()
                          if k != "augment"},
                "augment": dataclasses.asdict(cfg.augment) if cfg.augment else None,
                "model": dataclasses.asdict(model.cfg)}
    if out_dir is not None:
        rng_state = rng_state_snapshot(rng)
        final_path = os.path.join(out_dir, "final.ckpt")
        save_checkpoint(final_path, model_state_numpy(model),
                        config=snapshot, step=step, rng_state=rng_state)
        best_path = os.path.join(out_dir, "best.ckpt")
        save_checkpoint(best_path, best["state"], config=snapshot,
                        step=best["step"], rng_state=rng_state)
    return PretrainResult(model=model, loss_history=history,
                          final_path=final_path, best_path=best_path,
                          best_state=best["state"])


@torch.no_grad()
def encode_scenes(model: PretrainModel, scenes):
    """z_scene and z_aligned matrices for a list of scenes (eval mode)."""
    was_training = model.training
    model.eval()
    z_scene, z_aligned = [], []
    for scene in scenes:
        xyz, feats = scene_inputs(scene.cloud)
        _, _, emb = model(xyz, feats)
        z_scene.append(emb.z_scene.numpy())
        z_aligned.append(emb.z_aligned.numpy())
    if was_training:
        model.train()
    return np.stack(z_scene), np.stack(z_aligned)


def alignment_cosines(model: PretrainModel, scenes, store):
    """Mean cosine similarity of z_aligned to the text and image targets."""
    _, aligned = encode_scenes(model, scenes)
    sims = {"text": [], "image": []}
    for i, scene in enumerate(scenes):
        v = aligned[i]
        for modality in sims:
            t = np.asarray(store.get(scene.scene_id, modality))
            sims[modality].append(
                float(v @ t / (np.linalg.norm(v) * np.linalg.norm(t))))
    return {k: float(np.mean(v)) for k, v in sims.items()}

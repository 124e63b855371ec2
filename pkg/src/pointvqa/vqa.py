"""Downstream 3D question-answering model and its fine-tuning loop.

Question token embeddings and scene object features are concatenated and
fused by a two-layer transformer encoder with full self-attention. The
updated end-of-text state is the pooled question feature used by the answer
and object-class heads; a shared linear head scores each object state for
localization.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import config as model_configs
from .checkpoint import (load_checkpoint, load_into, model_state_numpy,
                         rng_state_snapshot, save_checkpoint)
from .clip_provider import EMBED_DIM, QuestionTokens, tokenize_question
from .data import AugmentConfig, augment_with_map
from .detector import Detector, assign_targets, detection_loss, scene_inputs
from .geometry import AxisAlignedBox, iou
from .scene_encoder import EncoderLayer, SceneEncoder


@dataclass
class FusedSequence:
    word_states: torch.Tensor    # (L, d_f)
    object_states: torch.Tensor  # (k, d_f)
    q_prime: torch.Tensor        # (d_f,) updated EOT state


@dataclass
class VqaOutput:
    answer_logits: torch.Tensor  # (n,)
    loc_logits: torch.Tensor     # (k,)
    class_logits: torch.Tensor   # (num_classes,)
    fused: FusedSequence


def sinusoidal_positions(length, dim, dtype=torch.float32):
    pos = torch.arange(length, dtype=dtype).unsqueeze(1)
    i = torch.arange(0, dim, 2, dtype=dtype)
    angles = pos / torch.pow(torch.tensor(10000.0, dtype=dtype), i / dim)
    enc = torch.zeros(length, dim, dtype=dtype)
    enc[:, 0::2] = torch.sin(angles)
    enc[:, 1::2] = torch.cos(angles[:, : dim // 2])
    return enc


class FusionModule(nn.Module):
    """Two-layer transformer over [words..., objects...].

    Words get sinusoidal positional encodings; object tokens stay
    position-free so the proposal set keeps its permutation symmetry.
    """

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        d = cfg.fusion_dim
        self.word_proj = nn.Linear(EMBED_DIM, d)
        self.obj_proj = (nn.Identity() if cfg.proposal_hidden == d
                         else nn.Linear(cfg.proposal_hidden, d))
        self.layers = nn.ModuleList(
            EncoderLayer(d, cfg.fusion_heads, cfg.dropout)
            for _ in range(cfg.fusion_layers))

    def forward(self, q: QuestionTokens, object_feats, return_weights=False):
        dt = object_feats.dtype
        words = self.word_proj(torch.as_tensor(q.embeddings, dtype=dt))
        L = words.shape[0]
        words = words + sinusoidal_positions(L, self.cfg.fusion_dim, dtype=dt)
        x = torch.cat([words, self.obj_proj(object_feats)], dim=0)
        all_weights = []
        for layer in self.layers:
            x, w = layer(x, return_weights)
            all_weights.append(w)
        fused = FusedSequence(word_states=x[:L], object_states=x[L:],
                              q_prime=x[q.eot_index])
        if return_weights:
            return fused, all_weights
        return fused


class VqaHeads(nn.Module):
    def __init__(self, cfg, num_answers):
        super().__init__()
        self.answer = nn.Linear(cfg.fusion_dim, num_answers)
        self.object_class = nn.Linear(cfg.fusion_dim, cfg.num_classes)
        self.localization = nn.Linear(cfg.fusion_dim, 1)


class VqaModel(nn.Module):
    """Detector + scene encoder + fusion + prediction heads."""

    def __init__(self, cfg=None, num_answers=1):
        super().__init__()
        self.cfg = cfg or model_configs.small()
        self.num_answers = num_answers
        self.detector = Detector(self.cfg)
        self.scene_encoder = SceneEncoder(self.cfg)
        self.fusion = FusionModule(self.cfg)
        self.heads = VqaHeads(self.cfg, num_answers)

    def forward(self, xyz, feats, q: QuestionTokens):
        props = self.detector(xyz, feats)
        objects, _ = self.scene_encoder(props.features)
        fused = self.fusion(q, objects)
        out = VqaOutput(
            answer_logits=self.heads.answer(fused.q_prime),
            loc_logits=self.heads.localization(fused.object_states).squeeze(-1),
            class_logits=self.heads.object_class(fused.q_prime),
            fused=fused)
        return props, out


# ---------------------------------------------------------------------------
# losses

def localization_target(props, gt_box: AxisAlignedBox) -> int:
    """Index of the max-IoU proposal; ties (and all-zero IoU) break low."""
    ious = np.array([iou(b, gt_box) for b in props.boxes()])
    return int(np.argmax(ious))


def localization_loss(loc_logits, props, gt_box: AxisAlignedBox):
    target = localization_target(props, gt_box)
    return F.cross_entropy(loc_logits.unsqueeze(0),
                           torch.tensor([target], device=loc_logits.device))


def answer_loss(answer_logits, gt_answers):
    """Mean elementwise BCE against the multi-hot answer target."""
    gt_answers = sorted(set(int(a) for a in gt_answers))
    n = answer_logits.shape[0]
    if not gt_answers:
        raise ValueError("gt_answers must be nonempty")
    if any(a < 0 or a >= n for a in gt_answers):
        raise ValueError(f"answer index out of range [0, {n})")
    target = torch.zeros(n, dtype=answer_logits.dtype,
                         device=answer_logits.device)
    target[gt_answers] = 1.0
    return F.binary_cross_entropy_with_logits(answer_logits, target)


def object_class_loss(class_logits, class_id: int):
    return F.cross_entropy(class_logits.unsqueeze(0),
                           torch.tensor([class_id], device=class_logits.device))


def finetune_loss(det, obj, ans, loc):
    """Unweighted sum of the four fine-tuning terms, plus a component map."""
    total = det + obj + ans + loc
    return total, {"det": det, "obj": obj, "ans": ans, "loc": loc}


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 25
    batch_size: int = 16
    learning_rate: float = 5e-4
    weight_decay: float = 0.0
    lr_decay_epoch: int = 15
    lr_decay_factor: float = 0.1
    seed: int = 0
    max_steps: int | None = None
    augment: AugmentConfig | None = AugmentConfig()


@dataclass
class FinetuneResult:
    model: VqaModel
    loss_history: list
    final_path: str | None


def _sample_losses(model, scene, rec, vocab, cfg: FinetuneConfig, rng):
    keep = list(range(len(scene.objects)))
    if cfg.augment is not None:
        scene, keep = augment_with_map(scene, cfg.augment, rng)
    xyz, feats = scene_inputs(scene.cloud)
    props, out = model(xyz, feats, tokenize_question(rec.question))
    tg = assign_targets(props, scene.objects,
                        model.cfg.near_radius, model.cfg.far_radius)
    det, _ = detection_loss(props, tg)
    ans = answer_loss(out.answer_logits,
                      [vocab.index[a] for a in rec.answers if a in vocab.index])
    # the crop may have dropped the referred object; then only det+ans apply
    surviving = [keep.index(i) for i in rec.object_ids if i in keep]
    zero = torch.zeros((), dtype=det.dtype)
    if surviving:
        referred = scene.objects[surviving[0]]
        loc = localization_loss(out.loc_logits, props, referred.box)
        obj = object_class_loss(out.class_logits, referred.class_id)
    else:
        loc = zero
        obj = zero
    return finetune_loss(det, obj, ans, loc)


def run_finetuning(scenes, qa_records, vocab, cfg: FinetuneConfig,
                   model_cfg=None, pretrained=None, out_dir=None) -> FinetuneResult:
    """Fine-tune the full model on QA records.

    ``pretrained`` is a checkpoint path (or parameter dict) whose detector
    and scene-encoder weights are transferred; fusion and heads always start
    fresh. Pass None for the from-scratch ablation. Nothing is frozen.
    """
    torch.manual_seed(cfg.seed)
    model = VqaModel(model_cfg, num_answers=len(vocab))
    if pretrained is not None:
        params = pretrained
        if not isinstance(params, dict):
            params, _ = load_checkpoint(pretrained)
        load_into(model, params, prefixes=("detector.", "scene_encoder."))

    scene_map = {s.scene_id: s for s in scenes}
    records = list(qa_records)
    for rec in records:
        if rec.scene_id not in scene_map:
            raise ValueError(f"QA record {rec.question_id} references unknown "
                             f"scene {rec.scene_id}")

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                                 weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    log_f = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        log_f = open(os.path.join(out_dir, "finetune_log.jsonl"), "w")

    history = []
    step = 0
    done = False
    model.train()
    for epoch in range(cfg.epochs):
        if done:
            break
        if epoch == cfg.lr_decay_epoch:
            for group in optimizer.param_groups:
                group["lr"] *= cfg.lr_decay_factor
        order = rng.permutation(len(records))
        for start in range(0, len(order), cfg.batch_size):
            batch = [records[i] for i in order[start:start + cfg.batch_size]]
            optimizer.zero_grad()
            loss = 0.0
            sums = {"total": 0.0, "det": 0.0, "obj": 0.0, "ans": 0.0, "loc": 0.0}
            for rec in batch:
                total, comps = _sample_losses(
                    model, scene_map[rec.scene_id], rec, vocab, cfg, rng)
                loss = loss + total
                sums["total"] += total.item()
                for key in ("det", "obj", "ans", "loc"):
                    sums[key] += float(comps[key].detach())
            loss = loss / len(batch)
            loss.backward()
            optimizer.step()
            step += 1
            rec_out = {"step": step, "epoch": epoch}
            rec_out.update({f"l_{k}": v / len(batch) for k, v in sums.items()})
            history.append(rec_out)
            if log_f:
                log_f.write(json.dumps(rec_out) + "\n")
            if cfg.max_steps is not None and step >= cfg.max_steps:
                done = True
                break
    if log_f:
        log_f.close()

    final_path = None
    if out_dir is not None:
        snapshot = {"train": {k: v for k, v in dataclasses.asdict(cfg).items()
                              if k != "augment"},
                    "augment": dataclasses.asdict(cfg.augment)
                    if cfg.augment else None,
                    "model": dataclasses.asdict(model.cfg),
                    "num_answers": len(vocab)}
        final_path = os.path.join(out_dir, "final.ckpt")
        save_checkpoint(final_path, model_state_numpy(model), config=snapshot,
                        step=step, rng_state=rng_state_snapshot(rng))
    return FinetuneResult(model=model, loss_history=history,
                          final_path=final_path)


# ---------------------------------------------------------------------------
# inference

@torch.no_grad()
def predict(model: VqaModel, scene, question: str, vocab):
    """(answer string, predicted box, class probability vector)."""
    was_training = model.training
    model.eval()
    xyz, feats = scene_inputs(scene.cloud)
    props, out = model(xyz, feats, tokenize_question(question))
    answer_idx = int(out.answer_logits.argmax())
    proposal_idx = int(out.loc_logits.argmax())
    box = props.boxes()[proposal_idx]
    class_probs = torch.softmax(out.class_logits, dim=0).numpy()
    if was_training:
        model.train()
    return vocab.answers[answer_idx], box, class_probs


@torch.no_grad()
def predict_dataset(model: VqaModel, scenes, qa_records, vocab):
    """JSONL-ready prediction records for the metrics module."""
    was_training = model.training
    model.eval()
    scene_map = {s.scene_id: s for s in scenes}
    results = []
    for rec in qa_records:
        scene = scene_map[rec.scene_id]
        xyz, feats = scene_inputs(scene.cloud)
        props, out = model(xyz, feats, tokenize_question(rec.question))
        order = torch.argsort(out.answer_logits, descending=True, stable=True)
        top10 = [vocab.answers[int(i)] for i in order[:10]]
        proposal_idx = int(out.loc_logits.argmax())
        box = props.boxes()[proposal_idx]
        results.append({
            "scene_id": rec.scene_id,
            "question_id": rec.question_id,
            "answer_top1": top10[0],
            "answer_top10": top10,
            "bbox": {"center": [float(v) for v in box.center],
                     "size": [float(v) for v in box.size]},
            "class_probs": [float(v) for v in
                            torch.softmax(out.class_logits, dim=0)],
            "proposal_index": proposal_idx,
        })
    if was_training:
        model.train()
    return results


def write_predictions(path, predictions):
    with open(path, "w", encoding="utf-8") as f:
        for rec in predictions:
            f.write(json.dumps(rec) + "\n")


def load_predictions(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from pointvqa import config
from pointvqa.checkpoint import load_checkpoint, load_into, model_state_numpy
from pointvqa.clip_provider import EmbeddingStore, ModalEmbedding, stub_scene_embedding
from pointvqa.data import generate_synthetic_scene
from pointvqa.pretrain import (PretrainConfig, PretrainModel, cosine_distance,
                               encode_scenes, pretrain_loss, run_pretraining)


def _corpus(n=4):
    scenes = []
    entries = []
    for i in range(n):
        scene, _ = generate_synthetic_scene(i, ("kitchen", "office",
                                                "bathroom")[i % 3])
        scenes.append(scene)
        for modality in ("text", "image"):
            entries.append(ModalEmbedding(
                scene.scene_id, modality,
                stub_scene_embedding(scene.description, modality)))
    return scenes, EmbeddingStore(entries)


class TestCosineDistance:
    def test_identical(self):
        assert cosine_distance([1.0, 2, 3], [1.0, 2, 3]) == pytest.approx(0.0)

    def test_opposite(self):
        assert cosine_distance([1.0, 0], [-1.0, 0]) == pytest.approx(2.0)

    def test_orthogonal(self):
        assert cosine_distance([1.0, 0], [0.0, 1]) == pytest.approx(1.0)

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError):
            cosine_distance([0.0, 0], [1.0, 0])
        with pytest.raises(ValueError):
            cosine_distance(torch.zeros(3), torch.ones(3))

    def test_torch_matches_numpy(self):
        u = np.array([0.3, -1.2, 2.0])
        v = np.array([1.5, 0.7, -0.1])
        got = cosine_distance(torch.tensor(u), torch.tensor(v))
        assert float(got) == pytest.approx(cosine_distance(u, v))

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
           st.floats(0.1, 100))
    def test_scale_invariance(self, u, scale):
        u = np.asarray(u)
        if np.linalg.norm(u) < 1e-6:
            return
        v = np.array([1.0, -2.0, 0.5])
        assert cosine_distance(u * scale, v) == pytest.approx(
            cosine_distance(u, v), abs=1e-9)

    def test_range(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = cosine_distance(rng.normal(size=8), rng.normal(size=8))
            assert 0.0 <= d <= 2.0


class TestPretrainLoss:
    def test_worked_example(self):
        # det = 1 and both cosine distances at their minimum of... here both
        # targets orthogonal to z: distances are 1 each -> 1 + 0.02 + 0.02
        cfg = PretrainConfig()
        z = torch.tensor([1.0, 0.0])
        total, comps = pretrain_loss(
            type("E", (), {"z_aligned": z})(), torch.tensor([0.0, 1.0]),
            torch.tensor([0.0, 1.0]), torch.tensor(1.0), cfg)
        assert total.item() == pytest.approx(1.04)
        assert comps["text"].item() == pytest.approx(1.0)
        assert comps["image"].item() == pytest.approx(1.0)

    def test_weights_applied(self):
        cfg = PretrainConfig(alpha=0.5, beta=0.25)
        z = torch.tensor([1.0, 0.0])
        total, _ = pretrain_loss(
            type("E", (), {"z_aligned": z})(), torch.tensor([0.0, 1.0]),
            torch.tensor([-1.0, 0.0]), torch.tensor(2.0), cfg)
        assert total.item() == pytest.approx(2 + 0.5 * 1 + 0.25 * 2)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            PretrainConfig(alpha=-0.1)


class TestTrainingLoop:
    def test_missing_embedding_fails_fast(self):
        scenes, _ = _corpus(2)
        empty = EmbeddingStore([])
        cfg = PretrainConfig(epochs=1, max_steps=1)
        with pytest.raises(ValueError, match="no text embedding"):
            run_pretraining(scenes, empty, cfg, model_cfg=config.toy())

    def test_zero_epochs_returns_untouched_model(self):
        scenes, store = _corpus(2)
        cfg = PretrainConfig(epochs=0)
        result = run_pretraining(scenes, store, cfg, model_cfg=config.toy())
        torch.manual_seed(cfg.seed)
        fresh = PretrainModel(config.toy())
        for (n1, p1), (n2, p2) in zip(result.model.state_dict().items(),
                                      fresh.state_dict().items()):
            assert n1 == n2
            assert torch.equal(p1, p2)
        assert result.loss_history == []

    def test_deterministic(self, tmp_path):
        scenes, store = _corpus(3)
        cfg = PretrainConfig(epochs=1, batch_size=2, max_steps=3,
                             augment=None, seed=7)
        r1 = run_pretraining(scenes, store, cfg, model_cfg=config.toy())
        r2 = run_pretraining(scenes, store, cfg, model_cfg=config.toy())
        assert len(r1.loss_history) == len(r2.loss_history) == 2
        for a, b in zip(r1.loss_history, r2.loss_history):
            assert a["l_total"] == pytest.approx(b["l_total"], abs=1e-6)
        s1, s2 = model_state_numpy(r1.model), model_state_numpy(r2.model)
        for name in s1:
            assert np.allclose(s1[name], s2[name], atol=1e-6)

    def test_history_components_sum(self):
        scenes, store = _corpus(2)
        cfg = PretrainConfig(epochs=1, batch_size=2, max_steps=2, augment=None)
        result = run_pretraining(scenes, store, cfg, model_cfg=config.toy())
        for rec in result.loss_history:
            expected = rec["l_det"] + 0.02 * rec["l_text"] + 0.02 * rec["l_image"]
            assert rec["l_total"] == pytest.approx(expected, abs=1e-6)

    def test_checkpoint_round_trip(self, tmp_path):
        scenes, store = _corpus(2)
        cfg = PretrainConfig(epochs=2, batch_size=1, max_steps=2, augment=None)
        result = run_pretraining(scenes, store, cfg, model_cfg=config.toy(),
                                 out_dir=str(tmp_path))
        assert result.final_path and result.best_path
        params, manifest = load_checkpoint(result.final_path)
        assert manifest["step"] == 2
        assert manifest["config"]["train"]["alpha"] == 0.02
        torch.manual_seed(0)
        clone = PretrainModel(config.toy())
        load_into(clone, params)
        z1, a1 = encode_scenes(result.model, scenes)
        z2, a2 = encode_scenes(clone, scenes)
        # float32 storage round-trip
        assert np.allclose(a1, a2, atol=1e-5)
        assert np.allclose(z1, z2, atol=1e-5)
        assert (tmp_path / "pretrain_log.jsonl").exists()

    def test_best_checkpoint_tracks_window_minimum(self, tmp_path):
        scenes, store = _corpus(2)
        cfg = PretrainConfig(epochs=2, batch_size=2, max_steps=4,
                             augment=None, running_window=1)
        result = run_pretraining(scenes, store, cfg, model_cfg=config.toy(),
                                 out_dir=str(tmp_path))
        _, manifest = load_checkpoint(result.best_path)
        losses = [r["l_total"] for r in result.loss_history]
        assert manifest["step"] == int(np.argmin(losses)) + 1

import torch
import pytest

from pointvqa import config
from pointvqa.scene_encoder import SceneEncoder


def _encoder(cfg=None):
    torch.manual_seed(0)
    return SceneEncoder(cfg or config.small()).eval()


class TestShapes:
    def test_output_contract(self):
        cfg = config.small()
        enc = _encoder(cfg)
        feats = torch.randn(cfg.num_proposals, cfg.proposal_hidden)
        objs, emb = enc(feats)
        assert objs.shape == feats.shape
        assert emb.z_scene.shape == (cfg.proposal_hidden,)
        assert emb.z_aligned.shape == (cfg.align_dim,)

    def test_single_proposal(self):
        cfg = config.small()
        enc = _encoder(cfg)
        objs, emb = enc(torch.randn(1, cfg.proposal_hidden))
        assert objs.shape == (1, cfg.proposal_hidden)
        assert torch.isfinite(emb.z_aligned).all()


class TestPermutation:
    def test_scene_embedding_invariant(self):
        cfg = config.small()
        enc = _encoder(cfg)
        feats = torch.randn(10, cfg.proposal_hidden)
        perm = torch.randperm(10)
        _, a = enc(feats)
        _, b = enc(feats[perm])
        assert torch.allclose(a.z_scene, b.z_scene, atol=1e-5)
        assert torch.allclose(a.z_aligned, b.z_aligned, atol=1e-5)

    def test_object_outputs_equivariant(self):
        cfg = config.small()
        enc = _encoder(cfg)
        feats = torch.randn(10, cfg.proposal_hidden)
        perm = torch.randperm(10)
        a, _ = enc(feats)
        b, _ = enc(feats[perm])
        assert torch.allclose(a[perm], b, atol=1e-5)


class TestAttention:
    def test_rows_are_distributions(self):
        cfg = config.small()
        enc = _encoder(cfg)
        feats = torch.randn(6, cfg.proposal_hidden)
        _, _, weights = enc(feats, return_weights=True)
        assert weights.shape == (cfg.scene_heads, 7, 7)  # cls + 6 proposals
        assert torch.allclose(weights.sum(dim=-1), torch.ones(cfg.scene_heads, 7),
                              atol=1e-6)
        assert (weights >= 0).all()

    def test_weights_off_by_default(self):
        cfg = config.small()
        enc = _encoder(cfg)
        out = enc(torch.randn(3, cfg.proposal_hidden))
        assert len(out) == 2


class TestNumericalSanity:
    def test_no_nan_and_bounded(self):
        cfg = config.small()
        enc = _encoder(cfg)
        for scale in (1e-3, 1.0, 50.0):
            feats = torch.randn(cfg.num_proposals, cfg.proposal_hidden) * scale
            objs, emb = enc(feats)
            assert torch.isfinite(objs).all()
            assert torch.isfinite(emb.z_aligned).all()
            assert emb.z_aligned.norm().item() <= 1e3

    def test_gradients_flow_to_cls_token(self):
        cfg = config.small()
        enc = SceneEncoder(cfg)
        enc.train()
        feats = torch.randn(4, cfg.proposal_hidden, requires_grad=True)
        _, emb = enc(feats)
        emb.z_aligned.sum().backward()
        assert enc.cls_token.grad is not None
        assert torch.isfinite(enc.cls_token.grad).all()
        assert feats.grad is not None

    def test_dropout_disabled_in_eval(self):
        cfg = config.small()
        enc = _encoder(cfg)
        feats = torch.randn(5, cfg.proposal_hidden)
        _, a = enc(feats)
        _, b = enc(feats)
        assert torch.equal(a.z_aligned, b.z_aligned)

"""Relation-modeling transformer over proposal features.

A learnable classification token is prepended to the k proposal features;
its output state is the scene embedding, additionally projected to the
512-d alignment space. No positional encoding is used, so the proposal
tokens form an unordered set: the scene embedding is permutation-invariant
and the object outputs permutation-equivariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .config import ModelConfig
from .detector import ProposalSet


@dataclass
class SceneEmbedding:
    z_scene: torch.Tensor    # (h,) CLS output
    z_aligned: torch.Tensor  # (align_dim,) projection into CLIP space


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, dim, num_heads):
        super().__init__()
        assert dim % num_heads == 0
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x, return_weights=False):
        t, d = x.shape
        qkv = self.qkv(x).reshape(t, 3, self.num_heads, self.head_dim)
        q, k, v = qkv[:, 0], qkv[:, 1], qkv[:, 2]          # (t, heads, hd)
        q = q.permute(1, 0, 2)                              # (heads, t, hd)
        k = k.permute(1, 0, 2)
        v = v.permute(1, 0, 2)
        scores = q @ k.transpose(1, 2) / self.head_dim ** 0.5
        attn = torch.softmax(scores, dim=-1)                # (heads, t, t)
        mixed = (attn @ v).permute(1, 0, 2).reshape(t, d)
        out = self.out(mixed)
        if return_weights:
            return out, attn
        return out, None


class EncoderLayer(nn.Module):
    """Post-norm transformer encoder layer with a 4x feed-forward."""

    def __init__(self, dim, num_heads, dropout=0.1):
        super().__init__()
        self.attn = MultiHeadSelfAttention(dim, num_heads)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, 4 * dim), nn.ReLU(),
                                nn.Dropout(dropout), nn.Linear(4 * dim, dim))
        self.drop = nn.Dropout(dropout)

    def forward(self, x, return_weights=False):
        mixed, weights = self.attn(x, return_weights)
        x = self.norm1(x + self.drop(mixed))
        x = self.norm2(x + self.drop(self.ff(x)))
        return x, weights


class SceneEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        h = cfg.proposal_hidden
        self.cls_token = nn.Parameter(torch.randn(h) * 0.02)
        self.layer = EncoderLayer(h, cfg.scene_heads, cfg.dropout)
        self.align = nn.Linear(h, cfg.align_dim)

    def forward(self, features, return_weights=False):
        """features: (k, h) proposal features.

        Returns (updated object features (k, h), SceneEmbedding[, attention]).
        """
        tokens = torch.cat([self.cls_token.unsqueeze(0), features], dim=0)
        out, weights = self.layer(tokens, return_weights)
        z_scene = out[0]
        emb = SceneEmbedding(z_scene=z_scene, z_aligned=self.align(z_scene))
        if return_weights:
            return out[1:], emb, weights
        return out[1:], emb


def encode_scene(encoder: SceneEncoder, props: ProposalSet):
    """Updated object features and the pooled scene embedding."""
    return encoder(props.features)

"""Model size configuration with presets.

``paper()`` mirrors the published scale (k = 256 proposals of width 256);
``small()`` is the desk-scale default used for synthetic training runs, and
``toy()`` is the gradient-check scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class ModelConfig:
    # backbone (two set-abstraction stages)
    input_feature_dim: int = 1           # per-point height channel
    sa1_centers: int = 1024
    sa1_radius: float = 0.4
    sa1_nsample: int = 32
    sa1_mlp: tuple = (64, 64, 128)
    sa2_centers: int = 512
    sa2_radius: float = 0.8
    sa2_nsample: int = 16
    sa2_mlp: tuple = (128, 128, 256)
    # voting and proposals
    vote_mlp: tuple = (256,)
    num_proposals: int = 256
    proposal_hidden: int = 256
    cluster_radius: float = 0.6
    cluster_nsample: int = 16
    proposal_mlp: tuple = (256,)
    num_classes: int = 18
    # objectness labeling thresholds (meters)
    near_radius: float = 0.3
    far_radius: float = 0.6
    # scene encoder
    scene_heads: int = 8
    align_dim: int = 512
    # fusion
    fusion_dim: int = 256
    fusion_heads: int = 8
    fusion_layers: int = 2
    dropout: float = 0.1

    def __post_init__(self):
        if self.num_proposals > self.sa2_centers:
            raise ValueError("num_proposals must be <= number of seed points")
        if self.proposal_hidden % self.scene_heads:
            raise ValueError("proposal_hidden must be divisible by scene_heads")
        if self.fusion_dim % self.fusion_heads:
            raise ValueError("fusion_dim must be divisible by fusion_heads")


def paper() -> ModelConfig:
    return ModelConfig()


def small() -> ModelConfig:
    """Desk-scale preset for synthetic-data training runs."""
    return ModelConfig(
        sa1_centers=128, sa1_radius=0.6, sa1_nsample=16, sa1_mlp=(32, 32),
        sa2_centers=64, sa2_radius=1.2, sa2_nsample=8, sa2_mlp=(64, 64),
        vote_mlp=(64,), num_proposals=16, proposal_hidden=64,
        cluster_radius=0.8, cluster_nsample=8, proposal_mlp=(64,),
        scene_heads=4, fusion_dim=64, fusion_heads=4,
    )


def toy() -> ModelConfig:
    """Gradient-check scale: k=4 proposals, h=8, fusion width 8."""
    return ModelConfig(
        sa1_centers=32, sa1_radius=0.8, sa1_nsample=8, sa1_mlp=(16, 16),
        sa2_centers=16, sa2_radius=1.2, sa2_nsample=8, sa2_mlp=(16, 16),
        vote_mlp=(16,), num_proposals=4, proposal_hidden=8,
        cluster_radius=1.0, cluster_nsample=8, proposal_mlp=(16,),
        scene_heads=2, fusion_dim=8, fusion_heads=2,
    )

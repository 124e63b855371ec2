"""Voting-based object proposal generator.

Point-feature backbone (two set-abstraction stages), per-seed voting,
proposal clustering, detection heads, and the detection loss used in both
training stages. Forward passes are per-scene (no batch dimension); training
loops average losses over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import kernels
from .config import ModelConfig
from .geometry import AxisAlignedBox, PointCloud


@dataclass
class ProposalSet:
    """k object proposals plus the voting intermediates the loss needs."""

    features: torch.Tensor          # (k, h)
    centers: torch.Tensor           # (k, 3) predicted box centers
    sizes: torch.Tensor             # (k, 3) predicted box sizes, > 0
    objectness_logits: torch.Tensor  # (k, 2)
    class_logits: torch.Tensor      # (k, num_classes)
    vote_offsets: torch.Tensor      # (m, 3)
    votes: torch.Tensor             # (m, 3)
    seed_xyz: torch.Tensor          # (m, 3)
    cluster_centers: torch.Tensor   # (k, 3) vote-cluster positions

    @property
    def num_proposals(self):
        return self.features.shape[0]

    def boxes(self):
        """Predicted boxes as geometry values (detached)."""
        c = self.centers.detach().cpu().numpy()
        s = self.sizes.detach().cpu().numpy()
        return [AxisAlignedBox(center=c[i], size=s[i])
                for i in range(c.shape[0])]


@dataclass
class DetectionTargets:
    """Per-proposal assignment against a fixed ground truth.

    objectness_label: 1 positive, 0 negative, -1 ignored.
    """

    gt: tuple
    assignment: np.ndarray       # (k,) nearest gt index (-1 when no gt)
    objectness_label: np.ndarray  # (k,)
    vote_mask: np.ndarray        # (m,) seeds inside some gt box
    vote_targets: np.ndarray     # (m, 3) center of the seed's object


def scene_inputs(cloud: PointCloud, dtype=torch.float32):
    """(xyz, per-point features) tensors for the detector.

    The feature channel is the point height (z); color channels are not fed
    to the model so that file-loaded and generated scenes share one input
    contract.
    """
    xyz = torch.as_tensor(cloud.points, dtype=dtype)
    feats = xyz[:, 2:3].clone()
    return xyz, feats


def _pointwise_mlp(in_dim, widths):
    layers = []
    for w in widths:
        layers += [nn.Linear(in_dim, w), nn.ReLU()]
        in_dim = w
    return nn.Sequential(*layers)


class SetAbstraction(nn.Module):
    """Farthest-point sampled centers, ball grouping, shared MLP, max pool."""

    def __init__(self, in_dim, mlp_widths, num_centers, radius, nsample):
        super().__init__()
        self.num_centers = num_centers
        self.radius = radius
        self.nsample = nsample
        self.mlp = _pointwise_mlp(in_dim + 3, mlp_widths)
        self.out_dim = mlp_widths[-1]

    def forward(self, xyz, feats):
        xyz_np = xyz.detach().cpu().numpy().astype(np.float64)
        m = min(self.num_centers, xyz_np.shape[0])
        center_idx = kernels.farthest_point_sample(xyz_np, m)
        group_idx = kernels.ball_query(xyz_np, xyz_np[center_idx],
                                       self.radius, self.nsample)
        center_xyz = xyz[center_idx]
        grouped_xyz = xyz[group_idx] - center_xyz.unsqueeze(1)  # (m, ns, 3)
        grouped = torch.cat([grouped_xyz, feats[group_idx]], dim=-1)
        pooled = self.mlp(grouped).max(dim=1).values
        return center_xyz, pooled


class VotingHead(nn.Module):
    """Maps each seed to a coordinate offset and a feature residual."""

    def __init__(self, dim, mlp_widths):
        super().__init__()
        self.mlp = _pointwise_mlp(dim, mlp_widths)
        self.out = nn.Linear(mlp_widths[-1], 3 + dim)

    def forward(self, seed_xyz, seed_feats):
        raw = self.out(self.mlp(seed_feats))
        offsets = raw[:, :3]
        votes = seed_xyz + offsets
        vote_feats = seed_feats + raw[:, 3:]
        return votes, offsets, vote_feats


class ProposalHead(nn.Module):
    """Clusters votes and predicts box, objectness, class, and feature."""

    def __init__(self, cfg: ModelConfig, in_dim):
        super().__init__()
        self.cfg = cfg
        self.mlp = _pointwise_mlp(in_dim + 3, cfg.proposal_mlp)
        w = cfg.proposal_mlp[-1]
        self.feature_proj = nn.Linear(w, cfg.proposal_hidden)
        self.box_head = nn.Linear(w, 3 + 3 + 2 + cfg.num_classes)

    def forward(self, votes, vote_feats):
        cfg = self.cfg
        votes_np = votes.detach().cpu().numpy().astype(np.float64)
        k = min(cfg.num_proposals, votes_np.shape[0])
        cluster_idx = kernels.farthest_point_sample(votes_np, k)
        group_idx = kernels.ball_query(votes_np, votes_np[cluster_idx],
                                       cfg.cluster_radius, cfg.cluster_nsample)
        cluster_centers = votes[cluster_idx]
        grouped_xyz = votes[group_idx] - cluster_centers.unsqueeze(1)
        grouped = torch.cat([grouped_xyz, vote_feats[group_idx]], dim=-1)
        pooled = self.mlp(grouped).max(dim=1).values       # (k, w)
        features = self.feature_proj(pooled)
        raw = self.box_head(pooled)
        centers = cluster_centers + raw[:, 0:3]
        sizes = F.softplus(raw[:, 3:6]) + 1e-3
        objectness = raw[:, 6:8]
        class_logits = raw[:, 8:]
        return ProposalSet(
            features=features, centers=centers, sizes=sizes,
            objectness_logits=objectness, class_logits=class_logits,
            vote_offsets=None, votes=votes, seed_xyz=None,
            cluster_centers=cluster_centers)


class Detector(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.sa1 = SetAbstraction(cfg.input_feature_dim, cfg.sa1_mlp,
                                  cfg.sa1_centers, cfg.sa1_radius,
                                  cfg.sa1_nsample)
        self.sa2 = SetAbstraction(self.sa1.out_dim, cfg.sa2_mlp,
                                  cfg.sa2_centers, cfg.sa2_radius,
                                  cfg.sa2_nsample)
        self.voting = VotingHead(self.sa2.out_dim, cfg.vote_mlp)
        self.proposal = ProposalHead(cfg, self.sa2.out_dim)

    def forward(self, xyz, feats) -> ProposalSet:
        seed_xyz, seed_feats = self.sa2(*self.sa1(xyz, feats))
        votes, offsets, vote_feats = self.voting(seed_xyz, seed_feats)
        props = self.proposal(votes, vote_feats)
        props.vote_offsets = offsets
        props.seed_xyz = seed_xyz
        return props


def assign_targets(props: ProposalSet, gt, near_radius=0.3, far_radius=0.6):
    """Build detection targets from a proposal set and ground-truth boxes.

    Proposal positions are the (detached) vote-cluster centers: positive
    within near_radius of a gt center, negative beyond far_radius, ignored
    in between. Seeds inside a gt box vote for that box's center.
    """
    gt = tuple(gt)
    k = props.num_proposals
    pos = props.cluster_centers.detach().cpu().numpy()
    seeds = props.seed_xyz.detach().cpu().numpy()
    m = seeds.shape[0]

    if not gt:
        return DetectionTargets(
            gt=gt, assignment=np.full(k, -1, dtype=np.int64),
            objectness_label=np.zeros(k, dtype=np.int64),
            vote_mask=np.zeros(m, dtype=bool),
            vote_targets=np.zeros((m, 3)))

    centers = np.stack([b.box.center for b in gt])
    d = np.linalg.norm(pos[:, None, :] - centers[None, :, :], axis=2)
    assignment = d.argmin(axis=1)
    nearest = d.min(axis=1)
    label = np.full(k, -1, dtype=np.int64)
    label[nearest < near_radius] = 1
    label[nearest > far_radius] = 0

    vote_mask = np.zeros(m, dtype=bool)
    vote_targets = np.zeros((m, 3))
    inside = np.stack([b.box.contains(seeds) for b in gt], axis=1)  # (m, n_gt)
    d_seed = np.linalg.norm(seeds[:, None, :] - centers[None, :, :], axis=2)
    d_seed[~inside] = np.inf
    owner = d_seed.argmin(axis=1)
    vote_mask = inside.any(axis=1)
    vote_targets[vote_mask] = centers[owner[vote_mask]]
    return DetectionTargets(gt=gt, assignment=assignment,
                            objectness_label=label, vote_mask=vote_mask,
                            vote_targets=vote_targets)


def _smooth_l1(diff):
    a = diff.abs()
    return torch.where(a < 1, 0.5 * diff * diff, a - 0.5)


def detection_loss(props: ProposalSet, targets: DetectionTargets):
    """VoteNet-style detection loss.

    total = L_vote + 0.5 * L_objectness + L_center + 0.1 * L_class with
    L_vote the mean L1 distance of in-object seeds' votes to their object
    center, L_center a smooth-L1 on positive proposals' centers and sizes
    (summed over coordinates, averaged over positives), and cross-entropies
    for objectness (positives + negatives) and class (positives).
    """
    dev, dt = props.votes.device, props.votes.dtype
    zero = torch.zeros((), device=dev, dtype=dt)

    mask = torch.as_tensor(targets.vote_mask, device=dev)
    if mask.any():
        tgt = torch.as_tensor(targets.vote_targets, device=dev, dtype=dt)
        l_vote = (props.votes[mask] - tgt[mask]).abs().sum(dim=1).mean()
    else:
        l_vote = zero

    labels = torch.as_tensor(targets.objectness_label, device=dev)
    valid = labels >= 0
    if valid.any():
        l_obj = F.cross_entropy(props.objectness_logits[valid], labels[valid])
    else:
        l_obj = zero

    positive = labels == 1
    if positive.any() and targets.gt:
        assign = targets.assignment[positive.cpu().numpy()]
        gt_centers = torch.as_tensor(
            np.stack([targets.gt[i].box.center for i in assign]),
            device=dev, dtype=dt)
        gt_sizes = torch.as_tensor(
            np.stack([targets.gt[i].box.size for i in assign]),
            device=dev, dtype=dt)
        gt_classes = torch.as_tensor(
            np.array([targets.gt[i].class_id for i in assign]), device=dev)
        l_center = (_smooth_l1(props.centers[positive] - gt_centers).sum(dim=1).mean()
                    + _smooth_l1(props.sizes[positive] - gt_sizes).sum(dim=1).mean())
        l_class = F.cross_entropy(props.class_logits[positive], gt_classes)
    else:
        l_center = zero
        l_class = zero

    total = l_vote + 0.5 * l_obj + l_center + 0.1 * l_class
    components = {"vote": l_vote, "objectness": l_obj,
                  "center": l_center, "class": l_class}
    return total, components

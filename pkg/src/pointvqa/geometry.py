"""Point-cloud and axis-aligned box primitives.

Everything here is pure and operates on immutable values; the training
losses and the localization metrics are all built on top of these.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Fixed 18-class vocabulary mirroring the ScanNet benchmark classes.
CLASS_NAMES = (
    "cabinet", "bed", "chair", "sofa", "table", "door", "window",
    "bookshelf", "picture", "counter", "desk", "curtain", "refrigerator",
    "shower_curtain", "toilet", "sink", "bathtub", "garbagebin",
)
NUM_CLASSES = len(CLASS_NAMES)
CLASS_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}


@dataclass(frozen=True)
class PointCloud:
    """Per-scene point set, N x 3 coordinates in meters.

    ``extra`` optionally carries N x C per-point channels (color in [0,1],
    height in meters).
    """

    points: np.ndarray
    extra: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"points must be N x 3 with N >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.extra is not None:
            ex = np.asarray(self.extra, dtype=np.float64)
            if ex.ndim != 2 or ex.shape[0] != pts.shape[0]:
                raise ValueError("extra must have exactly N rows")
            object.__setattr__(self, "extra", ex)

    @property
    def num_points(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class AxisAlignedBox:
    """Axis-aligned box given by center and (strictly positive) size."""

    center: np.ndarray
    size: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        s = np.asarray(self.size, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(s))):
            raise ValueError("box center and size must be finite")
        if np.any(s <= 0):
            raise ValueError(f"box size must be positive, got {s}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "size", s)

    @property
    def min_corner(self):
        return self.center - self.size / 2.0

    @property
    def max_corner(self):
        return self.center + self.size / 2.0

    @property
    def volume(self):
        return float(np.prod(self.size))

    def contains(self, points):
        """Boolean mask of points inside the box (closed on both faces)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        lo, hi = self.min_corner, self.max_corner
        return np.all((pts >= lo) & (pts <= hi), axis=1)


@dataclass(frozen=True)
class LabeledBox:
    """Box plus its class id in the fixed 18-class vocabulary."""

    box: AxisAlignedBox
    class_id: int

    def __post_init__(self):
        if not (0 <= self.class_id < NUM_CLASSES):
            raise ValueError(f"class_id must be in [0, {NUM_CLASSES}), got {self.class_id}")

    @property
    def class_name(self):
        return CLASS_NAMES[self.class_id]


def iou(a: AxisAlignedBox, b: AxisAlignedBox) -> float:
    """Intersection-over-union of two axis-aligned boxes, in [0, 1].

    Boxes that merely touch have IoU exactly 0.
    """
    lo = np.maximum(a.min_corner, b.min_corner)
    hi = np.minimum(a.max_corner, b.max_corner)
    edges = hi - lo
    if np.any(edges <= 0):
        return 0.0
    inter = float(np.prod(edges))
    union = a.volume + b.volume - inter
    return inter / union


def iou_monte_carlo(a: AxisAlignedBox, b: AxisAlignedBox,
                    num_samples: int = 1_000_000, seed: int = 0) -> float:
    """Monte-Carlo IoU estimate, independent of the analytic interval math.

    Samples uniformly over the bounding box of the union and estimates
    inter/union from membership counts.
    """
    rng = np.random.default_rng(seed)
    lo = np.minimum(a.min_corner, b.min_corner)
    hi = np.maximum(a.max_corner, b.max_corner)
    pts = rng.uniform(lo, hi, size=(num_samples, 3))
    in_a = a.contains(pts)
    in_b = b.contains(pts)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


# Corner ordering: index bit pattern zyx, i.e. corner i has
# x sign (i & 1), y sign (i >> 1 & 1), z sign (i >> 2 & 1).
_CORNER_SIGNS = np.array(
    [[(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)],
    dtype=np.float64,
) * 2.0 - 1.0


def box_corners(b: AxisAlignedBox) -> np.ndarray:
    """8 x 3 corners in the fixed zyx bit order documented above."""
    return b.center + _CORNER_SIGNS * (b.size / 2.0)


def box_from_corners(corners) -> AxisAlignedBox:
    """Axis-aligned bounding box of a set of points (round-trips box_corners)."""
    corners = np.asarray(corners, dtype=np.float64)
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)
    return AxisAlignedBox(center=(lo + hi) / 2.0, size=hi - lo)


def rotation_matrix(angles) -> np.ndarray:
    """Rotation Rz @ Ry @ Rx for (x, y, z) angles in radians."""
    ax, ay, az = (float(v) for v in angles)
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx

def rotate_points(pc: PointCloud, angles) -> PointCloud:
    """Rotate a cloud about the origin by Rz @ Ry @ Rx.

    Pairwise distances are preserved up to floating-point error.
    """
    angles = np.asarray(angles, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(angles)):
        raise ValueError("rotation angles must be finite")
    rot = rotation_matrix(angles)
    return PointCloud(points=pc.points @ rot.T, extra=pc.extra)

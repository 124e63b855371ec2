"""Pure-numpy implementations of the sampling/grouping kernels.

These are the reference semantics; the compiled extension in ``_native.pyx``
must agree index-for-index.
"""

import numpy as np


def farthest_point_sample(points, m):
    """Greedy max-min selection of m indices; selection starts at index 0."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got m={m}")
    selected = np.empty(m, dtype=np.int64)
    selected[0] = 0
    dist = np.sum((pts - pts[0]) ** 2, axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(dist))
        selected[i] = nxt
        dist = np.minimum(dist, np.sum((pts - pts[nxt]) ** 2, axis=1))
    return selected


def ball_query(points, centers, radius, nsample):
    """For each center, the nsample nearest points within radius.

    Neighbors are ordered by increasing distance (ties by index). When fewer
    than nsample points fall inside the ball the nearest found is repeated;
    an empty ball falls back to the globally nearest point.
    """
    pts = np.asarray(points, dtype=np.float64)
    ctrs = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if radius <= 0:
        raise ValueError("radius must be positive")
    out = np.empty((ctrs.shape[0], nsample), dtype=np.int64)
    r2 = radius * radius
    for ci in range(ctrs.shape[0]):
        d2 = np.sum((pts - ctrs[ci]) ** 2, axis=1)
        order = np.argsort(d2, kind="stable")
        inside = order[d2[order] < r2][:nsample]
        if inside.size == 0:
            inside = order[:1]
        row = np.full(nsample, inside[0], dtype=np.int64)
        row[: inside.size] = inside
        out[ci] = row
    return out

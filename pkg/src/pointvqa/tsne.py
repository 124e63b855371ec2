"""Exact (O(n^2)) t-SNE for the scene-embedding projection plot.

Pairwise affinities use per-point perplexity calibration via bisection on
the Gaussian bandwidth; the low-dimensional map is optimized by momentum
gradient descent with early exaggeration. Small scene counts only.
"""

from __future__ import annotations

import numpy as np


def _conditional_probs(d2_row, beta):
    p = np.exp(-d2_row * beta)
    s = p.sum()
    if s == 0:
        return p, 0.0
    p = p / s
    nz = p > 0
    entropy = -np.sum(p[nz] * np.log(p[nz]))
    return p, entropy


def _calibrate_row(d2_row, perplexity, tol=1e-5, max_iter=100):
    """Bisection on the precision beta until entropy matches log(perplexity)."""
    target = np.log(perplexity)
    beta, lo, hi = 1.0, 0.0, np.inf
    for _ in range(max_iter):
        p, entropy = _conditional_probs(d2_row, beta)
        diff = entropy - target
        if abs(diff) < tol:
            break
        if diff > 0:
            lo = beta
            beta = beta * 2 if hi == np.inf else (beta + hi) / 2
        else:
            hi = beta
            beta = (lo + beta) / 2
    return p


def joint_affinities(x, perplexity):
    n = x.shape[0]
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    cond = np.zeros((n, n))
    for i in range(n):
        row = np.delete(d2[i], i)
        p = _calibrate_row(row, perplexity)
        cond[i] = np.insert(p, i, 0.0)
    joint = (cond + cond.T) / (2 * n)
    return np.maximum(joint, 1e-12)


def kl_divergence(p, q):
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def _low_dim_q(y):
    d2 = np.sum((y[:, None, :] - y[None, :, :]) ** 2, axis=2)
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    return np.maximum(q, 1e-12), num


def exact_tsne(x, perplexity=5.0, seed=0, n_iter=1000,
               early_exaggeration=12.0, exaggeration_iters=250,
               learning_rate=200.0, return_history=False):
    """2-d embedding of x (n x d). Requires n > perplexity."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n <= perplexity:
        raise ValueError(f"need more points than the perplexity "
                         f"({n} <= {perplexity})")
    p = joint_affinities(x, perplexity)
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((n, 2)) * 1e-4
    velocity = np.zeros_like(y)
    history = []
    for it in range(n_iter):
        p_eff = p * early_exaggeration if it < exaggeration_iters else p
        p_eff = p_eff / p_eff.sum()
        q, num = _low_dim_q(y)
        pq = (p_eff - q) * num
        grad = 4 * (np.diag(pq.sum(axis=1)) - pq) @ y
        momentum = 0.5 if it < exaggeration_iters else 0.8
        velocity = momentum * velocity - learning_rate * grad
        y = y + velocity
        y = y - y.mean(axis=0)
        if return_history:
            history.append(kl_divergence(p, q))
    if return_history:
        return y, history
    return y

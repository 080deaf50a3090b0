"""Information-gain rewards from filter weight updates."""

from __future__ import annotations

import math
from collections import deque

import numpy as np


def kl_weights(w_new, w_old, eps: float = 1e-12) -> float:
    """KL divergence sum w_new log(w_new / (w_old + eps)) on the shared support.

    Terms with w_new == 0 contribute 0 (the 0 log 0 convention).  Both vectors
    must be the post-update and pre-update weights of the SAME particle set;
    never feed post-resample weights here.
    """
    wn = np.asarray(w_new, dtype=float)
    wo = np.asarray(w_old, dtype=float)
    if wn.shape != wo.shape:
        raise ValueError("weight vectors must share a support")
    mask = wn > 0.0
    with np.errstate(divide="ignore"):
        terms = wn[mask] * (np.log(wn[mask]) - np.log(wo[mask] + eps))
    return float(np.sum(terms))


def nearest_rank_quantile(values, q: float) -> float:
    """Nearest-rank (no interpolation) quantile: sorted[ceil(q*n) - 1]."""
    v = np.sort(np.asarray(values, dtype=float))
    n = v.shape[0]
    if n == 0:
        raise ValueError("empty sample")
    k = min(max(int(math.ceil(q * n)), 1), n)
    return float(v[k - 1])


class RewardClipper:
    """Running percentile clip: cap each reward at the q-quantile of the last
    window_size raw rewards.  The incoming raw value always enters the window,
    clipped or not."""

    def __init__(self, window_size: int = 1000, q: float = 0.99):
        if not 0.0 < q <= 1.0:
            raise ValueError("q must lie in (0, 1]")
        if window_size < 1:
            raise ValueError("window_size must be >= 1")
        self.q = q
        self.window = deque(maxlen=window_size)

    def clip(self, r: float) -> float:
        if len(self.window) > 0:
            cap = nearest_rank_quantile(self.window, self.q)
            out = min(r, cap)
        else:
            out = r
        self.window.append(float(r))
        return float(out)


def terminal_reward(mode: str, certificate_fired: bool, progress: float = 0.0) -> float:
    """Episode-end bonus by reward mode.

    kl: none (the dense signal is the whole reward).  hard and mixed: +1 when
    the stopping certificate fired before the horizon.  curriculum: the +1
    bonus activates only once training progress exceeds 0.5.
    """
    if mode == "kl":
        return 0.0
    if mode in ("hard", "mixed"):
        return 1.0 if certificate_fired else 0.0
    if mode == "curriculum":
        return 1.0 if (certificate_fired and progress > 0.5) else 0.0
    raise ValueError(f"unknown reward mode: {mode!r}")


def dense_reward_active(mode: str) -> bool:
    """Whether the per-step information-gain term is part of the reward."""
    if mode in ("kl", "mixed", "curriculum"):
        return True
    if mode == "hard":
        return False
    raise ValueError(f"unknown reward mode: {mode!r}")


def gaussian_kl_diag(mu0, var0, mu1, var1) -> float:
    """KL(N(mu0, diag var0) || N(mu1, diag var1)) in closed form."""
    mu0 = np.asarray(mu0, dtype=float)
    mu1 = np.asarray(mu1, dtype=float)
    var0 = np.asarray(var0, dtype=float)
    var1 = np.asarray(var1, dtype=float)
    terms = np.log(var1 / var0) + (var0 + (mu0 - mu1) ** 2) / var1 - 1.0
    return 0.5 * float(np.sum(terms))

"""Single-head self-attention and Consistent Light Attention fusion.

Feature maps are arrays of shape ``(b, f, n, d)``: batch, frames, tokens
(``h * w``) and channels.  This is the ``(b*f, n, d)`` layout used by image
attention with the frame axis split out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NonFiniteInputError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AttentionWeights:
    """Bias-free query/key/value projections, fixed for a run."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        shapes = {np.shape(m) for m in (self.w_q, self.w_k, self.w_v)}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise ValueError(f"projections must be equal-shape matrices, got {shapes}")
        for m in (self.w_q, self.w_k, self.w_v):
            if not np.all(np.isfinite(m)):
                raise ValueError("projection weights must be finite")

    @property
    def dim(self) -> int:
        return int(np.shape(self.w_q)[0])

    @classmethod
    def identity(cls, d: int) -> "AttentionWeights":
        eye = np.eye(d)
        return cls(eye, eye, eye)

    @classmethod
    def random(cls, d: int, seed: int = 0) -> "AttentionWeights":
        """Random orthogonal projections (QR of a Gaussian matrix)."""
        rng = np.random.default_rng(seed)
        mats = []
        for _ in range(3):
            q, r = np.linalg.qr(rng.standard_normal((d, d)))
            mats.append(q * np.sign(np.diag(r)))
        return cls(*mats, seed=seed)


@dataclass(frozen=True)
class ClaConfig:
    gamma: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def attention_matrix(x, w: AttentionWeights) -> np.ndarray:
    """Row-stochastic ``(..., n, n)`` matrix softmax(Q K^T / sqrt(d))."""
    x = np.asarray(x, dtype=np.float64)
    q = x @ w.w_q
    k = x @ w.w_k
    return softmax(q @ np.swapaxes(k, -1, -2) / math.sqrt(x.shape[-1]))


def self_attention(x, w: AttentionWeights) -> np.ndarray:
    """Attention over the token axis of ``(..., n, d)``; leading axes are batched."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError("self_attention input contains non-finite values")
    if x.shape[-1] != w.dim:
        raise ValueError(f"feature dim {x.shape[-1]} does not match weights dim {w.dim}")
    return attention_matrix(x, w) @ (x @ w.w_v)


def temporal_average(h) -> np.ndarray:
    """Mean over frames, broadcast back to every frame; shape is preserved."""
    h = np.asarray(h, dtype=np.float64)
    return np.broadcast_to(h.mean(axis=1, keepdims=True), h.shape).copy()


def cla_forward(h, w: AttentionWeights, cfg: ClaConfig) -> np.ndarray:
    """Blend per-frame attention with attention of the frame-averaged features.

    The average stream is attended once and broadcast, since every frame of
    the averaged map is identical.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 4:
        raise ValueError(f"feature map must be (batch, frames, tokens, dim), got {h.shape}")
    per_frame = self_attention(h, w)
    averaged = self_attention(h.mean(axis=1, keepdims=True), w)
    return (1.0 - cfg.gamma) * per_frame + cfg.gamma * averaged

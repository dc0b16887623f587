"""Video quality measures usable without pretrained networks.

``flicker_index`` stands in for mean optical-flow intensity between adjacent
frames, ``temporal_consistency`` for a CLIP similarity of consecutive frames,
and ``motion_preservation`` compares exhaustive block-matching flow against
the source instead of a learned flow network.  The serialized report tags
these with a ``_substitute`` suffix.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

BLOCK = 8
RADIUS = 4


@dataclass
class MetricsReport:
    flicker_index: float
    temporal_consistency: float
    motion_preservation: float
    relight_rmse: float | None = None

    def to_dict(self) -> dict:
        return {
            "flicker_index_substitute": self.flicker_index,
            "temporal_consistency_substitute": self.temporal_consistency,
            "motion_preservation_substitute": self.motion_preservation,
            "relight_rmse": self.relight_rmse,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(
            flicker_index=data["flicker_index_substitute"],
            temporal_consistency=data["temporal_consistency_substitute"],
            motion_preservation=data["motion_preservation_substitute"],
            relight_rmse=data.get("relight_rmse"),
        )

    def as_row(self) -> dict:
        return asdict(self)


def _video(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 4:
        raise ValueError(f"expected (frames, channels, height, width), got shape {v.shape}")
    if v.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    return v


def flicker_index(v) -> float:
    """Mean absolute difference between adjacent frames."""
    v = _video(v)
    return float(np.abs(np.diff(v, axis=0)).mean())


def temporal_consistency(v) -> float:
    """Mean cosine similarity of adjacent mean-removed frames.

    A pair where either frame is constant scores 1 when both frames are
    equal and is skipped otherwise; with no scoring pair the result is 1.
    """
    v = _video(v)
    flat = v.reshape(v.shape[0], -1)
    centered = flat - flat.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    scores = []
    for i in range(len(flat) - 1):
        if norms[i] == 0 or norms[i + 1] == 0:
            if np.array_equal(flat[i], flat[i + 1]):
                scores.append(1.0)
            continue
        cos = float(centered[i] @ centered[i + 1] / (norms[i] * norms[i + 1]))
        scores.append(min(1.0, max(-1.0, cos)))
    return float(np.mean(scores)) if scores else 1.0


def _candidates(radius: int) -> list[tuple[int, int]]:
    """Displacements ordered by the tie-break: magnitude, then (dy, dx)."""
    offs = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    return sorted(offs, key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]))


def block_flow(a, b, block: int = BLOCK, radius: int = RADIUS) -> np.ndarray:
    """Exhaustive-search block matching from frame ``a`` to frame ``b``.

    Frames are ``(c, h, w)`` or ``(h, w)``.  Returns ``(h // block, w // block, 2)``
    integer ``(dy, dx)`` displacements minimizing the sum of absolute
    differences; displaced blocks must lie inside ``b``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    _, h, w = a.shape
    if h < block or w < block:
        raise ValueError(f"frame {h}x{w} smaller than block {block}")
    nby, nbx = h // block, w // block
    ys = np.arange(nby) * block
    xs = np.arange(nbx) * block
    a_blocks = a[:, :nby * block, :nbx * block].reshape(-1, nby, block, nbx, block)

    best_cost = np.full((nby, nbx), np.inf)
    best = np.zeros((nby, nbx, 2), dtype=np.int64)
    # pad so every displaced window can be sliced; out-of-frame windows are masked
    pad = np.pad(b, ((0, 0), (radius, radius), (radius, radius)))
    for dy, dx in _candidates(radius):
        shifted = pad[:, radius + dy:radius + dy + nby * block, radius + dx:radius + dx + nbx * block]
        cost = np.abs(a_blocks - shifted.reshape(a_blocks.shape)).sum(axis=(0, 2, 4))
        valid = ((ys + dy >= 0) & (ys + dy + block <= h))[:, None] & \
                ((xs + dx >= 0) & (xs + dx + block <= w))[None, :]
        better = valid & (cost < best_cost)
        best_cost[better] = cost[better]
        best[better] = (dy, dx)
    return best


def video_flow(v, block: int = BLOCK, radius: int = RADIUS) -> np.ndarray:
    v = _video(v)
    return np.stack([block_flow(v[i], v[i + 1], block, radius) for i in range(len(v) - 1)])


def motion_preservation(output, source, block: int = BLOCK, radius: int = RADIUS) -> float:
    """Mean endpoint error between block flows of ``output`` and ``source``."""
    output = _video(output)
    source = _video(source)
    if output.shape != source.shape:
        raise ValueError(f"shape mismatch: {output.shape} vs {source.shape}")
    diff = video_flow(output, block, radius) - video_flow(source, block, radius)
    return float(np.linalg.norm(diff, axis=-1).mean())


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return math.sqrt(float(np.mean((a - b) ** 2)))


def evaluate(output, source, reference=None) -> MetricsReport:
    """Full report; ``reference`` is the ground-truth relit video when known."""
    return MetricsReport(
        flicker_index=flicker_index(output),
        temporal_consistency=temporal_consistency(output),
        motion_preservation=motion_preservation(output, source),
        relight_rmse=None if reference is None else rmse(output, reference),
    )

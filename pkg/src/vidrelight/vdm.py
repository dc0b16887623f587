"""Toy video denoisers and the consistent-target construction.

The oracle recovers the clean signal carried by the current latent, using
the run's known noise draw: ``(z_t - sqrt(1 - abar) * eps) / sqrt(abar)``.
On the unguided trajectory that is exactly the source latent; once guidance
has moved the latent it is whatever signal the latent now carries, which is
how a perfect video model would behave.  Without a noise draw in the
context it falls back to returning the source latent.

The smoothing denoiser stands in for learned motion priors: it low-passes
the oracle estimate along time with a box filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule, predict_z0, v_from_target

KINDS = ("oracle", "smoothing")


@dataclass(frozen=True)
class DenoiserKind:
    kind: str = "smoothing"
    strength: float = 1.0
    radius: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown denoiser kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.strength <= 1.0:
            raise ValueError(f"smoothing strength must lie in [0, 1], got {self.strength}")
        if int(self.radius) != self.radius or self.radius < 0:
            raise ValueError(f"radius must be a nonnegative integer, got {self.radius}")


@dataclass(frozen=True, eq=False)
class DenoiseContext:
    """What the toy denoiser is allowed to know about the run.

    ``prior`` and ``mask`` are only set for background generation: outside
    the mask the denoiser predicts ``prior`` instead of the oracle signal.
    """

    source: np.ndarray
    noise: np.ndarray | None = None
    prior: np.ndarray | float | None = None
    mask: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class DetailCompensation:
    delta: np.ndarray


def box_filter_time(x, radius: int) -> np.ndarray:
    """Moving average over axis 0 with windows truncated at the ends.

    Frame ``i`` averages frames ``max(0, i-r) .. min(f-1, i+r)``; constants
    pass through unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    f = x.shape[0]
    if radius == 0 or f == 1:
        return x.copy()
    csum = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x, axis=0)])
    idx = np.arange(f)
    lo = np.maximum(idx - radius, 0)
    hi = np.minimum(idx + radius, f - 1) + 1
    counts = (hi - lo).reshape((f,) + (1,) * (x.ndim - 1))
    return (csum[hi] - csum[lo]) / counts


def oracle_z0(z_t, t: int, sched: NoiseSchedule, context: DenoiseContext) -> np.ndarray:
    if context.noise is None:
        z0 = np.array(context.source, dtype=np.float64)
    else:
        ab = sched.alpha_bar(t)
        z0 = (np.asarray(z_t) - math.sqrt(1.0 - ab) * context.noise) / math.sqrt(ab)
    if context.prior is not None:
        mask = np.ones(z0.shape, dtype=bool) if context.mask is None else context.mask
        z0 = np.where(mask, z0, context.prior)
    return z0


def denoise_z0(kind: DenoiserKind, z_t, t: int, sched: NoiseSchedule, context: DenoiseContext) -> np.ndarray:
    z0 = oracle_z0(z_t, t, sched, context)
    if kind.kind == "smoothing" and kind.strength > 0:
        z0 = (1.0 - kind.strength) * z0 + kind.strength * box_filter_time(z0, kind.radius)
    return z0


def predict_v(kind: DenoiserKind, z_t, t: int, sched: NoiseSchedule, context: DenoiseContext) -> np.ndarray:
    return v_from_target(z_t, denoise_z0(kind, z_t, t, sched, context), t, sched)


def capture_detail(z0_hat_first, source_latent) -> DetailCompensation:
    z0_hat_first = np.asarray(z0_hat_first, dtype=np.float64)
    source_latent = np.asarray(source_latent, dtype=np.float64)
    if z0_hat_first.shape != source_latent.shape:
        raise ValueError(f"shape mismatch: {z0_hat_first.shape} vs {source_latent.shape}")
    return DetailCompensation(delta=source_latent - z0_hat_first)


def consistent_target(v_t, z_t, t: int, sched: NoiseSchedule, detail: DetailCompensation) -> np.ndarray:
    z0 = predict_z0(z_t, v_t, t, sched)
    if z0.shape != detail.delta.shape:
        raise ValueError(f"shape mismatch: {z0.shape} vs {detail.delta.shape}")
    return z0 + detail.delta


def temporal_total_variation(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.abs(np.diff(x, axis=0)).sum())

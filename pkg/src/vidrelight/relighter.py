"""Frame-by-frame image relighting oracle with an unstable light source.

An image relighting model applied independently per frame keeps each
frame's albedo and geometry but estimates a slightly different light
source every time.  Here that instability is explicit: each frame gets the
target illumination plus Gaussian jitter of scale ``sigma``.  Consistent
Light Attention then mixes every frame's illumination features with their
temporal mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cla import AttentionWeights, ClaConfig, cla_forward
from .lightworld import LightingCondition, Scene, render_frames


@dataclass(frozen=True, eq=False)
class RelightRequest:
    appearance: np.ndarray
    scene: Scene
    condition: LightingCondition
    cla: ClaConfig = field(default_factory=ClaConfig)


def jittered_illuminations(condition: LightingCondition, frames: int, seed: int | None = None) -> np.ndarray:
    """Per-frame illuminations ``(frames, K)``, clamped at zero."""
    seed = condition.seed if seed is None else seed
    target = np.asarray(condition.target, dtype=np.float64)
    noise = np.random.default_rng(seed).standard_normal((frames, target.size))
    return np.maximum(target + condition.jitter * noise, 0.0)


def stabilize_illuminations(Ls, cla: ClaConfig) -> np.ndarray:
    """Route the per-frame K-vectors through CLA as one-token features.

    With a single token and identity projections the attention output is
    the value itself, so this reduces to ``(1 - gamma) L_f + gamma mean(L)``.
    """
    Ls = np.asarray(Ls, dtype=np.float64)
    if Ls.ndim != 2 or Ls.shape[0] == 0:
        raise ValueError(f"expected a non-empty (frames, K) sequence, got shape {Ls.shape}")
    features = Ls[None, :, None, :]
    out = cla_forward(features, AttentionWeights.identity(Ls.shape[1]), cla)
    return out[0, :, 0, :]


def relit_illuminations(condition: LightingCondition, frames: int, cla: ClaConfig,
                        seed: int | None = None) -> np.ndarray:
    return stabilize_illuminations(jittered_illuminations(condition, frames, seed), cla)


def relight(req: RelightRequest, seed: int | None = None) -> np.ndarray:
    """Relit video: same transport as the input appearance, new per-frame light."""
    appearance = np.asarray(req.appearance)
    if appearance.shape != req.scene.video_shape:
        raise ValueError(f"appearance shape {appearance.shape} does not match scene {req.scene.video_shape}")
    Ls = relit_illuminations(req.condition, req.scene.frames, req.cla, seed)
    return render_frames(req.scene, Ls)

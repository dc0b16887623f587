"""Linear stand-ins for the latent autoencoder.

Both maps are linear, so light-transport linearity survives the trip into
latent space and pixel-space blending commutes with ``encode``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("identity", "linear-downsample")


@dataclass(frozen=True)
class Codec:
    kind: str = "identity"
    scale: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown codec kind {self.kind!r}; expected one of {KINDS}")
        if int(self.scale) != self.scale or self.scale < 1:
            raise ValueError(f"scale must be a positive integer, got {self.scale}")

    @property
    def factor(self) -> int:
        return 1 if self.kind == "identity" else int(self.scale)

    def encode(self, video) -> np.ndarray:
        """Pixel video (f, c, h, w) -> latent video (f, c, h/s, w/s)."""
        video = np.asarray(video, dtype=np.float64)
        if video.ndim != 4:
            raise ValueError(f"expected (frames, channels, height, width), got shape {video.shape}")
        s = self.factor
        if s == 1:
            return video.copy()
        f, c, h, w = video.shape
        if h % s or w % s:
            raise ValueError(f"spatial dims {h}x{w} not divisible by scale {s}")
        return video.reshape(f, c, h // s, s, w // s, s).mean(axis=(3, 5))

    def decode(self, latent) -> np.ndarray:
        latent = np.asarray(latent, dtype=np.float64)
        if latent.ndim != 4:
            raise ValueError(f"expected (frames, channels, height, width), got shape {latent.shape}")
        s = self.factor
        if s == 1:
            return latent.copy()
        return np.repeat(np.repeat(latent, s, axis=2), s, axis=3)

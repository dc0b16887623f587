"""Diffusion-time algebra for v-prediction DDIM sampling.

Step indices are 1-based: ``t`` ranges over ``1..T`` and ``alpha_bar(0)`` is
defined as 1 so the last deterministic step lands exactly on its target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable beta / alpha-bar tables for ``T`` steps."""

    betas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        betas = np.array(self.betas, dtype=np.float64)
        alpha_bars = np.array(self.alpha_bars, dtype=np.float64)
        if betas.ndim != 1 or betas.size == 0 or betas.shape != alpha_bars.shape:
            raise ValueError("betas and alpha_bars must be equal-length 1-D sequences")
        if not np.all(np.isfinite(betas)) or np.any(betas <= 0) or np.any(betas >= 1):
            raise ValueError("every beta must lie in (0, 1)")
        betas.flags.writeable = False
        alpha_bars.flags.writeable = False
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    @classmethod
    def from_betas(cls, betas) -> "NoiseSchedule":
        betas = np.asarray(betas, dtype=np.float64)
        return cls(betas, np.cumprod(1.0 - betas))

    @classmethod
    def from_alpha_bars(cls, alpha_bars) -> "NoiseSchedule":
        """Build the schedule whose cumulative products equal ``alpha_bars``."""
        alpha_bars = np.asarray(alpha_bars, dtype=np.float64)
        if alpha_bars.ndim != 1 or alpha_bars.size == 0:
            raise ValueError("alpha_bars must be a non-empty 1-D sequence")
        prev = np.concatenate([[1.0], alpha_bars[:-1]])
        return cls(1.0 - alpha_bars / prev, alpha_bars)

    @property
    def total_steps(self) -> int:
        return int(self.betas.size)

    def beta(self, t: int) -> float:
        self._check_step(t)
        return float(self.betas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self._check_step(t)
        return float(self.alpha_bars[t - 1])

    def closest_step(self, alpha_bar: float) -> int:
        """1-based step whose alpha-bar is nearest to ``alpha_bar``."""
        return int(np.argmin(np.abs(self.alpha_bars - alpha_bar))) + 1

    def respace(self, timesteps) -> "NoiseSchedule":
        """Sub-schedule over strictly increasing 1-based ``timesteps``.

        The result has ``len(timesteps)`` steps; step ``i`` carries the
        alpha-bar of ``timesteps[i-1]`` in this schedule.
        """
        timesteps = [int(s) for s in timesteps]
        if not timesteps or any(b <= a for a, b in zip(timesteps, timesteps[1:])):
            raise ValueError("timesteps must be non-empty and strictly increasing")
        return NoiseSchedule.from_alpha_bars([self.alpha_bar(s) for s in timesteps])

    def _check_step(self, t: int):
        if not 1 <= t <= self.total_steps:
            raise ValueError(f"step {t} outside 1..{self.total_steps}")


@dataclass(frozen=True)
class DdimStepCoeffs:
    t: int
    a: float
    b: float


def make_linear_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    if not (math.isfinite(beta_start) and math.isfinite(beta_end)):
        raise ValueError("beta endpoints must be finite")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, int(T)))


def default_schedule() -> NoiseSchedule:
    return make_linear_schedule(1000, 8.5e-4, 1.2e-2)


def _same_shape(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def forward_step(z_prev, t: int, eps, sched: NoiseSchedule) -> np.ndarray:
    """One Markov noising step: sqrt(1-beta_t) z_prev + sqrt(beta_t) eps."""
    z_prev, eps = _same_shape(z_prev, eps)
    beta = sched.beta(t)
    return math.sqrt(1.0 - beta) * z_prev + math.sqrt(beta) * eps


def add_noise(z0, t: int, eps, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form sample of z_t given the clean latent and a noise draw."""
    z0, eps = _same_shape(z0, eps)
    ab = sched.alpha_bar(t)
    return math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * eps


def v_from(z0, eps, t: int, sched: NoiseSchedule) -> np.ndarray:
    z0, eps = _same_shape(z0, eps)
    ab = sched.alpha_bar(t)
    return math.sqrt(ab) * eps - math.sqrt(1.0 - ab) * z0


def predict_z0(z_t, v_t, t: int, sched: NoiseSchedule) -> np.ndarray:
    z_t, v_t = _same_shape(z_t, v_t)
    ab = sched.alpha_bar(t)
    return math.sqrt(ab) * z_t - math.sqrt(1.0 - ab) * v_t


def ddim_coeffs(t: int, sched: NoiseSchedule) -> DdimStepCoeffs:
    ab = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t - 1)
    if ab >= 1.0:
        raise ValueError(f"alpha_bar at step {t} is 1; DDIM coefficients undefined")
    a = math.sqrt((1.0 - ab_prev) / (1.0 - ab))
    b = math.sqrt(ab_prev) - math.sqrt(ab) * a
    return DdimStepCoeffs(t=t, a=a, b=b)


def ddim_step(z_t, target_z0, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Deterministic (eta = 0) step from z_t toward a noise-free target."""
    z_t, target_z0 = _same_shape(z_t, target_z0)
    c = ddim_coeffs(t, sched)
    return c.a * z_t + c.b * target_z0


def v_from_target(z_t, target_z0, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Velocity that makes ``predict_z0`` return ``target_z0``."""
    z_t, target_z0 = _same_shape(z_t, target_z0)
    ab = sched.alpha_bar(t)
    if ab >= 1.0:
        raise ValueError(f"alpha_bar at step {t} is 1; velocity undefined")
    return (math.sqrt(ab) * z_t - target_z0) / math.sqrt(1.0 - ab)

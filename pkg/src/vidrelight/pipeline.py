"""The relighting denoising loop and its background-generation variant.

A source video is encoded, noised part of the way, and denoised for
``steps`` iterations.  At every step the denoiser's clean estimate (plus a
detail compensation captured at the first step) is the consistent target;
the image relighter turns its decoded appearance into a relight target; the
two appearances are blended with a weight that grows as denoising proceeds,
and the encoded blend replaces the target of the DDIM update.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .cla import ClaConfig, NonFiniteInputError
from .codec import Codec
from .lightworld import LightingCondition, Scene, illumination, render
from .metrics import MetricsReport, evaluate, flicker_index, rmse
from .relighter import RelightRequest, relight
from .schedule import (
    NoiseSchedule,
    add_noise,
    ddim_coeffs,
    ddim_step,
    make_linear_schedule,
    predict_z0,
    v_from_target,
)
from .vdm import DenoiseContext, DenoiserKind, DetailCompensation, capture_detail, consistent_target, predict_v

MODES = ("full-video", "background-generation")
FUSION_KINDS = ("power", "constant")


class PipelineError(RuntimeError):
    """A failure inside the denoising loop, tagged with the step index."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


class NumericError(PipelineError):
    pass


@dataclass(frozen=True)
class FusionSchedule:
    """Relight-target weight per remaining-step index ``t``.

    ``power``: ``1 - (t / steps) ** k``, zero at the first (noisiest) step and
    rising toward one.  ``constant``: ``value`` at every step.
    """

    kind: str = "power"
    k: float = 1.0
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in FUSION_KINDS:
            raise ValueError(f"unknown fusion schedule {self.kind!r}; expected one of {FUSION_KINDS}")
        if not self.k > 0:
            raise ValueError(f"decay exponent k must be positive, got {self.k}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"constant weight must lie in [0, 1], got {self.value}")

    def weight(self, t: int, steps: int) -> float:
        if self.kind == "constant":
            return float(self.value)
        return 1.0 - (t / steps) ** self.k


@dataclass(frozen=True)
class ScheduleSpec:
    total_steps: int = 1000
    beta_start: float = 8.5e-4
    beta_end: float = 1.2e-2

    def build(self) -> NoiseSchedule:
        return make_linear_schedule(self.total_steps, self.beta_start, self.beta_end)


@dataclass(frozen=True)
class PipelineConfig:
    steps: int = 25
    start_alpha_bar: float = 0.25
    gamma: float = 0.5
    fusion: FusionSchedule = field(default_factory=FusionSchedule)
    denoiser: DenoiserKind = field(default_factory=DenoiserKind)
    codec: Codec = field(default_factory=Codec)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    source_light: tuple[float, ...] = (1.0, 0.8, 0.2, 0.2)
    target_light: tuple[float, ...] = (1.0, 0.1, 0.9, 0.3)
    jitter: float = 0.1
    noise_seed: int = 0
    relight_seed: int = 1
    mode: str = "full-video"
    background_steps: int | None = None
    background_prior: float = 0.5

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if not 0.0 < self.start_alpha_bar < 1.0:
            raise ValueError(f"start_alpha_bar must lie in (0, 1), got {self.start_alpha_bar}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.background_steps is not None and self.background_steps <= self.steps:
            raise ValueError("background_steps must exceed steps")
        ClaConfig(self.gamma)
        illumination(self.source_light)
        illumination(self.target_light)
        if not self.jitter >= 0:
            raise ValueError(f"jitter must be nonnegative, got {self.jitter}")

    @property
    def cla(self) -> ClaConfig:
        return ClaConfig(self.gamma)

    @property
    def condition(self) -> LightingCondition:
        return LightingCondition(self.target_light, self.jitter, self.relight_seed)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        nested = {"fusion": FusionSchedule, "denoiser": DenoiserKind, "codec": Codec, "schedule": ScheduleSpec}
        for key, typ in nested.items():
            if isinstance(data.get(key), dict):
                data[key] = typ(**data[key])
        for key in ("source_light", "target_light"):
            if key in data:
                data[key] = tuple(float(v) for v in data[key])
        return cls(**data)


def fuse_targets(Iv, Ir, lambda_t: float) -> np.ndarray:
    """Blend consistent and relight appearances; ``lambda_t`` weights the relight."""
    Iv = np.asarray(Iv, dtype=np.float64)
    Ir = np.asarray(Ir, dtype=np.float64)
    if Iv.shape != Ir.shape:
        raise ValueError(f"shape mismatch: {Iv.shape} vs {Ir.shape}")
    if not 0.0 <= lambda_t <= 1.0:
        raise ValueError(f"fusion weight must lie in [0, 1], got {lambda_t}")
    return Iv + lambda_t * (Ir - Iv)


def fuse_appearances(Iv, Ir) -> np.ndarray:
    """Unweighted appearance sum, the illumination-additive fusion."""
    Iv = np.asarray(Iv, dtype=np.float64)
    Ir = np.asarray(Ir, dtype=np.float64)
    if Iv.shape != Ir.shape:
        raise ValueError(f"shape mismatch: {Iv.shape} vs {Ir.shape}")
    return Iv + Ir


def _spaced(lo: int, hi: int, n: int) -> list[int]:
    """``n`` strictly increasing integers in ``(lo, hi]`` ending at ``hi``."""
    steps = [lo + int(round(i * (hi - lo) / n)) for i in range(1, n + 1)]
    if steps[0] <= lo or any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValueError(f"cannot place {n} distinct steps in ({lo}, {hi}]")
    return steps


def sampling_timesteps(cfg: PipelineConfig, base: NoiseSchedule | None = None) -> list[int]:
    """Base-schedule timesteps visited by the loop, lowest first.

    The top of the run is the base step whose alpha-bar is closest to
    ``cfg.start_alpha_bar``.  Background generation adds steps above it up
    to the last base step, so its final ``cfg.steps`` steps match a full run.
    """
    base = base or cfg.schedule.build()
    start = base.closest_step(cfg.start_alpha_bar)
    steps = _spaced(0, start, cfg.steps)
    if cfg.mode == "background-generation":
        extra = (cfg.background_steps or 2 * cfg.steps) - cfg.steps
        steps += _spaced(start, base.total_steps, extra)
    return steps


def sampling_schedule(cfg: PipelineConfig) -> NoiseSchedule:
    base = cfg.schedule.build()
    return base.respace(sampling_timesteps(cfg, base))


@dataclass
class StepTrace:
    t: int
    lam: float
    relight_gap: float
    consistent_norm: float
    relight_norm: float
    fusion_norm: float
    velocity_norm: float
    redirected_velocity_norm: float
    plf_residual: float
    flicker_so_far: float
    arrays: dict | None = None

    def row(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if k != "arrays"}


@dataclass
class RunResult:
    video: np.ndarray
    metrics: MetricsReport
    trace: list[StepTrace]
    source: np.ndarray
    reference: np.ndarray
    extras: dict = field(default_factory=dict)


def _rms(x) -> float:
    return math.sqrt(float(np.mean(np.square(x))))


def _check_finite(t: int, name: str, x):
    if not np.all(np.isfinite(x)):
        raise NumericError(t, f"non-finite values in {name}")


def _plf_loop(z, sched: NoiseSchedule, cfg: PipelineConfig, scene: Scene, condition: LightingCondition,
              ctx: DenoiseContext, source_latent, fg_latent=None, fg_pixels=None,
              keep_arrays: bool = False):
    """Denoise from step ``cfg.steps`` down to 0 with progressive light fusion.

    ``fg_latent`` / ``fg_pixels`` restrict detail compensation and relighting
    to a foreground region; elsewhere the consistent target is kept.
    """
    codec = cfg.codec
    steps = cfg.steps
    trace = []
    detail: DetailCompensation | None = None
    for t in range(steps, 0, -1):
        try:
            v = predict_v(cfg.denoiser, z, t, sched, ctx)
            if detail is None:
                detail = capture_detail(predict_z0(z, v, t, sched), source_latent)
                if fg_latent is not None:
                    detail = DetailCompensation(np.where(fg_latent, detail.delta, 0.0))
            zv = consistent_target(v, z, t, sched, detail)
            Iv = codec.decode(zv)
            Ir = relight(RelightRequest(Iv, scene, condition, cfg.cla))
            if fg_pixels is not None:
                Ir = np.where(fg_pixels, Ir, Iv)
            lam = cfg.fusion.weight(t, steps)
            Ip = fuse_targets(Iv, Ir, lam)
            z_fused = codec.encode(Ip)
            v_tilde = v_from_target(z, z_fused, t, sched)
            z_next = ddim_step(z, z_fused, t, sched)
        except PipelineError:
            raise
        except NonFiniteInputError as exc:
            raise NumericError(t, str(exc)) from exc
        except (ValueError, FloatingPointError) as exc:
            raise PipelineError(t, str(exc)) from exc
        _check_finite(t, "latent", z_next)
        c = ddim_coeffs(t, sched)
        redirected = c.a * z + c.b * predict_z0(z, v_tilde, t, sched)
        record = StepTrace(
            t=t,
            lam=lam,
            relight_gap=_rms(Ir - Iv),
            consistent_norm=_rms(zv),
            relight_norm=_rms(Ir),
            fusion_norm=_rms(z_fused),
            velocity_norm=_rms(v),
            redirected_velocity_norm=_rms(v_tilde),
            plf_residual=float(np.max(np.abs(z_next - redirected))),
            flicker_so_far=flicker_index(Ip),
        )
        if keep_arrays:
            record.arrays = {"z_t": z, "z_next": z_next, "v": v, "v_tilde": v_tilde,
                             "consistent_target": zv, "fusion_target": z_fused,
                             "consistent_appearance": Iv, "relight_appearance": Ir, "fused_appearance": Ip}
        trace.append(record)
        z = z_next
    return z, trace


def _noise(cfg: PipelineConfig, shape) -> np.ndarray:
    return np.random.default_rng(cfg.noise_seed).standard_normal(shape)


def run(scene: Scene, source_light, cfg: PipelineConfig, condition: LightingCondition | None = None,
        keep_arrays: bool = False) -> RunResult:
    """Relight a rendered source video; see the module docstring for the loop."""
    condition = condition or cfg.condition
    if cfg.mode == "background-generation":
        return run_background_generation(scene, cfg, condition, source_light=source_light,
                                         keep_arrays=keep_arrays)
    source = render(scene, illumination(source_light))
    z_src = cfg.codec.encode(source)
    eps = _noise(cfg, z_src.shape)
    sched = sampling_schedule(cfg)
    z = add_noise(z_src, cfg.steps, eps, sched)
    ctx = DenoiseContext(source=z_src, noise=eps)
    z0, trace = _plf_loop(z, sched, cfg, scene, condition, ctx, z_src, keep_arrays=keep_arrays)
    video = cfg.codec.decode(z0)
    reference = render(scene, np.asarray(condition.target))
    return RunResult(video=video, metrics=evaluate(video, source, reference),
                     trace=trace, source=source, reference=reference)


def run_background_generation(scene: Scene, cfg: PipelineConfig, condition: LightingCondition | None = None,
                              source_light=None, mask=None, keep_arrays: bool = False) -> RunResult:
    """Relight the masked foreground and synthesize the background from noise.

    Phase one denoises the background from pure noise toward the denoiser's
    background prior while the foreground latent is held on its noised
    source trajectory; phase two is the ordinary relighting loop over the
    whole frame.  ``mask`` ``(f, h, w)`` overrides the scene's masks.
    """
    condition = condition or cfg.condition
    cfg = cfg.replace(mode="background-generation")
    source_light = cfg.source_light if source_light is None else source_light
    mask = scene.masks if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != scene.masks.shape:
        raise ValueError(f"mask shape {mask.shape} does not match scene masks {scene.masks.shape}")
    f, c, h, w = scene.video_shape
    fg_pixels = np.broadcast_to(mask[:, None], (f, c, h, w))
    fg_latent = cfg.codec.encode(fg_pixels.astype(np.float64)) >= 0.5

    source = render(scene, illumination(source_light))
    z_src = cfg.codec.encode(source)
    eps = _noise(cfg, z_src.shape)
    sched = sampling_schedule(cfg)
    total = sched.total_steps
    prior = np.full(z_src.shape, float(cfg.background_prior))
    ctx = DenoiseContext(source=z_src, noise=eps, prior=prior, mask=fg_latent)

    z = np.where(fg_latent, add_noise(z_src, total, eps, sched), eps)
    for t in range(total, cfg.steps, -1):
        try:
            v = predict_v(cfg.denoiser, z, t, sched, ctx)
            z = ddim_step(z, predict_z0(z, v, t, sched), t, sched)
            z = np.where(fg_latent, add_noise(z_src, t - 1, eps, sched), z)
        except ValueError as exc:
            raise PipelineError(t, str(exc)) from exc
        _check_finite(t, "latent", z)

    z0, trace = _plf_loop(z, sched, cfg, scene, condition, ctx, z_src,
                          fg_latent=fg_latent, fg_pixels=fg_pixels, keep_arrays=keep_arrays)
    video = cfg.codec.decode(z0)
    relit = render(scene, np.asarray(condition.target))
    prior_px = cfg.codec.decode(prior)
    reference = np.where(fg_pixels, relit, prior_px)
    extras = {}
    if fg_pixels.any():
        extras["foreground_rmse"] = rmse(video[fg_pixels], relit[fg_pixels])
    if not fg_pixels.all():
        extras["background_rmse"] = rmse(video[~fg_pixels], prior_px[~fg_pixels])
    return RunResult(video=video, metrics=evaluate(video, source, reference),
                     trace=trace, source=source, reference=reference, extras=extras)

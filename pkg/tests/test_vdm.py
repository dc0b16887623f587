import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vidrelight.schedule import add_noise, make_linear_schedule, predict_z0
from vidrelight.vdm import (
    DenoiseContext,
    DenoiserKind,
    DetailCompensation,
    box_filter_time,
    capture_detail,
    consistent_target,
    denoise_z0,
    predict_v,
    temporal_total_variation,
)

SCHED = make_linear_schedule(20, 1e-3, 0.08)


def naive_box(x, r):
    f = len(x)
    return np.stack([x[max(0, i - r):min(f, i + r + 1)].mean(axis=0) for i in range(f)])


def noisy_setup(seed=0, shape=(5, 2, 3, 3), t=12):
    rng = np.random.default_rng(seed)
    src, eps = rng.standard_normal((2,) + shape)
    return src, eps, add_noise(src, t, eps, SCHED), t


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 3)), elements=st.floats(-10, 10)),
       st.integers(0, 5))
def test_box_filter_matches_naive(x, r):
    np.testing.assert_allclose(box_filter_time(x, r), naive_box(x, r), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 3)), elements=st.floats(-10, 10)),
       st.integers(0, 4), st.floats(0, 1))
def test_smoothing_never_increases_temporal_tv(x, r, rho):
    smoothed = (1 - rho) * x + rho * box_filter_time(x, r)
    assert temporal_total_variation(smoothed) <= temporal_total_variation(x) + 1e-9


def test_oracle_recovers_source_on_unguided_trajectory():
    src, eps, z, t = noisy_setup()
    v = predict_v(DenoiserKind("oracle"), z, t, SCHED, DenoiseContext(src, eps))
    np.testing.assert_allclose(predict_z0(z, v, t, SCHED), src, rtol=0, atol=1e-12)


def test_oracle_without_noise_returns_source():
    src, _, z, t = noisy_setup(1)
    v = predict_v(DenoiserKind("oracle"), z + 3.0, t, SCHED, DenoiseContext(src))
    np.testing.assert_allclose(predict_z0(z + 3.0, v, t, SCHED), src, rtol=0, atol=1e-12)


def test_smoothing_with_zero_strength_is_oracle():
    src, eps, z, t = noisy_setup(2)
    ctx = DenoiseContext(src, eps)
    np.testing.assert_array_equal(predict_v(DenoiserKind("smoothing", 0.0, 2), z, t, SCHED, ctx),
                                  predict_v(DenoiserKind("oracle"), z, t, SCHED, ctx))


def test_smoothing_keeps_static_video():
    frame = np.random.default_rng(3).standard_normal((1, 2, 3, 3))
    src = np.repeat(frame, 4, axis=0)
    eps = np.random.default_rng(4).standard_normal(src.shape)
    z = add_noise(src, 9, eps, SCHED)
    z0 = denoise_z0(DenoiserKind("smoothing", 1.0, 6), z, 9, SCHED, DenoiseContext(src, eps))
    np.testing.assert_allclose(z0, src, atol=1e-12)
    detail = capture_detail(z0, src)
    np.testing.assert_allclose(detail.delta, 0.0, atol=1e-12)


def test_detail_of_oracle_is_zero():
    src, eps, z, t = noisy_setup(5)
    z0 = denoise_z0(DenoiserKind("oracle"), z, t, SCHED, DenoiseContext(src, eps))
    np.testing.assert_allclose(capture_detail(z0, src).delta, 0.0, atol=1e-12)


def test_detail_of_impulse_by_hand():
    src = np.array([0.0, 1.0, 0.0]).reshape(3, 1, 1, 1)
    eps = np.zeros_like(src)
    z = add_noise(src, 5, eps, SCHED)
    z0 = denoise_z0(DenoiserKind("smoothing", 1.0, 1), z, 5, SCHED, DenoiseContext(src, eps))
    np.testing.assert_allclose(z0.ravel(), [1 / 2, 1 / 3, 1 / 2], atol=1e-12)
    np.testing.assert_allclose(capture_detail(z0, src).delta.ravel(), [-1 / 2, 2 / 3, -1 / 2], atol=1e-12)


def test_consistent_target_properties():
    src, eps, z, t = noisy_setup(6)
    kind = DenoiserKind("oracle")
    ctx = DenoiseContext(src, eps)
    v = predict_v(kind, z, t, SCHED, ctx)
    zero = DetailCompensation(np.zeros_like(src))
    np.testing.assert_array_equal(consistent_target(v, z, t, SCHED, zero), predict_z0(z, v, t, SCHED))
    first = capture_detail(predict_z0(z, v, t, SCHED), src)
    np.testing.assert_allclose(consistent_target(v, z, t, SCHED, first), src, atol=1e-12)
    rng = np.random.default_rng(7)
    d1, d2 = rng.standard_normal((2,) + src.shape)
    np.testing.assert_allclose(consistent_target(v, z, t, SCHED, DetailCompensation(d1 + d2)),
                               consistent_target(v, z, t, SCHED, DetailCompensation(d1)) + d2, atol=1e-12)
    with pytest.raises(ValueError):
        consistent_target(v, z, t, SCHED, DetailCompensation(np.zeros(3)))


def test_oracle_detail_is_fixed_point_across_steps():
    src, eps, _, _ = noisy_setup(8)
    kind = DenoiserKind("smoothing", 0.7, 1)
    ctx = DenoiseContext(src, eps)
    z = add_noise(src, 15, eps, SCHED)
    detail = capture_detail(denoise_z0(kind, z, 15, SCHED, ctx), src)
    for t in range(15, 0, -1):
        z = add_noise(src, t, eps, SCHED)
        v = predict_v(kind, z, t, SCHED, ctx)
        np.testing.assert_allclose(consistent_target(v, z, t, SCHED, detail), src, atol=1e-10)


def test_prior_replaces_background():
    src, eps, z, t = noisy_setup(9)
    mask = np.zeros(src.shape, bool)
    mask[:, :, 1:, 1:] = True
    z0 = denoise_z0(DenoiserKind("oracle"), z, t, SCHED, DenoiseContext(src, eps, prior=0.5, mask=mask))
    np.testing.assert_allclose(z0[mask], src[mask], atol=1e-12)
    assert np.all(z0[~mask] == 0.5)


def test_denoiser_kind_validation():
    for bad in (dict(kind="unet"), dict(strength=1.5), dict(radius=-1)):
        with pytest.raises(ValueError):
            DenoiserKind(**bad)

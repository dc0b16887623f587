import numpy as np
import pytest

from vidrelight.cla import ClaConfig
from vidrelight.lightworld import LightingCondition, SceneParams, generate_scene, render
from vidrelight.metrics import flicker_index
from vidrelight.relighter import (
    RelightRequest,
    jittered_illuminations,
    relight,
    relit_illuminations,
    stabilize_illuminations,
)

SCENE = generate_scene(SceneParams(frames=6, height=16, width=16, object_size=6, start=(2, 2), velocity=(1, 1)), seed=2)
TARGET = (1.0, 0.1, 0.9, 0.3)


def test_no_jitter_gives_target_every_frame():
    Ls = jittered_illuminations(LightingCondition(TARGET, 0.0, 5), 7)
    np.testing.assert_array_equal(Ls, np.tile(TARGET, (7, 1)))


def test_jitter_is_deterministic_and_nonnegative():
    c = LightingCondition(TARGET, 0.5, 9)
    a, b = jittered_illuminations(c, 8), jittered_illuminations(c, 8)
    np.testing.assert_array_equal(a, b)
    assert np.all(a >= 0)
    assert not np.array_equal(a, jittered_illuminations(c, 8, seed=10))


def test_jitter_sample_variance():
    sigma = 0.1
    Ls = jittered_illuminations(LightingCondition((10.0,) * 4, sigma, 0), 10_000)
    np.testing.assert_allclose(Ls.var(axis=0, ddof=1) / sigma ** 2, 1.0, atol=0.05)


def test_stabilize_endpoints_and_hand_example():
    Ls = np.random.default_rng(0).uniform(size=(5, 3))
    np.testing.assert_array_equal(stabilize_illuminations(Ls, ClaConfig(0.0)), Ls)
    full = stabilize_illuminations(Ls, ClaConfig(1.0))
    np.testing.assert_allclose(full, np.tile(Ls.mean(axis=0), (5, 1)), atol=1e-15)
    assert full.var(axis=0).max() == 0
    two = stabilize_illuminations(np.array([[1.0, 0.0], [0.0, 1.0]]), ClaConfig(0.5))
    np.testing.assert_allclose(two, [[0.75, 0.25], [0.25, 0.75]], atol=1e-15)


def test_relight_without_jitter_is_ground_truth():
    src = render(SCENE, (1.0, 0.8, 0.2, 0.2))
    for gamma in (0.0, 0.5, 1.0):
        out = relight(RelightRequest(src, SCENE, LightingCondition(TARGET, 0.0, 1), ClaConfig(gamma)))
        np.testing.assert_allclose(out, render(SCENE, TARGET), atol=1e-14)


def test_full_gamma_has_static_light_flicker():
    src = render(SCENE, TARGET)
    out = relight(RelightRequest(src, SCENE, LightingCondition(TARGET, 0.2, 1), ClaConfig(1.0)))
    L = relit_illuminations(LightingCondition(TARGET, 0.2, 1), SCENE.frames, ClaConfig(1.0))[0]
    assert flicker_index(out) == pytest.approx(flicker_index(render(SCENE, L)), abs=1e-14)


def test_variance_ratio_gamma_half():
    f, sigma = 16, 0.1
    cond = lambda seed: LightingCondition((5.0,) * 4, sigma, seed)
    raw = np.stack([relit_illuminations(cond(s), f, ClaConfig(0.0)) for s in range(2000)])
    half = np.stack([relit_illuminations(cond(s), f, ClaConfig(0.5)) for s in range(2000)])
    ratio = half.var(axis=0).mean() / raw.var(axis=0).mean()
    expected = (0.5 + 0.5 / f) ** 2 + (f - 1) * (0.5 / f) ** 2
    # 0.53125**2 + 15 * 0.03125**2, evaluated by hand
    assert expected == 0.296875
    assert abs(ratio / expected - 1) <= 0.05


def test_temporal_variance_non_increasing_in_gamma():
    cond = LightingCondition(TARGET, 0.1, 4)
    variances = [relit_illuminations(cond, 16, ClaConfig(g)).var(axis=0).sum() for g in np.linspace(0, 1, 11)]
    assert all(b <= a + 1e-15 for a, b in zip(variances, variances[1:]))


def test_geometry_and_determinism():
    src = render(SCENE, TARGET)
    req = RelightRequest(src, SCENE, LightingCondition(TARGET, 0.3, 2), ClaConfig(0.5))
    a, b = relight(req), relight(req)
    np.testing.assert_array_equal(a, b)
    # relit object pixels still move along the scene trajectory
    dy, dx = SCENE.params.velocity
    ys, xs = np.nonzero(SCENE.masks[0])
    assert np.array_equal(SCENE.masks[1][ys + dy, xs + dx], np.ones(len(ys), bool))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        relight(RelightRequest(np.zeros((2, 3, 16, 16)), SCENE, LightingCondition(TARGET)))

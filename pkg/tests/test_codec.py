import numpy as np
import pytest

from vidrelight.codec import Codec


def test_identity_round_trip():
    x = np.random.default_rng(0).standard_normal((3, 2, 4, 6))
    c = Codec("identity")
    np.testing.assert_array_equal(c.encode(x), x)
    np.testing.assert_array_equal(c.decode(c.encode(x)), x)


def test_downsample_constant_and_block_mean():
    c = Codec("linear-downsample", 2)
    const = np.full((1, 1, 4, 4), 0.3)
    np.testing.assert_allclose(c.encode(const), np.full((1, 1, 2, 2), 0.3))
    block = np.array([[0.0, 1.0], [2.0, 3.0]]).reshape(1, 1, 2, 2)
    assert c.encode(block).item() == 1.5


def test_downsample_decode_fills_block():
    c = Codec("linear-downsample", 2)
    np.testing.assert_array_equal(c.decode(np.full((1, 1, 1, 1), 1.5)), np.full((1, 1, 2, 2), 1.5))


def test_downsample_round_trip_is_blockwise_constant():
    c = Codec("linear-downsample", 2)
    x = np.random.default_rng(1).uniform(size=(2, 3, 8, 8))
    y = c.decode(c.encode(x))
    means = x.reshape(2, 3, 4, 2, 4, 2).mean(axis=(3, 5))
    np.testing.assert_allclose(y, np.repeat(np.repeat(means, 2, 2), 2, 3))


def test_indivisible_dims_rejected():
    with pytest.raises(ValueError):
        Codec("linear-downsample", 2).encode(np.zeros((1, 1, 5, 4)))
    with pytest.raises(ValueError):
        Codec("vae")


@pytest.mark.parametrize("codec", [Codec("identity"), Codec("linear-downsample", 2), Codec("linear-downsample", 4)])
def test_linearity(codec):
    rng = np.random.default_rng(2)
    X, Y = rng.standard_normal((2, 2, 3, 8, 8))
    a, b = rng.standard_normal(2)
    np.testing.assert_allclose(codec.encode(a * X + b * Y), a * codec.encode(X) + b * codec.encode(Y), atol=1e-10)
    zx, zy = codec.encode(X), codec.encode(Y)
    np.testing.assert_allclose(codec.decode(a * zx + b * zy), a * codec.decode(zx) + b * codec.decode(zy), atol=1e-10)


@pytest.mark.parametrize("codec", [Codec("identity"), Codec("linear-downsample", 2)])
def test_blend_commutes_with_encode(codec):
    rng = np.random.default_rng(5)
    Iv, Ir = rng.uniform(size=(2, 2, 3, 8, 8))
    for lam in (0.0, 0.3, 1.0):
        lhs = codec.encode(Iv + lam * (Ir - Iv))
        zv, zr = codec.encode(Iv), codec.encode(Ir)
        np.testing.assert_allclose(lhs, zv + lam * (zr - zv), atol=1e-10)

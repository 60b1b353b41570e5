import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vivid import nn


def layer_fd_check(layer, x, h=1e-6):
    """Compare backward() with central differences of sum(w * forward(x))."""
    rng = np.random.default_rng(0)
    y = layer.forward(x)
    w = rng.standard_normal(y.shape)
    dx = layer.backward(w)
    grads = [g.copy() for g in layer.grads]
    fx = lambda: float(np.sum(w * layer.forward(x)))
    num = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = fx()
        x[idx] = old - h
        fm = fx()
        x[idx] = old
        num[idx] = (fp - fm) / (2 * h)
    errs = [np.linalg.norm(dx - num) / max(np.linalg.norm(num), 1e-12)]
    for p, g in zip(layer.params, grads):
        if not layer.trainable:
            continue
        num_p = np.empty_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            fp = fx()
            p[idx] = old - h
            fm = fx()
            p[idx] = old
            num_p[idx] = (fp - fm) / (2 * h)
        errs.append(np.linalg.norm(g - num_p) / max(np.linalg.norm(num_p), 1e-12))
    return max(errs)


def direct_conv(x, w, b):
    kh, kw = w.shape[:2]
    pt, pl = (kh - 1) // 2, (kw - 1) // 2
    n, c, h, wd = x.shape
    xp = np.zeros((n, c, h + kh - 1, wd + kw - 1))
    xp[:, :, pt : pt + h, pl : pl + wd] = x
    out = np.zeros((n, w.shape[3], h, wd))
    for i in range(h):
        for j in range(wd):
            out[:, :, i, j] = np.einsum("ncuv,uvco->no", xp[:, :, i : i + kh, j : j + kw], w)
    return out + b[None, :, None, None]


@pytest.mark.parametrize("kernel", [(8, 8), (4, 4), (3, 5), (1, 1)])
def test_conv_matches_direct(kernel, rng):
    layer = nn.Conv2D(kernel, 3, 4, rng)
    layer.params[1][:] = rng.standard_normal(4)
    x = rng.standard_normal((2, 3, 9, 7))
    assert np.allclose(layer.forward(x), direct_conv(x, *layer.params), atol=1e-12)


@pytest.mark.parametrize("kernel", [(8, 8), (4, 4), (3, 2), (1, 1)])
def test_conv_gradients(kernel, rng):
    layer = nn.Conv2D(kernel, 2, 3, rng)
    assert layer_fd_check(layer, rng.standard_normal((2, 2, 6, 6))) < 1e-4


def test_dense_gradients(rng):
    assert layer_fd_check(nn.Dense(7, 4, rng), rng.standard_normal((3, 7))) < 1e-4


def test_relu_gradients(rng):
    x = rng.standard_normal((2, 2, 5, 5))
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
    assert layer_fd_check(nn.ReLU(), x) < 1e-4


def test_maxpool_gradients(rng):
    # distinct values so the max is unique within each window
    x = rng.permutation(2 * 2 * 5 * 7).reshape(2, 2, 5, 7).astype(float) * 0.1
    assert layer_fd_check(nn.MaxPool2D(), x) < 1e-4


def test_maxpool_ceiling_shape():
    layer = nn.MaxPool2D()
    assert layer.forward(np.zeros((1, 3, 25, 25))).shape == (1, 3, 13, 13)
    assert layer.output_shape((3, 50, 50)) == (3, 25, 25)


def test_affine_layer(rng):
    layer = nn.Affine(2.0, -1.0)
    x = rng.standard_normal((1, 1, 3, 3))
    assert np.array_equal(layer.forward(x), 2 * x - 1)
    assert np.array_equal(layer.backward(np.ones_like(x)), 2 * np.ones_like(x))


def test_conv_channel_mismatch(rng):
    with pytest.raises(ValueError):
        nn.Conv2D((3, 3), 2, 2, rng).forward(np.zeros((1, 3, 5, 5)))
    with pytest.raises(ValueError):
        nn.Conv2D((0, 3), 2, 2)


@given(st.integers(1, 9), st.integers(1, 9))
def test_conv_same_shape(h, w):
    layer = nn.Conv2D((8, 8), 1, 2, np.random.default_rng(0))
    assert layer.forward(np.ones((1, 1, h, w))).shape == (1, 2, h, w)

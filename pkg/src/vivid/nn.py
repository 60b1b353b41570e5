"""Minimal numpy layers with explicit backward passes.

Tensors are laid out (batch, channels, rows, cols). Convolutions are
"same"-padded cross-correlations (zero padding, top/left pad (k-1)//2),
evaluated through zero-padded real FFTs so cost does not scale with the
kernel area.
"""

from __future__ import annotations

import numpy as np
from scipy import fft as sfft

# layer kind codes used by the weight file header
CONV, RELU, MAXPOOL, FLATTEN, DENSE, AFFINE = 1, 2, 3, 4, 5, 6


class Layer:
    kind = 0
    trainable = True

    def __init__(self):
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []

    def dims(self) -> tuple[int, int, int, int]:
        return (0, 0, 0, 0)

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2D(Layer):
    kind = CONV

    def __init__(self, kernel: tuple[int, int], in_channels: int, out_channels: int, rng: np.random.Generator | None = None):
        super().__init__()
        kh, kw = kernel
        if kh < 1 or kw < 1 or in_channels < 1 or out_channels < 1:
            raise ValueError("kernel dims and channel counts must be >= 1")
        self.kernel = (kh, kw)
        self.cin, self.cout = in_channels, out_channels
        fan_in = kh * kw * in_channels
        w = np.zeros((kh, kw, in_channels, out_channels))
        if rng is not None:
            w = rng.standard_normal(w.shape) * np.sqrt(2.0 / fan_in)
        self.params = [w, np.zeros(out_channels)]
        self.grads = [np.zeros_like(p) for p in self.params]
        self._cache = None

    def dims(self):
        return (*self.kernel, self.cin, self.cout)

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.cin:
            raise ValueError(f"conv expects {self.cin} channels, got {c}")
        return (self.cout, h, w)

    def _fourier_kernel(self, p: int, q: int) -> np.ndarray:
        kh, kw = self.kernel
        pt, pl = (kh - 1) // 2, (kw - 1) // 2
        rows = (pt - np.arange(kh)) % p
        cols = (pl - np.arange(kw)) % q
        circ = np.zeros((self.cin, self.cout, p, q))
        circ[:, :, rows[:, None], cols[None, :]] = self.params[0].transpose(2, 3, 0, 1)
        kh_ = sfft.rfft2(circ)
        return np.ascontiguousarray(kh_.reshape(self.cin, self.cout, -1).transpose(2, 0, 1))

    def forward(self, x):
        w, b = self.params
        bsz, c, h, wd = x.shape
        if c != self.cin:
            raise ValueError(f"conv expects {self.cin} channels, got {c}")
        if self.kernel == (1, 1):
            self._cache = ("direct", x)
            return np.einsum("bchw,co->bohw", x, w[0, 0], optimize=True) + b[None, :, None, None]
        kh, kw = self.kernel
        p = sfft.next_fast_len(h + kh - 1, real=True)
        q = sfft.next_fast_len(wd + kw - 1, real=True)
        xh = sfft.rfft2(x, s=(p, q))
        nf = xh.shape[-2] * xh.shape[-1]
        xf = np.ascontiguousarray(xh.reshape(bsz, c, nf).transpose(2, 0, 1))
        wf = self._fourier_kernel(p, q)
        yf = np.matmul(xf, wf)
        yh = yf.transpose(1, 2, 0).reshape(bsz, self.cout, p, xh.shape[-1])
        y = sfft.irfft2(yh, s=(p, q))[:, :, :h, :wd]
        self._cache = ("fft", xf, wf, (bsz, h, wd, p, q, xh.shape[-1]))
        return y + b[None, :, None, None]

    def backward(self, dy):
        w, _ = self.params
        self.grads[1][...] = dy.sum(axis=(0, 2, 3))
        if self._cache[0] == "direct":
            x = self._cache[1]
            self.grads[0][0, 0] = np.einsum("bchw,bohw->co", x, dy, optimize=True)
            return np.einsum("bohw,co->bchw", dy, w[0, 0], optimize=True)
        _, xf, wf, (bsz, h, wd, p, q, q2) = self._cache
        dyh = sfft.rfft2(dy, s=(p, q))
        dyf = np.ascontiguousarray(dyh.reshape(bsz, self.cout, -1).transpose(2, 0, 1))
        # input gradient: correlation with the kernel
        dxf = np.matmul(dyf, np.conj(wf).transpose(0, 2, 1))
        dx = sfft.irfft2(dxf.transpose(1, 2, 0).reshape(bsz, self.cin, p, q2), s=(p, q))[:, :, :h, :wd]
        # kernel gradient: correlation of the output gradient with the input
        dkf = np.matmul(np.conj(xf).transpose(0, 2, 1), dyf)
        dk = sfft.irfft2(dkf.transpose(1, 2, 0).reshape(self.cin, self.cout, p, q2), s=(p, q))
        kh, kw = self.kernel
        pt, pl = (kh - 1) // 2, (kw - 1) // 2
        rows = (pt - np.arange(kh)) % p
        cols = (pl - np.arange(kw)) % q
        self.grads[0][...] = dk[:, :, rows[:, None], cols[None, :]].transpose(2, 3, 0, 1)
        return np.ascontiguousarray(dx)


class ReLU(Layer):
    kind = RELU
    trainable = False

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class MaxPool2D(Layer):
    """2x2 max pooling with ceiling output size (odd edges padded with -inf)."""

    kind = MAXPOOL
    trainable = False

    def dims(self):
        return (2, 2, 0, 0)

    def output_shape(self, shape):
        c, h, w = shape
        return (c, -(-h // 2), -(-w // 2))

    def forward(self, x):
        bsz, c, h, w = x.shape
        h2, w2 = -(-h // 2), -(-w // 2)
        xp = np.full((bsz, c, 2 * h2, 2 * w2), -np.inf)
        xp[:, :, :h, :w] = x
        blocks = xp.reshape(bsz, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, h2, w2, 4)
        idx = blocks.argmax(axis=-1)
        self._cache = (idx, x.shape)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        idx, (bsz, c, h, w) = self._cache
        h2, w2 = dy.shape[2], dy.shape[3]
        blocks = np.zeros((bsz, c, h2, w2, 4))
        np.put_along_axis(blocks, idx[..., None], dy[..., None], axis=-1)
        dxp = blocks.reshape(bsz, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, 2 * h2, 2 * w2)
        return np.ascontiguousarray(dxp[:, :, :h, :w])


class Flatten(Layer):
    kind = FLATTEN
    trainable = False

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dense(Layer):
    kind = DENSE

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        super().__init__()
        self.n_in, self.n_out = n_in, n_out
        w = np.zeros((n_in, n_out))
        if rng is not None:
            w = rng.standard_normal(w.shape) * np.sqrt(1.0 / n_in)
        self.params = [w, np.zeros(n_out)]
        self.grads = [np.zeros_like(p) for p in self.params]

    def dims(self):
        return (1, 1, self.n_in, self.n_out)

    def output_shape(self, shape):
        if shape != (self.n_in,):
            raise ValueError(f"dense expects input ({self.n_in},), got {shape}")
        return (self.n_out,)

    def forward(self, x):
        self._x = x
        return x @ self.params[0] + self.params[1]

    def backward(self, dy):
        self.grads[0][...] = self._x.T @ dy
        self.grads[1][...] = dy.sum(axis=0)
        return dy @ self.params[0].T


class Affine(Layer):
    """Fixed elementwise ``scale * x + shift``; carries data normalization."""

    kind = AFFINE
    trainable = False

    def __init__(self, scale: float = 1.0, shift: float = 0.0):
        super().__init__()
        self.params = [np.array([scale, shift], dtype=float)]
        self.grads = [np.zeros(2)]

    def forward(self, x):
        return self.params[0][0] * x + self.params[0][1]

    def backward(self, dy):
        return self.params[0][0] * dy


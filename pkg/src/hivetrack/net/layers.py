"""Hand-rolled layers with explicit forward/backward passes.

All activations are channel-first (C, H, W) single-sample fields; the
training loop handles batching by accumulation. Convolutions are
expressed as im2col + GEMM, and their backward input pass as a
same-padded correlation with the flipped, transposed kernel, so every
hot path runs through BLAS.

Layers cache what backward needs during forward, so an instance must
not be shared across concurrent passes. backward() accumulates into
.dw/.db; call zero_grad() between steps.
"""

import numpy as np


def _im2colT(x, k, pad):
    """(C, H, W) -> (C*k*k, H*W) patch matrix for same-padded windows.

    Built as k*k strided block copies, so the reduce axis is laid out
    channel-major to match a (c_out, c_in*k*k) weight matrix.
    """
    c, h, w = x.shape
    if pad:
        xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        xp[:, pad:-pad, pad:-pad] = x
    else:
        xp = x
    colt = np.empty((c, k, k, h, w), dtype=x.dtype)
    for u in range(k):
        for v in range(k):
            colt[:, u, v] = xp[:, u : u + h, v : v + w]
    return colt.reshape(c * k * k, h * w)


class Conv2D:
    """Same-padded k x k convolution with bias."""

    def __init__(self, c_in, c_out, k, rng, dtype):
        std = np.sqrt(2.0 / (c_in * k * k))
        self.w = (rng.standard_normal((c_out, c_in, k, k)) * std).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.k = k
        self.zero_grad()
        self._colt = None
        self._shape = None

    def zero_grad(self):
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def forward(self, x):
        c_out, c_in, k, _ = self.w.shape
        if x.shape[0] != c_in:
            raise ValueError(f"expected {c_in} input channels, got {x.shape[0]}")
        _, h, w = x.shape
        colt = _im2colT(x, k, k // 2)
        y = self.w.reshape(c_out, -1) @ colt
        self._colt = colt
        self._shape = x.shape
        y = y.reshape(c_out, h, w)
        y += self.b[:, None, None]
        return y

    def backward(self, dy):
        c_out, c_in, k, _ = self.w.shape
        _, h, w = self._shape
        dyf = dy.reshape(c_out, h * w)
        self.dw += (dyf @ self._colt.T).reshape(self.w.shape)
        self.db += dyf.sum(axis=1)
        colt2 = _im2colT(dy, k, k // 2)
        # flipped kernel, in/out channels swapped
        wback = np.ascontiguousarray(
            self.w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        ).reshape(c_in, -1)
        dx = (wback @ colt2).reshape(c_in, h, w)
        self._colt = None
        return dx

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [("w", self.dw), ("b", self.db)]


class ReLU:
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0)


class MaxPool2:
    """2x2 max pooling, stride 2. Spatial dims must be even."""

    def forward(self, x):
        c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError("pooling needs even spatial dims")
        xr = (
            x.reshape(c, h // 2, 2, w // 2, 2)
            .transpose(0, 1, 3, 2, 4)
            .reshape(c, h // 2, w // 2, 4)
        )
        self._idx = xr.argmax(axis=-1)
        self._in_shape = x.shape
        return np.take_along_axis(xr, self._idx[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        c, h, w = self._in_shape
        out = np.zeros((c, h // 2, w // 2, 4), dtype=dy.dtype)
        np.put_along_axis(out, self._idx[..., None], dy[..., None], axis=-1)
        return (
            out.reshape(c, h // 2, w // 2, 2, 2)
            .transpose(0, 1, 3, 2, 4)
            .reshape(c, h, w)
        )


class UpConv2:
    """2x2 stride-2 transposed convolution (learned upsampling)."""

    def __init__(self, c_in, c_out, rng, dtype):
        std = np.sqrt(2.0 / c_in)
        self.w = (rng.standard_normal((c_in, c_out, 2, 2)) * std).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.zero_grad()
        self._x = None

    def zero_grad(self):
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def forward(self, x):
        c_in, c_out = self.w.shape[0], self.w.shape[1]
        if x.shape[0] != c_in:
            raise ValueError(f"expected {c_in} input channels, got {x.shape[0]}")
        _, h, w = x.shape
        t = np.tensordot(x, self.w, axes=([0], [0]))  # (H, W, c_out, 2, 2)
        y = t.transpose(2, 0, 3, 1, 4).reshape(c_out, 2 * h, 2 * w)
        y += self.b[:, None, None]
        self._x = x
        return y

    def backward(self, dy):
        c_in, c_out = self.w.shape[0], self.w.shape[1]
        _, h, w = self._x.shape
        dyr = (
            dy.reshape(c_out, h, 2, w, 2).transpose(1, 3, 0, 2, 4)
        )  # (H, W, c_out, 2, 2)
        self.dw += np.tensordot(self._x, dyr, axes=([1, 2], [0, 1]))
        self.db += dy.sum(axis=(1, 2))
        dx = np.tensordot(dyr, self.w, axes=([2, 3, 4], [1, 2, 3]))
        self._x = None
        return np.ascontiguousarray(dx.transpose(2, 0, 1))

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def grads(self):
        return [("w", self.dw), ("b", self.db)]

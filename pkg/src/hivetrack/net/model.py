"""Compact encoder-decoder network with an optional recurrent prior.

The architecture is a reduced U-Net: ``depth`` pooling levels, two 3x3
same-padded convolutions (each ReLU-activated) per level, filter count
doubling at each pooling and halving at each learned 2x2 upsampling,
skip concatenations across matching levels, and a final 1x1 prediction
convolution. With the recurrent flag set, the penultimate feature field
of the previous frame is channel-concatenated in front of the final
1x1 convolution; the stored prior is treated as a constant during the
backward pass (no backpropagation through time).

Everything runs in plain numpy on single samples; the training step
accumulates gradients over a batch and applies one Adam update.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, NumericError
from .layers import Conv2D, MaxPool2, ReLU, UpConv2


@dataclass
class NetConfig:
    base_filters: int = 8
    depth: int = 3
    kernel_size: int = 3
    in_channels: int = 1
    out_channels: int = 3
    recurrent: bool = False

    def __post_init__(self):
        if self.kernel_size != 3:
            raise DataError("kernel size is fixed at 3")
        if self.depth < 1 or self.base_filters < 1:
            raise DataError("depth and base filters must be >= 1")
        if self.in_channels < 1 or self.out_channels < 1:
            raise DataError("channel counts must be >= 1")

    def level_channels(self, k):
        """Filter count at encoder/decoder level k (0 = finest)."""
        return self.base_filters * (1 << k)


class _ConvBlock:
    """Two same-padded convolutions, each followed by ReLU."""

    def __init__(self, c_in, c_out, k, rng, dtype):
        self.conv1 = Conv2D(c_in, c_out, k, rng, dtype)
        self.relu1 = ReLU()
        self.conv2 = Conv2D(c_out, c_out, k, rng, dtype)
        self.relu2 = ReLU()

    def forward(self, x):
        return self.relu2.forward(
            self.conv2.forward(self.relu1.forward(self.conv1.forward(x)))
        )

    def backward(self, dy):
        return self.conv1.backward(
            self.relu1.backward(
                self.conv2.backward(self.relu2.backward(dy))
            )
        )

    def layers(self):
        return [("conv1", self.conv1), ("conv2", self.conv2)]


class Network:
    """Assembled model with parameters and Adam state."""

    ADAM_BETA1 = 0.9
    ADAM_BETA2 = 0.999
    ADAM_EPS = 1e-8

    def __init__(self, config, seed, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        k = config.kernel_size
        c_prev = config.in_channels
        self.enc = []
        self.pools = []
        for lvl in range(config.depth):
            c = config.level_channels(lvl)
            self.enc.append(_ConvBlock(c_prev, c, k, rng, self.dtype))
            self.pools.append(MaxPool2())
            c_prev = c
        c_bottom = config.level_channels(config.depth)
        self.bottom = _ConvBlock(c_prev, c_bottom, k, rng, self.dtype)
        self.ups = []
        self.up_relus = []
        self.dec = []
        c_prev = c_bottom
        for lvl in reversed(range(config.depth)):
            c = config.level_channels(lvl)
            self.ups.append(UpConv2(c_prev, c, rng, self.dtype))
            self.up_relus.append(ReLU())
            self.dec.append(_ConvBlock(2 * c, c, k, rng, self.dtype))
            c_prev = c
        c_final_in = 2 * c_prev if config.recurrent else c_prev
        self.final = Conv2D(c_final_in, config.out_channels, 1, rng, self.dtype)
        self.adam_m = {name: np.zeros_like(p) for name, p in self.param_items()}
        self.adam_v = {name: np.zeros_like(p) for name, p in self.param_items()}
        self.adam_step = 0

    # -- parameter registry -------------------------------------------------

    def _named_layers(self):
        out = []
        for lvl, block in enumerate(self.enc):
            for sub, layer in block.layers():
                out.append((f"enc{lvl}.{sub}", layer))
        for sub, layer in self.bottom.layers():
            out.append((f"bottom.{sub}", layer))
        for i, up in enumerate(self.ups):
            lvl = self.config.depth - 1 - i
            out.append((f"up{lvl}", up))
        for i, block in enumerate(self.dec):
            lvl = self.config.depth - 1 - i
            for sub, layer in block.layers():
                out.append((f"dec{lvl}.{sub}", layer))
        out.append(("final", self.final))
        return out

    def param_items(self):
        return [
            (f"{name}.{pname}", arr)
            for name, layer in self._named_layers()
            for pname, arr in layer.params()
        ]

    def grad_items(self):
        return [
            (f"{name}.{pname}", arr)
            for name, layer in self._named_layers()
            for pname, arr in layer.grads()
        ]

    def param_count(self):
        return sum(p.size for _, p in self.param_items())

    def zero_grad(self):
        for _, layer in self._named_layers():
            layer.zero_grad()

    # -- passes ---------------------------------------------------------------

    @property
    def penult_channels(self):
        return self.config.level_channels(0)

    def zero_prior(self, height, width):
        return np.zeros((self.penult_channels, height, width), dtype=self.dtype)

    def forward(self, image, prior=None):
        """Run one frame; returns (prediction, penultimate field).

        ``image`` is (in_channels, H, W) or (H, W) for single-channel
        input, values pre-scaled to [0, 1]; H and W must be divisible
        by 2^depth. The prior is only consumed by recurrent models.
        """
        x = np.asarray(image, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None]
        if x.shape[0] != self.config.in_channels:
            raise DataError(
                f"expected {self.config.in_channels} channels, got {x.shape[0]}"
            )
        div = 1 << self.config.depth
        if x.shape[1] % div or x.shape[2] % div:
            raise DataError(
                f"spatial dims {x.shape[1:]} not divisible by {div}"
            )
        skips = []
        h = x
        for block, pool in zip(self.enc, self.pools):
            h = block.forward(h)
            skips.append(h)
            h = pool.forward(h)
        h = self.bottom.forward(h)
        for up, relu, block, skip in zip(
            self.ups, self.up_relus, self.dec, reversed(skips)
        ):
            h = relu.forward(up.forward(h))
            h = np.concatenate([skip, h], axis=0)
            h = block.forward(h)
        penult = h
        if self.config.recurrent:
            if prior is None:
                prior = self.zero_prior(penult.shape[1], penult.shape[2])
            if prior.shape != penult.shape:
                raise DataError(
                    f"prior shape {prior.shape} != penultimate {penult.shape}"
                )
            h = np.concatenate([penult, prior.astype(self.dtype)], axis=0)
        pred = self.final.forward(h)
        return pred, penult

    def backward(self, dpred):
        """Backpropagate a prediction gradient; accumulates into layer grads."""
        d = self.final.backward(dpred.astype(self.dtype))
        if self.config.recurrent:
            d = d[: self.penult_channels]  # prior is constant
        skip_grads = []
        for block, relu, up in zip(
            reversed(self.dec), reversed(self.up_relus), reversed(self.ups)
        ):
            d = block.backward(d)
            c_skip = d.shape[0] // 2
            skip_grads.append(d[:c_skip])
            d = up.backward(relu.backward(d[c_skip:]))
        d = self.bottom.backward(d)
        for block, pool, dskip in zip(
            reversed(self.enc), reversed(self.pools), reversed(skip_grads)
        ):
            d = pool.backward(d)
            d = block.backward(d + dskip)
        return d

    def adam_update(self, lr, scale=1.0):
        """One Adam step over accumulated gradients (times ``scale``)."""
        self.adam_step += 1
        t = self.adam_step
        b1, b2, eps = self.ADAM_BETA1, self.ADAM_BETA2, self.ADAM_EPS
        grads = dict(self.grad_items())
        for name, p in self.param_items():
            g = grads[name] * scale
            m = self.adam_m[name]
            v = self.adam_v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)


def init_network(config, seed, dtype=np.float32):
    """Fresh network: He-initialized weights, zero biases and Adam state."""
    return Network(config, seed, dtype)


def count_params(config):
    """Closed-form parameter count for a config.

    Sums k^2 * c_in * c_out + c_out per convolution, 4 * c_in * c_out
    + c_out per learned upsampling, and the final 1x1 convolution.
    """
    k2 = config.kernel_size**2
    total = 0
    c_prev = config.in_channels
    for lvl in range(config.depth + 1):
        c = config.level_channels(lvl)
        total += k2 * c_prev * c + c  # conv1
        total += k2 * c * c + c  # conv2
        c_prev = c
    for lvl in reversed(range(config.depth)):
        c = config.level_channels(lvl)
        total += 4 * c_prev * c + c  # upsampling
        total += k2 * (2 * c) * c + c  # conv1 after skip concat
        total += k2 * c * c + c  # conv2
        c_prev = c
    c_final_in = 2 * c_prev if config.recurrent else c_prev
    total += c_final_in * config.out_channels + config.out_channels
    return total


def train_step(net, images, loss_ops, lr, priors=None):
    """One optimizer step over a batch; returns the mean pre-update loss.

    ``loss_ops[i]`` maps the i-th prediction field to a LossResult bound
    to that sample's targets and weights. Priors (for recurrent models)
    are treated as constants.
    """
    if len(images) != len(loss_ops):
        raise DataError("batch images and loss ops must align")
    if priors is None:
        priors = [None] * len(images)
    net.zero_grad()
    total = 0.0
    for image, loss_op, prior in zip(images, loss_ops, priors):
        pred, _ = net.forward(image, prior)
        result = loss_op(pred)
        if not np.isfinite(result.loss):
            raise NumericError(f"non-finite training loss {result.loss}")
        total += result.loss
        net.backward(result.gradient)
    net.adam_update(lr, scale=1.0 / len(images))
    return total / len(images)


def predict_sequence(net, frames):
    """Run time-ordered frames, chaining the recurrent prior.

    The prior starts at zero and carries the penultimate field from
    frame to frame; non-recurrent models just map frames independently.
    """
    preds = []
    prior = None
    for frame in frames:
        pred, penult = net.forward(frame, prior)
        if net.config.recurrent:
            prior = penult
        preds.append(pred)
    return preds

"""Training objectives and their analytic gradients.

Both losses operate on channel-first (C, H, W) prediction fields and
return the scalar loss together with the gradient with respect to the
prediction, so the network backward pass can consume them directly.

* segmentation: 3-class softmax cross-entropy, per-pixel weighted
* orientation: two heads sharing one (2, H, W) prediction; channel 0 is
  a foreground logit trained with weighted binary cross-entropy, and
  channel 1 regresses the angle in degrees on foreground pixels with a
  squared-sine circular penalty, w * sin^2(pi * (a - a_hat) / 360),
  which is zero iff the angular difference is a multiple of 360 and
  maximal at 180.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .labels import BACKGROUND_ANGLE


@dataclass
class LossResult:
    loss: float
    gradient: np.ndarray


def _require_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{what} contains non-finite values")


def weighted_softmax_ce(logits, target, weights):
    """Weighted 3-class cross-entropy over all pixels.

    loss = mean_p w(p) * (-log softmax(logits(p))[target(p)]), gradient
    w.r.t. the logits is (w(p)/N) * (softmax(p) - onehot(target(p))).
    """
    _require_finite(logits, "logits")
    n_classes, h, w = logits.shape
    if target.shape != (h, w) or weights.shape != (h, w):
        raise ValueError("shape mismatch between logits, target, and weights")
    n = h * w
    shifted = logits - logits.max(axis=0, keepdims=True)
    exp = np.exp(shifted)
    softmax = exp / exp.sum(axis=0, keepdims=True)
    log_softmax = shifted - np.log(exp.sum(axis=0, keepdims=True))
    picked = np.take_along_axis(
        log_softmax, target[None].astype(np.intp), axis=0
    )[0]
    loss = float(np.sum(weights * -picked) / n)
    grad = softmax * (weights / n)
    yy, xx = np.indices(target.shape)
    grad[target.astype(np.intp), yy, xx] -= weights / n
    return LossResult(loss, grad.astype(logits.dtype))


def angular_sine_loss(pred_angle, fg_logit, target, weights):
    """Foreground head + masked circular angle head.

    Head A: binary cross-entropy of ``fg_logit`` against the foreground
    indicator (target != -1), weighted, averaged over all pixels.
    Head B: on foreground pixels only, w * sin^2(pi * delta / 360) with
    delta = pred - target in degrees, averaged over foreground pixels.
    Returns the gradient stacked as (2, H, W): channel 0 w.r.t. the
    foreground logit, channel 1 w.r.t. the predicted angle.
    """
    _require_finite(pred_angle, "predicted angles")
    _require_finite(fg_logit, "foreground logits")
    h, w = target.shape
    if pred_angle.shape != (h, w) or fg_logit.shape != (h, w):
        raise ValueError("prediction shape does not match target")
    n = h * w
    fg = target != BACKGROUND_ANGLE
    fg_f = fg.astype(np.float64)

    # Head A: stable BCE with logits
    z = fg_logit.astype(np.float64)
    bce = np.maximum(z, 0.0) - z * fg_f + np.log1p(np.exp(-np.abs(z)))
    loss_a = float(np.sum(weights * bce) / n)
    sigma = 1.0 / (1.0 + np.exp(-z))
    grad_fg = weights * (sigma - fg_f) / n

    # Head B: squared sine on foreground pixels only
    grad_angle = np.zeros((h, w), dtype=np.float64)
    if fg.any():
        m = int(fg.sum())
        delta = pred_angle[fg].astype(np.float64) - target[fg]
        s = np.sin(np.pi * delta / 360.0)
        loss_b = float(np.sum(weights[fg] * s * s) / m)
        grad_angle[fg] = (
            weights[fg] * (np.pi / 360.0) * np.sin(np.pi * delta / 180.0) / m
        )
    else:
        loss_b = 0.0

    grad = np.stack([grad_fg, grad_angle]).astype(fg_logit.dtype)
    return LossResult(loss_a + loss_b, grad)


def finite_difference_check(loss_op, inputs, epsilon=1e-4, max_coords=None, seed=0):
    """Max relative error between analytic and central-difference grads.

    ``loss_op`` maps the input array to a LossResult. Coordinates are
    checked exhaustively, or on a seeded random sample of ``max_coords``
    when given. The relative error at a coordinate is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if not (1e-6 <= epsilon <= 1e-2):
        raise ValueError("epsilon must be in [1e-6, 1e-2]")
    inputs = np.asarray(inputs, dtype=np.float64)
    analytic = np.asarray(loss_op(inputs).gradient, dtype=np.float64)
    if analytic.shape != inputs.shape:
        raise ValueError("gradient shape does not match input shape")
    flat = inputs.ravel()
    coords = np.arange(flat.size)
    if max_coords is not None and max_coords < flat.size:
        coords = np.random.default_rng(seed).choice(
            flat.size, size=max_coords, replace=False
        )
    worst = 0.0
    grad_flat = analytic.ravel()
    for idx in coords:
        orig = flat[idx]
        flat[idx] = orig + epsilon
        up = loss_op(inputs).loss
        flat[idx] = orig - epsilon
        down = loss_op(inputs).loss
        flat[idx] = orig
        numeric = (up - down) / (2.0 * epsilon)
        a = grad_flat[idx]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst

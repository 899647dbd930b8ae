"""Rasterize annotations into training-target maps.

Per frame, three per-pixel maps are produced:

* class map: 0 background, 1 full body, 2 abdomen
* angle map: -1 background, else the orientation angle in [0, 360)
  (0 for abdomens)
* weight map: 1 on background, Gaussian bumps over each label footprint
  whose peak equals the background/foreground class-imbalance ratio

A full-body label is a filled ellipse with semi-minor axis 20 px and
semi-major axis 35 px, major axis along the orientation angle; an
abdomen label is a disc of radius 20 px. A pixel (i, j) belongs to a
footprint iff its center (i + 0.5, j + 0.5) satisfies the inequality.
Footprints are clipped at the image border. Where footprints overlap,
the pixel goes to the annotation whose center is nearest.
"""

from dataclasses import dataclass

import numpy as np

from .annotations import Kind
from .errors import DataError

SEMI_MINOR = 20.0
SEMI_MAJOR = 35.0
ABDOMEN_RADIUS = 20.0

BACKGROUND_ANGLE = -1.0


@dataclass
class ClassCounts:
    """Per-class pixel tallies over a training set."""

    background: int
    bee: int
    abdomen: int

    @property
    def foreground(self):
        return self.bee + self.abdomen


@dataclass
class LabelBundle:
    """All rasterized targets of one frame."""

    class_map: np.ndarray
    angle_map: np.ndarray
    weight_map: np.ndarray


def _canonical_order(annotations):
    # Fixed processing order makes the overlap rule (nearest center,
    # ties to the canonically first annotation) permutation-invariant.
    return sorted(
        annotations, key=lambda a: (a.y, a.x, int(a.kind), a.angle_deg)
    )


def _footprint(ann, width, height, reach):
    """Bounding box grid and local offsets (dx, dy) of pixel centers."""
    x_lo = max(int(np.floor(ann.x - reach)), 0)
    x_hi = min(int(np.ceil(ann.x + reach)) + 1, width)
    y_lo = max(int(np.floor(ann.y - reach)), 0)
    y_hi = min(int(np.ceil(ann.y + reach)) + 1, height)
    if x_lo >= x_hi or y_lo >= y_hi:
        return None
    xs = np.arange(x_lo, x_hi, dtype=float) + 0.5
    ys = np.arange(y_lo, y_hi, dtype=float) + 0.5
    dx = xs[None, :] - ann.x
    dy = ys[:, None] - ann.y
    return (slice(y_lo, y_hi), slice(x_lo, x_hi)), dx, dy


def _inside(ann, dx, dy):
    if ann.kind == Kind.ABDOMEN:
        return dx * dx + dy * dy <= ABDOMEN_RADIUS**2
    rad = np.deg2rad(ann.angle_deg)
    # major-axis direction is (sin a, -cos a); u along major, v along minor
    u = dx * np.sin(rad) - dy * np.cos(rad)
    v = dx * np.cos(rad) + dy * np.sin(rad)
    return (u / SEMI_MAJOR) ** 2 + (v / SEMI_MINOR) ** 2 <= 1.0


def _rasterize(annotations, width, height):
    class_map = np.zeros((height, width), dtype=np.uint8)
    angle_map = np.full((height, width), BACKGROUND_ANGLE, dtype=np.float64)
    nearest = np.full((height, width), np.inf, dtype=np.float64)
    for ann in _canonical_order(annotations):
        fp = _footprint(ann, width, height, SEMI_MAJOR)
        if fp is None:
            continue
        window, dx, dy = fp
        inside = _inside(ann, dx, dy)
        if not inside.any():
            continue
        dist2 = dx * dx + dy * dy
        take = inside & (dist2 < nearest[window])
        nearest[window][take] = dist2[take]
        class_map[window][take] = int(ann.kind)
        angle_map[window][take] = (
            ann.angle_deg if ann.kind == Kind.FULL_BEE else 0.0
        )
    return class_map, angle_map


def rasterize_class_map(annotations, width, height):
    """Per-pixel class labels {0, 1, 2} for one frame."""
    return _rasterize(annotations, width, height)[0]


def rasterize_angle_map(annotations, width, height):
    """Per-pixel angle targets; background pixels carry -1."""
    return _rasterize(annotations, width, height)[1]


def compute_class_counts(class_maps):
    """Exact pixel tallies per class over a list of class maps."""
    if not class_maps:
        raise DataError("class counts need a nonempty dataset")
    background = bee = abdomen = 0
    for cm in class_maps:
        counts = np.bincount(cm.ravel(), minlength=3)
        background += int(counts[0])
        bee += int(counts[1])
        abdomen += int(counts[2])
    return ClassCounts(background, bee, abdomen)


def _peak_scale(ann, counts, mode):
    if mode == "pooled":
        fg = counts.foreground
    elif mode == "per-class":
        fg = counts.bee if ann.kind == Kind.FULL_BEE else counts.abdomen
    else:
        raise DataError(f"unknown weight mode {mode!r}")
    if fg <= 0:
        raise DataError(
            f"cannot build weights: zero foreground pixels for {mode} "
            f"mode with kind {int(ann.kind)}"
        )
    return counts.background / fg


def build_weight_map(annotations, counts, mode, width, height):
    """Loss-weight field: Gaussian bump per label, floored at 1.

    Each bump is aligned with the label footprint, sigma along each axis
    equal to the footprint semi-axis / 2, and peak equal to the
    background-to-foreground pixel ratio (per class type in "per-class"
    mode, over all foreground in "pooled" mode). Overlapping bumps take
    the pointwise maximum.
    """
    if counts.background <= 0:
        raise DataError("cannot build weights: zero background pixels")
    field = np.ones((height, width), dtype=np.float64)
    for ann in _canonical_order(annotations):
        scale = _peak_scale(ann, counts, mode)
        if ann.kind == Kind.ABDOMEN:
            sig_u = sig_v = ABDOMEN_RADIUS / 2.0
        else:
            sig_u = SEMI_MAJOR / 2.0
            sig_v = SEMI_MINOR / 2.0
        reach = 6.0 * max(sig_u, sig_v)
        fp = _footprint(ann, width, height, reach)
        if fp is None:
            continue
        window, dx, dy = fp
        rad = np.deg2rad(ann.angle_deg)
        u = dx * np.sin(rad) - dy * np.cos(rad)
        v = dx * np.cos(rad) + dy * np.sin(rad)
        bump = scale * np.exp(-0.5 * ((u / sig_u) ** 2 + (v / sig_v) ** 2))
        field[window] = np.maximum(field[window], bump)
    return field


def rasterize_frame(annotations, counts, weight_mode, width, height):
    """Convenience bundle of all three target maps for one frame."""
    class_map, angle_map = _rasterize(annotations, width, height)
    weight_map = build_weight_map(annotations, counts, weight_mode, width, height)
    return LabelBundle(class_map, angle_map, weight_map)


def save_debug_maps(class_map, angle_map, path_prefix):
    """Dump maps as 8-bit PNGs for eyeballing.

    Class map uses gray levels 0/128/255; the angle map is scaled
    value/360 into 0-255 with background at 0.
    """
    from PIL import Image

    levels = np.array([0, 128, 255], dtype=np.uint8)
    Image.fromarray(levels[class_map]).save(f"{path_prefix}_class.png")
    ang = np.where(
        angle_map == BACKGROUND_ANGLE, 0.0, angle_map / 360.0 * 255.0
    ).astype(np.uint8)
    Image.fromarray(ang).save(f"{path_prefix}_angle.png")

"""Turn per-pixel prediction fields into discrete detections.

Foreground pixels are grouped into 8-connected regions; regions outside
the plausible label-size band [100, 6000] px are discarded (a single
label footprint is < 2200 px, so oversized blobs are merges and
undersized ones noise). Each surviving region yields one Detection:

* centroid: mean of member pixel centers
* axis: angle of the first principal component of the pixel cloud,
  clockwise from image-up, in [0, 180)
* angle (orientation mode): the top-q quantile of the predicted values
  inside the region, q = 0.01 -- edge pixels tend to under-estimate, so
  the upper tail tracks the labeled angle best
* directed axis: the axis flipped to whichever end is closer to the
  regressed angle

In segmentation mode there is no angle field; the angle and directed
columns then carry the undirected axis value so downstream consumers
see a self-consistent row, and the class is the majority pixel vote.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .annotations import Detection, Kind
from .errors import DataError
from .geom import normalize_orientation, orientation_distance

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class InstanceParams:
    min_area: int = 100
    max_area: int = 6000
    quantile: float = 0.01
    fg_threshold: float = 0.5


@dataclass
class Region:
    """One 8-connected foreground component."""

    ys: np.ndarray
    xs: np.ndarray

    @property
    def area(self):
        return len(self.ys)


def connected_components(mask, connectivity=8):
    """Maximal 8-connected regions of a boolean mask.

    Regions are ordered by (min y, min x) of their pixel sets; pixel
    lists are in raster order.
    """
    if connectivity != 8:
        raise DataError("only 8-connectivity is supported")
    labels, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return []
    ys, xs = np.nonzero(labels)
    order = np.argsort(labels[ys, xs], kind="stable")
    ys, xs = ys[order], xs[order]
    bounds = np.searchsorted(labels[ys, xs], np.arange(1, count + 2))
    regions = [
        Region(ys[a:b], xs[a:b])
        for a, b in zip(bounds[:-1], bounds[1:])
        if b > a
    ]
    regions.sort(key=lambda r: (int(r.ys.min()), int(r.xs.min())))
    return regions


def region_centroid(region):
    """Mean of member pixel centers, as (x, y)."""
    if region.area == 0:
        raise DataError("centroid of an empty region")
    return float(region.xs.mean() + 0.5), float(region.ys.mean() + 0.5)


def region_axis(region):
    """Principal-component axis of the pixel cloud, in [0, 180).

    Rank-deficient or isotropic pixel clouds (leading eigenvalue gap
    below 1e-9) return 0 by convention.
    """
    if region.area < 2:
        raise DataError("axis needs at least 2 pixels")
    pts = np.stack([region.xs, region.ys]).astype(np.float64)
    pts -= pts.mean(axis=1, keepdims=True)
    cov = pts @ pts.T / region.area
    evals, evecs = np.linalg.eigh(cov)
    if evals[1] - evals[0] < 1e-9:
        return 0.0
    dx, dy = evecs[:, 1]
    angle = np.rad2deg(np.arctan2(dx, -dy))
    return float(np.mod(angle, 180.0))


def region_angle_quantile(region, angle_field, q=0.01):
    """Top-q readout of the region's predicted values, in [0, 360).

    Values are sorted ascending and the one at index
    floor((1 - q) * (n - 1)) is returned.
    """
    if region.area == 0:
        raise DataError("quantile of an empty region")
    if not (0.0 < q < 1.0):
        raise DataError("quantile must be in (0, 1)")
    values = np.sort(angle_field[region.ys, region.xs])
    idx = int(np.floor((1.0 - q) * (len(values) - 1)))
    return normalize_orientation(float(values[idx]))


def directed_axis(axis_deg, angle_deg):
    """Orient an axis by the regressed angle; ties keep the axis end."""
    flipped = normalize_orientation(axis_deg + 180.0)
    if orientation_distance(axis_deg, angle_deg) <= orientation_distance(
        flipped, angle_deg
    ):
        return normalize_orientation(axis_deg)
    return flipped


def extract_detections(prediction, mode, params=None, sequence="", frame=0):
    """Detections from one prediction field.

    ``mode`` is "segmentation" for a 3-channel class-logit field (the
    foreground mask is argmax != background, class is the majority pixel
    vote with ties to the full-body class) or "orientation" for a
    2-channel field (foreground logit, angle in degrees; all detections
    are full-body).
    """
    params = params or InstanceParams()
    if mode == "segmentation":
        if prediction.shape[0] != 3:
            raise DataError("segmentation mode needs a 3-channel field")
        class_pixels = prediction.argmax(axis=0)
        mask = class_pixels > 0
        angle_field = None
    elif mode == "orientation":
        if prediction.shape[0] != 2:
            raise DataError("orientation mode needs a 2-channel field")
        # sigmoid(logit) > threshold, expressed on the logit
        thr = np.log(params.fg_threshold / (1.0 - params.fg_threshold))
        mask = prediction[0] > thr
        angle_field = prediction[1]
    else:
        raise DataError(f"unknown extraction mode {mode!r}")

    detections = []
    for region in connected_components(mask):
        if region.area < params.min_area or region.area > params.max_area:
            continue
        x, y = region_centroid(region)
        axis = region_axis(region)
        if mode == "segmentation":
            votes = np.bincount(class_pixels[region.ys, region.xs], minlength=3)
            kind = Kind.FULL_BEE if votes[1] >= votes[2] else Kind.ABDOMEN
            angle = axis
            directed = axis
        else:
            kind = Kind.FULL_BEE
            angle = region_angle_quantile(region, angle_field, params.quantile)
            directed = directed_axis(axis, angle)
        detections.append(
            Detection(
                x=x,
                y=y,
                kind=kind,
                axis_deg=axis,
                angle_deg=angle,
                directed_deg=directed,
                area_px=region.area,
                sequence=sequence,
                frame=frame,
            )
        )
    return detections

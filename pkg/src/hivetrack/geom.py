"""Angle conventions and circular/axial distance arithmetic.

Conventions used everywhere in this package:

* Image frame: x grows rightward (columns), y grows downward (rows).
* An orientation angle is measured in degrees, clockwise from image-up
  (the direction of decreasing y), and normalized into [0, 360).
* An axis angle is an undirected direction in [0, 180); theta and
  theta + 180 denote the same axis.
* Angle <-> vector conversion: (dx, dy) = (sin a, -cos a).

All public functions take and return degrees and accept scalars or
numpy arrays (broadcasting elementwise).
"""

import numpy as np

from .errors import NumericError


def normalize_orientation(raw):
    """Reduce an angle in degrees into [0, 360)."""
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise NumericError("orientation angle must be finite")
    out = np.mod(raw, 360.0)
    # mod can return 360.0 for tiny negative inputs under rounding
    out = np.where(out >= 360.0, out - 360.0, out)
    return float(out) if out.ndim == 0 else out


def normalize_axis(raw):
    """Reduce an axis angle in degrees into [0, 180)."""
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise NumericError("axis angle must be finite")
    out = np.mod(raw, 180.0)
    out = np.where(out >= 180.0, out - 180.0, out)
    return float(out) if out.ndim == 0 else out


def orientation_distance(a, b):
    """Circular distance between two orientations, in [0, 180]."""
    d = np.mod(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), 360.0)
    out = np.minimum(d, 360.0 - d)
    return float(out) if out.ndim == 0 else out


def axis_distance(a, b):
    """Distance between two undirected axes, in [0, 90]."""
    d = np.mod(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), 180.0)
    out = np.minimum(d, 180.0 - d)
    return float(out) if out.ndim == 0 else out


def orientation_to_vector(angle_deg):
    """Unit direction (dx, dy) for a clockwise-from-up angle."""
    rad = np.deg2rad(angle_deg)
    return np.sin(rad), -np.cos(rad)


def vector_to_orientation(dx, dy):
    """Clockwise-from-up angle in [0, 360) of a direction vector."""
    return normalize_orientation(np.rad2deg(np.arctan2(dx, -np.asarray(dy, dtype=float))))

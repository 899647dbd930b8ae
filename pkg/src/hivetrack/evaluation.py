"""Match detections against ground truth and compute quality metrics.

Matching is greedy on ascending centroid distance with a hard radius of
35 px (the label semi-major axis, the tightest radius that still lets a
detection anywhere inside the label footprint match). The report
aggregates, over all frames of a test set:

* tp rate: matched annotations / total annotations
* fp rate: unmatched detections / total annotations
* class error: kind mismatches among matched pairs
* position / orientation / axis / directed-axis errors (median + mean)

The margin-50 variant first discards annotations and detections within
50 px of any image edge, isolating boundary artifacts, and re-matches.
Medians are lower-medians for even counts.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError
from .geom import axis_distance, orientation_distance

MATCH_RADIUS = 35.0

# Full-scale reference profiles, shipped for report footers only: the
# human-rater variability baseline and a full-scale recurrent detector.
REFERENCE_HUMAN = {"fp_rate": 0.15, "position_median": 6.7, "orientation_median": 7.7}
REFERENCE_RECURRENT = {
    "tp_rate": 0.96,
    "fp_rate": 0.14,
    "position_median": 5.1,
    "orientation_median": 15.2,
    "axis_median": 10.6,
    "directed_median": 12.1,
}


@dataclass
class Matching:
    """Per-frame assignment of detections to annotations."""

    pairs: list  # (Annotation, Detection)
    unmatched_annotations: list
    unmatched_detections: list
    frame_width: int
    frame_height: int
    radius: float = MATCH_RADIUS


@dataclass
class MetricsReport:
    tp_rate: float
    fp_rate: float
    class_error_rate: float
    position_median: float
    position_mean: float
    orientation_median: float
    orientation_mean: float
    axis_median: float
    axis_mean: float
    directed_median: float
    directed_mean: float
    variant: str


def match_detections(annotations, detections, frame_width, frame_height,
                     radius=MATCH_RADIUS):
    """Greedy nearest-centroid matching within ``radius`` pixels.

    Ties in distance break by annotation order, then detection order.
    """
    candidates = []
    for i, ann in enumerate(annotations):
        for j, det in enumerate(detections):
            dist = float(np.hypot(ann.x - det.x, ann.y - det.y))
            if dist <= radius:
                candidates.append((dist, i, j))
    candidates.sort()
    used_ann = set()
    used_det = set()
    pairs = []
    for dist, i, j in candidates:
        if i in used_ann or j in used_det:
            continue
        used_ann.add(i)
        used_det.add(j)
        pairs.append((annotations[i], detections[j]))
    fn = [a for i, a in enumerate(annotations) if i not in used_ann]
    fp = [d for j, d in enumerate(detections) if j not in used_det]
    return Matching(pairs, fn, fp, frame_width, frame_height, radius)


def _in_margin(x, y, width, height, margin):
    return (
        x < margin or y < margin or x >= width - margin or y >= height - margin
    )


def _drop_margin(matching, margin):
    anns = [a for a, _ in matching.pairs] + matching.unmatched_annotations
    dets = [d for _, d in matching.pairs] + matching.unmatched_detections
    anns = [
        a
        for a in anns
        if not _in_margin(a.x, a.y, matching.frame_width, matching.frame_height, margin)
    ]
    dets = [
        d
        for d in dets
        if not _in_margin(d.x, d.y, matching.frame_width, matching.frame_height, margin)
    ]
    return match_detections(
        anns, dets, matching.frame_width, matching.frame_height, matching.radius
    )


def lower_median(values):
    """Median using the lower of the two middle elements for even counts."""
    if len(values) == 0:
        return float("nan")
    ordered = np.sort(np.asarray(values, dtype=float))
    return float(ordered[(len(ordered) - 1) // 2])


def compute_metrics(matchings, variant="full", margin=50):
    """Aggregate a MetricsReport over per-frame matchings.

    ``variant`` is "full" or "margin50"; the latter re-matches after
    dropping everything within ``margin`` px of the image edges.
    """
    if variant == "margin50":
        matchings = [_drop_margin(m, margin) for m in matchings]
    elif variant != "full":
        raise DataError(f"unknown metrics variant {variant!r}")
    total_ann = sum(
        len(m.pairs) + len(m.unmatched_annotations) for m in matchings
    )
    if total_ann == 0:
        raise DataError("cannot compute metrics without annotations")
    matched = sum(len(m.pairs) for m in matchings)
    false_pos = sum(len(m.unmatched_detections) for m in matchings)
    pos_err, ori_err, axis_err, dir_err = [], [], [], []
    kind_mismatch = 0
    for m in matchings:
        for ann, det in m.pairs:
            pos_err.append(float(np.hypot(ann.x - det.x, ann.y - det.y)))
            ori_err.append(orientation_distance(ann.angle_deg, det.angle_deg))
            axis_err.append(axis_distance(ann.angle_deg % 180.0, det.axis_deg))
            dir_err.append(orientation_distance(ann.angle_deg, det.directed_deg))
            if ann.kind != det.kind:
                kind_mismatch += 1

    def agg(errors):
        if not errors:
            return float("nan"), float("nan")
        return lower_median(errors), float(np.mean(errors))

    pos_med, pos_mean = agg(pos_err)
    ori_med, ori_mean = agg(ori_err)
    ax_med, ax_mean = agg(axis_err)
    dir_med, dir_mean = agg(dir_err)
    return MetricsReport(
        tp_rate=matched / total_ann,
        fp_rate=false_pos / total_ann,
        class_error_rate=(kind_mismatch / matched) if matched else float("nan"),
        position_median=pos_med,
        position_mean=pos_mean,
        orientation_median=ori_med,
        orientation_mean=ori_mean,
        axis_median=ax_med,
        axis_mean=ax_mean,
        directed_median=dir_med,
        directed_mean=dir_mean,
        variant="margin50" if variant == "margin50" else "full",
    )


def boundary_histogram(matchings, bin_px):
    """2D counts of false-positive centroids over the image plane."""
    if not matchings:
        raise DataError("no matchings given")
    width = matchings[0].frame_width
    height = matchings[0].frame_height
    ny = int(np.ceil(height / bin_px))
    nx = int(np.ceil(width / bin_px))
    hist = np.zeros((ny, nx), dtype=np.int64)
    for m in matchings:
        for det in m.unmatched_detections:
            bx = min(int(det.x // bin_px), nx - 1)
            by = min(int(det.y // bin_px), ny - 1)
            hist[by, bx] += 1
    return hist


def report_text(report, reference=True):
    """Human-readable key:value report, optionally with reference footer."""
    lines = [f"{key}: {value}" for key, value in asdict(report).items()]
    if reference:
        lines.append("")
        lines.append("# full-scale reference profiles (not targets for this run)")
        lines.append(f"# human raters: {REFERENCE_HUMAN}")
        lines.append(f"# recurrent detector: {REFERENCE_RECURRENT}")
    return "\n".join(lines) + "\n"


def report_json(report):
    """Machine-readable report with the exact MetricsReport field names."""
    return json.dumps(asdict(report), indent=2) + "\n"

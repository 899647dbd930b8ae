"""Annotated-dataset model and the on-disk CSV formats.

Two flat CSV formats are defined here and shared with the browser
annotation tool and the downstream stages:

* annotation CSV, header ``sequence,frame,image,x,y,kind,angle_deg``
* detection CSV, header ``sequence,frame,x,y,kind,axis_deg,angle_deg,directed_deg,area_px``

Positions are serialized with 3 decimal places, angles with 2. Round
trips through these files are exact for values quantized at that
precision, which is what every producer in this package emits.
"""

import io
import math
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import DataError
from .geom import normalize_orientation

ANNOTATION_HEADER = "sequence,frame,image,x,y,kind,angle_deg"
DETECTION_HEADER = "sequence,frame,x,y,kind,axis_deg,angle_deg,directed_deg,area_px"


class Kind(IntEnum):
    """Label type: a fully visible body, or only an abdomen in a cell."""

    FULL_BEE = 1
    ABDOMEN = 2


@dataclass
class Annotation:
    """One labeled individual: position, type, and orientation angle.

    ``angle_deg`` is clockwise from image-up in [0, 360) and is forced
    to 0 for abdomen labels, whose orientation is ambiguous.
    """

    x: float
    y: float
    kind: Kind
    angle_deg: float = 0.0

    def __post_init__(self):
        self.kind = Kind(self.kind)
        if self.kind == Kind.ABDOMEN and self.angle_deg != 0.0:
            raise DataError("abdomen angle must be 0")
        if not (0.0 <= self.angle_deg < 360.0):
            raise DataError(f"angle {self.angle_deg} outside [0, 360)")


@dataclass
class FrameRecord:
    """All annotations of one frame of one sequence."""

    sequence: str
    frame: int
    image_path: str
    annotations: list = field(default_factory=list)


@dataclass
class FrameTile:
    """One tile cut from a frame, with the offset for inverse mapping."""

    sequence: str
    frame: int
    offset_x: int
    offset_y: int
    width: int
    height: int
    annotations: list = field(default_factory=list)


@dataclass
class Detection:
    """One extracted instance (also one row of the detection CSV)."""

    x: float
    y: float
    kind: Kind
    axis_deg: float
    angle_deg: float
    directed_deg: float
    area_px: int
    sequence: str = ""
    frame: int = 0


@dataclass
class DatasetSplit:
    train: list
    test: list
    mode: str


def _parse_float(value, row_num, name):
    try:
        out = float(value)
    except ValueError:
        raise DataError(f"row {row_num}: non-numeric {name} {value!r}") from None
    if not math.isfinite(out):
        raise DataError(f"row {row_num}: non-finite {name}")
    return out


def parse_annotations(text):
    """Parse annotation CSV content into frame records.

    Frames are returned grouped by (sequence, frame) in order of first
    appearance. Malformed rows raise DataError with the row number;
    nothing is skipped silently.
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != ANNOTATION_HEADER:
        raise DataError(f"missing or bad header, expected {ANNOTATION_HEADER!r}")
    records = {}
    for row_num, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise DataError(f"row {row_num}: expected 7 fields, got {len(parts)}")
        seq, frame_s, image, x_s, y_s, kind_s, angle_s = parts
        try:
            frame = int(frame_s)
        except ValueError:
            raise DataError(f"row {row_num}: non-integer frame {frame_s!r}") from None
        x = _parse_float(x_s, row_num, "x")
        y = _parse_float(y_s, row_num, "y")
        try:
            kind = Kind(int(kind_s))
        except ValueError:
            raise DataError(f"row {row_num}: kind must be 1 or 2, got {kind_s!r}") from None
        angle = _parse_float(angle_s, row_num, "angle_deg")
        if not (0.0 <= angle < 360.0):
            raise DataError(f"row {row_num}: angle {angle} outside [0, 360)")
        if kind == Kind.ABDOMEN and angle != 0.0:
            raise DataError(f"row {row_num}: abdomen angle must be 0")
        key = (seq, frame)
        if key not in records:
            records[key] = FrameRecord(seq, frame, image)
        records[key].annotations.append(Annotation(x, y, kind, angle))
    return list(records.values())


def write_annotations(records):
    """Serialize frame records back to annotation CSV content."""
    out = io.StringIO()
    out.write(ANNOTATION_HEADER + "\n")
    for rec in records:
        for ann in rec.annotations:
            out.write(
                f"{rec.sequence},{rec.frame},{rec.image_path},"
                f"{ann.x:.3f},{ann.y:.3f},{int(ann.kind)},{ann.angle_deg:.2f}\n"
            )
    return out.getvalue()


def parse_detections(text):
    """Parse detection CSV content into Detection objects."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != DETECTION_HEADER:
        raise DataError(f"missing or bad header, expected {DETECTION_HEADER!r}")
    dets = []
    for row_num, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 9:
            raise DataError(f"row {row_num}: expected 9 fields, got {len(parts)}")
        seq, frame_s, x_s, y_s, kind_s, ax_s, an_s, di_s, area_s = parts
        try:
            frame = int(frame_s)
            kind = Kind(int(kind_s))
            area = int(area_s)
        except ValueError:
            raise DataError(f"row {row_num}: bad integer field") from None
        dets.append(
            Detection(
                x=_parse_float(x_s, row_num, "x"),
                y=_parse_float(y_s, row_num, "y"),
                kind=kind,
                axis_deg=_parse_float(ax_s, row_num, "axis_deg"),
                angle_deg=_parse_float(an_s, row_num, "angle_deg"),
                directed_deg=_parse_float(di_s, row_num, "directed_deg"),
                area_px=area,
                sequence=seq,
                frame=frame,
            )
        )
    return dets


def write_detections(detections):
    """Serialize detections to detection CSV content."""
    out = io.StringIO()
    out.write(DETECTION_HEADER + "\n")
    for d in detections:
        out.write(
            f"{d.sequence},{d.frame},{d.x:.3f},{d.y:.3f},{int(d.kind)},"
            f"{d.axis_deg:.2f},{d.angle_deg:.2f},{d.directed_deg:.2f},{d.area_px}\n"
        )
    return out.getvalue()


def _tile_starts(extent, tile, stride):
    starts = [0]
    while min(starts[-1] + tile, extent) < extent:
        starts.append(starts[-1] + stride)
    return starts


def tile_frame(record, frame_width, frame_height, tile, overlap):
    """Cut a frame into grid tiles with the given stride overlap.

    Tiles are laid at stride ``tile - overlap`` and clipped at the frame
    border, so with overlap 0 the tile extents partition the frame and
    each annotation center lands in exactly one tile. Annotations are
    assigned to every tile whose half-open extent contains their center,
    with coordinates shifted into the tile-local frame.
    """
    if tile <= 0:
        raise DataError("tile size must be positive")
    if not (0 <= overlap < tile):
        raise DataError("overlap must be in [0, tile)")
    stride = tile - overlap
    xs = _tile_starts(frame_width, tile, stride)
    ys = _tile_starts(frame_height, tile, stride)
    tiles = []
    for y0 in ys:
        for x0 in xs:
            w = min(tile, frame_width - x0)
            h = min(tile, frame_height - y0)
            anns = [
                Annotation(a.x - x0, a.y - y0, a.kind, a.angle_deg)
                for a in record.annotations
                if x0 <= a.x < x0 + w and y0 <= a.y < y0 + h
            ]
            tiles.append(
                FrameTile(record.sequence, record.frame, x0, y0, w, h, anns)
            )
    return tiles


def split_dataset(records, mode, seed=None, test_count=None, fraction=None):
    """Split frame records into train and test sets.

    ``random`` mode draws exactly ``test_count`` test frames without
    replacement, reproducibly from ``seed``. ``prefix`` mode keeps, per
    sequence, the first floor(fraction * length) frames for training and
    the temporal remainder for testing.
    """
    if mode == "random":
        if seed is None or test_count is None:
            raise DataError("random split needs seed and test_count")
        if test_count >= len(records) or test_count <= 0:
            raise DataError(
                f"test_count {test_count} must be in (0, {len(records)})"
            )
        import numpy as np

        order = np.random.default_rng(seed).permutation(len(records))
        test_idx = set(int(i) for i in order[:test_count])
        train = [r for i, r in enumerate(records) if i not in test_idx]
        test = [r for i, r in enumerate(records) if i in test_idx]
        return DatasetSplit(train, test, "random")
    if mode == "prefix":
        if fraction is None or not (0.0 < fraction < 1.0):
            raise DataError("prefix split needs a fraction in (0, 1)")
        by_seq = {}
        for r in records:
            by_seq.setdefault(r.sequence, []).append(r)
        train, test = [], []
        for seq in by_seq.values():
            seq.sort(key=lambda r: r.frame)
            cut = int(fraction * len(seq))
            if cut == 0 or cut == len(seq):
                raise DataError(
                    f"prefix split leaves an empty partition for a sequence "
                    f"of length {len(seq)} at fraction {fraction}"
                )
            train.extend(seq[:cut])
            test.extend(seq[cut:])
        return DatasetSplit(train, test, "prefix")
    raise DataError(f"unknown split mode {mode!r}")

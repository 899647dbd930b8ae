"""Link per-frame detections into trajectories.

Frame by frame, every feasible (active track, detection) pair is scored
and assigned greedily in ascending cost order; unmatched detections
start new tracks, and a track that stays unmatched for more than
``max_gap`` frames is closed, so a lost individual can be picked up
again up to ``max_gap`` frames ahead. The cost combines position
(gated), heading, and velocity-change terms. Post hoc, short tracks
that both start and end away from the image border are dropped as
probable false positives; short tracks touching the border margin are
kept since they are genuine entries/exits.
"""

import io
from dataclasses import dataclass, field

import numpy as np

from .annotations import Detection, Kind
from .errors import DataError
from .geom import orientation_distance

TRACK_HEADER = "track_id,sequence,frame,x,y,directed_deg"


@dataclass
class LinkParams:
    max_gap: int = 5
    gate: float = 80.0  # px per frame, about half a body length
    w_pos: float = 1.0
    w_ang: float = 0.5
    w_vel: float = 0.5
    min_track_length: int = 5
    boundary_margin: int = 50

    def __post_init__(self):
        if self.max_gap < 1 or self.gate <= 0:
            raise DataError("max_gap must be >= 1 and gate > 0")
        if min(self.w_pos, self.w_ang, self.w_vel) < 0:
            raise DataError("cost weights must be >= 0")


@dataclass
class Track:
    id: int
    nodes: list = field(default_factory=list)  # (frame, Detection), ordered

    @property
    def last_frame(self):
        return self.nodes[-1][0]

    @property
    def last_detection(self):
        return self.nodes[-1][1]

    def velocity(self):
        """Per-frame velocity from the last two nodes; zero if only one."""
        if len(self.nodes) < 2:
            return np.zeros(2)
        (f0, d0), (f1, d1) = self.nodes[-2], self.nodes[-1]
        dt = f1 - f0
        return np.array([(d1.x - d0.x) / dt, (d1.y - d0.y) / dt])


def link_cost(track, detection, frame, params):
    """Assignment cost, or None when the position gate rejects the pair."""
    gap = frame - track.last_frame
    if gap < 1 or gap > params.max_gap:
        return None
    last = track.last_detection
    vel = track.velocity()
    predicted = np.array([last.x, last.y]) + gap * vel
    offset = np.hypot(predicted[0] - detection.x, predicted[1] - detection.y)
    pos_term = offset / (params.gate * gap)
    if pos_term > 1.0:
        return None
    ang_term = orientation_distance(last.directed_deg, detection.directed_deg) / 180.0
    new_vel = np.array([(detection.x - last.x) / gap, (detection.y - last.y) / gap])
    vel_term = float(np.hypot(*(new_vel - vel))) / params.gate
    return params.w_pos * pos_term + params.w_ang * ang_term + params.w_vel * vel_term


def link_frames(detections_by_frame, params=None):
    """Greedy frame-to-frame association over ordered per-frame lists.

    ``detections_by_frame`` maps frame index -> list of detections (or
    is a list indexed by frame). Returns all tracks, including closed
    ones, ordered by id. Ties in cost break by (track id, detection
    order), so results are deterministic.
    """
    params = params or LinkParams()
    if isinstance(detections_by_frame, dict):
        frames = sorted(detections_by_frame)
        per_frame = [(f, detections_by_frame[f]) for f in frames]
    else:
        per_frame = list(enumerate(detections_by_frame))
    finished = []
    active = []
    next_id = 0
    for frame, dets in per_frame:
        still_active = []
        for tr in active:
            if frame - tr.last_frame > params.max_gap:
                finished.append(tr)
            else:
                still_active.append(tr)
        active = still_active
        candidates = []
        for tr in active:
            for j, det in enumerate(dets):
                cost = link_cost(tr, det, frame, params)
                if cost is not None:
                    candidates.append((cost, tr.id, j, tr))
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))
        used_tracks = set()
        used_dets = set()
        for cost, tid, j, tr in candidates:
            if tid in used_tracks or j in used_dets:
                continue
            used_tracks.add(tid)
            used_dets.add(j)
            tr.nodes.append((frame, dets[j]))
        for j, det in enumerate(dets):
            if j not in used_dets:
                tr = Track(next_id, [(frame, det)])
                next_id += 1
                active.append(tr)
    finished.extend(active)
    finished.sort(key=lambda t: t.id)
    return finished


def filter_tracks(tracks, params, frame_width, frame_height):
    """Drop short tracks that start and end in the image interior."""
    margin = params.boundary_margin

    def central(det):
        return (
            det.x >= margin
            and det.y >= margin
            and det.x < frame_width - margin
            and det.y < frame_height - margin
        )

    kept = []
    for tr in tracks:
        if len(tr.nodes) < params.min_track_length:
            first = tr.nodes[0][1]
            last = tr.nodes[-1][1]
            if central(first) and central(last):
                continue
        kept.append(tr)
    return kept


def write_tracks(tracks, sequence=""):
    """Serialize tracks to track CSV content."""
    out = io.StringIO()
    out.write(TRACK_HEADER + "\n")
    for tr in tracks:
        for frame, det in tr.nodes:
            seq = det.sequence or sequence
            out.write(
                f"{tr.id},{seq},{frame},{det.x:.3f},{det.y:.3f},"
                f"{det.directed_deg:.2f}\n"
            )
    return out.getvalue()


def parse_tracks(text):
    """Parse track CSV content back into Track objects (per sequence)."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACK_HEADER:
        raise DataError(f"missing or bad header, expected {TRACK_HEADER!r}")
    tracks = {}
    for row_num, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise DataError(f"row {row_num}: expected 6 fields, got {len(parts)}")
        tid_s, seq, frame_s, x_s, y_s, dir_s = parts
        try:
            tid, frame = int(tid_s), int(frame_s)
            x, y, directed = float(x_s), float(y_s), float(dir_s)
        except ValueError:
            raise DataError(f"row {row_num}: bad numeric field") from None
        det = Detection(
            x=x,
            y=y,
            kind=Kind.FULL_BEE,
            axis_deg=directed % 180.0,
            angle_deg=directed,
            directed_deg=directed,
            area_px=0,
            sequence=seq,
            frame=frame,
        )
        tracks.setdefault(tid, Track(tid)).nodes.append((frame, det))
    out = sorted(tracks.values(), key=lambda t: t.id)
    for tr in out:
        tr.nodes.sort(key=lambda n: n[0])
    return out


def render_overlays(tracks, frames, out_dir, trail=20):
    """Draw trajectory trails onto frames and save them as PNGs.

    ``frames`` is a list of (frame_index, 2D uint8 array). Each output
    frame shows the last ``trail`` nodes of every track active at that
    time, plus a heading tick at the newest node.
    """
    import os

    from PIL import Image, ImageDraw

    from .geom import orientation_to_vector

    os.makedirs(out_dir, exist_ok=True)
    palette = [
        (255, 80, 80),
        (80, 200, 255),
        (255, 200, 60),
        (120, 255, 120),
        (230, 120, 255),
        (255, 150, 40),
    ]
    for frame_idx, image in frames:
        rgb = Image.fromarray(image).convert("RGB")
        draw = ImageDraw.Draw(rgb)
        for tr in tracks:
            past = [(f, d) for f, d in tr.nodes if f <= frame_idx][-trail:]
            if not past or past[-1][0] < frame_idx - 5:
                continue
            color = palette[tr.id % len(palette)]
            points = [(d.x, d.y) for _, d in past]
            if len(points) > 1:
                draw.line(points, fill=color, width=2)
            fx, fy = points[-1]
            dx, dy = orientation_to_vector(past[-1][1].directed_deg)
            draw.line([(fx, fy), (fx + 12 * dx, fy + 12 * dy)], fill=color, width=2)
            draw.ellipse([fx - 3, fy - 3, fx + 3, fy + 3], outline=color, width=2)
        rgb.save(os.path.join(out_dir, f"overlay_{frame_idx:06d}.png"))

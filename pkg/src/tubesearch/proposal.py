"""Candidate tube proposal: link per-frame person detections into tubes.

Detections in adjacent frames are scored by the sum of their detector
scores plus an IoU continuity bonus.  A tube's energy is the sum of the
linking scores along its path divided by the number of frames it spans.
The optimal path through a segment is found with the Viterbi algorithm;
paths are extracted repeatedly (removing their detections) until some
frame runs out of detections, and the top candidates across all clips
are kept by energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

DEFAULT_IOU_WEIGHT = 1.0
DEFAULT_N_CANDIDATES = 350


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in corner form, x1 < x2 and y1 < y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError(f"box coordinates must be finite, got {self}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box: {self}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class Detection:
    """One scored person box in one frame of one clip."""

    box: Box
    score: float
    frame: int
    clip_id: str

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"detection score must be finite, got {self.score}")
        if self.frame < 0:
            raise ValueError(f"frame must be non-negative, got {self.frame}")


@dataclass
class Tube:
    """A per-frame sequence of boxes within one clip, with its energy."""

    clip_id: str
    start_frame: int
    boxes: List[Box]
    energy: float
    tube_id: str = ""

    def __post_init__(self):
        if not self.boxes:
            raise ValueError("tube must contain at least one box")

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def end_frame(self) -> int:
        """Last frame covered (inclusive)."""
        return self.start_frame + len(self.boxes) - 1

    def box_at(self, frame: int) -> Box | None:
        if self.start_frame <= frame <= self.end_frame:
            return self.boxes[frame - self.start_frame]
        return None


@dataclass
class ProposalConfig:
    iou_weight: float = DEFAULT_IOU_WEIGHT
    n_candidates: int = DEFAULT_N_CANDIDATES

    def __post_init__(self):
        if self.iou_weight < 0:
            raise ValueError("iou_weight must be >= 0")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def link_score(a: Detection, b: Detection, iou_weight: float) -> float:
    """Affinity between detections in adjacent frames of the same clip.

    Sum of the two detector scores plus ``iou_weight`` times the spatial
    overlap of the boxes.
    """
    if a.clip_id != b.clip_id:
        raise ValueError(f"detections from different clips: {a.clip_id} vs {b.clip_id}")
    if a.frame + 1 != b.frame:
        raise ValueError(f"detections must be in adjacent frames, got {a.frame} and {b.frame}")
    return a.score + b.score + iou_weight * iou(a.box, b.box)


def tube_energy(path: Sequence[Detection], iou_weight: float = DEFAULT_IOU_WEIGHT) -> float:
    """Energy of a path: sum of consecutive linking scores over path length.

    The divisor is the number of detections, not the number of links.
    A single-detection path has energy 0.
    """
    if not path:
        raise ValueError("path must contain at least one detection")
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += link_score(a, b, iou_weight)
    return total / len(path)


def _viterbi(frames: Sequence[Sequence[Detection]], iou_weight: float) -> List[int]:
    """Indices of the optimal one-per-frame path.

    Ties are broken toward the lowest detection index at the latest frame
    where optimal paths differ; the lowest-index argmax below realizes
    that both in the backpointers and in the final state choice.
    """
    if not frames:
        raise ValueError("segment must contain at least one frame")
    for t, dets in enumerate(frames):
        if not dets:
            raise ValueError(f"frame {t} of segment has no detections; split segments first")

    # score[i] is the best accumulated linking-score sum ending at detection i
    score = [0.0] * len(frames[0])
    back: List[List[int]] = []
    for t in range(1, len(frames)):
        prev_dets, cur_dets = frames[t - 1], frames[t]
        new_score = []
        pointers = []
        for det in cur_dets:
            best_val = -math.inf
            best_j = 0
            for j, prev in enumerate(prev_dets):
                val = score[j] + link_score(prev, det, iou_weight)
                if val > best_val:
                    best_val = val
                    best_j = j
            new_score.append(best_val)
            pointers.append(best_j)
        score = new_score
        back.append(pointers)

    last = max(range(len(score)), key=lambda i: (score[i], -i))
    path_idx = [last]
    for pointers in reversed(back):
        path_idx.append(pointers[path_idx[-1]])
    path_idx.reverse()
    return path_idx


def best_path(
    frames: Sequence[Sequence[Detection]], iou_weight: float = DEFAULT_IOU_WEIGHT
) -> List[Detection]:
    """Viterbi-optimal choice of one detection per frame.

    Maximizes tube energy over all one-per-frame paths through the
    segment (the divisor is shared, so maximizing the linking-score sum
    is equivalent).
    """
    idx = _viterbi(frames, iou_weight)
    return [frames[t][i] for t, i in enumerate(idx)]


def _make_tube(path: Sequence[Detection], iou_weight: float) -> Tube:
    return Tube(
        clip_id=path[0].clip_id,
        start_frame=path[0].frame,
        boxes=[d.box for d in path],
        energy=tube_energy(path, iou_weight),
    )


def propose_tubes(
    frames: Sequence[Sequence[Detection]], iou_weight: float = DEFAULT_IOU_WEIGHT
) -> List[Tube]:
    """Repeated optimal-path extraction over one segment.

    Each extracted path's detections are removed before the next pass;
    extraction stops as soon as any frame's detection set is exhausted.
    Returned tubes are detection-disjoint with non-increasing energies.
    """
    remaining = [list(dets) for dets in frames]
    tubes: List[Tube] = []
    while all(remaining):
        idx = _viterbi(remaining, iou_weight)
        path = [remaining[t][i] for t, i in enumerate(idx)]
        tubes.append(_make_tube(path, iou_weight))
        for t, i in enumerate(idx):
            del remaining[t][i]
    return tubes


def split_segments(
    detections: Sequence[Detection], n_frames: int | None = None
) -> List[List[List[Detection]]]:
    """Group a clip's detections into maximal runs of non-empty frames.

    The Viterbi pass needs one detection per frame, so frames with no
    detections split the clip; each returned segment is a per-frame list
    ready for :func:`propose_tubes`.  Detection order within a frame is
    preserved (it is the tie-break order).
    """
    by_frame: Dict[int, List[Detection]] = {}
    for det in detections:
        by_frame.setdefault(det.frame, []).append(det)
    if not by_frame:
        return []
    last = max(by_frame) if n_frames is None else n_frames - 1

    segments: List[List[List[Detection]]] = []
    current: List[List[Detection]] = []
    for frame in range(0, last + 1):
        dets = by_frame.get(frame, [])
        if dets:
            current.append(dets)
        elif current:
            segments.append(current)
            current = []
    if current:
        segments.append(current)
    return segments


def propose_clip(
    detections: Sequence[Detection], iou_weight: float = DEFAULT_IOU_WEIGHT
) -> List[Tube]:
    """Propose tubes for one clip, splitting it at detection-free frames."""
    tubes: List[Tube] = []
    for segment in split_segments(detections):
        tubes.extend(propose_tubes(segment, iou_weight))
    return tubes


def select_top_candidates(tubes: Sequence[Tube], n_candidates: int) -> List[Tube]:
    """Keep the globally top-scoring tubes by energy.

    Deterministic: ties are broken by (clip_id, start_frame).  Returns
    every tube when fewer than ``n_candidates`` exist.
    """
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    ranked = sorted(tubes, key=lambda t: (-t.energy, t.clip_id, t.start_frame))
    return ranked[:n_candidates]

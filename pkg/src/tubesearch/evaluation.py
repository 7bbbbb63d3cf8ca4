"""Localization scoring, ranking, and recall metrics.

A retrieved tube counts as a true positive when its localization score
against the ground-truth tube is strictly above the threshold.  The
localization score averages per-frame IoU over the frame set Γ: the
frames eligible for annotation intersected with the frames where either
tube has a box.  A tube missing a frame of Γ contributes zero IoU there.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from .proposal import Tube, iou

logger = logging.getLogger(__name__)

TP_THRESHOLD = 0.5


@dataclass(frozen=True)
class EvalMatch:
    """One ground-truth/detected tube comparison with its frame set."""

    gt_tube: Tube
    dt_tube: Tube
    gamma: Tuple[int, ...]
    score: float

    def recomputed_score(self) -> float:
        return _mean_iou_over(self.gt_tube, self.dt_tube, self.gamma)


def _mean_iou_over(gt: Tube, dt: Tube, gamma: Sequence[int]) -> float:
    if not gamma:
        return 0.0
    total = 0.0
    for frame in gamma:
        a = gt.box_at(frame)
        b = dt.box_at(frame)
        if a is not None and b is not None:
            total += iou(a, b)
    return total / len(gamma)


def evaluate_pair(gt: Tube, dt: Tube, eligible_frames: Iterable[int]) -> EvalMatch:
    """Compare two tubes of the same clip over the eligible frames."""
    if gt.clip_id != dt.clip_id:
        raise ValueError(
            f"tubes belong to different clips: {gt.clip_id!r} vs {dt.clip_id!r}"
        )
    covered = set(range(gt.start_frame, gt.end_frame + 1))
    covered.update(range(dt.start_frame, dt.end_frame + 1))
    gamma = tuple(sorted(set(eligible_frames) & covered))
    if not gamma:
        logger.warning(
            "empty frame set for gt %r vs %r; localization score is 0",
            gt.tube_id,
            dt.tube_id,
        )
    return EvalMatch(gt_tube=gt, dt_tube=dt, gamma=gamma, score=_mean_iou_over(gt, dt, gamma))


def localization_score(gt: Tube, dt: Tube, eligible_frames: Iterable[int]) -> float:
    return evaluate_pair(gt, dt, eligible_frames).score


@dataclass
class ClipIndex:
    """Which candidate tubes belong to which clip."""

    tubes_by_clip: Dict[str, List[str]] = field(default_factory=dict)

    def __post_init__(self):
        seen: Dict[str, str] = {}
        for clip_id, tube_ids in self.tubes_by_clip.items():
            for tid in tube_ids:
                if tid in seen:
                    raise ValueError(
                        f"tube {tid!r} listed under both {seen[tid]!r} and {clip_id!r}"
                    )
                seen[tid] = clip_id

    @classmethod
    def from_tubes(cls, tubes: Iterable[Tube]) -> "ClipIndex":
        by_clip: Dict[str, List[str]] = {}
        for t in tubes:
            by_clip.setdefault(t.clip_id, []).append(t.tube_id)
        return cls(by_clip)

    def clip_ids(self) -> List[str]:
        return sorted(self.tubes_by_clip)

    def tubes_for(self, clip_id: str) -> List[str]:
        return list(self.tubes_by_clip.get(clip_id, []))


@dataclass
class RankedResult:
    """Full ordering of candidate tubes for one query."""

    query_id: str
    tube_ids: List[str]
    scores: List[float]

    def __post_init__(self):
        if len(self.tube_ids) != len(self.scores):
            raise ValueError("tube_ids and scores must align")
        for a, b in zip(self.scores, self.scores[1:]):
            if b > a:
                raise ValueError("scores must be non-increasing")

    def top(self, k: int) -> List[str]:
        return self.tube_ids[:k]


def rank_candidates(query_id: str, scores_by_tube: Mapping[str, float]) -> RankedResult:
    """Descending by score, ties broken by tube id ascending."""
    if not scores_by_tube:
        raise ValueError(f"query {query_id!r} has no candidate tubes to rank")
    ordered = sorted(scores_by_tube.items(), key=lambda kv: (-kv[1], kv[0]))
    return RankedResult(
        query_id=query_id,
        tube_ids=[tid for tid, _ in ordered],
        scores=[s for _, s in ordered],
    )


def rank_tubes(
    query_id: str,
    desc_feat: np.ndarray,
    tube_ids: Sequence[str],
    tube_feats: np.ndarray,
    scorer,
) -> RankedResult:
    """Score one description against candidate tubes and rank them."""
    if len(tube_ids) == 0:
        raise ValueError(f"query {query_id!r} has no candidate tubes to rank")
    if len(tube_ids) != len(tube_feats):
        raise ValueError("tube ids and feature rows must align")
    scores = scorer.score_matrix(np.atleast_2d(desc_feat), tube_feats)[0]
    return rank_candidates(query_id, dict(zip(tube_ids, (float(s) for s in scores))))


def recall_at_k(
    results: Sequence[RankedResult],
    loc_scores: Mapping[str, Mapping[str, float]],
    k: int,
    threshold: float = TP_THRESHOLD,
) -> float:
    """Fraction of queries with a true positive in the top K.

    ``loc_scores[query_id][tube_id]`` holds the localization score of a
    candidate against that query's ground truth; unlisted tubes count as
    zero.  A tube is a true positive only when its score is strictly
    above the threshold.
    """
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if not results:
        raise ValueError("no ranked results to evaluate")
    hits = 0
    for result in results:
        per_query = loc_scores.get(result.query_id, {})
        if any(per_query.get(tid, 0.0) > threshold for tid in result.top(k)):
            hits += 1
    return hits / len(results)


def clip_score(scores_by_tube: Mapping[str, float], clip_id: str, index: ClipIndex) -> float:
    """Best tube score within a clip; -inf for a clip with no candidates."""
    members = index.tubes_for(clip_id)
    if not members:
        return -math.inf
    return max(scores_by_tube[tid] for tid in members)


def rank_clips(scores_by_tube: Mapping[str, float], index: ClipIndex) -> List[Tuple[str, float]]:
    """Clips ordered by their best tube score, ties by clip id."""
    rows = [(cid, clip_score(scores_by_tube, cid, index)) for cid in index.clip_ids()]
    rows.sort(key=lambda kv: (-kv[1], kv[0]))
    return rows

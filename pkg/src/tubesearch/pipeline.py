"""End-to-end orchestration: dataset loading, pairing, training, retrieval.

A dataset directory is the unit of work.  It holds detections,
annotations, the proposed tube pool with per-second features, queries
with one description-feature row each, and a clip-level split file.
Query ids follow the ``<person_id>#<index>`` convention, which is how a
query is tied back to its annotated person for training and scoring.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .embedding import (
    CcaScorer,
    EmbedTrainConfig,
    EmbeddingScorer,
    EpochStats,
    PairBatch,
    Scorer,
    fit_cca,
    train_embedding,
)
from .errors import DataFormatError
from .evaluation import (
    RankedResult,
    evaluate_pair,
    rank_tubes,
    recall_at_k,
)
from .features import FeatureStore
from .io.fmat import read_fmat
from .io.records import (
    AnnotationRecord,
    QueryRecord,
    annotation_to_tube,
    read_annotations,
    read_json,
    read_queries,
    read_tubes,
    record_to_tube,
)
from .proposal import Tube, select_top_candidates
from .text.encoder import TextEncoder

logger = logging.getLogger(__name__)

EVAL_KS = (1, 5, 10)


def person_of_query(query_id: str) -> str:
    """Queries are named ``<person_id>#<index>``."""
    person, sep, _ = query_id.rpartition("#")
    if not sep or not person:
        raise DataFormatError(f"query id {query_id!r} does not name a person")
    return person


@dataclass
class Dataset:
    root: Path
    annotations: List[AnnotationRecord]
    tubes: List[Tube]
    store: FeatureStore
    queries: List[QueryRecord]
    desc_features: np.ndarray
    splits: Dict[str, List[str]]
    _query_rows: Dict[str, int] = field(init=False, repr=False)
    _annotations_by_person: Dict[str, AnnotationRecord] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.queries) != self.desc_features.shape[0]:
            raise DataFormatError(
                f"{len(self.queries)} queries but {self.desc_features.shape[0]} "
                "description feature rows",
                path=self.root,
            )
        self._query_rows = {}
        for row, q in enumerate(self.queries):
            if q.query_id in self._query_rows:
                raise DataFormatError(f"duplicate query id {q.query_id!r}", path=self.root)
            self._query_rows[q.query_id] = row
        self._annotations_by_person = {}
        for ann in self.annotations:
            if ann.person_id in self._annotations_by_person:
                raise DataFormatError(
                    f"duplicate annotation for {ann.person_id!r}", path=self.root
                )
            self._annotations_by_person[ann.person_id] = ann

    def desc_row(self, query_id: str) -> np.ndarray:
        return self.desc_features[self._query_rows[query_id]]

    def annotation_for(self, person_id: str) -> AnnotationRecord:
        return self._annotations_by_person[person_id]

    def tubes_in(self, clip_ids: Iterable[str]) -> List[Tube]:
        wanted = set(clip_ids)
        return [t for t in self.tubes if t.clip_id in wanted]

    def queries_in(self, clip_ids: Iterable[str]) -> List[QueryRecord]:
        wanted = set(clip_ids)
        return [
            q
            for q in self.queries
            if self._annotations_by_person[person_of_query(q.query_id)].clip_id in wanted
        ]

    def split_clips(self, split: str) -> List[str]:
        if split not in self.splits:
            raise KeyError(f"unknown split {split!r}; have {sorted(self.splits)}")
        return list(self.splits[split])


def load_dataset(root: Union[str, Path]) -> Dataset:
    root = Path(root)
    for name in ("annotations.jsonl", "tubes.jsonl", "queries.jsonl",
                 "desc_features.fmat", "splits.json", FeatureStore.INDEX_NAME):
        if not (root / name).exists():
            raise DataFormatError(f"dataset is missing {name}", path=root)
    splits = read_json(root / "splits.json")
    if not isinstance(splits, dict):
        raise DataFormatError("splits.json must map split names to clip id lists",
                              path=root / "splits.json")
    return Dataset(
        root=root,
        annotations=read_annotations(root / "annotations.jsonl"),
        tubes=[record_to_tube(r) for r in read_tubes(root / "tubes.jsonl")],
        store=FeatureStore.load(root),
        queries=read_queries(root / "queries.jsonl"),
        desc_features=read_fmat(root / "desc_features.fmat"),
        splits={k: [str(c) for c in v] for k, v in splits.items()},
    )


@dataclass(frozen=True)
class TubeMatch:
    """Best proposal found for one annotated person."""

    person_id: str
    tube_id: str
    score: float


def match_people_to_tubes(
    dataset: Dataset, clip_ids: Iterable[str]
) -> List[TubeMatch]:
    """Pick each annotated person's best-overlap proposal tube.

    People whose clip produced no proposals are dropped with a warning;
    a zero-overlap best match is kept (the caller sees the score).
    """
    by_clip: Dict[str, List[Tube]] = {}
    for t in dataset.tubes:
        by_clip.setdefault(t.clip_id, []).append(t)
    matches = []
    wanted = set(clip_ids)
    for ann in dataset.annotations:
        if ann.clip_id not in wanted:
            continue
        pool = by_clip.get(ann.clip_id, [])
        if not pool:
            logger.warning("no proposals in clip %s; skipping %s", ann.clip_id,
                           ann.person_id)
            continue
        gt = annotation_to_tube(ann)
        best_tube, best = None, -1.0
        for t in pool:
            score = evaluate_pair(gt, t, ann.eligible_frames).score
            if score > best:
                best_tube, best = t, score
        matches.append(TubeMatch(ann.person_id, best_tube.tube_id, best))
    return matches


def build_pair_batch(dataset: Dataset, clip_ids: Iterable[str]) -> PairBatch:
    """Aligned (tube feature, description feature) rows for training.

    Each matched person contributes one row per description, all sharing
    that person's integer id so the loss can tell positives apart.
    """
    matches = match_people_to_tubes(dataset, clip_ids)
    tube_rows, desc_rows, person_ids = [], [], []
    people = {m.person_id: i for i, m in enumerate(sorted(matches, key=lambda m: m.person_id))}
    for m in matches:
        tube_vec = dataset.store.tube_vector(m.tube_id)
        for q in dataset.queries:
            if person_of_query(q.query_id) != m.person_id:
                continue
            tube_rows.append(tube_vec)
            desc_rows.append(dataset.desc_row(q.query_id))
            person_ids.append(people[m.person_id])
    if not tube_rows:
        raise DataFormatError("no training pairs could be built", path=dataset.root)
    order = np.argsort(person_ids, kind="stable")
    return PairBatch(
        tubes=np.stack(tube_rows)[order],
        descs=np.stack(desc_rows)[order],
        person_ids=np.asarray(person_ids)[order],
    )


def train_scorer(
    dataset: Dataset,
    method: str,
    config: Optional[EmbedTrainConfig] = None,
    cca_reg: float = 1e-4,
) -> Tuple[Scorer, List[EpochStats]]:
    """Fit the requested scorer on the train split (val split for snapshots)."""
    train_batch = build_pair_batch(dataset, dataset.split_clips("train"))
    if method == "cca":
        model = fit_cca(train_batch.tubes, train_batch.descs, reg=cca_reg)
        logger.info("cca fit on %d pairs, top correlation %.4f",
                    len(train_batch.person_ids), model.correlations[0])
        return CcaScorer(model), []
    if method in ("dspe", "dspepp"):
        config = config or EmbedTrainConfig()
        val_clips = dataset.split_clips("val") if dataset.splits.get("val") else []
        val_batch = build_pair_batch(dataset, val_clips) if val_clips else None
        net, history = train_embedding(train_batch, config, method=method, val=val_batch)
        return EmbeddingScorer(net, method=method), history
    raise ValueError(f"unknown method {method!r}; expected cca, dspe, or dspepp")


def run_queries(
    dataset: Dataset,
    scorer: Scorer,
    queries: Sequence[QueryRecord],
    candidates: Sequence[Tube],
) -> List[RankedResult]:
    """Rank the candidate pool for each query, in query-id order."""
    if not candidates:
        raise DataFormatError("no candidate tubes to rank", path=dataset.root)
    tube_ids = [t.tube_id for t in candidates]
    tube_feats = dataset.store.matrix(tube_ids)
    return [
        rank_tubes(q.query_id, dataset.desc_row(q.query_id), tube_ids, tube_feats, scorer)
        for q in sorted(queries, key=lambda q: q.query_id)
    ]


def localization_scores(
    dataset: Dataset,
    queries: Sequence[QueryRecord],
    candidates: Sequence[Tube],
) -> Dict[str, Dict[str, float]]:
    """Overlap of every same-clip candidate with each query's person."""
    by_clip: Dict[str, List[Tube]] = {}
    for t in candidates:
        by_clip.setdefault(t.clip_id, []).append(t)
    gt_cache: Dict[str, Tuple[Tube, AnnotationRecord]] = {}
    out: Dict[str, Dict[str, float]] = {}
    for q in queries:
        person = person_of_query(q.query_id)
        if person not in gt_cache:
            ann = dataset.annotation_for(person)
            gt_cache[person] = (annotation_to_tube(ann), ann)
        gt, ann = gt_cache[person]
        out[q.query_id] = {
            t.tube_id: evaluate_pair(gt, t, ann.eligible_frames).score
            for t in by_clip.get(ann.clip_id, [])
        }
    return out


@dataclass(frozen=True)
class EvalOutcome:
    split: str
    n_queries: int
    n_candidates: int
    threshold: float
    recalls: Dict[int, float]
    results: List[RankedResult]
    loc_scores: Dict[str, Dict[str, float]]


def evaluate_split(
    dataset: Dataset,
    scorer: Scorer,
    split: str = "test",
    ks: Sequence[int] = EVAL_KS,
    threshold: float = 0.5,
    n_candidates: Optional[int] = None,
) -> EvalOutcome:
    """R@K over one split's queries against that split's tube pool."""
    clips = dataset.split_clips(split)
    pool = dataset.tubes_in(clips)
    if n_candidates is not None:
        pool = select_top_candidates(pool, n_candidates)
    queries = dataset.queries_in(clips)
    if not queries:
        raise DataFormatError(f"split {split!r} has no queries", path=dataset.root)
    results = run_queries(dataset, scorer, queries, pool)
    loc = localization_scores(dataset, queries, pool)
    recalls = {k: recall_at_k(results, loc, k, threshold=threshold) for k in ks}
    logger.info("eval %s: %s", split,
                ", ".join(f"R@{k}={recalls[k]:.3f}" for k in ks))
    return EvalOutcome(
        split=split,
        n_queries=len(queries),
        n_candidates=len(pool),
        threshold=threshold,
        recalls=recalls,
        results=results,
        loc_scores=loc,
    )


@dataclass(frozen=True)
class SweepRow:
    n_candidates: int
    pool_size: int
    recalls: Dict[int, float]


def sweep_candidates(
    dataset: Dataset,
    scorer: Scorer,
    n_grid: Sequence[int],
    split: str = "test",
    ks: Sequence[int] = EVAL_KS,
    threshold: float = 0.5,
) -> List[SweepRow]:
    """Re-run top-N selection and retrieval for each pool size in the grid."""
    rows = []
    for n in n_grid:
        outcome = evaluate_split(
            dataset, scorer, split=split, ks=ks, threshold=threshold, n_candidates=n
        )
        rows.append(SweepRow(n_candidates=int(n), pool_size=outcome.n_candidates,
                             recalls=outcome.recalls))
    return rows


def action_query(
    category_name: str,
    encoder: TextEncoder,
    tube_ids: Sequence[str],
    tube_feats: np.ndarray,
    scorer: Scorer,
) -> RankedResult:
    """Treat a category name as a free-text query; pure delegation."""
    desc_feat = encoder.encode(category_name)
    return rank_tubes(category_name, desc_feat, tube_ids, tube_feats, scorer)

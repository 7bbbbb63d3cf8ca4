"""Seeded synthetic dataset generator.

Plants smooth ground-truth person trajectories in each clip, perturbs
them into noisy per-frame detections, and derives every downstream file
from one latent vector per person: the six per-second tube feature
blocks are (different) linear images of the latent of whichever person a
proposed tube covers, and description features are yet another linear
image of the same latent.  Five token-sequence descriptions per person
spell out the latent's signs so the text pipeline has real structure to
find.  Frames are sampled at one per second, so frame index and second
index coincide throughout.

Everything is drawn from a single seeded generator in a fixed order, so
a given config produces a byte-identical dataset.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from ..features import BLOCK_ORDER, FeatureStore
from ..proposal import Box, Detection, Tube, iou, propose_clip
from .fmat import write_fmat
from .records import (
    DESCRIPTIONS_PER_PERSON,
    AnnotationRecord,
    DetectionRecord,
    QueryRecord,
    tube_to_record,
    write_json,
    write_records,
)

logger = logging.getLogger(__name__)

FILLER_TOKENS = ("the", "person", "is", "seen", "moving", "near", "with", "a")


@dataclass
class SynthConfig:
    seed: int = 0
    clips: int = 12
    frames_per_clip: int = 20
    people_per_clip: int = 2
    frame_width: float = 320.0
    frame_height: float = 240.0
    box_jitter: float = 0.05  # fraction of person size
    fp_rate: float = 0.1  # chance of a spurious detection per frame
    miss_rate: float = 0.05  # chance a person goes undetected in a frame
    latent_dim: int = 8
    feature_noise: float = 0.05
    desc_dim: int = 24
    wordvec_dim: int = 12
    block_dims: Dict[str, int] = field(
        default_factory=lambda: {
            "rgb_tube": 16,
            "rgb_frame": 12,
            "flow_tube": 14,
            "flow_frame": 10,
            "c3d_tube": 18,
            "c3d_frame": 12,
        }
    )
    train_fraction: float = 0.8
    val_fraction: float = 0.1

    def __post_init__(self):
        for name in ("fp_rate", "miss_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")
        for name in ("box_jitter", "feature_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("clips", "frames_per_clip", "people_per_clip", "latent_dim",
                     "desc_dim", "wordvec_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if set(self.block_dims) != set(BLOCK_ORDER):
            raise ValueError(f"block_dims must cover exactly {sorted(BLOCK_ORDER)}")
        if self.train_fraction < 0 or self.val_fraction < 0:
            raise ValueError("split fractions must be >= 0")
        if self.train_fraction + self.val_fraction > 1.0:
            raise ValueError("train and val fractions must leave room for a test split")


def _clamp_box(x1, y1, x2, y2, config) -> Tuple[float, float, float, float, bool]:
    """Shift a box back inside the frame, keeping its size."""
    w = min(x2 - x1, config.frame_width - 1e-6)
    h = min(y2 - y1, config.frame_height - 1e-6)
    moved = (w != x2 - x1) or (h != y2 - y1)
    if x1 < 0:
        x1, moved = 0.0, True
    if y1 < 0:
        y1, moved = 0.0, True
    if x1 + w > config.frame_width:
        x1, moved = config.frame_width - w, True
    if y1 + h > config.frame_height:
        y1, moved = config.frame_height - h, True
    return x1, y1, x1 + w, y1 + h, moved


def _person_trajectory(rng, config) -> List[Box]:
    """Smooth drifting box: linear motion plus a sinusoidal wobble."""
    w = rng.uniform(0.08, 0.18) * config.frame_width
    h = rng.uniform(0.25, 0.45) * config.frame_height
    cx = rng.uniform(w / 2, config.frame_width - w / 2)
    cy = rng.uniform(h / 2, config.frame_height - h / 2)
    vx = rng.uniform(-0.01, 0.01) * config.frame_width
    vy = rng.uniform(-0.005, 0.005) * config.frame_height
    amp = rng.uniform(0.0, 0.02) * config.frame_width
    period = rng.uniform(6.0, 15.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    clamped = 0
    boxes = []
    for t in range(config.frames_per_clip):
        x = cx + vx * t + amp * np.sin(2 * np.pi * t / period + phase)
        y = cy + vy * t
        x1, y1, x2, y2, moved = _clamp_box(x - w / 2, y - h / 2, x + w / 2, y + h / 2, config)
        clamped += moved
        boxes.append(Box(x1, y1, x2, y2))
    if clamped:
        logger.debug("clamped %d boxes back into frame", clamped)
    return boxes


def _jittered(rng, box: Box, config) -> Box:
    sx = config.box_jitter * (box.x2 - box.x1)
    sy = config.box_jitter * (box.y2 - box.y1)
    x1 = box.x1 + rng.normal(0.0, sx) if sx > 0 else box.x1
    y1 = box.y1 + rng.normal(0.0, sy) if sy > 0 else box.y1
    x2 = box.x2 + rng.normal(0.0, sx) if sx > 0 else box.x2
    y2 = box.y2 + rng.normal(0.0, sy) if sy > 0 else box.y2
    if x2 <= x1:
        x1, x2 = box.x1, box.x2
    if y2 <= y1:
        y1, y2 = box.y1, box.y2
    x1, y1, x2, y2, _ = _clamp_box(x1, y1, x2, y2, config)
    return Box(x1, y1, x2, y2)


def _random_box(rng, config) -> Box:
    w = rng.uniform(0.05, 0.2) * config.frame_width
    h = rng.uniform(0.1, 0.4) * config.frame_height
    x1 = rng.uniform(0.0, config.frame_width - w)
    y1 = rng.uniform(0.0, config.frame_height - h)
    return Box(x1, y1, x1 + w, y1 + h)


def _descriptions_for(rng, latent: np.ndarray) -> List[str]:
    """Five token sequences spelling the latent's signs, with filler."""
    out = []
    dims = np.arange(len(latent))
    for _ in range(DESCRIPTIONS_PER_PERSON):
        chosen = rng.permutation(dims)[: max(3, len(dims) // 2)]
        words = [str(rng.choice(FILLER_TOKENS))]
        for d in sorted(chosen):
            words.append(f"attr{d}{'hi' if latent[d] > 0 else 'lo'}")
            if rng.random() < 0.3:
                words.append(str(rng.choice(FILLER_TOKENS)))
        out.append(" ".join(words))
    return out


def _write_word_vectors(rng, config, path: Path) -> None:
    """Attribute tokens get signed axis patterns; filler stays diffuse."""
    lines = {}
    for d in range(config.latent_dim):
        base = np.zeros(config.wordvec_dim)
        base[d % config.wordvec_dim] = 2.0
        wobble = 0.15 * rng.standard_normal((2, config.wordvec_dim))
        lines[f"attr{d}hi"] = base + wobble[0]
        lines[f"attr{d}lo"] = -base + wobble[1]
    for token in FILLER_TOKENS:
        lines[token] = 0.4 * rng.standard_normal(config.wordvec_dim)
    with open(path, "w") as fh:
        for token in sorted(lines):
            values = " ".join(repr(float(v)) for v in lines[token])
            fh.write(f"{token} {values}\n")


def generate_synthetic(config: SynthConfig, out_dir: Union[str, Path]) -> Dict[str, int]:
    """Write a complete dataset; returns counts for logging."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)

    clip_ids = [f"c{i:03d}" for i in range(config.clips)]
    detections_records: List[DetectionRecord] = []
    annotations: List[AnnotationRecord] = []
    gt_tubes: Dict[str, List[Tuple[str, Tube, np.ndarray]]] = {}
    all_tubes: List[Tube] = []

    # mixing matrices shared across the dataset
    block_mix = {
        name: rng.normal(size=(config.latent_dim, config.block_dims[name]))
        for name in BLOCK_ORDER
    }
    desc_mix = rng.normal(size=(config.latent_dim, config.desc_dim))

    queries: List[QueryRecord] = []
    desc_rows: List[np.ndarray] = []

    for clip_id in clip_ids:
        people = []
        for j in range(config.people_per_clip):
            person_id = f"{clip_id}:person{j}"
            latent = rng.standard_normal(config.latent_dim)
            boxes = _person_trajectory(rng, config)
            gt = Tube(
                clip_id=clip_id,
                start_frame=0,
                boxes=boxes,
                energy=0.0,
                tube_id=f"gt:{person_id}",
            )
            people.append((person_id, gt, latent))
            annotations.append(
                AnnotationRecord(
                    person_id=person_id,
                    clip_id=clip_id,
                    eligible_frames=list(range(config.frames_per_clip)),
                    boxes={
                        f: {"x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2}
                        for f, b in enumerate(boxes)
                    },
                    descriptions=_descriptions_for(rng, latent),
                )
            )
            for k, _ in enumerate(annotations[-1].descriptions):
                queries.append(
                    QueryRecord(
                        query_id=f"{person_id}#{k}", text=annotations[-1].descriptions[k]
                    )
                )
                desc_rows.append(
                    latent @ desc_mix
                    + config.feature_noise * rng.standard_normal(config.desc_dim)
                )
        gt_tubes[clip_id] = people

        clip_detections: List[Detection] = []
        for f in range(config.frames_per_clip):
            frame_boxes = []
            for person_id, gt, _ in people:
                if rng.random() < config.miss_rate:
                    continue
                det_box = _jittered(rng, gt.boxes[f], config)
                score = float(np.clip(0.8 + 0.15 * iou(det_box, gt.boxes[f]), 0.05, 1.0))
                frame_boxes.append((det_box, score))
            if rng.random() < config.fp_rate:
                frame_boxes.append((_random_box(rng, config), float(rng.uniform(0.1, 0.5))))
            for det_box, score in frame_boxes:
                clip_detections.append(
                    Detection(box=det_box, score=score, frame=f, clip_id=clip_id)
                )
        detections_records.extend(
            DetectionRecord(
                clip_id=clip_id,
                frame=f,
                boxes=[
                    {"x1": d.box.x1, "y1": d.box.y1, "x2": d.box.x2, "y2": d.box.y2,
                     "score": d.score}
                    for d in clip_detections
                    if d.frame == f
                ],
            )
            for f in range(config.frames_per_clip)
        )

        proposed = propose_clip(clip_detections)
        for rank, tube in enumerate(proposed):
            tube.tube_id = f"{clip_id}:t{rank:03d}"
        all_tubes.extend(proposed)

    # per-second feature rows for every proposed tube
    segments = []
    rows_by_block = {name: [] for name in BLOCK_ORDER}
    for tube in all_tubes:
        people = gt_tubes[tube.clip_id]
        for second in range(tube.start_frame, tube.end_frame + 1):
            box = tube.box_at(second)
            best_latent = np.zeros(config.latent_dim)
            best_overlap = 0.2  # below this a tube second reads as background
            present = []
            for _, gt, latent in people:
                gt_box = gt.box_at(second)
                if gt_box is None:
                    continue
                present.append(latent)
                overlap = iou(box, gt_box)
                if overlap > best_overlap:
                    best_overlap = overlap
                    best_latent = latent
            # frame context leans on the tracked person, with the rest of
            # the scene bleeding in; a background tube sees only the scene
            scene = np.mean(present, axis=0) if present else np.zeros(config.latent_dim)
            scene_latent = 0.7 * best_latent + 0.3 * scene
            segments.append(
                {"tube_id": tube.tube_id, "second": second, "row": len(segments)}
            )
            for name in BLOCK_ORDER:
                source = best_latent if name.endswith("_tube") else scene_latent
                rows_by_block[name].append(
                    source @ block_mix[name]
                    + config.feature_noise * rng.standard_normal(config.block_dims[name])
                )

    write_records(out / "detections.jsonl", detections_records)
    write_records(out / "annotations.jsonl", annotations)
    write_records(out / "tubes.jsonl", [tube_to_record(t) for t in all_tubes])
    write_records(out / "queries.jsonl", queries)

    index = {
        "block_files": {name: f"blocks_{name}.fmat" for name in BLOCK_ORDER},
        "block_dims": dict(config.block_dims),
        "segments": segments,
    }
    for name in BLOCK_ORDER:
        rows = rows_by_block[name]
        mat = (
            np.stack(rows) if rows else np.empty((0, config.block_dims[name]))
        )
        write_fmat(out / index["block_files"][name], mat)
    write_json(out / FeatureStore.INDEX_NAME, index)

    desc_mat = np.stack(desc_rows) if desc_rows else np.empty((0, config.desc_dim))
    write_fmat(out / "desc_features.fmat", desc_mat)

    _write_word_vectors(rng, config, out / "wordvecs.txt")

    order = list(rng.permutation(config.clips))
    n_train = int(round(config.train_fraction * config.clips))
    n_val = int(round(config.val_fraction * config.clips))
    splits = {
        "train": sorted(clip_ids[i] for i in order[:n_train]),
        "val": sorted(clip_ids[i] for i in order[n_train : n_train + n_val]),
        "test": sorted(clip_ids[i] for i in order[n_train + n_val :]),
    }
    write_json(out / "splits.json", splits)

    counts = {
        "clips": config.clips,
        "people": config.clips * config.people_per_clip,
        "detections": sum(len(r.boxes) for r in detections_records),
        "tubes": len(all_tubes),
        "segments": len(segments),
        "queries": len(queries),
    }
    logger.info("synthetic dataset written to %s: %s", out, counts)
    return counts

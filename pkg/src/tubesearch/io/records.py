"""JSONL record formats for detections, annotations, tubes, and results.

Parsing is strict: a missing or ill-typed field raises
:class:`DataFormatError` naming the field and line.  Unknown fields are
kept on each record and re-emitted on write, so foreign annotations
survive a read/write cycle.  The writer is canonical (sorted keys,
compact separators), which makes write -> read -> write byte-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Sequence, Tuple

from tubesearch.errors import DataFormatError
from tubesearch.proposal import Box, Detection, Tube

DESCRIPTIONS_PER_PERSON = 5

_BOX_KEYS = ("x1", "y1", "x2", "y2")


@dataclass
class DetectionRecord:
    """All detections of one frame of one clip."""

    clip_id: str
    frame: int
    boxes: List[dict]  # each {x1,y1,x2,y2,score} plus preserved extras
    extra: dict = field(default_factory=dict)


@dataclass
class AnnotationRecord:
    """One annotated person: boxes per second, eligible frames, descriptions."""

    person_id: str
    clip_id: str
    eligible_frames: List[int]
    boxes: Dict[int, dict]  # frame -> {x1,y1,x2,y2} plus preserved extras
    descriptions: List[str]
    extra: dict = field(default_factory=dict)


@dataclass
class TubeRecord:
    tube_id: str
    clip_id: str
    start_frame: int
    boxes: List[dict]
    energy: float
    extra: dict = field(default_factory=dict)


@dataclass
class QueryRecord:
    query_id: str
    text: str
    extra: dict = field(default_factory=dict)


@dataclass
class ResultRecord:
    """Ranked tube ids with scores for one query, scores descending."""

    query_id: str
    tube_ids: List[str]
    scores: List[float]
    extra: dict = field(default_factory=dict)


def _iter_jsonl(path) -> Iterator[Tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON: {exc}", path=path, line=lineno) from exc
            if not isinstance(obj, dict):
                raise DataFormatError("each line must be a JSON object", path=path, line=lineno)
            yield lineno, obj


def _take(obj: dict, key: str, types, path, line, where: str = ""):
    prefix = f"{where}: " if where else ""
    if key not in obj:
        raise DataFormatError(f"{prefix}missing field {key!r}", path=path, line=line)
    val = obj[key]
    if not isinstance(val, types) or isinstance(val, bool):
        raise DataFormatError(
            f"{prefix}field {key!r} has type {type(val).__name__}", path=path, line=line
        )
    return val


def _parse_box(obj, path, line, where, scored: bool) -> dict:
    if not isinstance(obj, dict):
        raise DataFormatError(f"{where}: box must be an object", path=path, line=line)
    keys = _BOX_KEYS + ("score",) if scored else _BOX_KEYS
    out = {k: float(_take(obj, k, (int, float), path, line, where)) for k in keys}
    if not (out["x1"] < out["x2"] and out["y1"] < out["y2"]):
        raise DataFormatError(f"{where}: degenerate box", path=path, line=line)
    out.update({k: v for k, v in obj.items() if k not in keys})
    return out


def read_detections(path) -> List[DetectionRecord]:
    records = []
    for line, obj in _iter_jsonl(path):
        clip_id = _take(obj, "clip_id", str, path, line)
        frame = _take(obj, "frame", int, path, line)
        if frame < 0:
            raise DataFormatError("field 'frame' must be non-negative", path=path, line=line)
        raw_boxes = _take(obj, "boxes", list, path, line)
        boxes = [
            _parse_box(b, path, line, f"boxes[{i}]", scored=True) for i, b in enumerate(raw_boxes)
        ]
        extra = {k: v for k, v in obj.items() if k not in ("clip_id", "frame", "boxes")}
        records.append(DetectionRecord(clip_id, frame, boxes, extra))
    return records


def read_annotations(path) -> List[AnnotationRecord]:
    records = []
    for line, obj in _iter_jsonl(path):
        person_id = _take(obj, "person_id", str, path, line)
        clip_id = _take(obj, "clip_id", str, path, line)
        eligible = _take(obj, "eligible_frames", list, path, line)
        for f in eligible:
            if not isinstance(f, int) or isinstance(f, bool) or f < 0:
                raise DataFormatError(
                    "field 'eligible_frames' must hold non-negative integers",
                    path=path,
                    line=line,
                )
        raw_boxes = _take(obj, "boxes", dict, path, line)
        boxes = {}
        for key, b in raw_boxes.items():
            try:
                frame = int(key)
            except ValueError:
                raise DataFormatError(
                    f"boxes: frame key {key!r} is not an integer", path=path, line=line
                ) from None
            if frame < 0:
                raise DataFormatError("boxes: frame keys must be non-negative", path=path, line=line)
            boxes[frame] = _parse_box(b, path, line, f"boxes[{key}]", scored=False)
        descriptions = _take(obj, "descriptions", list, path, line)
        if len(descriptions) != DESCRIPTIONS_PER_PERSON or not all(
            isinstance(d, str) for d in descriptions
        ):
            raise DataFormatError(
                f"field 'descriptions' must hold exactly {DESCRIPTIONS_PER_PERSON} strings",
                path=path,
                line=line,
            )
        extra = {
            k: v
            for k, v in obj.items()
            if k not in ("person_id", "clip_id", "eligible_frames", "boxes", "descriptions")
        }
        records.append(AnnotationRecord(person_id, clip_id, eligible, boxes, descriptions, extra))
    return records


def read_tubes(path) -> List[TubeRecord]:
    records = []
    for line, obj in _iter_jsonl(path):
        tube_id = _take(obj, "tube_id", str, path, line)
        clip_id = _take(obj, "clip_id", str, path, line)
        start = _take(obj, "start_frame", int, path, line)
        raw_boxes = _take(obj, "boxes", list, path, line)
        if not raw_boxes:
            raise DataFormatError("field 'boxes' must be non-empty", path=path, line=line)
        boxes = [
            _parse_box(b, path, line, f"boxes[{i}]", scored=False) for i, b in enumerate(raw_boxes)
        ]
        energy = float(_take(obj, "energy", (int, float), path, line))
        extra = {
            k: v
            for k, v in obj.items()
            if k not in ("tube_id", "clip_id", "start_frame", "boxes", "energy")
        }
        records.append(TubeRecord(tube_id, clip_id, start, boxes, energy, extra))
    return records


def read_queries(path) -> List[QueryRecord]:
    records = []
    for line, obj in _iter_jsonl(path):
        query_id = _take(obj, "query_id", str, path, line)
        text = _take(obj, "text", str, path, line)
        extra = {k: v for k, v in obj.items() if k not in ("query_id", "text")}
        records.append(QueryRecord(query_id, text, extra))
    return records


def read_results(path) -> List[ResultRecord]:
    records = []
    for line, obj in _iter_jsonl(path):
        query_id = _take(obj, "query_id", str, path, line)
        tube_ids = _take(obj, "tube_ids", list, path, line)
        scores = [float(s) for s in _take(obj, "scores", list, path, line)]
        if len(tube_ids) != len(scores):
            raise DataFormatError("'tube_ids' and 'scores' differ in length", path=path, line=line)
        extra = {k: v for k, v in obj.items() if k not in ("query_id", "tube_ids", "scores")}
        records.append(ResultRecord(query_id, list(tube_ids), scores, extra))
    return records


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _record_obj(record) -> dict:
    if isinstance(record, DetectionRecord):
        obj = {"clip_id": record.clip_id, "frame": record.frame, "boxes": record.boxes}
    elif isinstance(record, AnnotationRecord):
        obj = {
            "person_id": record.person_id,
            "clip_id": record.clip_id,
            "eligible_frames": record.eligible_frames,
            "boxes": {str(k): v for k, v in sorted(record.boxes.items())},
            "descriptions": record.descriptions,
        }
    elif isinstance(record, TubeRecord):
        obj = {
            "tube_id": record.tube_id,
            "clip_id": record.clip_id,
            "start_frame": record.start_frame,
            "boxes": record.boxes,
            "energy": record.energy,
        }
    elif isinstance(record, QueryRecord):
        obj = {"query_id": record.query_id, "text": record.text}
    elif isinstance(record, ResultRecord):
        obj = {"query_id": record.query_id, "tube_ids": record.tube_ids, "scores": record.scores}
    else:
        raise TypeError(f"unsupported record type {type(record).__name__}")
    obj.update(record.extra)
    return obj


def write_records(path, records: Sequence) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(_dump(_record_obj(record)) + "\n")


def write_json(path, obj) -> None:
    Path(path).write_text(_dump(obj) + "\n", encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON: {exc}", path=path) from exc


# Conversions between records and the in-memory proposal types.


def detections_by_clip(records: Sequence[DetectionRecord]) -> Dict[str, List[Detection]]:
    """Detections grouped by clip, in file order (the tie-break order)."""
    grouped: Dict[str, List[Detection]] = {}
    for record in records:
        dets = grouped.setdefault(record.clip_id, [])
        for b in record.boxes:
            dets.append(
                Detection(
                    box=Box(b["x1"], b["y1"], b["x2"], b["y2"]),
                    score=b["score"],
                    frame=record.frame,
                    clip_id=record.clip_id,
                )
            )
    return grouped


def tube_to_record(tube: Tube) -> TubeRecord:
    return TubeRecord(
        tube_id=tube.tube_id,
        clip_id=tube.clip_id,
        start_frame=tube.start_frame,
        boxes=[{"x1": b.x1, "y1": b.y1, "x2": b.x2, "y2": b.y2} for b in tube.boxes],
        energy=tube.energy,
    )


def record_to_tube(record: TubeRecord) -> Tube:
    return Tube(
        clip_id=record.clip_id,
        start_frame=record.start_frame,
        boxes=[Box(b["x1"], b["y1"], b["x2"], b["y2"]) for b in record.boxes],
        energy=record.energy,
        tube_id=record.tube_id,
    )


def annotation_to_tube(record: AnnotationRecord) -> Tube:
    """Ground-truth tube from an annotation's per-frame boxes.

    Annotated frames must be contiguous; a person that disappears and
    reappears cannot be represented as a single tube.
    """
    frames = sorted(record.boxes)
    if not frames:
        raise DataFormatError(f"person {record.person_id} has no boxes")
    if frames != list(range(frames[0], frames[-1] + 1)):
        raise DataFormatError(f"person {record.person_id} has non-contiguous annotated frames")
    boxes = [
        Box(b["x1"], b["y1"], b["x2"], b["y2"]) for b in (record.boxes[f] for f in frames)
    ]
    return Tube(
        clip_id=record.clip_id,
        start_frame=frames[0],
        boxes=boxes,
        energy=0.0,
        tube_id=f"gt:{record.person_id}",
    )

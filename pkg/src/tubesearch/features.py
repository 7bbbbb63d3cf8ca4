"""Per-second visual feature blocks and tube-level pooling.

Each tube is cut into one-second segments.  A segment carries six
feature blocks — appearance, motion, and clip-level descriptors, each in
a tube-cropped and a whole-frame variant — concatenated in a fixed
order.  Tube-level vectors average the segment vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np

from .errors import DataFormatError
from .io.fmat import read_fmat

BLOCK_ORDER: Tuple[str, ...] = (
    "rgb_tube",
    "rgb_frame",
    "flow_tube",
    "flow_frame",
    "c3d_tube",
    "c3d_frame",
)


@dataclass(frozen=True)
class FeatureLayout:
    """Dimensions of the six blocks, concatenated in ``BLOCK_ORDER``."""

    dims: Mapping[str, int]

    def __post_init__(self):
        missing = [b for b in BLOCK_ORDER if b not in self.dims]
        extra = [b for b in self.dims if b not in BLOCK_ORDER]
        if missing or extra:
            raise ValueError(
                f"layout must define exactly {list(BLOCK_ORDER)}; "
                f"missing {missing}, unexpected {extra}"
            )
        for name, d in self.dims.items():
            if not isinstance(d, int) or d < 1:
                raise ValueError(f"block {name!r} needs a positive integer dim, got {d!r}")

    @property
    def total_dim(self) -> int:
        return sum(self.dims[b] for b in BLOCK_ORDER)

    def slices(self) -> Dict[str, slice]:
        out = {}
        start = 0
        for name in BLOCK_ORDER:
            out[name] = slice(start, start + self.dims[name])
            start += self.dims[name]
        return out


def assemble_segment(blocks: Mapping[str, np.ndarray], layout: FeatureLayout) -> np.ndarray:
    """Concatenate one segment's blocks in the canonical order."""
    parts: List[np.ndarray] = []
    for name in BLOCK_ORDER:
        if name not in blocks:
            raise DataFormatError(f"segment is missing feature block {name!r}")
        v = np.asarray(blocks[name], dtype=np.float64).ravel()
        if v.shape[0] != layout.dims[name]:
            raise DataFormatError(
                f"block {name!r} has dim {v.shape[0]}, layout expects {layout.dims[name]}"
            )
        parts.append(v)
    return np.concatenate(parts)


def aggregate_tube(segment_vectors: Union[np.ndarray, Sequence[np.ndarray]]) -> np.ndarray:
    """Mean-pool segment vectors into one tube vector."""
    mat = np.asarray(segment_vectors, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.shape[0] == 0:
        raise ValueError("a tube needs at least one segment")
    return mat.mean(axis=0)


class FeatureStore:
    """Random access to segment and tube vectors stored on disk.

    A store directory holds one matrix file per block plus an index
    mapping (tube id, second) to a shared row number across all blocks.
    """

    INDEX_NAME = "features_index.json"

    def __init__(self, layout: FeatureLayout, segments: np.ndarray,
                 rows: Dict[str, List[Tuple[int, int]]]):
        self.layout = layout
        self._segments = segments  # (n_rows, total_dim)
        self._rows = rows  # tube_id -> [(second, row), ...] sorted by second

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "FeatureStore":
        directory = Path(directory)
        index_path = directory / cls.INDEX_NAME
        try:
            index = json.loads(index_path.read_text())
        except FileNotFoundError:
            raise DataFormatError(f"no {cls.INDEX_NAME} in {directory}", path=index_path)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid index JSON: {exc}", path=index_path)
        for key in ("block_files", "block_dims", "segments"):
            if key not in index:
                raise DataFormatError(f"index lacks {key!r}", path=index_path)
        layout = FeatureLayout({k: int(v) for k, v in index["block_dims"].items()})

        blocks = {}
        n_rows = None
        for name in BLOCK_ORDER:
            if name not in index["block_files"]:
                raise DataFormatError(f"index lists no file for block {name!r}", path=index_path)
            mat = read_fmat(directory / index["block_files"][name]).astype(np.float64)
            if mat.shape[1] != layout.dims[name]:
                raise DataFormatError(
                    f"block {name!r} file has {mat.shape[1]} columns, index says "
                    f"{layout.dims[name]}",
                    path=directory / index["block_files"][name],
                )
            if n_rows is None:
                n_rows = mat.shape[0]
            elif mat.shape[0] != n_rows:
                raise DataFormatError(
                    f"block {name!r} has {mat.shape[0]} rows, expected {n_rows}",
                    path=directory / index["block_files"][name],
                )
            blocks[name] = mat
        segments = np.concatenate([blocks[name] for name in BLOCK_ORDER], axis=1)

        rows: Dict[str, List[Tuple[int, int]]] = {}
        seen = set()
        for i, entry in enumerate(index["segments"]):
            try:
                tube_id, second, row = entry["tube_id"], int(entry["second"]), int(entry["row"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"bad segment entry {i}: {exc}", path=index_path)
            if not 0 <= row < (n_rows or 0):
                raise DataFormatError(
                    f"segment entry {i} points at row {row}, have {n_rows} rows",
                    path=index_path,
                )
            if (tube_id, second) in seen:
                raise DataFormatError(
                    f"duplicate segment ({tube_id!r}, second {second})", path=index_path
                )
            seen.add((tube_id, second))
            rows.setdefault(tube_id, []).append((second, row))
        for entries in rows.values():
            entries.sort()
        return cls(layout, segments, rows)

    def tube_ids(self) -> List[str]:
        return sorted(self._rows)

    def seconds(self, tube_id: str) -> List[int]:
        return [s for s, _ in self._rows[tube_id]]

    def segment_vector(self, tube_id: str, second: int) -> np.ndarray:
        for s, row in self._rows[tube_id]:
            if s == second:
                return self._segments[row].copy()
        raise KeyError(f"tube {tube_id!r} has no segment at second {second}")

    def tube_vector(self, tube_id: str) -> np.ndarray:
        entries = self._rows[tube_id]
        return aggregate_tube(self._segments[[row for _, row in entries]])

    def matrix(self, tube_ids: Iterable[str]) -> np.ndarray:
        return np.stack([self.tube_vector(t) for t in tube_ids])

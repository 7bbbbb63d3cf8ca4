"""FMAT: a minimal binary matrix container.

Single-matrix layout:

    bytes 0..4    magic ``FMAT1``
    bytes 5..12   row count, u64 little-endian
    bytes 13..20  column count, u64 little-endian
    bytes 21..    rows * cols IEEE-754 float32 values, little-endian,
                  row-major

Multi-tensor bundles concatenate several such blocks and append a JSON
manifest mapping tensor names to byte offsets, followed by the manifest
length as a trailing u64 little-endian.  Values are stored in float32;
callers compute in float64 and accept the truncation on write.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from tubesearch.errors import DataFormatError

MAGIC = b"FMAT1"
HEADER_SIZE = 21
_HEADER = struct.Struct("<5sQQ")


def _encode_matrix(matrix: np.ndarray) -> bytes:
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise ValueError(f"FMAT stores 2-D matrices, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    return _HEADER.pack(MAGIC, arr.shape[0], arr.shape[1]) + arr.tobytes()


def _decode_matrix(data: bytes, offset: int, path) -> Tuple[np.ndarray, int]:
    if len(data) < offset + HEADER_SIZE:
        raise DataFormatError("truncated FMAT header", path=path)
    magic, rows, cols = _HEADER.unpack_from(data, offset)
    if magic != MAGIC:
        raise DataFormatError(f"bad FMAT magic {magic!r}", path=path)
    payload = offset + HEADER_SIZE
    nbytes = 4 * rows * cols
    if len(data) < payload + nbytes:
        raise DataFormatError(
            f"truncated FMAT payload: need {nbytes} bytes for {rows}x{cols}", path=path
        )
    flat = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=payload)
    return flat.reshape(rows, cols).copy(), payload + nbytes


def write_fmat(path, matrix: np.ndarray) -> None:
    """Write a single 2-D matrix; float64 input is truncated to float32."""
    Path(path).write_bytes(_encode_matrix(matrix))


def read_fmat(path) -> np.ndarray:
    """Read a single-matrix file; trailing bytes are rejected."""
    data = Path(path).read_bytes()
    matrix, end = _decode_matrix(data, 0, path)
    if end != len(data):
        raise DataFormatError(
            f"unexpected {len(data) - end} trailing bytes after single matrix", path=path
        )
    return matrix


def write_fmat_bundle(path, tensors: Dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named tensors plus a trailing JSON manifest.

    Tensors are laid out in sorted name order so identical inputs always
    produce identical bytes.
    """
    blocks = []
    offsets = {}
    pos = 0
    for name in sorted(tensors):
        block = _encode_matrix(tensors[name])
        offsets[name] = pos
        blocks.append(block)
        pos += len(block)
    manifest = {"tensors": offsets, "meta": meta or {}}
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blocks.append(mbytes)
    blocks.append(struct.pack("<Q", len(mbytes)))
    Path(path).write_bytes(b"".join(blocks))


def read_fmat_bundle(path) -> Tuple[Dict[str, np.ndarray], dict]:
    """Read a multi-tensor bundle, returning (tensors, meta)."""
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise DataFormatError("file too short for a bundle manifest", path=path)
    (mlen,) = struct.unpack_from("<Q", data, len(data) - 8)
    mstart = len(data) - 8 - mlen
    if mstart < 0:
        raise DataFormatError(f"manifest length {mlen} exceeds file size", path=path)
    try:
        manifest = json.loads(data[mstart : len(data) - 8].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"bad bundle manifest: {exc}", path=path) from exc
    if not isinstance(manifest, dict) or "tensors" not in manifest:
        raise DataFormatError("bundle manifest missing 'tensors' table", path=path)

    tensors = {}
    for name, offset in manifest["tensors"].items():
        if not isinstance(offset, int) or offset < 0 or offset >= mstart:
            raise DataFormatError(f"tensor {name!r} has bad offset {offset}", path=path)
        tensors[name], _ = _decode_matrix(data, offset, path)
    return tensors, manifest.get("meta", {})

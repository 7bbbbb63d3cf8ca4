"""Pretrained word-vector table.

File format: UTF-8 text, one line per word, the token followed by its
vector components, space-separated.
"""

from __future__ import annotations

from typing import Dict, Iterable, List

import numpy as np

from tubesearch.errors import DataFormatError


class WordVectorTable:
    def __init__(self, vectors: Dict[str, np.ndarray]):
        if not vectors:
            raise ValueError("word-vector table must be non-empty")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent vector dimensions: {sorted(dims)}")
        self._vectors = {t: np.asarray(v, dtype=np.float64) for t, v in vectors.items()}
        self.dim = dims.pop()

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def __getitem__(self, token: str) -> np.ndarray:
        return self._vectors[token]

    def __len__(self) -> int:
        return len(self._vectors)

    def tokens(self) -> List[str]:
        return sorted(self._vectors)

    def matrix(self, tokens: Iterable[str] | None = None) -> np.ndarray:
        """Vectors stacked row-wise; all tokens (sorted) when none given."""
        if tokens is None:
            tokens = self.tokens()
        return np.stack([self._vectors[t] for t in tokens])


def load_word_vectors(path) -> WordVectorTable:
    vectors: Dict[str, np.ndarray] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, *values = parts
            if not values:
                raise DataFormatError(f"token {token!r} has no vector", path=path, line=lineno)
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as exc:
                raise DataFormatError(str(exc), path=path, line=lineno) from exc
            if not np.all(np.isfinite(vec)):
                raise DataFormatError(f"non-finite entry for {token!r}", path=path, line=lineno)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DataFormatError(
                    f"token {token!r} has {len(vec)} components, expected {dim}",
                    path=path,
                    line=lineno,
                )
            vectors[token] = vec
    if not vectors:
        raise DataFormatError("empty word-vector file", path=path)
    return WordVectorTable(vectors)


def save_word_vectors(path, table: WordVectorTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token in table.tokens():
            values = " ".join(repr(float(v)) for v in table[token])
            fh.write(f"{token} {values}\n")

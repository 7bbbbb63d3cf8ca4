"""Linear dimensionality reduction fit by SVD."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (dim,)
    components: np.ndarray  # (out_dim, dim), orthonormal rows

    @property
    def out_dim(self) -> int:
        return self.components.shape[0]

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean) @ self.components.T

    def inverse_transform(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return y @ self.components + self.mean


def fit_pca(vectors: np.ndarray, out_dim: int) -> PcaModel:
    """Top ``out_dim`` principal directions of the sample matrix.

    Components are ordered by decreasing variance and sign-canonicalized
    so the largest-magnitude entry of each is positive.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D sample matrix, got shape {x.shape}")
    n, dim = x.shape
    if not 1 <= out_dim <= min(n, dim):
        raise ValueError(f"out_dim must be in [1, {min(n, dim)}], got {out_dim}")
    mean = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mean, full_matrices=False)
    components = vt[:out_dim]
    peaks = np.abs(components).argmax(axis=1)
    signs = np.sign(components[np.arange(out_dim), peaks])
    signs[signs == 0] = 1.0
    return PcaModel(mean=mean, components=components * signs[:, None])

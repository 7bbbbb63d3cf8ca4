"""Fisher vector pooling on top of the hybrid mixture.

A token sequence becomes a single vector: average the per-token
gradients of the mixture log-density with respect to every component
location and scale, flatten, then apply signed square-root and L2
normalization.  The layout is all location derivatives first (component
major, dimension minor), then all scale derivatives, for a total of
``2 * k * dim`` entries.
"""

from __future__ import annotations

import numpy as np

from .hglmm import HglmmModel, score_gradients


def fisher_vector(model: HglmmModel, vectors: np.ndarray) -> np.ndarray:
    """Un-normalized Fisher vector of a (n_tokens, dim) matrix."""
    z = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if z.shape[0] == 0:
        raise ValueError("cannot pool an empty token sequence")
    if z.shape[1] != model.dim:
        raise ValueError(f"token vectors have dim {z.shape[1]}, model expects {model.dim}")
    loc, scale = score_gradients(model, z)
    pooled = np.concatenate([loc.mean(axis=0).ravel(), scale.mean(axis=0).ravel()])
    return pooled


def normalize_fv(fv: np.ndarray) -> np.ndarray:
    """Signed square-root followed by L2 normalization.

    The all-zero vector is returned unchanged rather than dividing by
    zero.
    """
    fv = np.asarray(fv, dtype=np.float64)
    rooted = np.sign(fv) * np.sqrt(np.abs(fv))
    norm = np.linalg.norm(rooted)
    if norm == 0.0:
        return rooted
    return rooted / norm


def encode_tokens(model: HglmmModel, vectors: np.ndarray) -> np.ndarray:
    """Pooled, power- and L2-normalized Fisher vector."""
    return normalize_fv(fisher_vector(model, vectors))

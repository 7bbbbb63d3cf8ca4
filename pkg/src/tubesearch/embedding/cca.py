"""Canonical correlation analysis between tube and description features.

Fit by whitening both views and taking the SVD of the whitened
cross-covariance.  Retrieval scores are correlation-weighted cosines
between the projected views.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_CCA_REG = 1e-4


@dataclass
class CcaModel:
    mean_tube: np.ndarray  # (d_tube,)
    mean_desc: np.ndarray  # (d_desc,)
    w_tube: np.ndarray  # (d_tube, c)
    w_desc: np.ndarray  # (d_desc, c)
    correlations: np.ndarray  # (c,), non-increasing, in [0, 1]

    @property
    def n_components(self) -> int:
        return self.w_tube.shape[1]

    def project_tube(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean_tube) @ self.w_tube

    def project_desc(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean_desc) @ self.w_desc


def _inv_sqrt(cov: np.ndarray, reg: float, name: str) -> np.ndarray:
    cov = cov + reg * np.eye(cov.shape[0])
    evals, evecs = np.linalg.eigh(cov)
    tol = 1e-12 * max(1.0, float(evals.max()))
    if float(evals.min()) <= tol:
        raise np.linalg.LinAlgError(
            f"{name} covariance is singular; refit with reg > 0 (got reg={reg})"
        )
    return (evecs / np.sqrt(evals)) @ evecs.T


def fit_cca(
    tube_feats: np.ndarray,
    desc_feats: np.ndarray,
    n_components: Optional[int] = None,
    reg: float = DEFAULT_CCA_REG,
) -> CcaModel:
    """Fit projections from paired rows of the two views.

    ``reg`` is added to both view covariances; with ``reg=0`` a
    rank-deficient view raises rather than silently producing junk
    directions.
    """
    xt = np.asarray(tube_feats, dtype=np.float64)
    xd = np.asarray(desc_feats, dtype=np.float64)
    if xt.ndim != 2 or xd.ndim != 2:
        raise ValueError("expected 2-D feature matrices")
    if xt.shape[0] != xd.shape[0]:
        raise ValueError(f"paired views disagree on sample count: {xt.shape[0]} vs {xd.shape[0]}")
    n = xt.shape[0]
    if n < 2:
        raise ValueError("need at least two pairs")
    if reg < 0:
        raise ValueError("reg must be >= 0")
    max_components = min(xt.shape[1], xd.shape[1])
    if n_components is None:
        n_components = max_components
    if not 1 <= n_components <= max_components:
        raise ValueError(f"n_components must be in [1, {max_components}]")

    mean_t = xt.mean(axis=0)
    mean_d = xd.mean(axis=0)
    zt = xt - mean_t
    zd = xd - mean_d
    denom = n - 1
    inv_t = _inv_sqrt(zt.T @ zt / denom, reg, "tube view")
    inv_d = _inv_sqrt(zd.T @ zd / denom, reg, "description view")
    cross = zt.T @ zd / denom
    u, s, vt = np.linalg.svd(inv_t @ cross @ inv_d)

    w_tube = inv_t @ u[:, :n_components]
    w_desc = inv_d @ vt[:n_components].T
    # flip matched column pairs so each tube direction has a positive peak
    peaks = np.abs(w_tube).argmax(axis=0)
    signs = np.sign(w_tube[peaks, np.arange(n_components)])
    signs[signs == 0] = 1.0
    return CcaModel(
        mean_tube=mean_t,
        mean_desc=mean_d,
        w_tube=w_tube * signs,
        w_desc=w_desc * signs,
        correlations=np.clip(s[:n_components], 0.0, 1.0),
    )


def cca_score(model: CcaModel, desc_feat: np.ndarray, tube_feat: np.ndarray) -> float:
    """Correlation-weighted cosine between the projected views."""
    d = model.correlations * model.project_desc(desc_feat)
    t = model.correlations * model.project_tube(tube_feat)
    nd = np.linalg.norm(d)
    nt = np.linalg.norm(t)
    if nd == 0.0 or nt == 0.0:
        logger.warning("zero projection in weighted cosine; returning score 0.0")
        return 0.0
    return float(d @ t / (nd * nt))


def cca_score_matrix(model: CcaModel, desc_feats: np.ndarray, tube_feats: np.ndarray) -> np.ndarray:
    """Scores for every description row against every tube row."""
    d = model.correlations * model.project_desc(np.atleast_2d(desc_feats))
    t = model.correlations * model.project_tube(np.atleast_2d(tube_feats))
    nd = np.linalg.norm(d, axis=1)
    nt = np.linalg.norm(t, axis=1)
    if (nd == 0.0).any() or (nt == 0.0).any():
        logger.warning("zero projection in weighted cosine; those scores are 0.0")
    out = d @ t.T
    with np.errstate(invalid="ignore", divide="ignore"):
        out = out / np.outer(nd, nt)
    out[~np.isfinite(out)] = 0.0
    return out

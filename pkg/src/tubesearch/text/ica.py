"""FastICA fixed-point independent component analysis."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

COV_JITTER = 1e-8


@dataclass
class IcaModel:
    """Whitening plus orthonormal unmixing learned from training vectors."""

    mean: np.ndarray  # (dim,)
    whitening: np.ndarray  # (components, dim)
    unmixing: np.ndarray  # (components, components)
    converged: bool

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        z = (x - self.mean) @ self.whitening.T @ self.unmixing.T
        return z


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    # W <- (W W^T)^{-1/2} W keeps rows orthonormal
    vals, vecs = np.linalg.eigh(w @ w.T)
    vals = np.maximum(vals, 1e-12)
    return (vecs * (1.0 / np.sqrt(vals))) @ vecs.T @ w


def _canonical_row_signs(w: np.ndarray) -> np.ndarray:
    signs = np.sign(w[np.arange(len(w)), np.argmax(np.abs(w), axis=1)])
    signs[signs == 0] = 1.0
    return w * signs[:, None]


def fit_ica(
    vectors: np.ndarray,
    n_components: int | None = None,
    max_iter: int = 200,
    tol: float = 1e-5,
    seed: int = 0,
) -> IcaModel:
    """Fit whitening and unmixing with the logcosh fixed-point iteration.

    Components are decorrelated symmetrically every step; iteration stops
    when the largest absolute change across unmixing rows drops below
    ``tol`` (rows are sign-canonicalized first, so a flip does not read
    as change) or after ``max_iter`` steps.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D sample matrix, got shape {x.shape}")
    n, dim = x.shape
    if n_components is None:
        n_components = dim
    if not 1 <= n_components <= dim:
        raise ValueError(f"n_components must be in [1, {dim}], got {n_components}")
    if n < 2 * dim:
        raise ValueError(f"need at least {2 * dim} samples to fit ICA over {dim} dims, got {n}")

    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / n
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] <= COV_JITTER * max(vals[-1], 1.0):
        logger.warning("rank-deficient covariance; adding diagonal jitter %.0e", COV_JITTER)
        vals, vecs = np.linalg.eigh(cov + COV_JITTER * np.eye(dim))
    order = np.argsort(vals)[::-1][:n_components]
    vals, vecs = vals[order], vecs[:, order]
    vecs = _canonical_row_signs(vecs.T).T
    whitening = (1.0 / np.sqrt(vals))[:, None] * vecs.T  # (components, dim)

    z = xc @ whitening.T  # unit-variance, decorrelated samples
    rng = np.random.default_rng(seed)
    w = _canonical_row_signs(_sym_decorrelate(rng.standard_normal((n_components, n_components))))

    converged = False
    for _ in range(max_iter):
        u = z @ w.T
        g = np.tanh(u)
        g_prime_mean = np.mean(1.0 - g * g, axis=0)
        w_new = (g.T @ z) / n - g_prime_mean[:, None] * w
        w_new = _canonical_row_signs(_sym_decorrelate(w_new))
        delta = np.max(np.abs(w_new - w))
        w = w_new
        if delta < tol:
            converged = True
            break
    if not converged:
        logger.warning("ICA did not converge within %d iterations", max_iter)
    return IcaModel(mean=mean, whitening=whitening, unmixing=w, converged=converged)

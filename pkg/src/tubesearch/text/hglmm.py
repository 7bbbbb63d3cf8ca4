"""Hybrid Gaussian-Laplacian mixture model.

A diagonal mixture where every component-dimension is modeled by either
a Gaussian or a Laplacian, whichever explains the (posterior-weighted)
data better.  Fit with EM: the M-step estimates both hypotheses per
component-dimension (weighted mean/std for the Gaussian, weighted
median/mean-absolute-deviation for the Laplacian) and keeps the one with
the higher weighted log-likelihood, which maximizes the EM surrogate
over the union family and so keeps the log-likelihood non-decreasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

logger = logging.getLogger(__name__)

SCALE_FLOOR = 1e-6
EMPTY_COMPONENT_EPS = 1e-12
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class HglmmModel:
    weights: np.ndarray  # (k,)
    locations: np.ndarray  # (k, dim)
    scales: np.ndarray  # (k, dim)
    gaussian: np.ndarray  # (k, dim) bool, False means Laplacian
    training_log_likelihood: List[float] = field(default_factory=list, repr=False)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def log_joint(self, x: np.ndarray) -> np.ndarray:
        """log(weight_k) + log p_k(x_n) for every sample/component pair."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        out = np.empty((n, self.n_components))
        for k in range(self.n_components):
            delta = x - self.locations[k]
            s = self.scales[k]
            g = -_LOG_SQRT_2PI - np.log(s) - 0.5 * (delta / s) ** 2
            l = -np.log(2.0 * s) - np.abs(delta) / s
            out[:, k] = np.where(self.gaussian[k], g, l).sum(axis=1)
        return out + np.log(self.weights)

    def log_likelihood(self, x: np.ndarray) -> float:
        return float(_logsumexp(self.log_joint(x)).sum())

    def posteriors(self, x: np.ndarray) -> np.ndarray:
        """Component responsibilities; rows sum to 1."""
        lj = self.log_joint(x)
        lj -= lj.max(axis=1, keepdims=True)
        p = np.exp(lj)
        return p / p.sum(axis=1, keepdims=True)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw samples from the mixture."""
        comp = rng.choice(self.n_components, size=n, p=self.weights / self.weights.sum())
        normal = rng.standard_normal((n, self.dim))
        laplace = rng.laplace(size=(n, self.dim))
        loc = self.locations[comp]
        scale = self.scales[comp]
        return loc + scale * np.where(self.gaussian[comp], normal, laplace)


def _logsumexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def _kmeans_pp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[int(rng.integers(n))]]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers.append(x[int(rng.integers(n))])
            continue
        probs = d2 / total
        centers.append(x[int(rng.choice(n, p=probs))])
        d2 = np.minimum(d2, np.sum((x - centers[-1]) ** 2, axis=1))
    return np.stack(centers)


def _weighted_medians(
    x_sorted: np.ndarray, order: np.ndarray, gamma_k: np.ndarray, total: float
) -> np.ndarray:
    """Per-dimension weighted median; ties resolve to the lower value."""
    w_sorted = gamma_k[order]  # (n, dim), weights arranged by ascending value
    cum = np.cumsum(w_sorted, axis=0)
    idx = np.sum(cum < 0.5 * total, axis=0)
    idx = np.minimum(idx, x_sorted.shape[0] - 1)
    return x_sorted[idx, np.arange(x_sorted.shape[1])]


def fit_hglmm(
    vectors: np.ndarray,
    k_centers: int = 30,
    max_iter: int = 100,
    rel_tol: float = 1e-6,
    seed: int = 0,
) -> HglmmModel:
    """Fit the mixture by EM from a k-means++ seeded start.

    Deterministic for a fixed seed.  Stops when the relative improvement
    of the log-likelihood falls below ``rel_tol`` or after ``max_iter``
    iterations.  An emptied component is re-seeded from the currently
    worst-modeled sample.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D sample matrix, got shape {x.shape}")
    n, dim = x.shape
    if k_centers < 1:
        raise ValueError("k_centers must be >= 1")
    if n < 10 * k_centers:
        raise ValueError(f"need at least {10 * k_centers} samples for {k_centers} centers, got {n}")

    rng = np.random.default_rng(seed)
    global_std = np.maximum(x.std(axis=0), SCALE_FLOOR)

    centers = _kmeans_pp_centers(x, k_centers, rng)
    d2 = ((x[:, None, :] - centers[None]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    locations = np.empty((k_centers, dim))
    scales = np.empty((k_centers, dim))
    counts = np.empty(k_centers)
    for k in range(k_centers):
        members = x[assign == k]
        counts[k] = max(len(members), 1)
        if len(members) == 0:
            locations[k] = centers[k]
            scales[k] = global_std
        else:
            locations[k] = members.mean(axis=0)
            scales[k] = np.maximum(members.std(axis=0), SCALE_FLOOR)
    model = HglmmModel(
        weights=counts / counts.sum(),
        locations=locations,
        scales=scales,
        gaussian=np.ones((k_centers, dim), dtype=bool),
    )

    # value order per dimension is fixed; reused for every weighted median
    order = np.argsort(x, axis=0, kind="stable")
    x_sorted = np.take_along_axis(x, order, axis=0)

    prev_ll = -np.inf
    for _ in range(max_iter):
        log_joint = model.log_joint(x)
        sample_ll = _logsumexp(log_joint)
        ll = float(sample_ll.sum())
        model.training_log_likelihood.append(ll)
        if np.isfinite(prev_ll) and ll - prev_ll < rel_tol * abs(prev_ll):
            break
        prev_ll = ll

        gamma = np.exp(log_joint - sample_ll[:, None])
        totals = gamma.sum(axis=0)
        weights = np.empty(k_centers)
        for k in range(k_centers):
            if totals[k] < EMPTY_COMPONENT_EPS:
                worst = int(np.argmin(sample_ll))
                logger.warning("re-seeding empty component %d from sample %d", k, worst)
                model.locations[k] = x[worst]
                model.scales[k] = global_std
                model.gaussian[k] = True
                weights[k] = 1.0 / n
                continue
            gk = gamma[:, k]
            weights[k] = totals[k] / n

            mu_g = (gk @ x) / totals[k]
            var = (gk @ (x - mu_g) ** 2) / totals[k]
            s_g = np.maximum(np.sqrt(var), SCALE_FLOOR)
            wll_g = -totals[k] * (_LOG_SQRT_2PI + np.log(s_g)) - 0.5 * (
                gk @ ((x - mu_g) / s_g) ** 2
            )

            mu_l = _weighted_medians(x_sorted, order, gk, totals[k])
            abs_dev = np.abs(x - mu_l)
            s_l = np.maximum((gk @ abs_dev) / totals[k], SCALE_FLOOR)
            wll_l = -totals[k] * np.log(2.0 * s_l) - (gk @ abs_dev) / s_l

            use_gaussian = wll_g >= wll_l
            model.gaussian[k] = use_gaussian
            model.locations[k] = np.where(use_gaussian, mu_g, mu_l)
            model.scales[k] = np.where(use_gaussian, s_g, s_l)
        model.weights = weights / weights.sum()
    return model


def score_gradients(model: HglmmModel, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sample gradients of log p(z) w.r.t. locations and scales.

    Returns (location, scale) arrays of shape (n, k, dim).  The mixture
    posterior multiplies each component-dimension score; Gaussian and
    Laplacian dimensions use their own score functions.
    """
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    gamma = model.posteriors(z)  # (n, k)
    delta = z[:, None, :] - model.locations[None]  # (n, k, dim)
    s = model.scales[None]
    g_loc = delta / s**2
    g_scale = delta**2 / s**3 - 1.0 / s
    l_loc = np.sign(delta) / s
    l_scale = np.abs(delta) / s**2 - 1.0 / s
    flags = model.gaussian[None]
    loc = np.where(flags, g_loc, l_loc) * gamma[:, :, None]
    scale = np.where(flags, g_scale, l_scale) * gamma[:, :, None]
    return loc, scale

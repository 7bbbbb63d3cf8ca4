"""Structure-preserving ranking losses over embedded pairs.

A batch is two aligned matrices — embedded tubes x and embedded
descriptions y — plus a person label per row.  Rows sharing a label are
positives for each other.  The base loss sums four hinge families:

  * tube anchor against descriptions (weight 1),
  * description anchor against tubes (weight alpha1),
  * tube anchor against tubes (alpha2, self excluded),
  * description anchor against descriptions (alpha3, self excluded),

each hinge being max(0, margin + d(anchor, positive) - d(anchor,
negative)) with Euclidean distance.  The extended loss adds alpha4
times the summed distance over positive cross-modal pairs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class EmbedTrainConfig:
    margin: float = 0.1
    alpha1: float = 2.0
    alpha2: float = 0.2
    alpha3: float = 0.2
    alpha4: float = 0.5
    learning_rate: float = 5e-4
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 15
    seed: int = 0
    hidden_dim: int = 2048
    out_dim: int = 512
    dropout: float = 0.5

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        for name in ("alpha1", "alpha2", "alpha3", "alpha4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")


def _check_batch(x: np.ndarray, y: np.ndarray, person_ids: np.ndarray):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    person_ids = np.asarray(person_ids)
    if not (x.shape[0] == y.shape[0] == person_ids.shape[0]):
        raise ValueError(
            f"batch rows disagree: {x.shape[0]} tubes, {y.shape[0]} descriptions, "
            f"{person_ids.shape[0]} labels"
        )
    return x, y, person_ids


def _pairwise_dist(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    sq = np.sum(u**2, axis=1)[:, None] + np.sum(v**2, axis=1)[None, :] - 2.0 * (u @ v.T)
    return np.sqrt(np.maximum(sq, 0.0))


def _hinge_family(
    dist: np.ndarray, pos: np.ndarray, neg: np.ndarray, margin: float
) -> Tuple[float, np.ndarray, int]:
    """Sum of hinges over (anchor, positive, negative) triplets.

    Returns (loss, dL/d(dist), number of valid triplets).  dist rows are
    anchors; pos/neg mark which columns may serve in each role.
    """
    viol = margin + dist[:, :, None] - dist[:, None, :]  # (anchor, pos, neg)
    valid = pos[:, :, None] & neg[:, None, :]
    active = valid & (viol > 0.0)
    loss = float(np.where(active, viol, 0.0).sum())
    ddist = active.sum(axis=2).astype(np.float64) - active.sum(axis=1)
    return loss, ddist, int(valid.sum())


def _dist_backward(
    u: np.ndarray, v: np.ndarray, dist: np.ndarray, ddist: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Chain dL/d(dist matrix) back to the two point sets."""
    with np.errstate(invalid="ignore", divide="ignore"):
        coeff = np.where(dist > 0.0, ddist / dist, 0.0)
    du = coeff.sum(axis=1)[:, None] * u - coeff @ v
    dv = coeff.sum(axis=0)[:, None] * v - coeff.T @ u
    return du, dv


def _families(x, y, person_ids, config):
    same = person_ids[:, None] == person_ids[None, :]
    diff = ~same
    off_diag_same = same & ~np.eye(len(person_ids), dtype=bool)
    d_xy = _pairwise_dist(x, y)
    d_xx = _pairwise_dist(x, x)
    d_yy = _pairwise_dist(y, y)
    return [
        (1.0, d_xy, same, diff, "xy"),
        (config.alpha1, d_xy.T, same, diff, "yx"),
        (config.alpha2, d_xx, off_diag_same, diff, "xx"),
        (config.alpha3, d_yy, off_diag_same, diff, "yy"),
    ]


def dspe_loss(x: np.ndarray, y: np.ndarray, person_ids: np.ndarray,
              config: EmbedTrainConfig) -> float:
    """Four-family ranking loss of a batch."""
    x, y, person_ids = _check_batch(x, y, person_ids)
    total = 0.0
    n_valid = 0
    for weight, dist, pos, neg, _ in _families(x, y, person_ids, config):
        loss, _, valid = _hinge_family(dist, pos, neg, config.margin)
        total += weight * loss
        n_valid += valid
    if n_valid == 0:
        logger.warning("batch contains no valid ranking triplet; loss is 0")
    return total


def positive_pair_distance_sum(x: np.ndarray, y: np.ndarray, person_ids: np.ndarray) -> float:
    """Summed tube-description distance over same-person pairs."""
    x, y, person_ids = _check_batch(x, y, person_ids)
    same = person_ids[:, None] == person_ids[None, :]
    return float(_pairwise_dist(x, y)[same].sum())


def dspepp_loss(x: np.ndarray, y: np.ndarray, person_ids: np.ndarray,
                config: EmbedTrainConfig) -> float:
    """Ranking loss plus alpha4 times the positive-pair distance sum."""
    return dspe_loss(x, y, person_ids, config) + config.alpha4 * positive_pair_distance_sum(
        x, y, person_ids
    )


def loss_and_embedding_grads(
    x: np.ndarray,
    y: np.ndarray,
    person_ids: np.ndarray,
    config: EmbedTrainConfig,
    method: str = "dspe",
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Loss plus its gradients w.r.t. the embedded batch matrices."""
    if method not in ("dspe", "dspepp"):
        raise ValueError(f"unknown method {method!r}")
    x, y, person_ids = _check_batch(x, y, person_ids)
    dx = np.zeros_like(x)
    dy = np.zeros_like(y)
    total = 0.0
    n_valid = 0
    d_xy = None
    for weight, dist, pos, neg, tag in _families(x, y, person_ids, config):
        if tag == "xy":
            d_xy = dist
        loss, ddist, valid = _hinge_family(dist, pos, neg, config.margin)
        total += weight * loss
        n_valid += valid
        if weight == 0.0:
            continue
        if tag == "xy":
            du, dv = _dist_backward(x, y, dist, weight * ddist)
            dx += du
            dy += dv
        elif tag == "yx":
            du, dv = _dist_backward(y, x, dist, weight * ddist)
            dy += du
            dx += dv
        elif tag == "xx":
            du, dv = _dist_backward(x, x, dist, weight * ddist)
            dx += du + dv
        else:
            du, dv = _dist_backward(y, y, dist, weight * ddist)
            dy += du + dv
    if n_valid == 0:
        logger.warning("batch contains no valid ranking triplet; loss is 0")

    if method == "dspepp":
        same = person_ids[:, None] == person_ids[None, :]
        total += config.alpha4 * float(d_xy[same].sum())
        if config.alpha4 != 0.0:
            du, dv = _dist_backward(x, y, d_xy, config.alpha4 * same.astype(np.float64))
            dx += du
            dy += dv
    return total, dx, dy

"""Mini-batch training of the two-branch embedding.

The whole computation stays in plain numpy.  ``network_loss`` is a pure
function of parameters, batch, and fixed dropout masks, so analytic
gradients from ``network_gradients`` can be compared coordinate by
coordinate against central finite differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .losses import EmbedTrainConfig, loss_and_embedding_grads
from .network import (
    EmbeddingNet,
    branch_backward,
    branch_forward,
    embed,
    init_embedding_net,
    make_dropout_mask,
    update_running_stats,
)

logger = logging.getLogger(__name__)

METHODS = ("dspe", "dspepp")


@dataclass
class PairBatch:
    """Aligned tube/description feature rows with person labels."""

    tubes: np.ndarray
    descs: np.ndarray
    person_ids: np.ndarray

    def __post_init__(self):
        self.tubes = np.atleast_2d(np.asarray(self.tubes, dtype=np.float64))
        self.descs = np.atleast_2d(np.asarray(self.descs, dtype=np.float64))
        self.person_ids = np.asarray(self.person_ids)
        if not (len(self.tubes) == len(self.descs) == len(self.person_ids)):
            raise ValueError(
                f"row counts disagree: {len(self.tubes)} tubes, {len(self.descs)} "
                f"descriptions, {len(self.person_ids)} labels"
            )

    def __len__(self) -> int:
        return len(self.person_ids)

    def take(self, idx: np.ndarray) -> "PairBatch":
        return PairBatch(self.tubes[idx], self.descs[idx], self.person_ids[idx])


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    val_r_at_1: float


def network_loss(
    net: EmbeddingNet,
    batch: PairBatch,
    masks: Tuple[Optional[np.ndarray], Optional[np.ndarray]],
    config: EmbedTrainConfig,
    method: str,
) -> float:
    """Training-mode loss with dropout masks held fixed."""
    x, _ = branch_forward(net.tube, batch.tubes, train=True, dropout_mask=masks[0])
    y, _ = branch_forward(net.desc, batch.descs, train=True, dropout_mask=masks[1])
    loss, _, _ = loss_and_embedding_grads(x, y, batch.person_ids, config, method)
    return loss


def network_gradients(
    net: EmbeddingNet,
    batch: PairBatch,
    masks: Tuple[Optional[np.ndarray], Optional[np.ndarray]],
    config: EmbedTrainConfig,
    method: str,
) -> Tuple[float, Dict[str, Dict[str, np.ndarray]], Tuple[dict, dict]]:
    """Loss and analytic parameter gradients for both branches.

    Also returns the two forward caches so the caller can fold batch
    statistics into the running buffers after the update.
    """
    x, cache_t = branch_forward(net.tube, batch.tubes, train=True, dropout_mask=masks[0])
    y, cache_d = branch_forward(net.desc, batch.descs, train=True, dropout_mask=masks[1])
    loss, dx, dy = loss_and_embedding_grads(x, y, batch.person_ids, config, method)
    grads_t, _ = branch_backward(net.tube, cache_t, dx)
    grads_d, _ = branch_backward(net.desc, cache_d, dy)
    return loss, {"tube": grads_t, "desc": grads_d}, (cache_t, cache_d)


def retrieval_r_at_1(net: EmbeddingNet, batch: PairBatch) -> float:
    """Fraction of descriptions whose nearest tube shares their person."""
    if len(batch) == 0:
        raise ValueError("cannot evaluate on an empty batch")
    x = embed(net, "tube", batch.tubes)
    y = embed(net, "desc", batch.descs)
    sq = np.sum(y**2, axis=1)[:, None] + np.sum(x**2, axis=1)[None, :] - 2.0 * (y @ x.T)
    nearest = np.sqrt(np.maximum(sq, 0.0)).argmin(axis=1)
    return float(np.mean(batch.person_ids[nearest] == batch.person_ids))


def train_embedding(
    train: PairBatch,
    config: EmbedTrainConfig,
    method: str = "dspe",
    val: Optional[PairBatch] = None,
) -> Tuple[EmbeddingNet, List[EpochStats]]:
    """SGD with momentum; keeps the epoch snapshot with best R@1.

    Deterministic for a fixed config seed.  Validation defaults to the
    training pairs when no held-out batch is supplied.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if len(train) < 2:
        raise ValueError("need at least two training pairs")
    holdout = val if val is not None and len(val) > 0 else train

    rng = np.random.default_rng(config.seed)
    net = init_embedding_net(
        tube_dim=train.tubes.shape[1],
        desc_dim=train.descs.shape[1],
        hidden_dim=config.hidden_dim,
        out_dim=config.out_dim,
        dropout=config.dropout,
        seed=config.seed,
    )
    velocity = {
        name: {k: np.zeros_like(v) for k, v in getattr(net, name).params.items()}
        for name in ("tube", "desc")
    }

    history: List[EpochStats] = []
    best_r1 = -np.inf
    best_net = net.copy()
    n = len(train)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) < 2:
                continue  # a single pair has no negatives
            batch = train.take(idx)
            masks = (
                make_dropout_mask(rng, (len(idx), config.hidden_dim), config.dropout),
                make_dropout_mask(rng, (len(idx), config.hidden_dim), config.dropout),
            )
            loss, grads, caches = network_gradients(net, batch, masks, config, method)
            epoch_loss += loss
            n_batches += 1
            for name, cache in zip(("tube", "desc"), caches):
                branch = getattr(net, name)
                for key, g in grads[name].items():
                    v = velocity[name][key]
                    v *= config.momentum
                    v -= config.learning_rate * g
                    branch.params[key] += v
                update_running_stats(branch, cache, net.bn_momentum)

        mean_loss = epoch_loss / max(n_batches, 1)
        r1 = retrieval_r_at_1(net, holdout)
        history.append(EpochStats(epoch=epoch, loss=mean_loss, val_r_at_1=r1))
        logger.info("epoch %d: loss %.6f, R@1 %.4f", epoch, mean_loss, r1)
        if r1 > best_r1:
            best_r1 = r1
            best_net = net.copy()
    return best_net, history

"""Two-branch embedding network with hand-rolled forward and backward.

Each branch maps its modality into a shared space:
FC -> dropout -> ReLU -> FC -> batch norm -> ReLU -> L2-normalize.
Training mode normalizes with batch statistics and applies a fixed
dropout mask; inference mode uses running statistics and no dropout, so
its outputs are deterministic functions of the input.

Everything is plain numpy so gradients can be checked against finite
differences coordinate by coordinate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

BN_EPS = 1e-5
PARAM_KEYS = ("w1", "b1", "w2", "b2", "gamma", "beta")


@dataclass
class Branch:
    """Parameters and batch-norm buffers for one modality."""

    params: Dict[str, np.ndarray]
    running_mean: np.ndarray
    running_var: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.params["w1"].shape[0]

    @property
    def out_dim(self) -> int:
        return self.params["w2"].shape[1]

    def copy(self) -> "Branch":
        return Branch(
            params={k: v.copy() for k, v in self.params.items()},
            running_mean=self.running_mean.copy(),
            running_var=self.running_var.copy(),
        )


@dataclass
class EmbeddingNet:
    tube: Branch
    desc: Branch
    dropout: float = 0.5
    bn_momentum: float = 0.9

    def copy(self) -> "EmbeddingNet":
        return EmbeddingNet(
            tube=self.tube.copy(),
            desc=self.desc.copy(),
            dropout=self.dropout,
            bn_momentum=self.bn_momentum,
        )


def init_branch(in_dim: int, hidden_dim: int, out_dim: int, rng: np.random.Generator) -> Branch:
    params = {
        "w1": rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, hidden_dim)),
        "b1": np.zeros(hidden_dim),
        "w2": rng.normal(0.0, np.sqrt(2.0 / hidden_dim), size=(hidden_dim, out_dim)),
        "b2": np.zeros(out_dim),
        "gamma": np.ones(out_dim),
        "beta": np.zeros(out_dim),
    }
    return Branch(params=params, running_mean=np.zeros(out_dim), running_var=np.ones(out_dim))


def init_embedding_net(
    tube_dim: int,
    desc_dim: int,
    hidden_dim: int = 2048,
    out_dim: int = 512,
    dropout: float = 0.5,
    seed: int = 0,
) -> EmbeddingNet:
    rng = np.random.default_rng(seed)
    return EmbeddingNet(
        tube=init_branch(tube_dim, hidden_dim, out_dim, rng),
        desc=init_branch(desc_dim, hidden_dim, out_dim, rng),
        dropout=dropout,
    )


def make_dropout_mask(rng: np.random.Generator, shape: Tuple[int, int], p: float) -> np.ndarray:
    """Inverted-dropout mask: entries are 0 or 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return np.ones(shape)
    keep = 1.0 - p
    return (rng.random(shape) < keep) / keep


def branch_forward(
    branch: Branch,
    x: np.ndarray,
    train: bool = False,
    dropout_mask: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, dict]:
    """Run one branch; returns (embeddings, cache for backward)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != branch.in_dim:
        raise ValueError(f"input has dim {x.shape[1]}, branch expects {branch.in_dim}")
    p = branch.params

    h1 = x @ p["w1"] + p["b1"]
    dropped = h1 if dropout_mask is None else h1 * dropout_mask
    a1 = np.maximum(dropped, 0.0)
    h2 = a1 @ p["w2"] + p["b2"]

    if train:
        mu = h2.mean(axis=0)
        var = h2.var(axis=0)
    else:
        mu = branch.running_mean
        var = branch.running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (h2 - mu) * inv_std
    bn = p["gamma"] * xhat + p["beta"]
    a2 = np.maximum(bn, 0.0)

    norms = np.linalg.norm(a2, axis=1)
    degenerate = norms == 0.0
    if degenerate.any():
        # routine during early training (batch stats push rows negative),
        # suspicious at inference
        logger.log(
            logging.DEBUG if train else logging.WARNING,
            "DegenerateEmbedding: %d of %d rows collapsed to zero before "
            "normalization; emitting zero vectors",
            int(degenerate.sum()),
            len(norms),
        )
    safe = np.where(degenerate, 1.0, norms)
    y = a2 / safe[:, None]

    cache = {
        "x": x,
        "dropout_mask": dropout_mask,
        "relu1_mask": dropped > 0.0,
        "a1": a1,
        "h2": h2,
        "mu": mu,
        "inv_std": inv_std,
        "xhat": xhat,
        "relu2_mask": bn > 0.0,
        "a2": a2,
        "safe_norms": safe,
        "degenerate": degenerate,
        "train": train,
    }
    return y, cache


def branch_backward(
    branch: Branch, cache: dict, dy: np.ndarray
) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """Gradients of a scalar loss w.r.t. branch parameters and input.

    Training-mode caches backpropagate through the batch statistics;
    inference-mode caches treat the running statistics as constants.
    """
    p = branch.params
    n = cache["x"].shape[0]

    # L2 normalization: y = a2 / ||a2||
    y = cache["a2"] / cache["safe_norms"][:, None]
    da2 = (dy - y * np.sum(dy * y, axis=1, keepdims=True)) / cache["safe_norms"][:, None]
    da2[cache["degenerate"]] = 0.0

    dbn = da2 * cache["relu2_mask"]
    dgamma = np.sum(dbn * cache["xhat"], axis=0)
    dbeta = np.sum(dbn, axis=0)
    dxhat = dbn * p["gamma"]
    if cache["train"]:
        s1 = np.sum(dxhat, axis=0)
        s2 = np.sum(dxhat * cache["xhat"], axis=0)
        dh2 = cache["inv_std"] / n * (n * dxhat - s1 - cache["xhat"] * s2)
    else:
        dh2 = dxhat * cache["inv_std"]

    dw2 = cache["a1"].T @ dh2
    db2 = np.sum(dh2, axis=0)
    da1 = dh2 @ p["w2"].T
    ddropped = da1 * cache["relu1_mask"]
    dh1 = ddropped if cache["dropout_mask"] is None else ddropped * cache["dropout_mask"]
    dw1 = cache["x"].T @ dh1
    db1 = np.sum(dh1, axis=0)
    dx = dh1 @ p["w1"].T

    grads = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2, "gamma": dgamma, "beta": dbeta}
    return grads, dx


def update_running_stats(branch: Branch, cache: dict, momentum: float) -> None:
    """Fold one training batch's statistics into the running buffers."""
    if not cache["train"]:
        raise ValueError("running statistics only update from training-mode caches")
    var = 1.0 / cache["inv_std"] ** 2 - BN_EPS
    branch.running_mean = momentum * branch.running_mean + (1.0 - momentum) * cache["mu"]
    branch.running_var = momentum * branch.running_var + (1.0 - momentum) * var


def embed(net: EmbeddingNet, which: str, x: np.ndarray) -> np.ndarray:
    """Inference-mode embedding for one modality ('tube' or 'desc')."""
    if which not in ("tube", "desc"):
        raise ValueError(f"unknown branch {which!r}")
    y, _ = branch_forward(getattr(net, which), x, train=False)
    return y

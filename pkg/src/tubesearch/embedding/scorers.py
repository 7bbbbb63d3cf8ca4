"""Uniform scoring front-end over the trained models.

A scorer turns description features and tube features into a score
matrix, higher meaning better match.  The correlation model scores by
weighted cosine; the learned embeddings score by negative Euclidean
distance in the shared space.  Both serialize to the binary matrix
container with a manifest naming every tensor.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from ..io.fmat import read_fmat_bundle, write_fmat_bundle
from .cca import CcaModel, cca_score_matrix
from .network import Branch, EmbeddingNet, PARAM_KEYS, embed


@dataclass
class CcaScorer:
    model: CcaModel
    method = "cca"

    def score_matrix(self, desc_feats: np.ndarray, tube_feats: np.ndarray) -> np.ndarray:
        return cca_score_matrix(self.model, desc_feats, tube_feats)

    def score(self, desc_feat: np.ndarray, tube_feat: np.ndarray) -> float:
        return float(self.score_matrix(desc_feat[None, :], tube_feat[None, :])[0, 0])


@dataclass
class EmbeddingScorer:
    net: EmbeddingNet
    method: str = "dspe"

    def score_matrix(self, desc_feats: np.ndarray, tube_feats: np.ndarray) -> np.ndarray:
        y = embed(self.net, "desc", np.atleast_2d(desc_feats))
        x = embed(self.net, "tube", np.atleast_2d(tube_feats))
        sq = np.sum(y**2, axis=1)[:, None] + np.sum(x**2, axis=1)[None, :] - 2.0 * (y @ x.T)
        return -np.sqrt(np.maximum(sq, 0.0))

    def score(self, desc_feat: np.ndarray, tube_feat: np.ndarray) -> float:
        return float(self.score_matrix(desc_feat[None, :], tube_feat[None, :])[0, 0])


Scorer = Union[CcaScorer, EmbeddingScorer]


def save_scorer(path: Union[str, Path], scorer: Scorer) -> None:
    if isinstance(scorer, CcaScorer):
        m = scorer.model
        tensors = {
            "mean_tube": m.mean_tube[None, :],
            "mean_desc": m.mean_desc[None, :],
            "w_tube": m.w_tube,
            "w_desc": m.w_desc,
            "correlations": m.correlations[None, :],
        }
        meta = {"kind": "scorer", "method": "cca"}
    elif isinstance(scorer, EmbeddingScorer):
        tensors = {}
        for name in ("tube", "desc"):
            branch = getattr(scorer.net, name)
            for key in PARAM_KEYS:
                v = branch.params[key]
                tensors[f"{name}_{key}"] = v if v.ndim == 2 else v[None, :]
            tensors[f"{name}_running_mean"] = branch.running_mean[None, :]
            tensors[f"{name}_running_var"] = branch.running_var[None, :]
        meta = {
            "kind": "scorer",
            "method": scorer.method,
            "dropout": scorer.net.dropout,
            "bn_momentum": scorer.net.bn_momentum,
        }
    else:
        raise TypeError(f"not a scorer: {type(scorer).__name__}")
    write_fmat_bundle(path, tensors, meta=meta)


def _load_branch(tensors, name: str) -> Branch:
    params = {}
    for key in PARAM_KEYS:
        v = tensors[f"{name}_{key}"]
        params[key] = v if key in ("w1", "w2") else v[0]
    return Branch(
        params=params,
        running_mean=tensors[f"{name}_running_mean"][0],
        running_var=tensors[f"{name}_running_var"][0],
    )


def load_scorer(path: Union[str, Path]) -> Scorer:
    tensors, meta = read_fmat_bundle(path)
    if meta.get("kind") != "scorer":
        raise ValueError(f"{path} does not hold a scorer bundle")
    method = meta.get("method")
    if method == "cca":
        model = CcaModel(
            mean_tube=tensors["mean_tube"][0],
            mean_desc=tensors["mean_desc"][0],
            w_tube=tensors["w_tube"],
            w_desc=tensors["w_desc"],
            correlations=tensors["correlations"][0],
        )
        return CcaScorer(model)
    if method in ("dspe", "dspepp"):
        net = EmbeddingNet(
            tube=_load_branch(tensors, "tube"),
            desc=_load_branch(tensors, "desc"),
            dropout=float(meta.get("dropout", 0.5)),
            bn_momentum=float(meta.get("bn_momentum", 0.9)),
        )
        return EmbeddingScorer(net, method=method)
    raise ValueError(f"unknown scorer method {method!r} in {path}")

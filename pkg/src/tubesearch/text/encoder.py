"""End-to-end sentence encoder.

Pipeline: tokenize, look up word vectors, ICA-transform them, pool into
a power- and L2-normalized Fisher vector under the hybrid mixture, then
optionally project with PCA.  The mixture and ICA are fit on the word
vector vocabulary; PCA is fit on encoded training sentences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..io.fmat import read_fmat_bundle, write_fmat_bundle
from .fisher import encode_tokens
from .hglmm import HglmmModel, fit_hglmm
from .ica import IcaModel, fit_ica
from .pca import PcaModel, fit_pca
from .tokenizer import tokenize
from .wordvecs import WordVectorTable

logger = logging.getLogger(__name__)


@dataclass
class TextEncoder:
    table: WordVectorTable
    ica: IcaModel
    mixture: HglmmModel
    pca: Optional[PcaModel] = None

    @property
    def out_dim(self) -> int:
        if self.pca is not None:
            return self.pca.out_dim
        return 2 * self.mixture.n_components * self.mixture.dim

    def encode(self, text: str) -> np.ndarray:
        """Map one sentence to its feature vector."""
        tokens = tokenize(text, self.table)
        vectors = self.table.matrix(tokens)
        fv = encode_tokens(self.mixture, self.ica.transform(vectors))
        if self.pca is not None:
            fv = self.pca.transform(fv)
        return fv

    def encode_many(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.encode(t) for t in texts])


def fit_text_encoder(
    table: WordVectorTable,
    training_texts: Sequence[str] = (),
    k_centers: int = 30,
    pca_dim: Optional[int] = None,
    seed: int = 0,
    ica_components: Optional[int] = None,
    ica_max_iter: int = 200,
    hglmm_max_iter: int = 100,
) -> TextEncoder:
    """Fit ICA and the mixture on the vocabulary, PCA on training texts.

    ``pca_dim=None`` skips the projection; otherwise ``training_texts``
    must supply at least ``pca_dim`` sentences.
    """
    vocab = table.matrix()
    ica = fit_ica(vocab, n_components=ica_components, max_iter=ica_max_iter, seed=seed)
    transformed = ica.transform(vocab)
    mixture = fit_hglmm(transformed, k_centers=k_centers, max_iter=hglmm_max_iter, seed=seed)
    encoder = TextEncoder(table=table, ica=ica, mixture=mixture, pca=None)
    if pca_dim is not None:
        if not training_texts:
            raise ValueError("pca_dim was given but no training texts to fit it on")
        encoded = encoder.encode_many(training_texts)
        encoder.pca = fit_pca(encoded, pca_dim)
    logger.info(
        "text encoder fit: %d tokens, %d centers, output dim %d",
        len(table),
        k_centers,
        encoder.out_dim,
    )
    return encoder


def save_text_encoder(path: Union[str, Path], encoder: TextEncoder) -> None:
    """Persist the fitted stages (the word vector table is external)."""
    tensors = {
        "ica_mean": encoder.ica.mean[None, :],
        "ica_whitening": encoder.ica.whitening,
        "ica_unmixing": encoder.ica.unmixing,
        "hglmm_weights": encoder.mixture.weights[None, :],
        "hglmm_locations": encoder.mixture.locations,
        "hglmm_scales": encoder.mixture.scales,
        "hglmm_gaussian": encoder.mixture.gaussian.astype(np.float64),
    }
    meta = {"kind": "text_encoder", "ica_converged": bool(encoder.ica.converged)}
    if encoder.pca is not None:
        tensors["pca_mean"] = encoder.pca.mean[None, :]
        tensors["pca_components"] = encoder.pca.components
    write_fmat_bundle(path, tensors, meta=meta)


def load_text_encoder(path: Union[str, Path], table: WordVectorTable) -> TextEncoder:
    """Load a saved encoder; the matching word vector table is supplied
    by the caller."""
    tensors, meta = read_fmat_bundle(path)
    if meta.get("kind") != "text_encoder":
        raise ValueError(f"{path} does not hold a text encoder bundle")
    ica = IcaModel(
        mean=tensors["ica_mean"][0],
        whitening=tensors["ica_whitening"],
        unmixing=tensors["ica_unmixing"],
        converged=bool(meta.get("ica_converged", True)),
    )
    mixture = HglmmModel(
        weights=tensors["hglmm_weights"][0],
        locations=tensors["hglmm_locations"],
        scales=tensors["hglmm_scales"],
        gaussian=tensors["hglmm_gaussian"] > 0.5,
    )
    pca = None
    if "pca_components" in tensors:
        pca = PcaModel(mean=tensors["pca_mean"][0], components=tensors["pca_components"])
    return TextEncoder(table=table, ica=ica, mixture=mixture, pca=pca)

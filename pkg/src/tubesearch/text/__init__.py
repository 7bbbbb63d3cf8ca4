from tubesearch.text.encoder import (
    TextEncoder,
    fit_text_encoder,
    load_text_encoder,
    save_text_encoder,
)
from tubesearch.text.fisher import encode_tokens, fisher_vector, normalize_fv
from tubesearch.text.hglmm import HglmmModel, fit_hglmm, score_gradients
from tubesearch.text.ica import IcaModel, fit_ica
from tubesearch.text.pca import PcaModel, fit_pca
from tubesearch.text.tokenizer import tokenize
from tubesearch.text.wordvecs import WordVectorTable, load_word_vectors, save_word_vectors

__all__ = [
    "HglmmModel",
    "IcaModel",
    "PcaModel",
    "TextEncoder",
    "WordVectorTable",
    "encode_tokens",
    "fisher_vector",
    "fit_hglmm",
    "fit_ica",
    "fit_pca",
    "fit_text_encoder",
    "load_text_encoder",
    "load_word_vectors",
    "normalize_fv",
    "save_text_encoder",
    "save_word_vectors",
    "score_gradients",
    "tokenize",
]

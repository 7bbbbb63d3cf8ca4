from tubesearch.embedding.cca import (
    DEFAULT_CCA_REG,
    CcaModel,
    cca_score,
    cca_score_matrix,
    fit_cca,
)
from tubesearch.embedding.losses import (
    EmbedTrainConfig,
    dspe_loss,
    dspepp_loss,
    positive_pair_distance_sum,
)
from tubesearch.embedding.network import (
    Branch,
    EmbeddingNet,
    branch_backward,
    branch_forward,
    embed,
    init_embedding_net,
    make_dropout_mask,
)
from tubesearch.embedding.scorers import (
    CcaScorer,
    EmbeddingScorer,
    Scorer,
    load_scorer,
    save_scorer,
)
from tubesearch.embedding.train import (
    EpochStats,
    PairBatch,
    network_gradients,
    network_loss,
    retrieval_r_at_1,
    train_embedding,
)

__all__ = [
    "Branch",
    "DEFAULT_CCA_REG",
    "CcaModel",
    "CcaScorer",
    "EmbedTrainConfig",
    "EmbeddingNet",
    "EmbeddingScorer",
    "EpochStats",
    "PairBatch",
    "Scorer",
    "branch_backward",
    "branch_forward",
    "cca_score",
    "cca_score_matrix",
    "dspe_loss",
    "dspepp_loss",
    "embed",
    "fit_cca",
    "init_embedding_net",
    "load_scorer",
    "make_dropout_mask",
    "network_gradients",
    "network_loss",
    "positive_pair_distance_sum",
    "retrieval_r_at_1",
    "save_scorer",
    "train_embedding",
]

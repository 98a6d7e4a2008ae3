"""Dimensionality reduction: PCA to a fixed budget, then exact t-SNE to 2-D."""

from .pca import PcaModel, pca_fit_transform
from .tsne import (
    Embedding2D,
    TsneConfig,
    kl_and_grad,
    perplexity_calibrate,
    squared_distances,
    tsne,
    save_embedding,
    load_embedding,
)

__all__ = [
    "PcaModel",
    "pca_fit_transform",
    "Embedding2D",
    "TsneConfig",
    "kl_and_grad",
    "perplexity_calibrate",
    "squared_distances",
    "tsne",
    "save_embedding",
    "load_embedding",
]

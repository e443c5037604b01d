"""Semantic-ID tokenizers: residual k-means (default) and RQ-VAE."""

from .kmeans import kmeans, kmeans_pp_init, train_residual_kmeans
from .quantize import (
    SidAssignment,
    SidCodebooks,
    SidConfig,
    TokenizerError,
    assign,
    assign_batch,
    disambiguate,
    read_assignment,
    read_codebooks,
    reconstruct,
    tokenize,
    write_assignment,
    write_codebooks,
)
from .rqvae import RQVAE, RQVAEConfig, RQVAEDivergence, build_rqvae, train_rqvae


def train_tokenizer(matrix, cfg: SidConfig, iters: int = 20, rqvae: RQVAEConfig | None = None):
    """Train codebooks with ``cfg.trainer`` and assign SIDs to every row.

    Returns ``(codebooks, assignment, rqvae_model_or_None)``.
    """
    if cfg.trainer == "residual-kmeans":
        books = train_residual_kmeans(matrix, cfg, iters)
        return books, tokenize(matrix, books), None
    books, model = train_rqvae(matrix, cfg, rqvae or RQVAEConfig())
    from ..embed import EmbeddingMatrix

    latent = EmbeddingMatrix(model.encode(matrix.vectors), matrix.ids)
    return books, tokenize(latent, books), model

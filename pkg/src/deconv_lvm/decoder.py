"""Generative network: transposed-convolution stack and cosine-softmax word scoring."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .config import ConfigError, ModelConfig


def decoder_channels(config: ModelConfig) -> list[int]:
    """Channel widths from the latent code down to the embedding rows.

    Mirrors the encoder: ``M -> K_{L-1} -> ... -> K_1 -> d_emb``.
    """
    return [config.latent_dim, *reversed(config.channels[:-1]), config.emb_dim]


def decode(z: Tensor, params: ParameterStore, config: ModelConfig) -> Tensor:
    """Expand ``z[B, M]`` to ``z3[B, d_emb, T_max]``; the last layer has no ReLU."""
    if z.ndim != 2 or z.shape[1] != config.latent_dim:
        raise ConfigError(f"latent code shape {z.shape} does not match latent_dim={config.latent_dim}")
    n_layers = len(config.channels)
    x = ad.reshape(z, (z.shape[0], config.latent_dim, 1))
    for i in range(n_layers):
        w = params[f"dec.deconv{i + 1}.weight"]
        b = params[f"dec.deconv{i + 1}.bias"]
        x = ad.conv1d_transpose(x, w, config.stride) + ad.reshape(b, (-1, 1))
        if i < n_layers - 1:
            x = ad.relu(x)
    return x


def word_log_probs(z3: Tensor, embedding: Tensor, tau: float, delta: float = 1e-8) -> Tensor:
    """``log p(w_i = s)`` for every position, shape ``[B, T, V]``.

    Scores are cosine(z3 column, embedding column) / tau, normalized in
    log space.
    """
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    zn = ad.l2_normalize(z3, axis=1, delta=delta)
    en = ad.l2_normalize(embedding, axis=0, delta=delta)
    scores = ad.matmul(ad.transpose(zn, (0, 2, 1)), en) * (1.0 / tau)
    return ad.log_softmax(scores, axis=-1)


def word_log_distribution(z3_col, embedding, tau: float, delta: float = 1e-8) -> Tensor:
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    return ad.log_softmax(ad.cosine_rows(z3_col, embedding, delta) * (1.0 / tau), axis=-1)


def word_distribution(z3_col, embedding, tau: float, delta: float = 1e-8) -> np.ndarray:
    """Probability vector over the vocabulary for one decoded column."""
    return np.exp(word_log_distribution(z3_col, embedding, tau, delta).data)


def scoring_table(embedding: Tensor, score_pad: bool) -> Tensor:
    """Embedding columns that take part in the output softmax.

    Unless PAD is scored as a word, its column (index 0) is left out, so
    scored index ``s`` stands for vocabulary index ``s + 1``.
    """
    if score_pad:
        return embedding
    return ad.take(embedding, np.arange(1, embedding.shape[1]), axis=1)


def reconstruction_log_likelihood(
    log_probs: Tensor, tokens: np.ndarray, lengths: np.ndarray, score_pad: bool = False
) -> Tensor:
    """Per-sentence sum of ``log p(w_i)`` over positions ``i < length``.

    ``log_probs`` must come from :func:`scoring_table` with the same
    ``score_pad``.  ``score_pad=True`` scores every position, treating PAD
    as a word.
    """
    tokens = np.asarray(tokens)
    if score_pad:
        return ad.sum(ad.pick(log_probs, tokens), axis=1)
    mask = np.arange(tokens.shape[1])[None, :] < np.asarray(lengths)[:, None]
    picked = ad.pick(log_probs, np.where(mask, tokens - 1, 0))
    return ad.sum(picked * mask.astype(np.float64), axis=1)


def greedy_tokens(log_probs: Tensor, score_pad: bool = False) -> np.ndarray:
    best = np.argmax(log_probs.data, axis=-1)
    return best if score_pad else best + 1

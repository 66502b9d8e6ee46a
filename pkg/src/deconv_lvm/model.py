"""Parameter initialization and mode-dependent forward passes."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .autodiff import ParameterStore, Rng
from .config import ConfigError, ModelConfig, TrainingMode
from .decoder import decode, decoder_channels, greedy_tokens, reconstruction_log_likelihood, scoring_table, word_log_probs
from .encoder import encode, encode_pair
from .matcher import classify, match_features
from .objectives import LossBreakdown, gaussian_kl, joint_loss, l2_penalty, matching_loss_rows, sentence_objective
from .text import random_embeddings


def _he(rng: Rng, shape, fan_in: float) -> np.ndarray:
    return rng.normal(shape) * np.sqrt(2.0 / fan_in)


def init_params(
    config: ModelConfig,
    vocab_size: int,
    rng: Rng,
    mode: Optional[TrainingMode] = None,
    embedding: Optional[np.ndarray] = None,
) -> ParameterStore:
    """Create every tensor the mode needs, in a fixed order.

    The decoder is omitted for ENCODER_ONLY and the classifier for
    UNSUP_LVM; all other tensors always exist.
    """
    mode = TrainingMode(mode or config.mode)
    params = ParameterStore()
    if embedding is None:
        embedding = random_embeddings(vocab_size, config.emb_dim, rng)
    if embedding.shape != (config.emb_dim, vocab_size):
        raise ConfigError(f"embedding shape {embedding.shape} != ({config.emb_dim}, {vocab_size})")
    params.add("embedding", embedding)

    widths = [config.emb_dim, *config.channels]
    for i in range(len(config.channels)):
        c_in, c_out = widths[i], widths[i + 1]
        params.add(f"enc.conv{i + 1}.weight", _he(rng, (c_out, c_in, config.window), c_in * config.window))
        params.add(f"enc.conv{i + 1}.bias", np.zeros(c_out))
    k_last, m = config.channels[-1], config.latent_dim
    params.add("enc.mu.weight", rng.normal((k_last, m)) * np.sqrt(1.0 / k_last))
    params.add("enc.mu.bias", np.zeros(m))
    params.add("enc.log_sigma.weight", rng.normal((k_last, m)) * np.sqrt(0.01 / k_last))
    params.add("enc.log_sigma.bias", np.zeros(m))

    if mode.has_decoder:
        chans = decoder_channels(config)
        overlap = config.window / config.stride
        for i in range(len(chans) - 1):
            c_in, c_out = chans[i], chans[i + 1]
            fan_in = c_in * (overlap if i > 0 else 1.0)
            params.add(f"dec.deconv{i + 1}.weight", _he(rng, (c_in, c_out, config.window), fan_in))
            params.add(f"dec.deconv{i + 1}.bias", np.zeros(c_out))

    if mode is not TrainingMode.UNSUP_LVM:
        h = config.matcher_hidden
        params.add("match.fc1.weight", _he(rng, (4 * m, h), 4 * m))
        params.add("match.fc1.bias", np.zeros(h))
        params.add("match.fc2.weight", _he(rng, (h, h), h))
        params.add("match.fc2.bias", np.zeros(h))
        params.add("match.out.weight", rng.normal((h, config.n_classes)) * np.sqrt(1.0 / h))
        params.add("match.out.bias", np.zeros(config.n_classes))
    return params


def _reconstruct_terms(params, config, post, tokens, lengths):
    z3 = decode(post.z, params, config)
    table = scoring_table(params["embedding"], config.score_pad)
    logp = word_log_probs(z3, table, config.tau, config.cos_delta)
    return reconstruction_log_likelihood(logp, tokens, lengths, config.score_pad)


def sentence_loss(
    params: ParameterStore,
    config: ModelConfig,
    tokens: np.ndarray,
    lengths: np.ndarray,
    rng: Optional[Rng],
    mode: TrainingMode,
    train: bool = True,
) -> LossBreakdown:
    """Unsupervised loss for UNSUP_LVM or DECONV_AE on a batch of single sentences.

    ``train=False`` evaluates with ``z = mu`` and no dropout while keeping
    the KL term for LVM modes.
    """
    if not mode.has_decoder:
        raise ConfigError(f"mode {mode.value} has no reconstruction objective")
    stochastic = mode.stochastic and train
    post = encode(tokens, params, config, rng, train=train, sample=stochastic)
    recon_ll = _reconstruct_terms(params, config, post, tokens, lengths)
    kl = gaussian_kl(post.mu, post.log_sigma) if mode.stochastic else None
    l2 = l2_penalty(params) if config.l2 > 0 else None
    return sentence_objective(recon_ll, kl, l2, config.l2)


def pair_loss(
    params: ParameterStore,
    config: ModelConfig,
    batch,
    rng: Optional[Rng],
    mode: TrainingMode,
    alpha: float,
    train: bool = True,
) -> LossBreakdown:
    """Joint labeled/unlabeled loss on a batch of sentence pairs.

    Random draws: premise dropout and eps, hypothesis dropout and eps,
    then classifier-input dropout.
    """
    if mode is TrainingMode.UNSUP_LVM:
        raise ConfigError("UNSUP_LVM trains on single sentences, not pairs")
    stochastic = mode.stochastic and train
    post_p, post_h = encode_pair(
        batch.tokens, batch.second_tokens, params, config, rng, train=train, sample=stochastic
    )
    mask = np.asarray(batch.label_mask, bool)
    m = match_features(post_p.z, post_h.z)
    logits = classify(m, params, config.dropout, rng, train)
    match_rows = matching_loss_rows(logits, np.where(mask, batch.labels, 0))
    l2 = l2_penalty(params) if config.l2 > 0 else None

    if mode is TrainingMode.ENCODER_ONLY:
        return joint_loss(None, None, None, None, match_rows, mask, 1.0, l2, config.l2, use_unlabeled=False)

    recon_p = -_reconstruct_terms(params, config, post_p, batch.tokens, batch.lengths)
    recon_h = -_reconstruct_terms(params, config, post_h, batch.second_tokens, batch.second_lengths)
    kl_p = kl_h = None
    if mode.stochastic:
        kl_p = gaussian_kl(post_p.mu, post_p.log_sigma)
        kl_h = gaussian_kl(post_h.mu, post_h.log_sigma)
    return joint_loss(
        recon_p, recon_h, kl_p, kl_h, match_rows, mask, alpha, l2, config.l2,
        use_unlabeled=mode.uses_unlabeled,
    )


def embed_means(params: ParameterStore, config: ModelConfig, tokens: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Posterior means ``mu`` for every row of ``tokens`` (no dropout, no noise)."""
    out = []
    for start in range(0, tokens.shape[0], batch_size):
        post = encode(tokens[start : start + batch_size], params, config, sample=False)
        out.append(post.mu.data)
    if not out:
        return np.zeros((0, config.latent_dim))
    return np.concatenate(out)


def reconstruct_tokens(params: ParameterStore, config: ModelConfig, tokens: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Greedy per-position argmax of the word distribution decoded from ``mu``."""
    out = []
    for start in range(0, tokens.shape[0], batch_size):
        chunk = tokens[start : start + batch_size]
        post = encode(chunk, params, config, sample=False)
        z3 = decode(post.mu, params, config)
        table = scoring_table(params["embedding"], config.score_pad)
        logp = word_log_probs(z3, table, config.tau, config.cos_delta)
        out.append(greedy_tokens(logp, config.score_pad))
    return np.concatenate(out)


def token_accuracy(params: ParameterStore, config: ModelConfig, tokens: np.ndarray, lengths: np.ndarray) -> float:
    """Fraction of non-PAD positions reconstructed exactly."""
    pred = reconstruct_tokens(params, config, tokens)
    mask = np.arange(tokens.shape[1])[None, :] < lengths[:, None]
    if mask.sum() == 0:
        return 1.0
    return float(((pred == tokens) & mask).sum() / mask.sum())


def predict_logits(params: ParameterStore, config: ModelConfig, first: np.ndarray, second: np.ndarray, batch_size: int = 256) -> np.ndarray:
    out = []
    for start in range(0, first.shape[0], batch_size):
        sl = slice(start, start + batch_size)
        post_p, post_h = encode_pair(first[sl], second[sl], params, config, sample=False)
        out.append(classify(match_features(post_p.mu, post_h.mu), params).data)
    return np.concatenate(out)

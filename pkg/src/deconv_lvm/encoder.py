"""Inference network: embedding lookup, strided CNN, Gaussian heads."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Rng, Tensor
from .config import ModelConfig
from .text import PAD


@dataclass
class PosteriorSample:
    mu: Tensor
    log_sigma: Tensor
    z: Tensor
    eps: np.ndarray


def dropout(x: Tensor, rate: float, rng: Optional[Rng], train: bool) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/keep at train time."""
    if not train or rate <= 0.0:
        return x
    keep = 1.0 - rate
    return x * (rng.keep_mask(x.shape, keep) / keep)


def cnn_features(
    tokens: np.ndarray,
    params: ParameterStore,
    config: ModelConfig,
    rng: Optional[Rng] = None,
    train: bool = False,
) -> Tensor:
    """Embed ``tokens[B, T]`` and run the conv stack down to ``[B, K_last]``."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 2 or tokens.shape[1] != config.t_max:
        raise ValueError(f"token matrix {tokens.shape} does not match t_max={config.t_max}")
    x = ad.embedding_lookup(params["embedding"], tokens, padding_idx=None if config.score_pad else PAD)
    x = dropout(x, config.dropout, rng, train)
    for i in range(len(config.channels)):
        w = params[f"enc.conv{i + 1}.weight"]
        b = params[f"enc.conv{i + 1}.bias"]
        x = ad.relu(ad.conv1d(x, w, config.stride) + ad.reshape(b, (-1, 1)))
    return ad.reshape(x, (tokens.shape[0], config.channels[-1]))


def encode(
    tokens: np.ndarray,
    params: ParameterStore,
    config: ModelConfig,
    rng: Optional[Rng] = None,
    train: bool = False,
    sample: bool = True,
) -> PosteriorSample:
    """Posterior parameters and a reparameterized draw ``z = mu + exp(log_sigma) * eps``.

    With ``sample=False`` no noise is drawn and ``z`` is ``mu`` itself.
    Random draws happen in a fixed order: embedding dropout mask, then eps.
    """
    h = cnn_features(tokens, params, config, rng, train)
    mu = h @ params["enc.mu.weight"] + params["enc.mu.bias"]
    c = config.log_sigma_clamp
    log_sigma = ad.clip(h @ params["enc.log_sigma.weight"] + params["enc.log_sigma.bias"], -c, c)
    if not sample:
        return PosteriorSample(mu, log_sigma, mu, np.zeros(mu.shape))
    eps = rng.normal(mu.shape)
    z = mu + ad.exp(log_sigma) * eps
    return PosteriorSample(mu, log_sigma, z, eps)


def encode_pair(
    first: np.ndarray,
    second: np.ndarray,
    params: ParameterStore,
    config: ModelConfig,
    rng: Optional[Rng] = None,
    train: bool = False,
    sample: bool = True,
) -> tuple[PosteriorSample, PosteriorSample]:
    """Siamese encoding: both sentences go through the same parameter tensors."""
    return (
        encode(first, params, config, rng, train, sample),
        encode(second, params, config, rng, train, sample),
    )

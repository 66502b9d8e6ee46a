"""Heuristic matching features and the MLP label classifier."""

from __future__ import annotations

from typing import Optional

from . import autodiff as ad
from .autodiff import ParameterStore, Rng, ShapeError, Tensor
from .encoder import dropout


def match_features(z_p: Tensor, z_h: Tensor) -> Tensor:
    """``[z_p; z_h; z_p - z_h; z_p * z_h]`` along the last axis."""
    if z_p.shape != z_h.shape:
        raise ShapeError(f"match_features: widths differ, {z_p.shape} vs {z_h.shape}")
    return ad.concat([z_p, z_h, z_p - z_h, z_p * z_h], axis=-1)


def classify(
    m: Tensor,
    params: ParameterStore,
    rate: float = 0.0,
    rng: Optional[Rng] = None,
    train: bool = False,
) -> Tensor:
    """Two ReLU hidden layers then an affine output layer; returns logits."""
    single = m.ndim == 1
    x = dropout(ad.reshape(m, (1, -1)) if single else m, rate, rng, train)
    x = ad.relu(x @ params["match.fc1.weight"] + params["match.fc1.bias"])
    x = ad.relu(x @ params["match.fc2.weight"] + params["match.fc2.bias"])
    logits = x @ params["match.out.weight"] + params["match.out.bias"]
    return ad.reshape(logits, (-1,)) if single else logits

"""Training objectives: Gaussian KL, negated lower bound, matching loss, joint loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .config import TrainingMode

__all__ = [
    "TrainingMode",
    "AlphaSchedule",
    "LossBreakdown",
    "gaussian_kl",
    "elbo_loss",
    "matching_loss",
    "matching_loss_rows",
    "l2_penalty",
    "sentence_objective",
    "joint_loss",
]


@dataclass(frozen=True)
class AlphaSchedule:
    """Linear ramp of the matching-loss weight from 0 to 1."""

    anneal_steps: int = 5000

    def __call__(self, step: int) -> float:
        if self.anneal_steps <= 0:
            return 1.0
        return min(step / self.anneal_steps, 1.0)


@dataclass
class LossBreakdown:
    total: Tensor
    recon_p: float = 0.0
    recon_h: float = 0.0
    kl_p: float = 0.0
    kl_h: float = 0.0
    match: float = 0.0
    l2: float = 0.0
    alpha: float = 0.0
    l2_coef: float = 0.0

    @property
    def recon(self) -> float:
        return self.recon_p + self.recon_h

    @property
    def kl(self) -> float:
        return self.kl_p + self.kl_h

    @property
    def kl_fraction(self) -> float:
        denom = self.kl + self.recon
        return self.kl / denom if denom > 0 else 0.0


def gaussian_kl(mu, log_sigma) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over the last axis."""
    mu, log_sigma = ad._as_tensor(mu), ad._as_tensor(log_sigma)
    var = ad.exp(log_sigma * 2.0)
    return ad.sum(ad.square(mu) + var - 1.0 - log_sigma * 2.0, axis=-1) * 0.5


def elbo_loss(recon_ll: Tensor, kl: Optional[Tensor]) -> Tensor:
    """Per-sentence negated lower bound; ``kl=None`` gives the autoencoder loss."""
    loss = -recon_ll
    return loss if kl is None else loss + kl


def matching_loss_rows(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Per-row cross-entropy ``-log softmax(logits)[label]``."""
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = logits.shape[-1]
    if labels.size and (labels.max() >= n_classes or labels.min() < 0):
        raise ValueError(f"label out of range for {n_classes} classes: {labels.tolist()}")
    return -ad.pick(ad.log_softmax(logits, axis=-1), labels)


def matching_loss(logits: Tensor, labels: np.ndarray, label_mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean cross-entropy over rows with ``label_mask`` set; 0 when none are."""
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.ones(labels.shape, bool) if label_mask is None else np.asarray(label_mask, bool)
    n = int(mask.sum())
    if n == 0:
        return Tensor(0.0)
    safe = np.where(mask, labels, 0)
    rows = matching_loss_rows(logits, safe)
    return ad.sum(rows * mask.astype(np.float64)) * (1.0 / n)


def l2_penalty(params: ParameterStore) -> Tensor:
    """Squared norm of weight matrices; biases and the embedding table are excluded."""
    terms = [ad.sum(ad.square(t)) for name, t in params.items() if name.endswith(".weight")]
    if not terms:
        return Tensor(0.0)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total


def _masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    n = int(mask.sum())
    if n == 0:
        return Tensor(0.0)
    return ad.sum(x * mask.astype(np.float64)) * (1.0 / n)


def sentence_objective(
    recon_ll: Tensor, kl: Optional[Tensor], l2: Optional[Tensor] = None, l2_coef: float = 0.0
) -> LossBreakdown:
    """Single-sentence training loss, averaged over the batch."""
    n = recon_ll.shape[0]
    recon = ad.sum(-recon_ll) * (1.0 / n)
    total = recon
    kl_mean = None
    if kl is not None:
        kl_mean = ad.sum(kl) * (1.0 / n)
        total = total + kl_mean
    l2_value = 0.0
    if l2 is not None and l2_coef > 0:
        total = total + l2 * l2_coef
        l2_value = l2.item()
    return LossBreakdown(
        total,
        recon_p=recon.item(),
        kl_p=kl_mean.item() if kl_mean is not None else 0.0,
        l2=l2_value,
        l2_coef=l2_coef,
    )


def joint_loss(
    recon_p: Optional[Tensor],
    recon_h: Optional[Tensor],
    kl_p: Optional[Tensor],
    kl_h: Optional[Tensor],
    match_rows: Optional[Tensor],
    label_mask: np.ndarray,
    alpha: float,
    l2: Optional[Tensor] = None,
    l2_coef: float = 0.0,
    use_unlabeled: bool = True,
) -> LossBreakdown:
    """Mean over labeled pairs of the labeled loss plus mean over unlabeled pairs of the unlabeled loss.

    ``recon_*`` are per-pair negative log-likelihoods, ``kl_*`` per-pair KL
    terms (``None`` drops them), ``match_rows`` per-pair cross-entropies
    (``None`` when there is no classifier).  Only the matching term is
    scaled by ``alpha``.
    """
    label_mask = np.asarray(label_mask, bool)
    groups = [label_mask]
    if use_unlabeled:
        groups.append(~label_mask)

    parts = {"recon_p": recon_p, "recon_h": recon_h, "kl_p": kl_p, "kl_h": kl_h}
    reported = dict.fromkeys(parts, 0.0)
    total: Tensor = Tensor(0.0)
    for key, value in parts.items():
        if value is None:
            continue
        for mask in groups:
            term = _masked_mean(value, mask)
            total = total + term
            reported[key] += term.item()

    match_value = 0.0
    if match_rows is not None:
        match = _masked_mean(match_rows, label_mask)
        match_value = match.item()
        total = total + match * alpha

    l2_value = 0.0
    if l2 is not None and l2_coef > 0:
        total = total + l2 * l2_coef
        l2_value = l2.item()

    return LossBreakdown(total, match=match_value, l2=l2_value, alpha=alpha, l2_coef=l2_coef, **reported)

"""Adam optimization loop, per-epoch metrics, checkpointing and early stopping."""

from __future__ import annotations

import logging
import math
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .autodiff import ParameterStore, Rng, backward
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ModelConfig, TrainingMode, dump_config, parse_config_text, build_config
from .model import init_params, pair_loss, predict_logits, sentence_loss, token_accuracy
from .objectives import AlphaSchedule, LossBreakdown
from .text import PairDataset, SentenceDataset, Vocabulary

logger = logging.getLogger(__name__)

Dataset = Union[SentenceDataset, PairDataset]

CSV_HEADER = "epoch,step,loss,recon,kl,match,kl_fraction,val_accuracy,val_loss"


class DivergenceError(ArithmeticError):
    """Non-finite loss or gradient during training."""


@dataclass
class AdamState:
    m: "OrderedDict[str, np.ndarray]"
    v: "OrderedDict[str, np.ndarray]"
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: ParameterStore, lr: float) -> "AdamState":
        zeros = lambda: OrderedDict((k, np.zeros_like(t.data)) for k, t in params.items())  # noqa: E731
        return cls(zeros(), zeros(), 0, lr)


def adam_step(params: ParameterStore, state: AdamState) -> None:
    """One bias-corrected Adam update over ``params`` in their stored order."""
    for name, t in params.items():
        if t.grad is None or not np.all(np.isfinite(t.grad)):
            raise DivergenceError(f"non-finite gradient for parameter {name}")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for name, t in params.items():
        g = t.grad
        m = state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        t.data = t.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class EpochRecord:
    epoch: int
    step: int
    loss: float
    recon: float
    kl: float
    match: float
    kl_fraction: float
    val_accuracy: float = float("nan")
    val_loss: float = float("nan")
    seconds: float = 0.0

    def csv_row(self) -> str:
        values = [self.loss, self.recon, self.kl, self.match, self.kl_fraction, self.val_accuracy, self.val_loss]
        return ",".join([str(self.epoch), str(self.step)] + [repr(float(v)) for v in values])


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_metric: Optional[float] = None
    stopped_early: bool = False

    @property
    def last(self) -> Optional[EpochRecord]:
        return self.epochs[-1] if self.epochs else None


class Trainer:
    """Owns parameters, optimizer state and the random stream for one run.

    Batch order for epoch ``e`` is a permutation drawn from a stream seeded
    with ``(seed, e)``, so resuming at any step reproduces the same batches.
    All other randomness (dropout masks, latent noise) is drawn from the
    main stream, whose state is part of every checkpoint.
    """

    def __init__(
        self,
        config: ModelConfig,
        train_data: Dataset,
        vocab: Vocabulary,
        valid_data: Optional[Dataset] = None,
        params: Optional[ParameterStore] = None,
        embedding: Optional[np.ndarray] = None,
    ):
        self.config = config
        self.mode = config.mode
        self.vocab = vocab
        self.rng = Rng(config.seed)
        self.params = params or init_params(config, len(vocab), self.rng, self.mode, embedding)
        self.adam = AdamState.create(self.params, config.lr)
        self.alpha = AlphaSchedule(config.anneal_steps)
        self.step = 0
        # early-stopping state, carried through checkpoints
        self.best_metric: Optional[float] = None
        self.best_epoch: Optional[int] = None
        self.stale = 0
        # DECONV_AE trains on either single sentences or pairs
        sentence_modes = (TrainingMode.UNSUP_LVM, TrainingMode.DECONV_AE)
        self.pairs = isinstance(train_data, PairDataset) and self.mode is not TrainingMode.UNSUP_LVM
        if not self.pairs and self.mode not in sentence_modes:
            raise TypeError(f"mode {self.mode.value} needs a pair dataset")
        if not self.pairs and isinstance(train_data, PairDataset):
            train_data = train_data.sentences()
        if self.pairs and not self.mode.uses_unlabeled:
            train_data = train_data.labeled()
        if len(train_data) == 0:
            raise ValueError("no training examples for this mode")
        self.train_data = train_data
        self.valid_data = valid_data
        self._order_cache: tuple[int, np.ndarray] = (-1, np.empty(0, dtype=np.int64))

    # -- batching -----------------------------------------------------------

    @property
    def batches_per_epoch(self) -> int:
        return math.ceil(len(self.train_data) / self.config.batch_size)

    def epoch_order(self, epoch: int) -> np.ndarray:
        if self._order_cache[0] != epoch:
            self._order_cache = (epoch, Rng([self.config.seed, epoch]).permutation(len(self.train_data)))
        return self._order_cache[1]

    def _batch_at(self, step: int):
        epoch, pos = divmod(step, self.batches_per_epoch)
        bs = self.config.batch_size
        return self.train_data.batch(self.epoch_order(epoch)[pos * bs : (pos + 1) * bs])

    # -- optimization -------------------------------------------------------

    def loss(self, batch, train: bool = True) -> LossBreakdown:
        if self.pairs:
            return pair_loss(self.params, self.config, batch, self.rng, self.mode, self.alpha(self.step), train)
        return sentence_loss(self.params, self.config, batch.tokens, batch.lengths, self.rng, self.mode, train)

    def train_step(self) -> LossBreakdown:
        batch = self._batch_at(self.step)
        self.params.zero_grad()
        out = self.loss(batch)
        if not np.isfinite(out.total.item()):
            raise DivergenceError(f"non-finite loss at step {self.step}")
        backward(out.total, self.params)
        adam_step(self.params, self.adam)
        self.step += 1
        return out

    def train_steps(self, n: int) -> list[LossBreakdown]:
        return [self.train_step() for _ in range(n)]

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, data: Optional[Dataset] = None) -> tuple[float, float]:
        """(accuracy, loss) with ``z = mu`` and no dropout.

        Accuracy is label accuracy for matching modes and token
        reconstruction accuracy for unsupervised modes.
        """
        data = self.valid_data if data is None else data
        if data is None or len(data) == 0:
            return float("nan"), float("nan")
        if self.pairs:
            logits = predict_logits(self.params, self.config, data.tokens, data.second_tokens)
            return float(np.mean(np.argmax(logits, axis=1) == data.labels)), float("nan")
        if isinstance(data, PairDataset):
            data = data.sentences()
        total, n = 0.0, 0
        for batch in data.batches(256):
            out = sentence_loss(self.params, self.config, batch.tokens, batch.lengths, None, self.mode, train=False)
            total += (out.total.item() - out.l2 * out.l2_coef) * len(batch)
            n += len(batch)
        return token_accuracy(self.params, self.config, data.tokens, data.lengths), total / n

    # -- full loop ----------------------------------------------------------

    def fit(
        self,
        epochs: Optional[int] = None,
        out_dir=None,
        log: Optional[Callable[[str], None]] = None,
    ) -> TrainReport:
        """Train until ``epochs`` total epochs have run or validation stalls.

        With ``out_dir`` set, appends per-epoch metrics to ``metrics.csv`` and
        writes ``last.ckpt`` every epoch and ``best.ckpt`` on improvement.
        On divergence the last good checkpoint is left in place and
        :class:`DivergenceError` propagates.
        """
        epochs = self.config.epochs if epochs is None else epochs
        out = Path(out_dir) if out_dir is not None else None
        report = TrainReport()
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            csv_path = out / "metrics.csv"
            if self.step == 0 or not csv_path.exists():
                csv_path.write_text(CSV_HEADER + "\n", encoding="utf-8")
            if self.step == 0:
                save_checkpoint(out / "last.ckpt", self.checkpoint())
                save_checkpoint(out / "best.ckpt", self.checkpoint())
        higher_is_better = self.pairs
        nb = self.batches_per_epoch
        while self.step < epochs * nb:
            epoch = self.step // nb
            started = time.perf_counter()
            sums = np.zeros(4)
            count = 0
            while self.step < (epoch + 1) * nb:
                b = self.train_step()
                sums += (b.total.item(), b.recon, b.kl, b.match)
                count += 1
            loss, recon, kl, match = sums / count
            frac = kl / (kl + recon) if kl + recon > 0 else 0.0
            val_acc, val_loss = self.evaluate()
            record = EpochRecord(epoch + 1, self.step, loss, recon, kl, match, frac, val_acc, val_loss,
                                 time.perf_counter() - started)
            report.epochs.append(record)
            if log is not None:
                log(
                    f"epoch {record.epoch:4d} step {record.step:6d} loss {loss:.4f} recon {recon:.4f} "
                    f"kl {kl:.4f} match {match:.4f} kl_frac {frac:.4f} val_acc {val_acc:.4f} "
                    f"val_loss {val_loss:.4f} ({record.seconds:.1f}s)"
                )
            metric = val_acc if higher_is_better else -val_loss
            # without validation data every epoch counts as an improvement
            improved = bool(np.isnan(metric)) or self.best_metric is None or metric > self.best_metric
            if improved:
                self.best_epoch = record.epoch
                self.best_metric = None if np.isnan(metric) else float(metric)
                self.stale = 0
            else:
                self.stale += 1
            if out is not None:
                with open(out / "metrics.csv", "a", encoding="utf-8") as fh:
                    fh.write(record.csv_row() + "\n")
                save_checkpoint(out / "last.ckpt", self.checkpoint())
                if improved:
                    save_checkpoint(out / "best.ckpt", self.checkpoint())
            if self.stale >= self.config.patience:
                report.stopped_early = True
                break
        report.best_epoch, report.best_metric = self.best_epoch, self.best_metric
        return report

    # -- checkpoints --------------------------------------------------------

    def checkpoint(self) -> Checkpoint:
        tensors = self.params.state()
        for name in self.params:
            tensors[f"adam.m.{name}"] = self.adam.m[name].copy()
            tensors[f"adam.v.{name}"] = self.adam.v[name].copy()
        return Checkpoint(
            config_text=dump_config(self.config),
            tensors=tensors,
            rng_state=self.rng.state,
            step=self.step,
            adam_step=self.adam.step,
            vocab=list(self.vocab.itos),
            extra={"best_metric": self.best_metric, "best_epoch": self.best_epoch, "stale": self.stale},
        )

    @classmethod
    def from_checkpoint(
        cls,
        ckpt: Union[Checkpoint, str, Path],
        train_data: Dataset,
        valid_data: Optional[Dataset] = None,
    ) -> "Trainer":
        if not isinstance(ckpt, Checkpoint):
            ckpt = load_checkpoint(ckpt)
        config = config_from_checkpoint(ckpt)
        vocab = Vocabulary(ckpt.vocab[2:])
        params = params_from_checkpoint(ckpt)
        trainer = cls(config, train_data, vocab, valid_data, params=params)
        for name in params:
            trainer.adam.m[name] = ckpt.tensors[f"adam.m.{name}"].copy()
            trainer.adam.v[name] = ckpt.tensors[f"adam.v.{name}"].copy()
        trainer.adam.step = ckpt.adam_step
        trainer.rng.state = ckpt.rng_state
        trainer.step = ckpt.step
        trainer.best_metric = ckpt.extra.get("best_metric")
        trainer.best_epoch = ckpt.extra.get("best_epoch")
        trainer.stale = ckpt.extra.get("stale", 0)
        return trainer


def config_from_checkpoint(ckpt: Checkpoint) -> ModelConfig:
    values = parse_config_text(ckpt.config_text)
    return build_config(values.get("preset", "desk"), values)


def params_from_checkpoint(ckpt: Checkpoint) -> ParameterStore:
    return ParameterStore((name, arr.copy()) for name, arr in ckpt.params().items())

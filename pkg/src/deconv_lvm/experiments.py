"""Desk-scale experiments shared by the acceptance suite and the demo scripts.

Each function builds its synthetic corpus, trains with the ``desk`` preset
and returns plain numbers, so callers decide what to assert or print.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .config import ModelConfig, TrainingMode, build_config
from .corpus import matching_corpus, style_corpus
from .evaluation import labeled_fraction_sweep, linear_probe, mean_embedding_features, summarize_sweep
from .model import embed_means, token_accuracy
from .text import Vocabulary, sentence_dataset, tokenize
from .trainer import Trainer

Log = Optional[Callable[[str], None]]


def _vocab(sentences: Sequence[str], limit: int) -> Vocabulary:
    return Vocabulary.build([tokenize(s) for s in sentences], limit - 2)


@dataclass
class OverfitResult:
    token_accuracy: float
    epochs: int
    seconds: float


def overfit(n_sentences: int = 32, max_epochs: int = 500, seed: int = 0, corpus_seed: int = 3, log: Log = None) -> OverfitResult:
    """Train UNSUP_LVM on a tiny corpus until every token is reconstructed (or ``max_epochs``)."""
    text = [s for s, _ in style_corpus(n_sentences // 2, seed=corpus_seed)]
    vocab = _vocab(text, 10_000)
    data = sentence_dataset(text, vocab, 29)
    cfg = build_config("desk", dict(mode=TrainingMode.UNSUP_LVM, seed=seed))
    trainer = Trainer(cfg, data, vocab)
    started = time.perf_counter()
    acc, epoch = 0.0, 0
    for epoch in range(1, max_epochs + 1):
        trainer.train_steps(trainer.batches_per_epoch)
        if epoch % 25 == 0 or epoch == max_epochs:
            acc = token_accuracy(trainer.params, cfg, data.tokens, data.lengths)
            if log is not None:
                log(f"epoch {epoch:4d} token accuracy {acc:.4f}")
            if acc == 1.0:
                break
    return OverfitResult(acc, epoch, time.perf_counter() - started)


@dataclass
class StyleResult:
    lvm_probe: float
    ae_probe: float
    baseline_probe: float
    kl_fraction: float
    lvm_codes: np.ndarray = field(repr=False)
    tags: list = field(repr=False)
    seconds: float = 0.0


def style_separation(
    lvm_epochs: int = 40,
    ae_epochs: int = 20,
    n_probe: int = 200,
    seed: int = 0,
    corpus_seed: int = 11,
    log: Log = None,
) -> StyleResult:
    """Two-style corpus (2x1000 train, 2x500 test): probe frozen codes for style.

    Styles alternate in the generated list, so both halves are balanced.
    The baseline probes the average of the trained model's word embeddings.
    """
    rows = style_corpus(1500, seed=corpus_seed, vocab_size=200)
    train_rows, test_rows = rows[:2000], rows[2000:]
    vocab = _vocab([s for s, _ in train_rows], 10_000)
    train = sentence_dataset([s for s, _ in train_rows], vocab, 29)
    test = sentence_dataset([s for s, _ in test_rows], vocab, 29)
    y_train = np.array([t == "formal" for _, t in train_rows], dtype=np.int64)
    y_test = np.array([t == "formal" for _, t in test_rows], dtype=np.int64)
    started = time.perf_counter()

    def run(mode: TrainingMode, epochs: int) -> tuple[Trainer, float]:
        cfg = build_config("desk", dict(mode=mode, seed=seed, epochs=epochs))
        trainer = Trainer(cfg, train, vocab)
        report = trainer.fit(log=(lambda s: log(f"{mode.value}: {s}")) if log else None)
        return trainer, report.last.kl_fraction

    def probe(trainer: Trainer) -> tuple[float, np.ndarray]:
        tr = embed_means(trainer.params, trainer.config, train.tokens)
        te = embed_means(trainer.params, trainer.config, test.tokens)
        return linear_probe(tr, y_train, te, y_test, n_probe, seed=seed).accuracy, te

    lvm, kl_fraction = run(TrainingMode.UNSUP_LVM, lvm_epochs)
    lvm_acc, codes = probe(lvm)
    table = lvm.params["embedding"].data
    base = linear_probe(
        mean_embedding_features(train.tokens, train.lengths, table), y_train,
        mean_embedding_features(test.tokens, test.lengths, table), y_test, n_probe, seed=seed,
    ).accuracy
    ae, _ = run(TrainingMode.DECONV_AE, ae_epochs)
    ae_acc, _ = probe(ae)
    return StyleResult(lvm_acc, ae_acc, base, kl_fraction, codes, [t for _, t in test_rows], time.perf_counter() - started)


@dataclass
class MatchingResult:
    rows: list
    means: dict
    seconds: float


def matching_config(**overrides) -> ModelConfig:
    """Desk settings for the matching sweep: 15 epochs, alpha reaches 1 after 1000 steps."""
    values = dict(epochs=15, anneal_steps=1000, patience=100)
    values.update(overrides)
    return build_config("desk", values)


def semi_supervised_sweep(
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    fractions: Sequence[float] = (0.1,),
    corpus_seed: int = 100,
    config: Optional[ModelConfig] = None,
    out_csv=None,
    log: Log = None,
) -> MatchingResult:
    """5000 training pairs, 500 validation, 1000 test; every sweep mode per (fraction, seed)."""
    pairs = [(a, b, int(y)) for a, b, y in matching_corpus(6500, seed=corpus_seed)]
    train, valid, test = pairs[:5000], pairs[5000:5500], pairs[5500:]
    vocab = Vocabulary.build([tokenize(a) + tokenize(b) for a, b, _ in train])
    started = time.perf_counter()
    rows = labeled_fraction_sweep(
        config or matching_config(), train, test, vocab, fractions, seeds, valid_rows=valid, out_csv=out_csv, log=log
    )
    return MatchingResult(rows, summarize_sweep(rows), time.perf_counter() - started)

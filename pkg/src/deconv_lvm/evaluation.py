"""Post-hoc analyses: linear probes, 2-D embedding export, labeled-fraction sweeps.

Every path here encodes with ``z = mu`` and no dropout.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .autodiff import ParameterStore, Rng, Tensor, backward
from .checkpoint import load_checkpoint
from .config import ModelConfig, TrainingMode
from .model import embed_means, predict_logits
from .objectives import matching_loss
from .text import PairDataset, Vocabulary, pair_dataset, read_sentences, sentence_dataset
from .trainer import AdamState, Trainer, adam_step, config_from_checkpoint, params_from_checkpoint


@dataclass
class ProbeResult:
    train_size: int
    accuracy: float
    per_class: dict


def linear_probe(
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
    n_train: Optional[int] = None,
    seed: int = 0,
    steps: int = 500,
    lr: float = 0.05,
) -> ProbeResult:
    """Fit an affine softmax classifier on frozen features and score it on held-out data.

    ``n_train`` rows are sampled (seeded) from the training pool.  Features
    are standardized with the sampled rows' statistics; the classifier is
    trained full-batch with Adam.
    """
    train_x, test_x = np.asarray(train_x, float), np.asarray(test_x, float)
    train_y, test_y = np.asarray(train_y, np.int64), np.asarray(test_y, np.int64)
    n_train = len(train_x) if n_train is None else n_train
    if n_train > len(train_x):
        raise ValueError(f"n_train={n_train} exceeds the {len(train_x)} available training rows")
    rng = Rng(seed)
    idx = rng.permutation(len(train_x))[:n_train]
    x, y = train_x[idx], train_y[idx]
    if len(np.unique(y)) < 2:
        raise ValueError("probe training subset contains a single class")
    n_classes = int(max(train_y.max(), test_y.max())) + 1
    mean, std = x.mean(axis=0), x.std(axis=0) + 1e-8
    xs = Tensor((x - mean) / std)
    params = ParameterStore([("probe.weight", np.zeros((x.shape[1], n_classes))), ("probe.bias", np.zeros(n_classes))])
    state = AdamState.create(params, lr)
    for _ in range(steps):
        params.zero_grad()
        loss = matching_loss(xs @ params["probe.weight"] + params["probe.bias"], y)
        backward(loss, params)
        adam_step(params, state)
    logits = ((test_x - mean) / std) @ params["probe.weight"].data + params["probe.bias"].data
    pred = np.argmax(logits, axis=1)
    per_class = {int(c): float(np.mean(pred[test_y == c] == c)) for c in np.unique(test_y)}
    return ProbeResult(n_train, float(np.mean(pred == test_y)), per_class)


def mean_embedding_features(tokens: np.ndarray, lengths: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Average of the embedding columns of each sentence's tokens (bag-of-words baseline)."""
    vecs = table[:, tokens].transpose(1, 2, 0)
    mask = (np.arange(tokens.shape[1])[None, :] < lengths[:, None])[..., None]
    return (vecs * mask).sum(axis=1) / np.maximum(lengths, 1)[:, None]


def pca_2d(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project rows onto the top two principal components.

    Returns (coordinates[N, 2], components[2, D], explained variances[2]).
    Each component's largest-magnitude loading is made positive.
    """
    x = np.asarray(x, float)
    centered = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    comps = np.zeros((2, x.shape[1]))
    k = min(2, vt.shape[0])
    comps[:k] = vt[:k]
    for row in comps:
        if np.any(row):
            row *= np.sign(row[np.argmax(np.abs(row))])
    variances = np.zeros(2)
    variances[:k] = s[:k] ** 2 / max(len(x), 1)
    return centered @ comps.T, comps, variances


def _format_float(v: float) -> str:
    return repr(float(v))


def export_embeddings_2d(checkpoint_path, corpus_path, out_path) -> list[tuple[int, str, float, float]]:
    """Encode a tagged sentence corpus with a checkpoint and write ``id,tag,pc1,pc2`` CSV."""
    ckpt = load_checkpoint(checkpoint_path)
    config = config_from_checkpoint(ckpt)
    params = params_from_checkpoint(ckpt)
    vocab = Vocabulary(ckpt.vocab[2:])
    sentences, tags = read_sentences(corpus_path)
    data = sentence_dataset(sentences, vocab, config.t_max, tags)
    coords, _, _ = pca_2d(embed_means(params, config, data.tokens))
    rows = [(i, tag, float(c[0]), float(c[1])) for i, (tag, c) in enumerate(zip(tags, coords))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "tag", "pc1", "pc2"])
    for i, tag, a, b in rows:
        w.writerow([i, tag, _format_float(a), _format_float(b)])
    try:
        Path(out_path).write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write embedding export to {out_path}: {exc}") from exc
    return rows


def matching_accuracy(params: ParameterStore, config: ModelConfig, data: PairDataset) -> float:
    logits = predict_logits(params, config, data.tokens, data.second_tokens)
    return float(np.mean(np.argmax(logits, axis=1) == data.labels))


SWEEP_MODES = (TrainingMode.ENCODER_ONLY, TrainingMode.DECONV_AE, TrainingMode.SEMI_LVM)
SWEEP_HEADER = ["fraction", "seed", "mode", "test_accuracy", "best_epoch", "epochs_run"]


def labeled_fraction_sweep(
    config: ModelConfig,
    train_rows: Sequence[tuple[str, str, int]],
    test_rows: Sequence[tuple[str, str, int]],
    vocab: Vocabulary,
    fractions: Sequence[float],
    seeds: Sequence[int],
    modes: Sequence[TrainingMode] = SWEEP_MODES,
    valid_rows: Optional[Sequence[tuple[str, str, int]]] = None,
    out_csv=None,
    log: Optional[Callable[[str], None]] = None,
) -> list[dict]:
    """Train every (fraction, seed, mode) cell and record test accuracy.

    The labeled subset depends on (fraction, seed) only, so all modes in a
    cell row see the same labels; the model's random stream is seeded with
    ``seed``.  Test accuracy is taken from the best-validation epoch when
    ``valid_rows`` is given, otherwise from the last epoch.
    """
    test = pair_dataset(test_rows, vocab, config.t_max)
    valid = pair_dataset(valid_rows, vocab, config.t_max) if valid_rows is not None else None
    results = []
    for fraction in fractions:
        if not 0.0 < fraction <= 1.0:
            raise ValueError(f"labeled fraction must lie in (0, 1], got {fraction}")
        for seed in seeds:
            train = pair_dataset(train_rows, vocab, config.t_max, fraction, seed)
            for mode in modes:
                cell = config.replace(mode=TrainingMode(mode), seed=int(seed), labeled_fraction=fraction)
                trainer = Trainer(cell, train, vocab, valid)
                best_state, best_acc = None, -1.0
                report_epochs = 0
                stale = 0
                for _ in range(cell.epochs):
                    trainer.train_steps(trainer.batches_per_epoch)
                    report_epochs += 1
                    if valid is None:
                        continue
                    acc, _ = trainer.evaluate(valid)
                    if acc > best_acc:
                        best_acc, best_state, best_epoch, stale = acc, trainer.params.state(), report_epochs, 0
                    else:
                        stale += 1
                        if stale >= cell.patience:
                            break
                if best_state is not None:
                    trainer.params.load_state(best_state)
                else:
                    best_epoch = report_epochs
                acc = matching_accuracy(trainer.params, cell, test)
                row = {
                    "fraction": fraction,
                    "seed": int(seed),
                    "mode": TrainingMode(mode).value,
                    "test_accuracy": acc,
                    "best_epoch": best_epoch,
                    "epochs_run": report_epochs,
                }
                results.append(row)
                if log is not None:
                    log(f"fraction {fraction} seed {seed} {row['mode']:12s} test_acc {acc:.4f} best_epoch {best_epoch}")
    if out_csv is not None:
        write_sweep_csv(out_csv, results)
    return results


def write_sweep_csv(path, rows: Sequence[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([repr(float(r["fraction"])), r["seed"], r["mode"], repr(float(r["test_accuracy"])), r["best_epoch"], r["epochs_run"]])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def summarize_sweep(rows: Sequence[dict]) -> dict:
    """Mean test accuracy per (fraction, mode)."""
    out: dict = {}
    for r in rows:
        out.setdefault((r["fraction"], r["mode"]), []).append(r["test_accuracy"])
    return {k: float(np.mean(v)) for k, v in out.items()}

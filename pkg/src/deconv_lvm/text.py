"""Tokenization, vocabularies, padded batches and dataset files.

Dataset formats:

* sentence corpus: one sentence per line, optionally followed by a TAB and
  a style/class tag;
* pair corpus: ``sentence1 TAB sentence2 TAB label``;
* pretrained vectors: ``token f1 f2 ... fd`` per line.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .autodiff import Rng, Tensor

logger = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class DataError(ValueError):
    """Malformed dataset or embedding file."""


def tokenize(text: str) -> list[str]:
    """Lowercase, then split into word runs and single punctuation marks.

    >>> tokenize("A man sleeps.")
    ['a', 'man', 'sleeps', '.']
    """
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Token/index mapping with PAD=0 and UNK=1 reserved."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self.stoi: dict[str, int] = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]], max_words: Optional[int] = None) -> "Vocabulary":
        """Keep the ``max_words`` most frequent tokens, ties broken lexicographically."""
        counts = Counter(tok for sent in sentences for tok in sent)
        for reserved in (PAD_TOKEN, UNK_TOKEN):
            counts.pop(reserved, None)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if max_words is not None:
            ranked = ranked[:max_words]
        return cls([tok for tok, _ in ranked])

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def decode(self, indices: Iterable[int]) -> list[str]:
        return [self.itos[int(i)] for i in indices]

    def words(self) -> list[str]:
        """Non-reserved tokens in index order."""
        return self.itos[2:]


def encode_pad(tokens: Sequence[str], vocab: Vocabulary, t_max: int) -> tuple[np.ndarray, int]:
    ids = np.full(t_max, PAD, dtype=np.int64)
    kept = [vocab.index(t) for t in tokens[:t_max]]
    ids[: len(kept)] = kept
    return ids, len(kept)


@dataclass
class Batch:
    """Padded token matrices for one minibatch.

    ``second_*`` are set for sentence pairs; ``label_mask`` marks rows whose
    label may be used (semi-supervised training).
    """

    tokens: np.ndarray
    lengths: np.ndarray
    second_tokens: Optional[np.ndarray] = None
    second_lengths: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    label_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.label_mask is not None and self.labels is None:
            raise DataError("label_mask given without labels")

    def __len__(self) -> int:
        return self.tokens.shape[0]

    @property
    def is_pair(self) -> bool:
        return self.second_tokens is not None


def _encode_many(sentences: Sequence[Sequence[str]], vocab: Vocabulary, t_max: int):
    tokens = np.zeros((len(sentences), t_max), dtype=np.int64)
    lengths = np.zeros(len(sentences), dtype=np.int64)
    for i, sent in enumerate(sentences):
        tokens[i], lengths[i] = encode_pad(sent, vocab, t_max)
    return tokens, lengths


def oov_rate(sentences: Sequence[Sequence[str]], vocab: Vocabulary) -> float:
    total = sum(len(s) for s in sentences)
    if total == 0:
        return 0.0
    return sum(tok not in vocab for s in sentences for tok in s) / total


@dataclass
class SentenceDataset:
    tokens: np.ndarray
    lengths: np.ndarray
    tags: list[str] = field(default_factory=list)
    oov: float = 0.0

    def __len__(self) -> int:
        return self.tokens.shape[0]

    def batch(self, index: np.ndarray) -> Batch:
        return Batch(self.tokens[index], self.lengths[index])

    def batches(self, batch_size: int, order: Optional[np.ndarray] = None) -> Iterator[Batch]:
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(order), batch_size):
            yield self.batch(order[start : start + batch_size])


@dataclass
class PairDataset:
    tokens: np.ndarray
    lengths: np.ndarray
    second_tokens: np.ndarray
    second_lengths: np.ndarray
    labels: np.ndarray
    label_mask: np.ndarray
    oov: float = 0.0

    def __len__(self) -> int:
        return self.tokens.shape[0]

    def batch(self, index: np.ndarray) -> Batch:
        return Batch(
            self.tokens[index],
            self.lengths[index],
            self.second_tokens[index],
            self.second_lengths[index],
            self.labels[index],
            self.label_mask[index],
        )

    def batches(self, batch_size: int, order: Optional[np.ndarray] = None) -> Iterator[Batch]:
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(order), batch_size):
            yield self.batch(order[start : start + batch_size])

    def subset(self, index: np.ndarray) -> "PairDataset":
        return PairDataset(
            self.tokens[index],
            self.lengths[index],
            self.second_tokens[index],
            self.second_lengths[index],
            self.labels[index],
            self.label_mask[index],
            self.oov,
        )

    def labeled(self) -> "PairDataset":
        return self.subset(np.flatnonzero(self.label_mask))

    def sentences(self) -> SentenceDataset:
        """Premises and hypotheses stacked as one single-sentence dataset."""
        return SentenceDataset(
            np.concatenate([self.tokens, self.second_tokens]),
            np.concatenate([self.lengths, self.second_lengths]),
        )


def read_sentences(path) -> tuple[list[str], list[str]]:
    """Read a one-sentence-per-line corpus; returns (sentences, tags)."""
    sentences, tags = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) > 2:
                raise DataError(f"{path}:{lineno}: expected 'sentence[TAB tag]', got {len(parts)} fields")
            sentences.append(parts[0])
            tags.append(parts[1] if len(parts) == 2 else "")
    return sentences, tags


def read_pairs(path, label_set: Sequence[str]) -> list[tuple[str, str, int]]:
    """Read ``sentence1 TAB sentence2 TAB label`` rows, mapping labels to indices."""
    label_index = {lab: i for i, lab in enumerate(label_set)}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(
                    f"{path}:{lineno}: malformed row, expected 3 TAB-separated fields, got {len(parts)}"
                )
            label = parts[2].strip()
            if label not in label_index:
                raise DataError(
                    f"{path}:{lineno}: unknown label {label!r}; allowed labels: {', '.join(label_set)}"
                )
            rows.append((parts[0], parts[1], label_index[label]))
    return rows


def labeled_subset(n: int, fraction: float, seed: int) -> np.ndarray:
    """Boolean mask with exactly ``ceil(fraction * n)`` seeded rows set."""
    mask = np.zeros(n, dtype=bool)
    k = min(n, math.ceil(fraction * n - 1e-12))
    mask[Rng(seed).permutation(n)[:k]] = True
    return mask


def sentence_dataset(sentences: Sequence[str], vocab: Vocabulary, t_max: int, tags=None) -> SentenceDataset:
    toks = [tokenize(s) for s in sentences]
    tokens, lengths = _encode_many(toks, vocab, t_max)
    rate = oov_rate(toks, vocab)
    logger.info("encoded %d sentences, OOV rate %.4f", len(toks), rate)
    return SentenceDataset(tokens, lengths, list(tags) if tags is not None else [""] * len(toks), rate)


def pair_dataset(
    rows: Sequence[tuple[str, str, int]],
    vocab: Vocabulary,
    t_max: int,
    labeled_fraction: float = 1.0,
    seed: int = 0,
) -> PairDataset:
    first = [tokenize(r[0]) for r in rows]
    second = [tokenize(r[1]) for r in rows]
    t1, l1 = _encode_many(first, vocab, t_max)
    t2, l2 = _encode_many(second, vocab, t_max)
    labels = np.array([r[2] for r in rows], dtype=np.int64)
    rate = oov_rate(first + second, vocab)
    logger.info("encoded %d pairs, OOV rate %.4f", len(rows), rate)
    return PairDataset(t1, l1, t2, l2, labels, labeled_subset(len(rows), labeled_fraction, seed), rate)


def load_pairs(
    path,
    vocab: Vocabulary,
    t_max: int,
    labeled_fraction: float,
    seed: int,
    batch_size: int = 32,
    label_set: Sequence[str] = ("0", "1"),
) -> Iterator[Batch]:
    """Stream batches of a pair file in file order, with a seeded labeled subset."""
    data = pair_dataset(read_pairs(path, label_set), vocab, t_max, labeled_fraction, seed)
    yield from data.batches(batch_size)


@dataclass
class EmbeddingMatrix:
    matrix: Tensor
    trainable: bool = True
    matched: int = 0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def random_embeddings(vocab_size: int, dim: int, rng: Rng) -> np.ndarray:
    """Uniform in [-0.1, 0.1] with the PAD column zeroed."""
    table = rng.uniform(-0.1, 0.1, (dim, vocab_size))
    table[:, PAD] = 0.0
    return table


def load_pretrained_embeddings(path, vocab: Vocabulary, dim: int, rng: Rng) -> EmbeddingMatrix:
    """Overwrite random columns with vectors from a word-vector text file.

    PAD and UNK never take file vectors; ``matched`` counts copied columns.
    """
    table = random_embeddings(len(vocab), dim, rng)
    matched = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DataError(f"{path}:{lineno}: expected {dim} values, got {len(values)}")
            idx = vocab.stoi.get(token)
            if idx is None or idx in (PAD, UNK):
                continue
            try:
                table[:, idx] = [float(v) for v in values]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric vector entry") from exc
            matched += 1
    logger.info("pretrained embeddings: matched %d of %d words", matched, len(vocab) - 2)
    return EmbeddingMatrix(Tensor(table, requires_grad=True), True, matched)


def save_vocab(path, vocab: Vocabulary) -> None:
    Path(path).write_text("\n".join(vocab.itos) + "\n", encoding="utf-8")

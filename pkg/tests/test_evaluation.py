import csv

import numpy as np
import pytest

from deconv_lvm.checkpoint import save_checkpoint
from deconv_lvm.config import ModelConfig, TrainingMode
from deconv_lvm.corpus import matching_corpus, write_sentences
from deconv_lvm.evaluation import (
    SWEEP_HEADER,
    export_embeddings_2d,
    labeled_fraction_sweep,
    linear_probe,
    matching_accuracy,
    mean_embedding_features,
    pca_2d,
)
from deconv_lvm.text import Vocabulary, pair_dataset, sentence_dataset, tokenize
from deconv_lvm.trainer import Trainer

TINY = dict(channels=(8, 8, 8), latent_dim=4, emb_dim=8, hidden_dim=6, batch_size=16, epochs=2, anneal_steps=4)


class TestLinearProbe:
    def test_separable_blobs(self):
        r = np.random.default_rng(0)
        x = np.concatenate([r.normal(-3, 1, size=(200, 5)), r.normal(3, 1, size=(200, 5))])
        y = np.repeat([0, 1], 200)
        test = np.concatenate([r.normal(-3, 1, size=(100, 5)), r.normal(3, 1, size=(100, 5))])
        result = linear_probe(x, y, test, np.repeat([0, 1], 100), n_train=100, seed=1)
        assert result.accuracy == 1.0 and result.train_size == 100

    def test_shuffled_labels_are_chance(self):
        r = np.random.default_rng(1)
        x, test = r.normal(size=(500, 8)), r.normal(size=(2000, 8))
        result = linear_probe(x, r.integers(0, 2, 500), test, r.integers(0, 2, 2000), seed=2)
        assert abs(result.accuracy - 0.5) <= 0.05

    def test_single_class(self):
        x = np.zeros((10, 2))
        with pytest.raises(ValueError, match="single class"):
            linear_probe(x, np.zeros(10, int), x, np.zeros(10, int))

    def test_seeded(self):
        r = np.random.default_rng(3)
        x, y = r.normal(size=(300, 4)), r.integers(0, 3, 300)
        a = linear_probe(x, y, x, y, n_train=50, seed=4)
        b = linear_probe(x, y, x, y, n_train=50, seed=4)
        assert a.accuracy == b.accuracy


def test_mean_embedding_features():
    table = np.arange(12.0).reshape(3, 4)
    tokens = np.array([[2, 3, 0], [1, 0, 0]])
    feats = mean_embedding_features(tokens, np.array([2, 1]), table)
    np.testing.assert_allclose(feats, [table[:, [2, 3]].mean(axis=1), table[:, 1]])


class TestPCA:
    def test_against_eigendecomposition(self):
        x = np.random.default_rng(5).normal(size=(10, 4)) @ np.diag([3.0, 2.0, 1.0, 0.5])
        coords, comps, variances = pca_2d(x)
        centered = x - x.mean(axis=0)
        w, v = np.linalg.eigh(centered.T @ centered / len(x))
        top = v[:, np.argsort(w)[::-1][:2]].T
        for c, t in zip(comps, top):
            assert min(np.abs(c - t).max(), np.abs(c + t).max()) < 1e-10
        np.testing.assert_allclose(variances, np.sort(w)[::-1][:2], rtol=1e-10)
        captured = np.sum(coords**2)
        r = np.random.default_rng(6)
        for _ in range(200):
            q, _ = np.linalg.qr(r.normal(size=(4, 2)))
            assert captured >= np.sum((centered @ q) ** 2) - 1e-9

    def test_sign_convention(self):
        _, comps, _ = pca_2d(np.random.default_rng(7).normal(size=(20, 3)))
        for row in comps:
            assert row[np.argmax(np.abs(row))] > 0


def _checkpoint(tmp_path, sentences):
    vocab = Vocabulary.build([tokenize(s) for s in sentences])
    trainer = Trainer(ModelConfig(**TINY), sentence_dataset(sentences, vocab, 29), vocab)
    trainer.train_steps(2)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, trainer.checkpoint())
    return path


class TestExport:
    def test_identical_sentences(self, tmp_path):
        ckpt = _checkpoint(tmp_path, ["the cat sat .", "a dog ran !"])
        corpus = tmp_path / "same.tsv"
        write_sentences(corpus, [("the cat sat .", "x")] * 5)
        rows = export_embeddings_2d(ckpt, corpus, tmp_path / "out.csv")
        assert len({(a, b) for _, _, a, b in rows}) == 1

    def test_row_count_and_header(self, tmp_path):
        ckpt = _checkpoint(tmp_path, ["the cat sat .", "a dog ran !"])
        corpus = tmp_path / "c.tsv"
        write_sentences(corpus, [("the cat sat .", "a"), ("a dog ran !", "b"), ("cat dog", "a")])
        export_embeddings_2d(ckpt, corpus, tmp_path / "out.csv")
        with open(tmp_path / "out.csv") as fh:
            table = list(csv.reader(fh))
        assert table[0] == ["id", "tag", "pc1", "pc2"] and len(table) == 4
        assert [r[1] for r in table[1:]] == ["a", "b", "a"]

    def test_unwritable_path(self, tmp_path):
        ckpt = _checkpoint(tmp_path, ["the cat sat ."])
        corpus = tmp_path / "c.tsv"
        write_sentences(corpus, [("the cat", "a")])
        with pytest.raises(OSError, match="missing"):
            export_embeddings_2d(ckpt, corpus, tmp_path / "missing" / "out.csv")


class TestSweep:
    def data(self):
        rows = [(a, b, int(y)) for a, b, y in matching_corpus(80, seed=2)]
        vocab = Vocabulary.build([tokenize(a) + tokenize(b) for a, b, _ in rows])
        return rows[:60], rows[60:], vocab

    def test_row_count_and_csv(self, tmp_path):
        train, test, vocab = self.data()
        out = tmp_path / "sweep.csv"
        rows = labeled_fraction_sweep(ModelConfig(**TINY), train, test, vocab, [0.5, 1.0], [0, 1], out_csv=out)
        assert len(rows) == 2 * 2 * 3
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(SWEEP_HEADER) and len(lines) == 13

    def test_full_labels_encoder_only_is_supervised_training(self):
        train, test, vocab = self.data()
        cfg = ModelConfig(**TINY)
        rows = labeled_fraction_sweep(cfg, train, test, vocab, [1.0], [3], modes=[TrainingMode.ENCODER_ONLY])
        plain_cfg = cfg.replace(mode=TrainingMode.ENCODER_ONLY, seed=3, labeled_fraction=1.0)
        trainer = Trainer(plain_cfg, pair_dataset(train, vocab, 29, 1.0, 3), vocab)
        trainer.train_steps(cfg.epochs * trainer.batches_per_epoch)
        assert rows[0]["test_accuracy"] == matching_accuracy(trainer.params, plain_cfg, pair_dataset(test, vocab, 29))

    def test_bitwise_reproducible(self):
        train, test, vocab = self.data()
        a = labeled_fraction_sweep(ModelConfig(**TINY), train, test, vocab, [0.5], [0], valid_rows=test)
        b = labeled_fraction_sweep(ModelConfig(**TINY), train, test, vocab, [0.5], [0], valid_rows=test)
        assert a == b

    def test_bad_fraction(self):
        train, test, vocab = self.data()
        with pytest.raises(ValueError):
            labeled_fraction_sweep(ModelConfig(**TINY), train, test, vocab, [0.0], [0])

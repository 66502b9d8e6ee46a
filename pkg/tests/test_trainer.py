import numpy as np
import pytest

from deconv_lvm.autodiff import ParameterStore, Tensor
from deconv_lvm.checkpoint import CheckpointError, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from deconv_lvm.config import ModelConfig, TrainingMode
from deconv_lvm.corpus import matching_corpus, style_corpus
from deconv_lvm.text import Vocabulary, pair_dataset, sentence_dataset, tokenize
from deconv_lvm.trainer import CSV_HEADER, AdamState, DivergenceError, Trainer, adam_step

SMALL = dict(channels=(8, 8, 8), latent_dim=4, emb_dim=8, hidden_dim=6, batch_size=8)


def sentences(n=24, seed=0):
    rows = style_corpus(n // 2, seed=seed, vocab_size=60)
    text = [s for s, _ in rows]
    vocab = Vocabulary.build([tokenize(s) for s in text])
    return sentence_dataset(text, vocab, 29), vocab


def pairs(n=24, fraction=0.5, seed=0):
    rows = [(a, b, int(y)) for a, b, y in matching_corpus(n, seed=seed)]
    vocab = Vocabulary.build([tokenize(a) + tokenize(b) for a, b, _ in rows])
    return pair_dataset(rows, vocab, 29, fraction, seed), vocab


class TestAdam:
    def store(self, grad):
        params = ParameterStore([("w", np.array([1.0, -2.0, 3.0]))])
        params["w"].grad = np.asarray(grad, float)
        return params

    def test_zero_gradient(self):
        params = self.store([0.0, 0.0, 0.0])
        state = AdamState.create(params, 0.1)
        adam_step(params, state)
        assert params["w"].data.tolist() == [1.0, -2.0, 3.0] and state.step == 1

    def test_first_step_is_signed_lr(self):
        params = self.store([0.5, -3.0, 1e-3])
        state = AdamState.create(params, 0.01)
        adam_step(params, state)
        np.testing.assert_allclose(params["w"].data - [1.0, -2.0, 3.0], [-0.01, 0.01, -0.01], rtol=1e-4)

    def test_nan_names_parameter(self):
        params = self.store([0.0, np.nan, 0.0])
        with pytest.raises(DivergenceError, match="parameter w"):
            adam_step(params, AdamState.create(params, 0.01))


class TestTrainer:
    def test_deterministic_100_steps(self):
        data, vocab = sentences()
        cfg = ModelConfig(**SMALL, dropout=0.3)
        a, b = Trainer(cfg, data, vocab), Trainer(cfg, data, vocab)
        a.train_steps(100)
        b.train_steps(100)
        for name, t in a.params.items():
            assert t.data.tobytes() == b.params[name].data.tobytes(), name

    def test_resume_matches_uninterrupted(self):
        data, vocab = pairs()
        cfg = ModelConfig(**SMALL, mode=TrainingMode.SEMI_LVM, dropout=0.3, anneal_steps=7)
        straight = Trainer(cfg, data, vocab)
        straight.train_steps(13)
        first = Trainer(cfg, data, vocab)
        first.train_steps(3)
        resumed = Trainer.from_checkpoint(from_bytes(to_bytes(first.checkpoint())), data)
        resumed.train_steps(10)
        assert to_bytes(resumed.checkpoint()) == to_bytes(straight.checkpoint())

    def test_zero_epochs(self, tmp_path):
        data, vocab = sentences()
        trainer = Trainer(ModelConfig(**SMALL), data, vocab)
        init = trainer.params.state()
        report = trainer.fit(epochs=0, out_dir=tmp_path)
        assert report.epochs == []
        ckpt = load_checkpoint(tmp_path / "last.ckpt")
        for name, arr in init.items():
            assert ckpt.tensors[name].tobytes() == arr.tobytes()

    def test_fit_outputs(self, tmp_path):
        data, vocab = sentences()
        trainer = Trainer(ModelConfig(**SMALL, l2=0.0), data, vocab, valid_data=data)
        report = trainer.fit(epochs=3, out_dir=tmp_path)
        lines = (tmp_path / "metrics.csv").read_text().splitlines()
        assert lines[0] == CSV_HEADER and len(lines) == 4
        assert all(r.kl_fraction > 0 for r in report.epochs)
        assert (tmp_path / "best.ckpt").exists()

    def test_early_stopping(self, tmp_path):
        data, vocab = pairs(fraction=1.0)
        cfg = ModelConfig(**SMALL, mode=TrainingMode.ENCODER_ONLY, lr=0.0, patience=2)
        report = Trainer(cfg, data, vocab, valid_data=data).fit(epochs=10)
        assert report.stopped_early and len(report.epochs) == 3

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence(self):
        data, vocab = sentences()
        trainer = Trainer(ModelConfig(**SMALL), data, vocab)
        trainer.params["enc.mu.weight"].data[0, 0] = np.inf
        with pytest.raises(DivergenceError):
            trainer.train_step()

    def test_labeled_only_modes_filter(self):
        data, vocab = pairs(n=40, fraction=0.25)
        sup = Trainer(ModelConfig(**SMALL, mode=TrainingMode.ENCODER_ONLY), data, vocab)
        semi = Trainer(ModelConfig(**SMALL, mode=TrainingMode.SEMI_LVM), data, vocab)
        assert len(sup.train_data) == 10 and len(semi.train_data) == 40
        assert not any(n.startswith("dec.") for n in sup.params)

    def test_pair_mode_needs_pairs(self):
        data, vocab = sentences()
        with pytest.raises(TypeError):
            Trainer(ModelConfig(**SMALL, mode=TrainingMode.SEMI_LVM), data, vocab)


class TestCheckpoint:
    def ckpt(self):
        data, vocab = sentences()
        trainer = Trainer(ModelConfig(**SMALL), data, vocab)
        trainer.train_steps(2)
        return trainer.checkpoint()

    def test_round_trip(self, tmp_path):
        ckpt = self.ckpt()
        save_checkpoint(tmp_path / "a.ckpt", ckpt)
        loaded = load_checkpoint(tmp_path / "a.ckpt")
        for name, arr in ckpt.tensors.items():
            assert loaded.tensors[name].tobytes() == arr.tobytes()
        save_checkpoint(tmp_path / "b.ckpt", loaded)
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_layout_header(self):
        raw = to_bytes(self.ckpt())
        assert raw[:4] == b"DLVM" and int.from_bytes(raw[4:8], "little") == 1

    def test_wrong_magic(self):
        raw = to_bytes(self.ckpt())
        with pytest.raises(CheckpointError, match="magic"):
            from_bytes(b"XXXX" + raw[4:])

    def test_wrong_version(self):
        raw = to_bytes(self.ckpt())
        with pytest.raises(CheckpointError, match="version"):
            from_bytes(raw[:4] + (7).to_bytes(4, "little") + raw[8:])

    def test_truncated_reports_offset(self, tmp_path):
        raw = to_bytes(self.ckpt())
        (tmp_path / "t.ckpt").write_bytes(raw[: len(raw) - 100])
        with pytest.raises(CheckpointError, match=r"truncated checkpoint at offset \d+"):
            load_checkpoint(tmp_path / "t.ckpt")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="nope.ckpt"):
            load_checkpoint(tmp_path / "nope.ckpt")

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deconv_lvm import autodiff as ad
from deconv_lvm.autodiff import Rng, Tensor
from deconv_lvm.config import ConfigError, ModelConfig, TrainingMode
from deconv_lvm.decoder import (
    decode,
    decoder_channels,
    greedy_tokens,
    reconstruction_log_likelihood,
    word_distribution,
    word_log_distribution,
    word_log_probs,
)
from deconv_lvm.model import init_params

E2 = np.array([[1.0, 0.0], [0.0, 1.0]])


def test_channel_mirror():
    assert decoder_channels(ModelConfig(channels=(300, 600, 500), latent_dim=500, emb_dim=300)) == [500, 600, 300, 300]


class TestDecode:
    cfg = ModelConfig(channels=(6, 7, 8), latent_dim=4, emb_dim=5)

    def params(self):
        return init_params(self.cfg, 10, Rng(0), TrainingMode.UNSUP_LVM)

    def test_extent(self):
        out = decode(Tensor(np.ones((2, 4))), self.params(), self.cfg)
        assert out.shape == (2, 5, 29)

    def test_zero_in_zero_out(self):
        params = self.params()
        for name, t in params.items():
            if name.endswith(".bias"):
                t.data = np.zeros_like(t.data)
        assert np.all(decode(Tensor(np.zeros((3, 4))), params, self.cfg).data == 0)

    def test_wrong_latent(self):
        with pytest.raises(ConfigError):
            decode(Tensor(np.ones((2, 3))), self.params(), self.cfg)

    def test_single_layer_is_overlap_add(self):
        cfg = ModelConfig(t_max=5, channels=(6,), latent_dim=3, emb_dim=4)
        params = init_params(cfg, 10, Rng(1), TrainingMode.UNSUP_LVM)
        params["dec.deconv1.bias"].data = np.array([0.1, -0.2, 0.3, 0.0])
        z = np.random.default_rng(2).normal(size=(2, 3))
        w, b = params["dec.deconv1.weight"].data, params["dec.deconv1.bias"].data
        expected = np.zeros((2, 4, 5))
        for n in range(2):
            for m in range(3):
                for o in range(4):
                    for k in range(5):
                        expected[n, o, k] += z[n, m] * w[m, o, k]
        expected += b[None, :, None]
        np.testing.assert_allclose(decode(Tensor(z), params, cfg).data, expected, atol=1e-14)


class TestWordDistribution:
    def test_symmetric(self):
        for tau in (1.0, 0.01, 5.0):
            np.testing.assert_allclose(word_distribution(Tensor([1.0, 1.0]), Tensor(E2), tau), [0.5, 0.5], atol=1e-12)

    def test_tau_one(self):
        p = word_distribution(Tensor([1.0, 0.0]), Tensor(E2), 1.0, delta=0.0)
        np.testing.assert_allclose(p, [0.73106, 0.26894], atol=1e-5)
        assert abs(p[0] - math.e / (math.e + 1)) < 1e-12

    def test_tau_small_log_space(self):
        logp = word_log_distribution(Tensor([1.0, 0.0]), Tensor(E2), 0.01, delta=0.0).data
        # log(1 - 1e-40) ~= -1e-40; the exact value is -log1p(e^-100) ~= -3.7e-44
        assert logp[0] >= -1e-40
        assert abs(logp[1] - (-100.0 - math.log1p(math.exp(-100.0)))) < 1e-9

    def test_norm_guard_is_tiny(self):
        strict = word_distribution(Tensor([1.0, 0.0]), Tensor(E2), 1.0, delta=0.0)
        guarded = word_distribution(Tensor([1.0, 0.0]), Tensor(E2), 1.0)
        np.testing.assert_allclose(strict, guarded, atol=1e-8)

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ConfigError):
            word_distribution(Tensor([1.0, 0.0]), Tensor(E2), 0.0)

    def test_scale_invariance(self):
        e = Tensor(np.random.default_rng(0).normal(size=(6, 9)))
        col = np.random.default_rng(1).normal(size=6)
        np.testing.assert_allclose(word_distribution(Tensor(col), e, 0.01), word_distribution(Tensor(col * 250.0), e, 0.01), atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-6, 3), st.integers(0, 2**31), st.sampled_from([0.01, 0.1, 1.0]))
    def test_normalized_and_finite(self, log_norm, seed, tau):
        r = np.random.default_rng(seed)
        col = r.normal(size=8)
        col *= 10.0**log_norm / np.linalg.norm(col)
        p = word_distribution(Tensor(col), Tensor(r.normal(size=(8, 30))), tau)
        assert np.all(np.isfinite(p))
        assert abs(p.sum() - 1.0) < 1e-9


class TestReconstruction:
    def setup_method(self):
        # orthonormal embedding columns: a clean "perfect decoder" target
        q, _ = np.linalg.qr(np.random.default_rng(3).normal(size=(8, 8)))
        self.table = q[:, :6]

    def test_perfect_decoder(self):
        words = np.array([[2, 0, 5, 1, 3]])  # scored indices
        z3 = Tensor(self.table[:, words[0]][None])
        logp = word_log_probs(z3, Tensor(self.table), 0.01)
        picked = np.take_along_axis(logp.data, words[..., None], axis=-1)
        assert np.all(picked > math.log(0.999))
        assert np.array_equal(greedy_tokens(logp, score_pad=False), words + 1)

    def test_row_sums(self):
        z3 = Tensor(np.random.default_rng(4).normal(size=(2, 8, 5)))
        p = np.exp(word_log_probs(z3, Tensor(self.table), 0.01).data)
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-9)

    def test_length_zero(self):
        logp = word_log_probs(Tensor(np.random.default_rng(5).normal(size=(1, 8, 5))), Tensor(self.table), 0.01)
        out = reconstruction_log_likelihood(logp, np.zeros((1, 5), dtype=np.int64), np.array([0]))
        assert out.data.tolist() == [0.0]

    def test_monotone_in_length(self):
        logp = word_log_probs(Tensor(np.random.default_rng(6).normal(size=(1, 8, 5))), Tensor(self.table), 1.0)
        toks = np.array([[3, 4, 2, 6, 1]])
        values = [reconstruction_log_likelihood(logp, toks, np.array([n])).item() for n in range(6)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_matches_manual_sum(self):
        logp = word_log_probs(Tensor(np.random.default_rng(7).normal(size=(2, 8, 4))), Tensor(self.table), 0.5)
        toks = np.array([[3, 4, 2, 0], [6, 1, 1, 5]])
        out = reconstruction_log_likelihood(logp, toks, np.array([3, 4])).data
        manual = [sum(logp.data[0, i, toks[0, i] - 1] for i in range(3)), sum(logp.data[1, i, toks[1, i] - 1] for i in range(4))]
        np.testing.assert_allclose(out, manual, atol=1e-12)

    def test_padding_scored_when_requested(self):
        logp = ad.log_softmax(Tensor(np.zeros((1, 3, 4))), axis=-1)
        out = reconstruction_log_likelihood(logp, np.array([[1, 0, 0]]), np.array([1]), score_pad=True)
        assert abs(out.item() - 3 * math.log(0.25)) < 1e-12

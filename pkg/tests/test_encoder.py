import numpy as np
import pytest

from deconv_lvm import autodiff as ad
from deconv_lvm.autodiff import Rng, Tensor
from deconv_lvm.config import ModelConfig, TrainingMode
from deconv_lvm.encoder import cnn_features, dropout, encode, encode_pair
from deconv_lvm.gradcheck import numerical_grad
from deconv_lvm.model import init_params

CFG = ModelConfig(channels=(6, 7, 8), latent_dim=4, emb_dim=5, hidden_dim=5)
VOCAB = 15


@pytest.fixture
def params():
    return init_params(CFG, VOCAB, Rng(0), TrainingMode.SUP_LVM)


def tokens(seed, n=3):
    r = np.random.default_rng(seed)
    toks = r.integers(2, VOCAB, size=(n, CFG.t_max))
    toks[:, 20:] = 0
    return toks


def test_feature_shape(params):
    assert cnn_features(tokens(0), params, CFG).shape == (3, 8)


def test_zero_network_gives_pure_noise(params):
    for _, t in params.items():
        t.data = np.zeros_like(t.data)
    post = encode(tokens(1), params, CFG, Rng(5), train=True)
    assert np.all(post.mu.data == 0) and np.all(post.log_sigma.data == 0)
    np.testing.assert_array_equal(post.z.data, post.eps)
    np.testing.assert_array_equal(post.eps, Rng(5).normal((3, 4)))


def test_reparameterization_exact(params):
    post = encode(tokens(2), params, CFG, Rng(1), train=True)
    assert np.array_equal(post.z.data, post.mu.data + np.exp(post.log_sigma.data) * post.eps)


def test_eval_mode_is_mean(params):
    post = encode(tokens(2), params, CFG, sample=False)
    assert post.z is post.mu


def test_same_seed_same_draw(params):
    a = encode(tokens(3), params, CFG.replace(dropout=0.3), Rng(11), train=True)
    b = encode(tokens(3), params, CFG.replace(dropout=0.3), Rng(11), train=True)
    assert a.z.data.tobytes() == b.z.data.tobytes()


def test_log_sigma_clamped(params):
    params["enc.log_sigma.bias"].data = np.full(4, 50.0)
    post = encode(tokens(4), params, CFG, sample=False)
    assert np.all(post.log_sigma.data == CFG.log_sigma_clamp)


def test_rejects_wrong_length(params):
    with pytest.raises(ValueError, match="t_max"):
        encode(np.zeros((2, 10), dtype=np.int64), params, CFG, sample=False)


class TestDropout:
    def test_identity_at_eval(self):
        x = Tensor(np.ones((3, 4)))
        assert dropout(x, 0.5, Rng(0), train=False) is x

    def test_inverted_scaling(self):
        out = dropout(Tensor(np.ones((200, 200))), 0.3, Rng(0), train=True).data
        assert set(np.unique(out)) <= {0.0, 1 / 0.7}
        assert abs(out.mean() - 1.0) < 0.02


class TestPair:
    def test_identical_sentences(self, params):
        t = tokens(5, n=2)
        p, h = encode_pair(t, t.copy(), params, CFG, sample=False)
        assert np.array_equal(p.mu.data, h.mu.data)

    def test_swap(self, params):
        a, b = tokens(6, n=2), tokens(7, n=2)
        p1, h1 = encode_pair(a, b, params, CFG, sample=False)
        p2, h2 = encode_pair(b, a, params, CFG, sample=False)
        assert np.array_equal(p1.mu.data, h2.mu.data) and np.array_equal(h1.mu.data, p2.mu.data)
        assert np.array_equal(p1.log_sigma.data, h2.log_sigma.data)

    def test_shared_filter_gradient_is_sum(self, params):
        a, b = tokens(8, n=2), tokens(9, n=2)
        w = params["enc.conv1.weight"]

        def pair_value():
            p, h = encode_pair(a, b, params, CFG, sample=False)
            return ad.sum(ad.square(p.mu)) + ad.sum(p.mu * h.mu)

        def single(first_only):
            p, h = encode_pair(a, b, params, CFG, sample=False)
            # stop the gradient through one branch by re-wrapping its values
            if first_only:
                h = Tensor(h.mu.data)
                return ad.sum(ad.square(p.mu)) + ad.sum(p.mu * h)
            p = Tensor(p.mu.data)
            return ad.sum(ad.square(p)) + ad.sum(p * h.mu)

        grads = []
        for value in (pair_value, lambda: single(True), lambda: single(False)):
            params.zero_grad()
            ad.backward(value(), params)
            grads.append(w.grad.copy())
        np.testing.assert_allclose(grads[0], grads[1] + grads[2], rtol=1e-10, atol=1e-12)
        numeric = numerical_grad(lambda: float(pair_value().data), w.data, 1e-5)
        np.testing.assert_allclose(grads[0], numeric, rtol=1e-4, atol=1e-7)

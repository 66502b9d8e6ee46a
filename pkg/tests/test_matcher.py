import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from deconv_lvm.autodiff import Rng, ShapeError, Tensor
from deconv_lvm.config import ModelConfig, TrainingMode
from deconv_lvm.gradcheck import op_checks
from deconv_lvm.matcher import classify, match_features
from deconv_lvm.model import init_params


def test_hand_example():
    out = match_features(Tensor([1.0, 2.0]), Tensor([3.0, -1.0]))
    assert out.data.tolist() == [1, 2, 3, -1, -2, 3, 3, -2]


def test_identical_inputs():
    v = np.array([0.5, -2.0, 3.0])
    out = match_features(Tensor(v), Tensor(v)).data
    np.testing.assert_array_equal(out, np.concatenate([v, v, np.zeros(3), v * v]))


def test_width():
    assert match_features(Tensor(np.zeros(500)), Tensor(np.zeros(500))).shape == (2000,)


def test_width_mismatch():
    with pytest.raises(ShapeError):
        match_features(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (2, 3), elements=st.floats(-5, 5)), arrays(np.float64, (2, 3), elements=st.floats(-5, 5)))
def test_swap_symmetry(a, b):
    """Swapping the pair swaps the first two blocks, negates the difference, keeps the product."""
    ab = match_features(Tensor(a), Tensor(b)).data
    ba = match_features(Tensor(b), Tensor(a)).data
    np.testing.assert_array_equal(ab[:, :3], ba[:, 3:6])
    np.testing.assert_array_equal(ab[:, 6:9], -ba[:, 6:9])
    np.testing.assert_array_equal(ab[:, 9:], ba[:, 9:])


class TestClassify:
    cfg = ModelConfig(channels=(6, 6, 6), latent_dim=4, emb_dim=6, hidden_dim=5, labels=("a", "b", "c"))

    def params(self):
        return init_params(self.cfg, 10, Rng(0), TrainingMode.SUP_LVM)

    def test_zero_network_uniform(self):
        params = self.params()
        for name, t in params.items():
            if name.startswith("match."):
                t.data = np.zeros_like(t.data)
        logits = classify(Tensor(np.random.default_rng(0).normal(size=16)), params).data
        p = np.exp(logits) / np.exp(logits).sum()
        np.testing.assert_allclose(p, [1 / 3] * 3)

    def test_output_bias_shift(self):
        params = self.params()
        m = Tensor(np.random.default_rng(1).normal(size=(5, 16)))
        before = classify(m, params).data
        params["match.out.bias"].data = params["match.out.bias"].data + 7.0
        after = classify(m, params).data
        np.testing.assert_allclose(after - before, 7.0)
        assert np.array_equal(before.argmax(axis=1), after.argmax(axis=1))

    def test_dropout_only_in_training(self):
        params = self.params()
        m = Tensor(np.random.default_rng(2).normal(size=(4, 16)))
        np.testing.assert_array_equal(classify(m, params, 0.5, Rng(0), train=False).data, classify(m, params).data)
        assert not np.array_equal(classify(m, params, 0.5, Rng(0), train=True).data, classify(m, params).data)


def test_gradient_through_features_and_classifier():
    assert op_checks(seed=3)["match_features+classify"] < 1e-4

"""Central finite-difference checks for every differentiable op and the full model.

Relative error of an analytic gradient ``a`` against a numerical one ``n``
is ``||a - n|| / max(||a||, ||n||, 1e-12)`` per tensor.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Rng, Tensor
from .config import ModelConfig, TrainingMode
from .decoder import decode, reconstruction_log_likelihood, scoring_table, word_log_probs
from .matcher import classify, match_features
from .model import init_params, pair_loss
from .objectives import gaussian_kl, matching_loss
from .text import Batch


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(diff / scale)


def numerical_grad(f: Callable[[], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. the array ``x``, perturbed in place."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return grad


def check_function(fn: Callable[..., Tensor], inputs: list[np.ndarray], step: float = 1e-4) -> float:
    """Worst relative error over all inputs of ``sum(fn(*inputs) * w)`` for a fixed random ``w``."""
    leaves = [Tensor(x.copy(), requires_grad=True) for x in inputs]
    out = fn(*leaves)
    weights = np.random.default_rng(123).normal(size=out.shape)
    ad.backward(ad.sum(out * weights))

    def scalar() -> float:
        return float(np.sum(fn(*[Tensor(l.data) for l in leaves]).data * weights))

    return max(rel_error(leaf.grad, numerical_grad(scalar, leaf.data, step)) for leaf in leaves)


def _away_from_zero(rng: np.random.Generator, shape, margin: float = 1e-3) -> np.ndarray:
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * (margin + np.abs(x)), x)


def op_checks(seed: int = 0, step: float = 1e-4) -> dict[str, float]:
    """Relative gradient error for each primitive op on small random shapes."""
    r = np.random.default_rng(seed)
    labels = r.integers(0, 3, size=4)
    idx = r.integers(0, 5, size=(2, 3))
    tokens = r.integers(0, 6, size=(2, 4))
    return {
        "add": check_function(ad.add, [r.normal(size=(3, 4)), r.normal(size=(1, 4))], step),
        "sub": check_function(ad.sub, [r.normal(size=(3, 4)), r.normal(size=(3, 1))], step),
        "mul": check_function(ad.mul, [r.normal(size=(3, 4)), r.normal(size=(4,))], step),
        "div": check_function(ad.div, [r.normal(size=(3, 4)), r.uniform(0.5, 2, size=(3, 4))], step),
        "exp": check_function(ad.exp, [r.normal(size=(3, 4))], step),
        "square": check_function(ad.square, [r.normal(size=(5,))], step),
        "relu": check_function(ad.relu, [_away_from_zero(r, (4, 5))], step),
        "clip": check_function(lambda x: ad.clip(x, -1.5, 1.5), [_away_from_zero(r, (20,)) * 1.3], step),
        "sum": check_function(lambda x: ad.sum(x, axis=1), [r.normal(size=(3, 4))], step),
        "mean": check_function(lambda x: ad.mean(x, axis=0), [r.normal(size=(3, 4))], step),
        "reshape": check_function(lambda x: ad.reshape(x, (6, 2)), [r.normal(size=(3, 4))], step),
        "transpose": check_function(lambda x: ad.transpose(x, (2, 0, 1)), [r.normal(size=(2, 3, 4))], step),
        "concat": check_function(lambda a, b: ad.concat([a, b], axis=1), [r.normal(size=(2, 3)), r.normal(size=(2, 2))], step),
        "matmul": check_function(ad.matmul, [r.normal(size=(3, 4)), r.normal(size=(4, 2))], step),
        "matmul_batched": check_function(ad.matmul, [r.normal(size=(2, 3, 4)), r.normal(size=(4, 2))], step),
        "conv1d": check_function(lambda x, f: ad.conv1d(x, f, 2), [r.normal(size=(2, 3, 13)), r.normal(size=(4, 3, 5))], step),
        "conv1d_transpose": check_function(
            lambda x, f: ad.conv1d_transpose(x, f, 2), [r.normal(size=(2, 3, 5)), r.normal(size=(3, 4, 5))], step
        ),
        "l2_normalize": check_function(lambda x: ad.l2_normalize(x, axis=0, delta=1e-8), [r.normal(size=(4, 3))], step),
        "cosine_rows": check_function(ad.cosine_rows, [r.normal(size=(4,)), r.normal(size=(4, 6))], step),
        "log_softmax": check_function(ad.log_softmax, [r.normal(size=(3, 5)) * 3], step),
        "pick": check_function(lambda x: ad.pick(x, idx), [r.normal(size=(2, 3, 5))], step),
        "embedding_lookup": check_function(lambda e: ad.embedding_lookup(e, tokens), [r.normal(size=(3, 6))], step),
        "gaussian_kl": check_function(gaussian_kl, [r.normal(size=(3, 4)), r.normal(size=(3, 4)) * 0.5], step),
        "matching_loss": check_function(
            lambda x: matching_loss(x, labels, np.array([True, False, True, True])), [r.normal(size=(4, 3))], step
        ),
        "match_features+classify": _check_matcher(r, step),
        "decode+reconstruction": _check_decoder(r, step),
    }


def _tiny_config() -> ModelConfig:
    return ModelConfig(channels=(6, 6, 6), latent_dim=4, emb_dim=6, hidden_dim=5, tau=0.01, l2=1e-3, dropout=0.0)


def _check_matcher(r: np.random.Generator, step: float) -> float:
    cfg = _tiny_config()
    params = init_params(cfg, 12, Rng(1), TrainingMode.SUP_LVM)
    names = [n for n in params if n.startswith("match.")]
    labels = r.integers(0, 2, size=3)

    def fn(zp, zh, *weights):
        store = ParameterStore(zip(names, weights))
        return matching_loss(classify(match_features(zp, zh), store), labels)

    inputs = [r.normal(size=(3, 4)), r.normal(size=(3, 4))] + [params[n].data + 0.05 * r.normal(size=params[n].shape) for n in names]
    return check_function(fn, inputs, step)


def _check_decoder(r: np.random.Generator, step: float) -> float:
    cfg = _tiny_config()
    params = init_params(cfg, 12, Rng(2), TrainingMode.UNSUP_LVM)
    names = [n for n in params if n.startswith("dec.")]
    tokens = r.integers(1, 12, size=(2, 29))
    lengths = np.array([29, 17])

    def fn(z, emb, *weights):
        store = ParameterStore(zip(names, weights))
        z3 = decode(z, store, cfg)
        logp = word_log_probs(z3, scoring_table(emb, False), cfg.tau)
        return reconstruction_log_likelihood(logp, tokens, lengths)

    for _ in range(100):
        inputs = [r.normal(size=(2, 4)), params["embedding"].data] + [
            params[n].data + 0.05 * r.normal(size=params[n].shape) for n in names
        ]
        if kink_distance(fn(*[Tensor(x) for x in inputs])) > 10 * step:
            break
    return check_function(fn, inputs, step)


def model_check(seed: int = 0, step: float = 1e-4, mode: TrainingMode = TrainingMode.SEMI_LVM) -> dict[str, float]:
    """Full joint-loss gradient w.r.t. every parameter tensor.

    Setup: M=4, |V|=12, T_max=29, two pairs, one labeled and one not; the
    noise draws are replayed identically for every loss evaluation.
    """
    cfg = _tiny_config()
    vocab_size = 12
    params = init_params(cfg, vocab_size, Rng(seed), mode)
    base = params.state()
    r = np.random.default_rng(seed + 1)
    lengths = np.array([29, 11])
    second_lengths = np.array([20, 29])

    def padded(lens):
        toks = r.integers(2, vocab_size, size=(2, cfg.t_max))
        toks[np.arange(cfg.t_max)[None, :] >= lens[:, None]] = 0
        return toks

    batch = Batch(padded(lengths), lengths, padded(second_lengths), second_lengths,
                  np.array([1, 0]), np.array([True, False]))
    alpha = 0.7

    def loss() -> Tensor:
        return pair_loss(params, cfg, batch, Rng(seed + 7), mode, alpha).total

    # Zero biases put all-PAD windows exactly on the ReLU kink, so move to a
    # nearby random point whose ReLU inputs all sit well clear of zero.
    for _ in range(100):
        for name, t in params.items():
            noise = 0 if name == "embedding" else 0.05 * r.normal(size=t.shape)
            t.data = base[name] + noise
        if kink_distance(loss()) > 10 * step:
            break

    params.zero_grad()
    ad.backward(loss(), params)
    errors = {}
    for name, t in params.items():
        analytic = t.grad.copy()
        numeric = numerical_grad(lambda: float(loss().data), t.data, step)
        if name == "embedding":
            # the PAD column is frozen at zero and never trained
            analytic, numeric = analytic[:, 1:], numeric[:, 1:]
        errors[name] = rel_error(analytic, numeric)
    return errors


def kink_distance(loss: Tensor) -> float:
    """Smallest |input| over every ReLU node feeding ``loss``."""
    best, seen, stack = np.inf, set(), [loss]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node.op == "relu":
            best = min(best, float(np.min(np.abs(node.parents[0].data))))
        stack.extend(node.parents)
    return best


def run_all(seed: int = 0, step: float = 1e-4) -> dict[str, float]:
    results = {f"op:{k}": v for k, v in op_checks(seed, step).items()}
    results.update({f"model:{k}": v for k, v in model_check(seed, step).items()})
    return results

"""Dense float64 tensors with reverse-mode differentiation.

Only the operations the deconvolutional latent-variable model needs are
provided.  Every op that produces a tensor depending on a trainable input
records a node; :func:`backward` walks the recorded nodes in exact reverse
creation order, which is a valid reverse topological order because a node
is always created after its inputs.
"""

from __future__ import annotations

import itertools
from collections import OrderedDict
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor",
    "ParameterStore",
    "Rng",
    "ShapeError",
    "NumericDomainError",
    "backward",
    "gaussian_sample",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "square",
    "relu",
    "clip",
    "sum",
    "mean",
    "reshape",
    "transpose",
    "concat",
    "matmul",
    "conv1d",
    "conv1d_transpose",
    "l2_normalize",
    "cosine_rows",
    "log_softmax",
    "take",
    "pick",
    "embedding_lookup",
]

_node_ids = itertools.count()


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class NumericDomainError(ValueError):
    """Raised when an op is evaluated outside its numeric domain."""


class Tensor:
    """A float64 array with an optional gradient slot.

    ``grad`` is only populated for leaves that require gradients; interior
    nodes pass their gradients along during :func:`backward` without
    storing them.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "op", "parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self._id = next(_node_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out.op = op
        out.parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.op = "const"
        out.parents = ()
        out._backward = None
    out._id = next(_node_ids)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class ParameterStore:
    """Named, ordered collection of trainable tensors.

    Iteration order is insertion order and is the order every optimizer
    and serializer uses.
    """

    def __init__(self, items: Optional[Iterable[tuple[str, Tensor]]] = None):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, t in items or ():
            self.add(name, t)

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        t.name = name
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def num_parameters(self) -> int:
        return int(np.sum([t.size for t in self._params.values()]))

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self._params.items())

    def load_state(self, arrays: dict) -> None:
        for name, t in self._params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise ShapeError(f"parameter {name}: stored shape {arr.shape} != {t.shape}")
            t.data = arr.copy()


def backward(loss: Tensor, params: Optional[ParameterStore] = None) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``.

    When ``params`` is given, parameters that the loss does not reach end
    up with an all-zero gradient rather than a stale or missing one.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if params is not None:
        for _, p in params.items():
            if p.grad is None:
                p.zero_grad()
    if not loss.requires_grad:
        return

    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._id in nodes:
            continue
        nodes[t._id] = t
        stack.extend(p for p in t.parents if p.requires_grad)

    grads: dict[int, np.ndarray] = {loss._id: np.ones_like(loss.data)}
    for node_id in sorted(nodes, reverse=True):
        node = nodes[node_id]
        g = grads.pop(node_id, None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad += g
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._id in grads:
                grads[parent._id] = grads[parent._id] + pg
            else:
                grads[parent._id] = pg


class Rng:
    """Seeded random stream: numpy's PCG64 bit generator.

    Normal variates come from numpy's ziggurat sampler
    (``Generator.standard_normal``).  Both are fixed algorithms, so a seed
    yields the same stream on every platform for a given numpy release.
    """

    def __init__(self, seed: int | Sequence[int] = 0):
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    def normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def keep_mask(self, shape, keep_prob: float) -> np.ndarray:
        return (self._gen.random(shape) < keep_prob).astype(np.float64)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def choice(self, a, size=None, replace=True, p=None):
        return self._gen.choice(a, size=size, replace=replace, p=p)

    def random(self, size=None):
        return self._gen.random(size)

    @property
    def state(self) -> dict:
        return self._gen.bit_generator.state

    @state.setter
    def state(self, value: dict) -> None:
        self._gen.bit_generator.state = value


def gaussian_sample(rng: Rng, shape) -> Tensor:
    return Tensor(rng.normal(shape))


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        "add",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.data - b.data,
        (a, b),
        "sub",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        "mul",
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data / b.data
    return _make(
        out,
        (a, b),
        "div",
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), "neg", lambda g: (-g,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), "exp", lambda g: (g * out,))


def square(a) -> Tensor:
    a = _as_tensor(a)
    return _make(a.data * a.data, (a,), "square", lambda g: (2.0 * a.data * g,))


def relu(a) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is 0."""
    a = _as_tensor(a)
    gate = a.data > 0
    return _make(np.where(gate, a.data, 0.0), (a,), "relu", lambda g: (g * gate,))


def clip(a, low: float, high: float) -> Tensor:
    a = _as_tensor(a)
    inside = (a.data >= low) & (a.data <= high)
    return _make(np.clip(a.data, low, high), (a,), "clip", lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# reductions and shape


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = _as_tensor(a)
    out = np.sum(a.data, axis=axis)

    def _back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(np.asarray(out, dtype=np.float64), (a,), "sum", _back)


def mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum(a, axis) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    return _make(a.data.reshape(shape), (a,), "reshape", lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    inverse = None if axes is None else np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), "transpose", lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([t.data for t in ts], axis=axis),
        ts,
        "concat",
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


# ---------------------------------------------------------------------------
# linear algebra and convolution


def matmul(a, b) -> Tensor:
    """Matrix product; leading batch dimensions broadcast as in numpy."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def _back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), "matmul", _back)


def _conv_out_len(length: int, window: int, stride: int) -> int:
    if length < window:
        raise ShapeError(f"conv1d: input length {length} shorter than window {window}")
    return (length - window) // stride + 1


def conv1d(x, filters, stride: int = 1) -> Tensor:
    """Valid 1-D cross-correlation along the last axis.

    ``x`` is ``[C_in, L]`` or ``[B, C_in, L]``; ``filters`` is
    ``[C_out, C_in, W]``.  Output length is ``(L - W) // stride + 1``.
    """
    x, filters = _as_tensor(x), _as_tensor(filters)
    unbatched = x.ndim == 2
    xd = x.data[None] if unbatched else x.data
    f = filters.data
    if xd.ndim != 3 or f.ndim != 3 or xd.shape[1] != f.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} does not conform to filters {filters.shape}")
    width = f.shape[2]
    length = xd.shape[2]
    out_len = _conv_out_len(length, width, stride)
    windows = sliding_window_view(xd, width, axis=2)[:, :, ::stride, :]
    out = np.einsum("bclw,ocw->bol", windows, f, optimize=True)

    def _back(g):
        gb = g[None] if unbatched else g
        gf = np.einsum("bol,bclw->ocw", gb, windows, optimize=True)
        gx = np.zeros_like(xd)
        span = stride * (out_len - 1) + 1
        for w in range(width):
            gx[:, :, w : w + span : stride] += np.einsum("bol,oc->bcl", gb, f[:, :, w], optimize=True)
        return (gx[0] if unbatched else gx), gf

    return _make(out[0] if unbatched else out, (x, filters), "conv1d", _back)


def conv1d_transpose(x, filters, stride: int = 1) -> Tensor:
    """Adjoint of :func:`conv1d`: overlap-add each input column through its filter.

    ``x`` is ``[C_in, L]`` or ``[B, C_in, L]``; ``filters`` is
    ``[C_in, C_out, W]``.  Output length is ``(L - 1) * stride + W``.
    """
    x, filters = _as_tensor(x), _as_tensor(filters)
    unbatched = x.ndim == 2
    xd = x.data[None] if unbatched else x.data
    f = filters.data
    if xd.ndim != 3 or f.ndim != 3 or xd.shape[1] != f.shape[0]:
        raise ShapeError(
            f"conv1d_transpose: input {x.shape} does not conform to filters {filters.shape}"
        )
    batch, _, length = xd.shape
    c_out, width = f.shape[1], f.shape[2]
    out_len = (length - 1) * stride + width
    span = stride * (length - 1) + 1
    out = np.zeros((batch, c_out, out_len))
    for w in range(width):
        out[:, :, w : w + span : stride] += np.einsum("bcl,co->bol", xd, f[:, :, w], optimize=True)

    def _back(g):
        gb = g[None] if unbatched else g
        windows = sliding_window_view(gb, width, axis=2)[:, :, ::stride, :]
        gx = np.einsum("bolw,cow->bcl", windows, f, optimize=True)
        gf = np.einsum("bcl,bolw->cow", xd, windows, optimize=True)
        return (gx[0] if unbatched else gx), gf

    return _make(out[0] if unbatched else out, (x, filters), "conv1d_transpose", _back)


# ---------------------------------------------------------------------------
# cosine scoring and softmax


def l2_normalize(x, axis: int, delta: float = 0.0) -> Tensor:
    """``x / (||x|| + delta)`` along ``axis``.

    With ``delta == 0`` a zero-norm slice raises :class:`NumericDomainError`.
    """
    x = _as_tensor(x)
    norm = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))
    if delta == 0.0 and np.any(norm == 0.0):
        raise NumericDomainError("l2_normalize: zero-norm vector with delta=0")
    denom = norm + delta
    out = x.data / denom
    safe_norm = np.where(norm > 0, norm, 1.0)

    def _back(g):
        proj = np.sum(g * x.data, axis=axis, keepdims=True)
        return (g / denom - x.data * proj / (denom * denom * safe_norm),)

    return _make(out, (x,), "l2_normalize", _back)


def cosine_rows(a, b, delta: float = 0.0) -> Tensor:
    """Cosine similarity between vector ``a[d]`` and every column of ``b[d, V]``."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 1 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"cosine_rows: vector {a.shape} does not conform to matrix {b.shape}")
    an = l2_normalize(a, axis=0, delta=delta)
    bn = l2_normalize(b, axis=0, delta=delta)
    return reshape(matmul(reshape(an, (1, -1)), bn), (b.shape[1],))


def log_softmax(x, axis: int = -1) -> Tensor:
    """Log-softmax computed with max subtraction."""
    x = _as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    probs = np.exp(out)
    return _make(
        out,
        (x,),
        "log_softmax",
        lambda g: (g - probs * np.sum(g, axis=axis, keepdims=True),),
    )


def take(x, index, axis: int = 0) -> Tensor:
    """``np.take`` along one axis; repeated indices accumulate gradient."""
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.int64)

    def _back(g):
        gx = np.zeros_like(x.data)
        np.add.at(np.moveaxis(gx, axis, 0), index, np.moveaxis(g, axis, 0))
        return (gx,)

    return _make(np.take(x.data, index, axis=axis), (x,), "take", _back)


def pick(x, index: np.ndarray) -> Tensor:
    """Select ``x[..., index[...]]`` along the last axis."""
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    if index.shape != x.shape[:-1]:
        raise ShapeError(f"pick: index shape {index.shape} does not match {x.shape[:-1]}")
    expanded = index[..., None]
    out = np.take_along_axis(x.data, expanded, axis=-1)[..., 0]

    def _back(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, expanded, g[..., None], axis=-1)
        return (gx,)

    return _make(out, (x,), "pick", _back)


def embedding_lookup(table, tokens: np.ndarray, padding_idx: Optional[int] = None) -> Tensor:
    """Gather columns of ``table[d, V]`` for ``tokens[B, T]`` giving ``[B, d, T]``.

    The column at ``padding_idx`` receives no gradient.
    """
    table = _as_tensor(table)
    tokens = np.asarray(tokens, dtype=np.int64)
    out = np.transpose(table.data[:, tokens], (1, 0, 2))

    def _back(g):
        gt = np.zeros((table.shape[1], table.shape[0]))
        np.add.at(gt, tokens, np.transpose(g, (0, 2, 1)))
        if padding_idx is not None:
            gt[padding_idx] = 0.0
        return (gt.T.copy(),)

    return _make(out, (table,), "embedding_lookup", _back)

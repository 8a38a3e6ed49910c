"""A small reverse-mode autodiff layer for the MG-Net networks.

Values live in :class:`Tensor` objects.  Operations executed while a
:class:`Tape` is active are recorded in order; ``Tape.backward`` walks that
record in reverse and accumulates gradients into every leaf tensor created
with ``requires_grad=True``.  Outside a tape the same functions are plain
numpy forward passes, which is what frozen-model inference uses.

Graph batches are dense and padded: node features ``(B, N, d)``, adjacency
``(B, N, N)`` with ``adj[b, i, j]`` the weight of the message ``j -> i``, and
a 0/1 node mask ``(B, N)``.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import InputError, NumericError

__all__ = [
    "Tensor",
    "Tape",
    "AdamState",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "bmm",
    "relu",
    "concat",
    "take",
    "reshape",
    "sum_all",
    "mean_all",
    "masked_mean",
    "softmax",
    "gumbel_softmax",
    "graph_conv",
    "mlp_forward",
    "mse_loss",
    "ranking_loss",
    "glorot",
    "init_mlp",
    "init_graph_conv",
    "adam_step",
    "params_digest",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1

_local = threading.local()


class Tensor:
    """An array plus an optional gradient buffer of identical shape."""

    __slots__ = ("data", "grad", "requires_grad", "tracked")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=float)
        self.requires_grad = requires_grad
        self.tracked = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


@dataclass
class _Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of primitive operations for one backward sweep.

    Use as a context manager; the innermost active tape records.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._swept = False

    def __enter__(self) -> "Tape":
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def backward(self, loss: Tensor, seed=None) -> list[int]:
        """Accumulate ``d loss / d leaf`` into ``leaf.grad``.

        Returns the indices of the visited nodes, which are strictly
        decreasing (exact reverse recording order).
        """
        if self._swept:
            raise InputError("a tape can only be swept backward once")
        self._swept = True
        if seed is None:
            seed = np.ones_like(loss.data)
        pending: dict[int, np.ndarray] = {id(loss): np.asarray(seed, dtype=float)}
        if loss.requires_grad:
            _accumulate(loss, pending[id(loss)])
        visited = []
        for idx in range(len(self.nodes) - 1, -1, -1):
            node = self.nodes[idx]
            g_out = pending.pop(id(node.out), None)
            if g_out is None:
                continue
            visited.append(idx)
            for t, g in zip(node.inputs, node.backward(g_out)):
                if g is None or not t.tracked:
                    continue
                g = _unbroadcast(np.asarray(g, dtype=float), t.data.shape)
                if t.requires_grad:
                    _accumulate(t, g)
                else:
                    prev = pending.get(id(t))
                    pending[id(t)] = g if prev is None else prev + g
        return visited


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.array(g, dtype=float, copy=True)
    else:
        t.grad += g


def _record(out_data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(out_data)
    stack = getattr(_local, "stack", None)
    if stack and any(t.tracked for t in inputs):
        stack[-1].nodes.append(_Node(out, tuple(inputs), backward))
        out.tracked = True
    return out


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def matmul(x, w) -> Tensor:
    """``x @ w`` for ``x (..., d_in)`` and a weight matrix ``w (d_in, d_out)``."""
    x, w = as_tensor(x), as_tensor(w)
    if w.data.ndim != 2 or x.data.shape[-1] != w.data.shape[0]:
        raise InputError(f"cannot multiply {x.shape} by {w.shape}")

    def back(g):
        gx = g @ w.data.T
        gw = x.data.reshape(-1, x.data.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return gx, gw

    return _record(x.data @ w.data, (x, w), back)


def bmm(a, h) -> Tensor:
    """Batched ``a[b] @ h[b]`` for ``a (B, N, M)`` and ``h (B, M, d)``."""
    a, h = as_tensor(a), as_tensor(h)
    if a.data.ndim != 3 or h.data.ndim != 3 or a.shape[0] != h.shape[0] or a.shape[2] != h.shape[1]:
        raise InputError(f"cannot batch-multiply {a.shape} by {h.shape}")

    def back(g):
        return g @ h.data.transpose(0, 2, 1), a.data.transpose(0, 2, 1) @ g

    return _record(a.data @ h.data, (a, h), back)


def relu(x) -> Tensor:
    x = as_tensor(x)
    on = x.data > 0
    return _record(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,))


def concat(parts: Sequence, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return np.split(g, cuts, axis=axis)

    return _record(np.concatenate([p.data for p in parts], axis=axis), parts, back)


def take(x, index, axis: int) -> Tensor:
    """``np.take`` along ``axis``; repeated indices accumulate in the backward pass."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=int)
    axis = axis % x.data.ndim

    def back(g):
        gx = np.zeros_like(x.data)
        moved = np.moveaxis(gx, axis, 0)
        np.add.at(moved, index, np.moveaxis(g, axis, 0))
        return (gx,)

    return _record(np.take(x.data, index, axis=axis), (x,), back)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.data.shape
    return _record(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    return _record(np.array(x.data.sum()), (x,), lambda g: (np.full_like(x.data, g),))


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    size = x.data.size
    return _record(np.array(x.data.mean()), (x,), lambda g: (np.full_like(x.data, g / size),))


def masked_mean(h, mask) -> Tensor:
    """Mean over the node axis of ``h (B, N, d)`` counting only ``mask == 1`` nodes."""
    h = as_tensor(h)
    m = np.asarray(mask, dtype=float)
    if m.shape != h.data.shape[:2]:
        raise InputError(f"mask shape {m.shape} does not match nodes {h.data.shape[:2]}")
    count = m.sum(axis=1, keepdims=True)
    if np.any(count == 0):
        raise InputError("every graph needs at least one unmasked node")
    w = (m / count)[:, :, None]
    return _record((h.data * w).sum(axis=1), (h,), lambda g: (g[:, None, :] * w,))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _record(s, (x,), back)


def _straight_through(hard: np.ndarray, soft: Tensor) -> Tensor:
    # forward value is the one-hot sample, backward is the identity into ``soft``
    return _record(hard, (soft,), lambda g: (g,))


def gumbel_softmax(logits, temperature: float = 1.0, rng: np.random.Generator | None = None,
                   hard: bool = False) -> Tensor:
    """``softmax((logits + g) / tau)`` over the last axis with Gumbel noise ``g``.

    ``rng=None`` means zero noise.  ``hard=True`` returns the argmax one-hot
    on the forward pass and routes gradients through the soft sample.
    """
    if not temperature > 0:
        raise InputError(f"temperature must be positive, got {temperature}")
    logits = as_tensor(logits)
    z = logits
    if rng is not None:
        u = rng.uniform(np.finfo(float).tiny, 1.0, size=logits.shape)
        z = add(logits, -np.log(-np.log(u)))
    soft = softmax(scale(z, 1.0 / temperature), axis=-1)
    if not hard:
        return soft
    idx = soft.data.argmax(axis=-1)
    one_hot = np.zeros_like(soft.data)
    np.put_along_axis(one_hot, idx[..., None], 1.0, axis=-1)
    return _straight_through(one_hot, soft)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


def graph_conv(h, adj, w_self, w_nbr, bias, activate: bool = True) -> Tensor:
    """``h_i' = ReLU(W_self h_i + W_nbr sum_j e_ij h_j + b)``; ReLU skipped if ``activate`` is false."""
    h, adj = as_tensor(h), as_tensor(adj)
    if h.data.ndim != 3 or adj.data.shape != (h.shape[0], h.shape[1], h.shape[1]):
        raise InputError(f"node features {h.shape} do not match adjacency {adj.shape}")
    out = add(add(matmul(h, w_self), matmul(bmm(adj, h), w_nbr)), bias)
    return relu(out) if activate else out


def mlp_forward(x, layers: Sequence[tuple[Tensor, Tensor]]) -> Tensor:
    """Affine layers with ReLU between them and a linear final layer."""
    out = as_tensor(x)
    for k, (w, b) in enumerate(layers):
        out = add(matmul(out, w), b)
        if k < len(layers) - 1:
            out = relu(out)
    return out


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def mse_loss(pred, target) -> Tensor:
    """``(1/S) sum (y - y_hat)^2``."""
    pred = as_tensor(pred)
    y = np.asarray(target, dtype=float)
    if pred.data.shape != y.shape:
        raise InputError(f"prediction shape {pred.shape} differs from target {y.shape}")
    diff = pred.data - y
    return _record(np.array(np.mean(diff**2)), (pred,), lambda g: (g * 2 * diff / diff.size,))


def ranking_loss(pred, target) -> Tensor:
    """Pairwise hinge ``1/(S^2 - S) sum_{i != j} max(0, 1 - sign(y_i - y_j)(y_hat_i - y_hat_j))``.

    ``sign(0) = 0``, so tied labels contribute a constant 1 per ordered pair.
    """
    pred = as_tensor(pred)
    y = np.asarray(target, dtype=float)
    if pred.data.ndim != 1 or pred.data.shape != y.shape:
        raise InputError("ranking loss needs two vectors of equal length")
    s = y.shape[0]
    if s < 2:
        raise InputError("ranking loss needs at least two samples")
    sign = np.sign(y[:, None] - y[None, :])
    margin = 1.0 - sign * (pred.data[:, None] - pred.data[None, :])
    np.fill_diagonal(margin, 0.0)
    active = margin > 0
    value = margin[active].sum() / (s * s - s)

    def back(g):
        coef = sign * active / (s * s - s)
        return (g * (-coef.sum(axis=1) + coef.sum(axis=0)),)

    return _record(np.array(value), (pred,), back)


# ---------------------------------------------------------------------------
# parameters, optimizer, checkpoints
# ---------------------------------------------------------------------------


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, (fan_in, fan_out)), requires_grad=True)


def init_mlp(widths: Sequence[int], rng: np.random.Generator) -> list[tuple[Tensor, Tensor]]:
    return [
        (glorot(a, b, rng), Tensor(np.zeros(b), requires_grad=True))
        for a, b in zip(widths[:-1], widths[1:])
    ]


def init_graph_conv(d_in: int, d_out: int, rng: np.random.Generator):
    return (glorot(d_in, d_out, rng), glorot(d_in, d_out, rng),
            Tensor(np.zeros(d_out), requires_grad=True))


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict | None = None
    v: dict | None = None


def adam_step(params: Mapping[str, Tensor], state: AdamState, grads: Mapping[str, np.ndarray] | None = None):
    """Bias-corrected Adam update in place; gradients default to each ``param.grad``."""
    if state.m is None:
        state.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        state.v = {k: np.zeros_like(p.data) for k, p in params.items()}
    g_all = {}
    for k, p in params.items():
        g = grads[k] if grads is not None else p.grad
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=float)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {k!r}")
        g_all[k] = g
    state.step += 1
    c1 = 1 - state.beta1**state.step
    c2 = 1 - state.beta2**state.step
    for k, p in params.items():
        g = g_all[k]
        state.m[k] = state.beta1 * state.m[k] + (1 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1 - state.beta2) * g * g
        p.data = p.data - state.lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + state.eps)


def params_digest(params: Mapping[str, Tensor]) -> str:
    h = hashlib.sha256()
    for k in sorted(params):
        h.update(k.encode())
        h.update(np.ascontiguousarray(params[k].data).tobytes())
    return h.hexdigest()


def save_checkpoint(path, params: Mapping[str, Tensor], meta: dict | None = None):
    """JSON dump with a shape manifest; floats are written with full precision."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "manifest": {k: list(params[k].shape) for k in sorted(params)},
        "tensors": {k: params[k].data.ravel().tolist() for k in sorted(params)},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path, expected: Mapping[str, Sequence[int]] | None = None):
    """Returns ``(tensors, meta)``; rejects version or shape-manifest mismatches."""
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise InputError(f"checkpoint version {doc.get('version')} is not {CHECKPOINT_VERSION}")
    manifest = {k: tuple(v) for k, v in doc["manifest"].items()}
    if expected is not None:
        want = {k: tuple(v) for k, v in expected.items()}
        if want != manifest:
            diff = sorted(set(want.items()) ^ set(manifest.items()))
            raise InputError(f"checkpoint shape manifest mismatch: {diff[:4]}")
    tensors = {}
    for k, shape in manifest.items():
        flat = np.asarray(doc["tensors"][k], dtype=float)
        if flat.size != int(np.prod(shape)):
            raise InputError(f"tensor {k!r} has {flat.size} values for shape {shape}")
        tensors[k] = Tensor(flat.reshape(shape), requires_grad=True)
    return tensors, doc.get("meta", {})

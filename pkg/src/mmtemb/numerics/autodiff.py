"""Tape-based reverse-mode differentiation over numpy arrays.

Operations are recorded only while a :class:`DiffGraph` is active::

    with DiffGraph() as graph:
        w = Tensor(np.ones(3), requires_grad=True)
        loss = (w * w).sum()
    grads = backward(graph, loss)
    grads[w]  # -> 2 * w

Outside a graph every op is plain numpy evaluation wrapped in a
:class:`Tensor`, which is what decoding and finite-difference checks use.
"""
from __future__ import annotations

import threading

import numpy as np
from scipy.special import expit

from ..errors import DimensionError


class _GraphStack(threading.local):
    def __init__(self):
        self.stack = []


_local = _GraphStack()


def _active_graph():
    stack = _local.stack
    return stack[-1] if stack else None


class DiffGraph:
    """Ordered record of operations; nodes are appended in evaluation order,
    which is already a topological order of the computation."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = ()
        self.backward_fn = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    # operator sugar
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    """Wrap an op result, recording it when a graph is active and any input
    needs a gradient."""
    out = Tensor.__new__(Tensor)
    out.data = data if type(data) is np.ndarray and data.dtype == np.float64 else np.asarray(data, np.float64)
    out.grad = None
    out.requires_grad = False
    out.parents = ()
    out.backward_fn = None
    out.name = None
    stack = _local.stack
    graph = stack[-1] if stack else None
    if graph is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.backward_fn = backward_fn
        graph.nodes.append(out)
    return out


def record(data, parents, backward_fn):
    """Public hook for fused ops: wrap ``data`` and register ``backward_fn``
    (called with the upstream gradient) when a graph is recording."""
    return _make(data, tuple(parents), backward_fn)


def accumulate(t, g):
    _accumulate(t, g)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    # gradients are never modified in place, so sharing arrays is safe
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(fn, a, b, op):
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def backward(graph, loss):
    """Propagate d(loss)/d(node) through ``graph`` in reverse order.

    Returns a dict mapping every leaf tensor with ``requires_grad`` that
    contributed to ``loss`` onto its gradient array.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    leaves = {}
    for node in graph.nodes:
        node.grad = None
        for p in node.parents:
            if p.requires_grad and p.backward_fn is None:
                leaves[p] = None
    for leaf in leaves:
        leaf.grad = None
    if not loss.requires_grad:
        return leaves
    loss.grad = np.ones_like(loss.data)
    for node in reversed(graph.nodes):
        if node.grad is not None:
            node.backward_fn(node.grad)
    for leaf in leaves:
        leaves[leaf] = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
    return leaves


def zero_grad(tensors):
    for t in tensors:
        t.grad = None


# elementwise arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(_binary(np.add, a, b, "add"), (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(_binary(np.subtract, a, b, "sub"), (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(_binary(np.multiply, a, b, "hadamard"), (a, b), bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _binary(np.divide, a, b, "div")

    def bw(g):
        _accumulate(a, _unbroadcast(g / b.data, a.shape))
        _accumulate(b, _unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), bw)


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: _accumulate(x, g * (1.0 - out * out)))


def sigmoid(x):
    x = as_tensor(x)
    out = expit(x.data)
    return _make(out, (x,), lambda g: _accumulate(x, g * out * (1.0 - out)))


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: _accumulate(x, g * out))


def log(x):
    x = as_tensor(x)
    return _make(np.log(x.data), (x,), lambda g: _accumulate(x, g / x.data))


def log_clamped(x, floor=1e-30):
    """log(max(x, floor)); clamped entries pass no gradient.

    Returns ``(tensor, clamped)`` where ``clamped`` says whether any entry
    hit the floor.
    """
    x = as_tensor(x)
    hit = x.data < floor
    safe = np.where(hit, floor, x.data)

    def bw(g):
        _accumulate(x, np.where(hit, 0.0, g / safe))

    return _make(np.log(safe), (x,), bw), bool(hit.any())


def sqrt(x):
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return _make(out, (x,), lambda g: _accumulate(x, g * 0.5 / out))


def relu(x):
    x = as_tensor(x)
    active = x.data > 0
    return _make(np.where(active, x.data, 0.0), (x,), lambda g: _accumulate(x, g * active))


# reductions and shape ops

def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), bw)


def tmean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else x.data.shape[axis]
    return tsum(x, axis, keepdims) * (1.0 / count)


def reshape(x, shape):
    x = as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: _accumulate(x, g.reshape(x.shape)))


def transpose(x):
    x = as_tensor(x)
    return _make(np.swapaxes(x.data, -1, -2), (x,), lambda g: _accumulate(x, np.swapaxes(g, -1, -2)))


def getitem(x, index):
    x = as_tensor(x)

    parts = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(i, (list, np.ndarray)) for i in parts)

    def bw(g):
        full = np.zeros_like(x.data)
        if fancy:
            np.add.at(full, index, g)
        else:
            full[index] = g
        _accumulate(x, full)

    return _make(x.data[index], (x,), bw)


def embedding(table, ids):
    """Row lookup ``table[ids]`` for an integer id array of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids)

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        _accumulate(table, full)

    return _make(table.data[ids], (table,), bw)


def pick(x, ids):
    """Select ``x[b, ids[b]]`` from a (B, V) tensor."""
    x = as_tensor(x)
    rows = np.arange(x.shape[0])
    ids = np.asarray(ids)

    def bw(g):
        full = np.zeros_like(x.data)
        full[rows, ids] = g
        _accumulate(x, full)

    return _make(x.data[rows, ids], (x,), bw)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            t.shape[i] != ref[i] for i in range(len(ref)) if i != ax
        ):
            raise DimensionError(f"concat: incompatible shapes {ref} and {t.shape}")
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        for t, part in zip(tensors, np.split(g, sizes, axis=ax)):
            _accumulate(t, part)

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), bw)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack: incompatible shapes {sorted(shapes)}")

    def bw(g):
        for i, t in enumerate(tensors):
            _accumulate(t, np.take(g, i, axis=axis))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), bw)


# linear algebra

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        if a.requires_grad:
            if b.ndim == 1:
                ga = np.multiply.outer(g, b.data)
            else:
                ga = g @ np.swapaxes(b.data, -1, -2)
            _accumulate(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            if b.ndim == 1:
                gb = (a.data * g[..., None]).reshape(-1, b.shape[0]).sum(axis=0)
            elif b.ndim == 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            _accumulate(b, gb)

    return _make(a.data @ b.data, (a, b), bw)


def linear(x, weight, bias=None):
    """``x @ weight.T + bias`` with ``weight`` stored as (out, in)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[-1]:
        raise DimensionError(f"affine: incompatible shapes {x.shape} and {weight.shape}")
    wd = weight.data
    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))

    def bw(g):
        if x.requires_grad:
            _accumulate(x, g @ wd)
        if weight.requires_grad:
            _accumulate(weight, g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.shape[-1]))
        if bias is not None and parents[2].requires_grad:
            _accumulate(parents[2], g.reshape(-1, g.shape[-1]).sum(axis=0))

    out = x.data @ wd.T
    if bias is not None:
        out = out + parents[2].data
    return _make(out, parents, bw)


def softmax(z, axis=-1, mask=None):
    """Max-shifted softmax along ``axis``; ``mask`` zeros out entries (False)
    and renormalises over the rest."""
    z = as_tensor(z)
    if z.data.size == 0 or z.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    d = z.data
    if mask is not None:
        d = np.where(mask, d, -np.inf)
    shifted = d - d.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        _accumulate(z, out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (z,), bw)


def dropout(x, rate, rng):
    """Inverted dropout; identity when ``rng`` is None or ``rate`` is 0."""
    if rng is None or rate <= 0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return mul(x, keep)


def l2_normalize(x, axis=-1):
    x = as_tensor(x)
    norm = sqrt(tsum(mul(x, x), axis=axis, keepdims=True))
    return div(x, norm)

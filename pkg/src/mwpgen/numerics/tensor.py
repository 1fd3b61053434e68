"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Tensors wrap float64 numpy arrays. When a :class:`Tape` is active, every op
records the result node so that :func:`backward` can replay the tape in exact
reverse insertion order. Without an active tape ops run in plain inference
mode (no recording, no gradients), which keeps decoding cheap.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "ShapeError",
    "ContractError",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "add_const",
    "concat",
    "transpose",
    "sigmoid",
    "tanh",
    "softmax",
    "mean_rows",
    "sum_all",
    "slice_",
    "embed_lookup",
    "log",
    "exp",
]


class ShapeError(ValueError):
    """Raised when op input shapes do not conform."""


class ContractError(ValueError):
    """Raised when an op precondition is violated (e.g. non-scalar loss)."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backprop", "name")

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backprop = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"


class Parameter(Tensor):
    """Named trainable leaf tensor."""

    def __init__(self, data, name):
        super().__init__(data, requires_grad=True, name=name)


_ACTIVE_TAPE = None


class Tape:
    """Records op results in insertion order for one forward/backward pass."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ContractError("nested tapes are not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False


def _record(out, parents, backprop):
    tape = _ACTIVE_TAPE
    if tape is None:
        return out
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backprop = backprop
        tape.nodes.append(out)
    return out


def backward(loss, tape):
    """Backpropagate from a scalar loss through the tape.

    Returns a map ``id(param) -> gradient array`` for every requires_grad
    leaf reached, and also populates ``.grad`` on those leaves.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if not tape.nodes:
        raise ContractError("backward on an empty tape")
    for node in tape.nodes:
        node.grad = None
        for p in node._parents:
            p.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.grad is None or node._backprop is None:
            continue
        node._backprop(node.grad)
    grads = {}
    for node in tape.nodes:
        for p in node._parents:
            if p._backprop is None and p.requires_grad and p.grad is not None:
                grads[id(p)] = p.grad
    tape.nodes.clear()
    return grads


def _accumulate(t, g):
    if t.requires_grad or t._backprop is not None:
        t.grad = g if t.grad is None else t.grad + g


def _check_finite(out, op):
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError(f"non-finite values produced by op '{op}'")
    return out


# ---------------------------------------------------------------------------
# ops


def matmul(a, b):
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def backprop(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _record(out, (a, b), backprop)


def _binary_shapes(a, b, op):
    sa, sb = a.data.shape, b.data.shape
    ok = all(da == db or da == 1 or db == 1 for da, db in zip(sa, sb))
    if not ok:
        raise ShapeError(f"{op}: shapes {sa} and {sb} do not conform")


def _reduce_to(g, shape):
    if g.shape[0] != shape[0]:
        g = g.sum(axis=0, keepdims=True)
    if g.shape[1] != shape[1]:
        g = g.sum(axis=1, keepdims=True)
    return g


def add(a, b):
    _binary_shapes(a, b, "add")
    out = Tensor(a.data + b.data)

    def backprop(g):
        _accumulate(a, _reduce_to(g, a.data.shape))
        _accumulate(b, _reduce_to(g, b.data.shape))

    return _record(out, (a, b), backprop)


def sub(a, b):
    _binary_shapes(a, b, "sub")
    out = Tensor(a.data - b.data)

    def backprop(g):
        _accumulate(a, _reduce_to(g, a.data.shape))
        _accumulate(b, -_reduce_to(g, b.data.shape))

    return _record(out, (a, b), backprop)


def mul(a, b):
    _binary_shapes(a, b, "mul")
    out = Tensor(a.data * b.data)

    def backprop(g):
        _accumulate(a, _reduce_to(g * b.data, a.data.shape))
        _accumulate(b, _reduce_to(g * a.data, b.data.shape))

    return _record(out, (a, b), backprop)


def scale(a, s):
    s = float(s)
    out = Tensor(a.data * s)

    def backprop(g):
        _accumulate(a, g * s)

    return _record(out, (a,), backprop)


def add_const(a, s):
    s = float(s)
    out = Tensor(a.data + s)

    def backprop(g):
        _accumulate(a, g)

    return _record(out, (a,), backprop)


def concat(tensors, axis=1):
    if axis not in (0, 1):
        raise ShapeError(f"concat: axis must be 0 or 1, got {axis}")
    other = 1 - axis
    dims = {t.data.shape[other] for t in tensors}
    if len(dims) != 1:
        raise ShapeError(
            "concat: non-concat dims differ: " + ", ".join(str(t.data.shape) for t in tensors)
        )
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    offsets = np.cumsum([0] + [t.data.shape[axis] for t in tensors])

    def backprop(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            piece = g[lo:hi, :] if axis == 0 else g[:, lo:hi]
            _accumulate(t, piece)

    return _record(out, tuple(tensors), backprop)


def transpose(a):
    out = Tensor(a.data.T)

    def backprop(g):
        _accumulate(a, g.T)

    return _record(out, (a,), backprop)


def sigmoid(a):
    # numerically stable split form
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(y)

    def backprop(g):
        _accumulate(a, g * y * (1.0 - y))

    return _record(_check_finite(out, "sigmoid"), (a,), backprop)


def tanh(a):
    y = np.tanh(a.data)
    out = Tensor(y)

    def backprop(g):
        _accumulate(a, g * (1.0 - y * y))

    return _record(_check_finite(out, "tanh"), (a,), backprop)


def softmax(a):
    """Row-wise softmax with max subtraction."""
    x = a.data
    e = np.exp(x - x.max(axis=1, keepdims=True))
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y)

    def backprop(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        _accumulate(a, y * (g - dot))

    return _record(_check_finite(out, "softmax"), (a,), backprop)


def mean_rows(a):
    n = a.data.shape[0]
    out = Tensor(a.data.mean(axis=0, keepdims=True))

    def backprop(g):
        _accumulate(a, np.repeat(g / n, n, axis=0))

    return _record(out, (a,), backprop)


def sum_all(a):
    out = Tensor(np.array([[a.data.sum()]]))

    def backprop(g):
        _accumulate(a, np.full_like(a.data, g[0, 0]))

    return _record(out, (a,), backprop)


def slice_(a, rows=slice(None), cols=slice(None)):
    out = Tensor(a.data[rows, cols])

    def backprop(g):
        full = np.zeros_like(a.data)
        full[rows, cols] = g
        _accumulate(a, full)

    return _record(out, (a,), backprop)


def embed_lookup(table, ids):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ShapeError(f"embed_lookup: ids must be 1-D, got {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeError(
            f"embed_lookup: id out of range for table with {table.data.shape[0]} rows"
        )
    out = Tensor(table.data[ids])

    def backprop(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        _accumulate(table, full)

    return _record(out, (table,), backprop)


def log(a):
    if np.any(a.data <= 0):
        raise FloatingPointError("log of non-positive value")
    out = Tensor(np.log(a.data))

    def backprop(g):
        _accumulate(a, g / a.data)

    return _record(out, (a,), backprop)


def exp(a):
    y = np.exp(a.data)
    out = Tensor(y)

    def backprop(g):
        _accumulate(a, g * y)

    return _record(_check_finite(out, "exp"), (a,), backprop)

"""Reverse-mode automatic differentiation over dense float64 arrays.

Graphs are built eagerly: every primitive returns a new :class:`Tensor`
holding the forward value plus a closure that routes adjoints to its
parents.  ``Tensor.backward()`` then runs the closures once, in reverse
topological order.

Constraints the rest of the package relies on:

* float64 only; the symplectic-defect tolerances downstream (1e-8 and
  tighter) are unreachable in single precision.
* first-order only: backward closures capture plain ndarrays, never
  Tensors, so a backward pass can never extend the graph.
* every primitive checks its result for NaN/Inf and raises
  :class:`NonFiniteError` immediately; non-finite values are an error
  state, not data.
* optimizers replace ``Tensor.data`` with fresh arrays instead of
  mutating in place, so closures captured before an update stay valid.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphConsumedError, NonFiniteError, ShapeError

__all__ = [
    "Tensor",
    "Graph",
    "record",
    "backward",
    "constant",
    "parameter",
    "concat",
    "softmax",
    "tanh",
    "sigmoid",
]


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by op '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the autodiff graph: value, optional grad, parent links."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op", "name")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _backward=None, _op="leaf", name=None):
        self.data = _as_array(data)
        _check_finite(self.data, _op)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self._op = _op
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = self.name or self._op
        return f"Tensor({tag}, shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def item(self) -> float:
        return float(self.data)

    # -- graph execution -----------------------------------------------
    def topo_order(self) -> list["Tensor"]:
        """All reachable nodes, parents before children."""
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for par in node._parents:
                stack.append((par, False))
        return order

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad.

        `self` must be scalar. A graph may be consumed only once; rebuild
        it (re-run the forward pass) before differentiating again.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward seed must be scalar, got shape {self.data.shape}")
        if getattr(self, "_op", None) == "__consumed__":
            raise GraphConsumedError("graph already consumed; re-record the forward pass")
        order = self.topo_order()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        self._op = "__consumed__"

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -_as_array(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, c):
        return power_const(self, c)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power_const(other, -1.0))
        return mul(self, 1.0 / _as_array(other))

    def __getitem__(self, key):
        return take(self, key)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def square(self):
        return square(self)

    def sqrt(self):
        return power_const(self, 0.5)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return tsum(self, axis=axis) * (1.0 / n)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)


def constant(x, name=None) -> Tensor:
    return Tensor(x, requires_grad=False, name=name)


def parameter(x, name=None) -> Tensor:
    return Tensor(x, requires_grad=True, name=name)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn, op) -> Tensor:
    needs = any(p.requires_grad or p._backward is not None for p in parents)
    if not needs:
        # pure-constant subgraph: skip bookkeeping entirely
        return Tensor(data, _op=op)
    out = Tensor(data, _op=op, _parents=tuple(parents))
    out._backward = backward_fn(out)
    return out


def _accum(node: Tensor, g: np.ndarray) -> None:
    # grads are only ever rebound, never mutated in place, so sharing is safe
    node.grad = g if node.grad is None else node.grad + g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    data = a.data + b.data

    def bw(out):
        def run(g):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))
        return run

    return _make(data, (a, b), bw, "add")


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    data = a.data * b.data
    ad, bd = a.data, b.data

    def bw(out):
        def run(g):
            _accum(a, _unbroadcast(g * bd, ad.shape))
            _accum(b, _unbroadcast(g * ad, bd.shape))
        return run

    return _make(data, (a, b), bw, "mul")


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    data = a.data @ b.data
    ad, bd = a.data, b.data

    def bw(out):
        def run(g):
            _accum(a, _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape))
            _accum(b, _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape))
        return run

    return _make(data, (a, b), bw, "matmul")


def tanh(a) -> Tensor:
    a = _lift(a)
    data = np.tanh(a.data)

    def bw(out):
        y = out.data

        def run(g):
            _accum(a, g * (1.0 - y * y))
        return run

    return _make(data, (a,), bw, "tanh")


def sigmoid(a) -> Tensor:
    a = _lift(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def bw(out):
        y = out.data

        def run(g):
            _accum(a, g * y * (1.0 - y))
        return run

    return _make(data, (a,), bw, "sigmoid")


def square(a) -> Tensor:
    a = _lift(a)
    data = a.data * a.data
    ad = a.data

    def bw(out):
        def run(g):
            _accum(a, g * 2.0 * ad)
        return run

    return _make(data, (a,), bw, "square")


def power_const(a, c) -> Tensor:
    """Elementwise x**c for a fixed exponent (covers sqrt and reciprocal)."""
    a = _lift(a)
    c = float(c)
    data = a.data ** c
    ad = a.data

    def bw(out):
        def run(g):
            _accum(a, g * c * ad ** (c - 1.0))
        return run

    return _make(data, (a,), bw, f"pow{c}")


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def bw(out):
        def run(g):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            _accum(a, np.broadcast_to(gg, shape).copy())
        return run

    return _make(data, (a,), bw, "sum")


def softmax(a, axis=-1) -> Tensor:
    a = _lift(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bw(out):
        s = out.data

        def run(g):
            inner = (g * s).sum(axis=axis, keepdims=True)
            _accum(a, s * (g - inner))
        return run

    return _make(data, (a,), bw, "softmax")


def take(a, key) -> Tensor:
    """Slicing / integer-array gather. Gradient scatter-adds (duplicates sum)."""
    a = _lift(a)
    data = a.data[key]
    shape = a.data.shape

    def bw(out):
        def run(g):
            buf = np.zeros(shape, dtype=np.float64)
            np.add.at(buf, key, g)
            _accum(a, buf)
        return run

    return _make(data, (a,), bw, "take")


def concat(parts, axis=0) -> Tensor:
    parts = [_lift(p) for p in parts]
    if not parts:
        raise ShapeError("concat of zero tensors")
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def bw(out):
        def run(g):
            offset = 0
            for p, n in zip(parts, sizes):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(offset, offset + n)
                _accum(p, g[tuple(idx)])
                offset += n
        return run

    return _make(data, tuple(parts), bw, "concat")


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    data = a.data.reshape(shape)
    orig = a.data.shape

    def bw(out):
        def run(g):
            _accum(a, g.reshape(orig))
        return run

    return _make(data, (a,), bw, "reshape")


def swapaxes(a, ax1, ax2) -> Tensor:
    a = _lift(a)
    data = np.swapaxes(a.data, ax1, ax2)

    def bw(out):
        def run(g):
            _accum(a, np.swapaxes(g, ax1, ax2))
        return run

    return _make(data, (a,), bw, "swapaxes")


# ---------------------------------------------------------------------------
# composite helpers
# ---------------------------------------------------------------------------

def sum_squares(a) -> Tensor:
    return tsum(square(a))


def mse(pred, target) -> Tensor:
    """Mean over all entries of squared error."""
    pred = _lift(pred)
    diff = pred - (target.data if isinstance(target, Tensor) else _as_array(target))
    return sum_squares(diff) * (1.0 / pred.data.size)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    n = x.shape[-1]
    mu = tsum(x, axis=-1, keepdims=True) * (1.0 / n)
    centered = x - mu
    var = tsum(square(centered), axis=-1, keepdims=True) * (1.0 / n)
    inv = power_const(var + eps, -0.5)
    return centered * inv * gain + bias


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask; multiply activations (or weights) by it."""
    if rate <= 0.0:
        return np.ones(shape, dtype=np.float64)
    keep = rng.random(shape) >= rate
    return keep.astype(np.float64) / (1.0 - rate)


# ---------------------------------------------------------------------------
# recorded-graph surface
# ---------------------------------------------------------------------------

class Graph:
    """A recorded forward computation: its output node plus a replay handle."""

    def __init__(self, output: Tensor, fn=None, inputs=()):
        self.output = output
        self._fn = fn
        self._inputs = tuple(inputs)

    @property
    def nodes(self) -> list[Tensor]:
        return self.output.topo_order()

    def replay(self) -> Tensor:
        if self._fn is None:
            raise RuntimeError("graph was not recorded with a callable; nothing to replay")
        return self._fn(*self._inputs)


def record(fn, *inputs: Tensor) -> tuple[Tensor, Graph]:
    """Evaluate ``fn(*inputs)`` eagerly and return (value, recorded graph)."""
    out = fn(*inputs)
    if not isinstance(out, Tensor):
        raise TypeError("recorded function must return a Tensor")
    return out, Graph(out, fn, inputs)


def backward(graph: Graph | Tensor, seed: Tensor | None = None) -> dict[int, np.ndarray]:
    """Run reverse-mode on a recorded graph; returns {id(leaf): grad}."""
    out = graph.output if isinstance(graph, Graph) else graph
    if seed is not None and seed is not out:
        raise ShapeError("seed must be the recorded output node")
    out.backward()
    return {id(n): n.grad for n in out.topo_order() if n.requires_grad and n.grad is not None}

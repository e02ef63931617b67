"""Reverse-mode autodiff over dense numpy arrays.

Tape-free micrograd-style engine: every operation returns a new Tensor
holding its value, its parents, and a closure that maps the upstream
gradient to parent gradients. `backward` walks the graph in reverse
topological order. The op set is fixed: add, sub, mul (elementwise and
matrix), broadcasting, exp, log, relu, tanh, softplus, softmax, power,
sum, mean, slicing, concat, outer. Modules with hand-derived adjoints
(rasterizer, SSIM, grid gather) attach themselves via `from_op`.
"""

from __future__ import annotations

import numpy as np


class GraphError(Exception):
    """Raised for structural problems: non-scalar loss, cycles."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce `grad` back to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Dense real-valued array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    # -- structure ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def check_finite(self) -> "Tensor":
        if not self.is_finite():
            raise FloatingPointError(f"non-finite values in tensor from op '{self._op}'")
        return self

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- graph construction --------------------------------------------------

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        backward(self)

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        other = as_tensor(other)
        return mul(self, power(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return take(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


def from_op(data, parents, backward_fn, op: str = "custom") -> Tensor:
    """Create a graph node with a hand-written adjoint.

    `backward_fn(g)` must return one gradient array per parent (or None
    for parents that receive no gradient).
    """
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    out._op = op
    return out


# -- elementwise / broadcasting ops -------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return from_op(a.data + b.data, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return from_op(a.data - b.data, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return from_op(a.data * b.data, (a, b), back, "mul")


def power(a, p) -> Tensor:
    """Elementwise a**p for a real exponent p (caller keeps the base in-domain)."""
    a = as_tensor(a)
    p = float(p)

    def back(g):
        return (g * p * np.power(a.data, p - 1.0),)

    return from_op(np.power(a.data, p), (a,), back, "power")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def back(g):
        return (g * out_data,)

    return from_op(out_data, (a,), back, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)

    def back(g):
        return (g / a.data,)

    return from_op(np.log(a.data), (a,), back, "log")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0

    def back(g):
        return (g * mask,)

    return from_op(np.where(mask, a.data, 0.0), (a,), back, "relu")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def back(g):
        return (g * (1.0 - out_data * out_data),)

    return from_op(out_data, (a,), back, "tanh")


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.logaddexp(0.0, a.data)

    def back(g):
        # sigmoid via tanh keeps large |x| stable
        return (g * 0.5 * (1.0 + np.tanh(0.5 * a.data)),)

    return from_op(out_data, (a,), back, "softplus")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (g - dot),)

    return from_op(out_data, (a,), back, "softmax")


# -- reductions ----------------------------------------------------------------


def _expand_to(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = axis if isinstance(axis, tuple) else (axis,)
    if not keepdims:
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def back(g):
        return (_expand_to(np.asarray(g), a.shape, axis, keepdims),)

    return from_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), back, "sum")


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )

    def back(g):
        return (_expand_to(np.asarray(g) / count, a.shape, axis, keepdims),)

    return from_op(a.data.mean(axis=axis, keepdims=keepdims), (a,), back, "mean")


# -- shape ops -------------------------------------------------------------------


def take(a, key) -> Tensor:
    """Basic slicing (ints, slices, tuples thereof); no fancy indexing."""
    a = as_tensor(a)

    def back(g):
        ga = np.zeros_like(a.data)
        ga[key] += g
        return (ga,)

    return from_op(a.data[key], (a,), back, "slice")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        slicer = [slice(None)] * g.ndim
        grads = []
        for i in range(len(tensors)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    return from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back, "concat")


def outer(a, b) -> Tensor:
    """Outer product of two vectors: (n,) x (m,) -> (n, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("outer expects 1-D operands")

    def back(g):
        return g @ b.data, a.data @ g

    return from_op(np.outer(a.data, b.data), (a, b), back, "outer")


# -- matrix multiply ---------------------------------------------------------------


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a, b) -> Tensor:
    """Matrix product with numpy semantics for 1-D/2-D/batched-3-D operands."""
    a, b = as_tensor(a), as_tensor(b)

    if a.ndim == 1 and b.ndim == 2:
        def back(g):
            return b.data @ g, np.outer(a.data, g)
    elif a.ndim == 2 and b.ndim == 1:
        def back(g):
            return np.outer(g, b.data), a.data.T @ g
    elif a.ndim >= 2 and b.ndim >= 2:
        def back(g):
            ga = _unbroadcast(g @ _swap(b.data), a.shape)
            gb = _unbroadcast(_swap(a.data) @ g, b.shape)
            return ga, gb
    else:
        raise ValueError(f"unsupported matmul ranks {a.ndim} @ {b.ndim}")

    return from_op(a.data @ b.data, (a, b), back, "matmul")


# -- backward pass ------------------------------------------------------------------


def topo_order(root: Tensor) -> list:
    """Reverse-usable topological order of the subgraph ending at `root`.

    Iterative DFS; a node seen on the active stack twice means a cycle,
    which well-formed op construction cannot produce but is guarded anyway.
    """
    order, state = [], {}  # 0=on stack, 1=done
    stack = [(root, iter(root._parents))]
    state[id(root)] = 0
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            s = state.get(id(p))
            if s == 0:
                raise GraphError("cycle detected in computation graph")
            if s is None:
                state[id(p)] = 0
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            stack.pop()
            state[id(node)] = 1
            order.append(node)
    return order


def backward(loss: Tensor, leaves=None):
    """Accumulate d(loss)/d(node) into `.grad` for every reachable node.

    `loss` must be scalar. If `leaves` is given, returns their gradients
    as arrays, with zeros for leaves the loss does not depend on.
    """
    if loss.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._backward(node.grad)):
            if g is not None and parent.requires_grad:
                parent._accumulate(g.reshape(parent.shape) if g.shape != parent.shape else g)
    if leaves is not None:
        return [l.grad if l.grad is not None else np.zeros_like(l.data) for l in leaves]
    return None


def zero_grad(tensors):
    for t in tensors:
        t.grad = None

"""Reverse-mode automatic differentiation over dense float64 arrays.

The op set is sized to this project's network: batched matmul, the usual
elementwise functions, axis reductions, concat/stack/slice plumbing, and
dropout.  Gradients are accumulated additively into leaf tensors, so shared
subexpressions and repeated embedding rows come out right.  A
central-difference checker (`grad_check`) verifies any scalar loss against
the analytic gradients.

Everything is float64; there is no broadcasting beyond what numpy's rules
give the listed ops, and no GPU path.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Raised when operands have incompatible shapes."""


_GRAD_ENABLED = True
_CHECK_FINITE = False


@contextmanager
def no_grad():
    """Disable graph recording inside the block (cheap evaluation mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def set_check_finite(flag):
    """Toggle per-op finiteness checks.  On, every op raises
    FloatingPointError naming itself if it produces a non-finite value."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


class Tensor:
    """Dense float64 array with an optional gradient buffer.

    Leaf tensors are created directly (``requires_grad=True`` for
    parameters); every op returns a new Tensor wired to its parents so that
    ``backward()`` on a scalar result fills ``grad`` on all participating
    leaves.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents = ()
        self._backward = None

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

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __float__(self):
        return self.item()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- graph construction -------------------------------------------

    @staticmethod
    def _result(data, op, parents, backward):
        out = Tensor(data)
        if _CHECK_FINITE and not np.all(np.isfinite(out.data)):
            raise FloatingPointError(f"non-finite value produced by op '{op}'")
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.op = op
            out._parents = tuple(p for p in parents if p.requires_grad)
            out._backward = backward
        return out

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Reverse sweep from a scalar: fills ``grad`` on participating leaves."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)
        # intermediate grads are not needed past this point
        for node in order:
            if node is not self and node._backward is not None:
                node.grad = None

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, multiply(other, -1.0))

    def __rsub__(self, other):
        return add(other, multiply(self, -1.0))

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return multiply(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def as_tensor(x):
    """Wrap arrays/scalars as a constant Tensor; pass Tensors through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _toposort(root):
    order = []
    seen = set()
    stack = [(root, iter(root._parents))]
    seen.add(id(root))
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in seen and p._backward is not None:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()
    return order


def _unbroadcast(g, shape):
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ---------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return Tensor._result(data, "add", (a, b), backward)


def multiply(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"multiply: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor._result(data, "multiply", (a, b), backward)


def divide(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data / b.data
    except ValueError:
        raise ShapeError(f"divide: incompatible shapes {a.shape} and {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return Tensor._result(data, "divide", (a, b), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs 2-D or higher operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions disagree, shapes {a.shape} and {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.shape))

    return Tensor._result(data, "matmul", (a, b), backward)


# -- elementwise nonlinearities ----------------------------------------


def sigmoid(x):
    x = as_tensor(x)
    v = x.data
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)

    def backward(g):
        x._accumulate(g * out * (1.0 - out))

    return Tensor._result(out, "sigmoid", (x,), backward)


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - out * out))

    return Tensor._result(out, "tanh", (x,), backward)


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        x._accumulate(out * (g - inner))

    return Tensor._result(out, "softmax", (x,), backward)


def log(x):
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)

    def backward(g):
        x._accumulate(g / x.data)

    return Tensor._result(out, "log", (x,), backward)


def clamp_min(x, floor):
    x = as_tensor(x)
    out = np.maximum(x.data, floor)
    mask = (x.data >= floor).astype(np.float64)

    def backward(g):
        x._accumulate(g * mask)

    return Tensor._result(out, "clamp_min", (x,), backward)


def dropout(x, rate, train, rng):
    """Inverted dropout: active only when ``train``; identity otherwise."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    scale = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)

    def backward(g):
        x._accumulate(g * scale)

    return Tensor._result(x.data * scale, "dropout", (x,), backward)


# -- reductions ---------------------------------------------------------


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in sorted(a % len(shape) for a in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    data = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        x._accumulate(_expand_reduced(g, x.shape, axis, keepdims).copy())

    return Tensor._result(data, "sum", (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    data = np.mean(x.data, axis=axis, keepdims=keepdims)
    count = x.size / max(data.size, 1)

    def backward(g):
        x._accumulate(_expand_reduced(g, x.shape, axis, keepdims) / count)

    return Tensor._result(data, "mean", (x,), backward)


# -- structural ops -----------------------------------------------------


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty sequence")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes}") from None
    widths = [t.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, w in zip(tensors, widths):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(offset, offset + w)
                t._accumulate(g[tuple(idx)])
            offset += w

    return Tensor._result(data, "concat", tuple(tensors), backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("stack of an empty sequence")
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"stack: incompatible shapes {shapes}") from None

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    return Tensor._result(data, "stack", tuple(tensors), backward)


def slice_(x, key):
    x = as_tensor(x)
    data = x.data[key]

    def backward(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        x.grad[key] += g

    return Tensor._result(data, "slice", (x,), backward)


def take(x, indices):
    """Gather rows along axis 0; repeated indices accumulate gradient."""
    x = as_tensor(x)
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= x.shape[0]):
        raise ShapeError(
            f"take: index out of range for axis 0 of shape {x.shape} "
            f"(min {indices.min()}, max {indices.max()})"
        )
    data = x.data[indices]

    def backward(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        np.add.at(x.grad, indices, g)

    return Tensor._result(data, "take", (x,), backward)


def reshape(x, *shape):
    x = as_tensor(x)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {shape}") from None

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return Tensor._result(data, "reshape", (x,), backward)


def transpose(x, axes=None):
    x = as_tensor(x)
    data = np.transpose(x.data, axes)
    inverse = None if axes is None else np.argsort(axes)

    def backward(g):
        x._accumulate(np.transpose(g, inverse))

    return Tensor._result(data, "transpose", (x,), backward)


# -- parameters, optimizer, checker ------------------------------------


class Parameters:
    """Named registry of leaf tensors: the unit of optimization, gradient
    zeroing, and checkpointing."""

    def __init__(self):
        self._items: dict[str, Tensor] = {}

    def add(self, name, data):
        if name in self._items:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self._items[name] = t
        return t

    def __getitem__(self, name):
        return self._items[name]

    def __contains__(self, name):
        return name in self._items

    def __len__(self):
        return len(self._items)

    def items(self):
        return self._items.items()

    def names(self):
        return list(self._items)

    def zero_grads(self):
        for t in self._items.values():
            t.grad = np.zeros_like(t.data)

    def n_entries(self):
        return sum(t.size for t in self._items.values())

    def copy_arrays(self):
        return {name: t.data.copy() for name, t in self._items.items()}

    def load_arrays(self, arrays):
        for name, t in self._items.items():
            if name not in arrays:
                raise KeyError(f"missing parameter {name!r}")
            src = np.asarray(arrays[name], dtype=np.float64)
            if src.shape != t.shape:
                raise ShapeError(f"parameter {name!r}: stored shape {src.shape} != {t.shape}")
            t.data[...] = src


class Adam:
    """Adam with bias correction.  State starts at zero; updates are
    deterministic functions of (params, grads, state)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**self.t)
            v_hat = v / (1.0 - b2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def grad_check(f, params, step=1e-5):
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` must be a deterministic scalar function of ``params`` (a
    Parameters registry or a name->Tensor mapping); dropout must be off.
    Returns the max over parameter entries of
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError(f"step must be in [1e-7, 1e-3], got {step}")
    items = list(params.items())
    set_check_finite(True)
    try:
        for _, t in items:
            t.grad = np.zeros_like(t.data)
        loss = f()
        loss.backward()
        analytic = {name: t.grad.copy() for name, t in items}
    finally:
        set_check_finite(False)
    worst = 0.0
    # The perturbed evaluations only need forward values, so skip graph
    # recording; non-finite results still surface through the isfinite
    # check below.
    with no_grad():
        for name, t in items:
            flat = t.data.reshape(-1)
            a_flat = analytic[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = float(f())
                flat[i] = orig - step
                lo = float(f())
                flat[i] = orig
                numeric = (hi - lo) / (2.0 * step)
                if not math.isfinite(numeric):
                    raise FloatingPointError(f"non-finite central difference at {name}[{i}]")
                err = abs(a_flat[i] - numeric) / max(1.0, abs(numeric))
                worst = max(worst, err)
    return worst

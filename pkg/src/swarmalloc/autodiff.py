"""Reverse-accumulation automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 ndarray and records, while gradients are
enabled, how it was produced.  Calling ``backward()`` on a scalar result
walks the recorded graph in reverse topological order and accumulates
``grad`` arrays on every tensor created with ``requires_grad=True``.

The operation set is intentionally small: exactly what the network stack and
the training losses need.  All forward values are computed with the same
numpy kernels whether or not gradient recording is active, so a no-grad
forward pass is bit-identical to the value side of a recorded pass.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteGradient

_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (values unchanged)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` over the axes numpy broadcast to reach ``grad.shape``."""
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
    __slots__ = ("val", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, val, requires_grad=False):
        self.val = np.asarray(val, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    def item(self) -> float:
        return float(self.val)

    def detach(self) -> "Tensor":
        return Tensor(self.val)

    def __repr__(self):
        return f"Tensor(shape={self.val.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        if self.val.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.val)
        for node in reversed(order):
            if node._vjp is not None and node.grad is not None:
                node._vjp(node.grad)

    # arithmetic dunders ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return getitem(self, key)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


wrap = _wrap


def parameter(val) -> Tensor:
    """A leaf tensor that accumulates gradients."""
    return Tensor(np.array(val, dtype=np.float64), requires_grad=True)


def _make(val, parents, vjp) -> Tensor:
    out = Tensor(val)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._vjp = vjp
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.val)
    t.grad += g


# elementwise --------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    val = a.val + b.val

    def vjp(g):
        _accumulate(a, _unbroadcast(g, a.val.shape))
        _accumulate(b, _unbroadcast(g, b.val.shape))

    return _make(val, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    val = a.val * b.val

    def vjp(g):
        _accumulate(a, _unbroadcast(g * b.val, a.val.shape))
        _accumulate(b, _unbroadcast(g * a.val, b.val.shape))

    return _make(val, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    val = a.val / b.val

    def vjp(g):
        _accumulate(a, _unbroadcast(g / b.val, a.val.shape))
        _accumulate(b, _unbroadcast(-g * a.val / (b.val * b.val), b.val.shape))

    return _make(val, (a, b), vjp)


def power(a, exponent: float) -> Tensor:
    a = _wrap(a)
    val = a.val ** exponent

    def vjp(g):
        _accumulate(a, _unbroadcast(g * exponent * a.val ** (exponent - 1), a.val.shape))

    return _make(val, (a,), vjp)


def tanh(a) -> Tensor:
    a = _wrap(a)
    val = np.tanh(a.val)

    def vjp(g):
        _accumulate(a, g * (1.0 - val * val))

    return _make(val, (a,), vjp)


def relu(a) -> Tensor:
    a = _wrap(a)
    val = np.maximum(a.val, 0.0)

    def vjp(g):
        _accumulate(a, g * (a.val > 0.0))

    return _make(val, (a,), vjp)


def exp(a) -> Tensor:
    a = _wrap(a)
    val = np.exp(a.val)

    def vjp(g):
        _accumulate(a, g * val)

    return _make(val, (a,), vjp)


def log(a) -> Tensor:
    a = _wrap(a)
    val = np.log(a.val)

    def vjp(g):
        _accumulate(a, g / a.val)

    return _make(val, (a,), vjp)


def softplus(a) -> Tensor:
    a = _wrap(a)
    val = np.logaddexp(0.0, a.val)

    def vjp(g):
        # sigmoid computed in a saturation-safe form
        _accumulate(a, g * np.exp(a.val - val))

    return _make(val, (a,), vjp)


def absolute(a) -> Tensor:
    a = _wrap(a)
    val = np.abs(a.val)

    def vjp(g):
        _accumulate(a, g * np.sign(a.val))

    return _make(val, (a,), vjp)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes through wherever a is in range."""
    a = _wrap(a)
    val = np.clip(a.val, lo, hi)

    def vjp(g):
        _accumulate(a, g * ((a.val >= lo) & (a.val <= hi)))

    return _make(val, (a,), vjp)


def where(mask: np.ndarray, a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    val = np.where(mask, a.val, b.val)

    def vjp(g):
        _accumulate(a, _unbroadcast(g * mask, a.val.shape))
        _accumulate(b, _unbroadcast(g * ~mask, b.val.shape))

    return _make(val, (a, b), vjp)


# reductions ---------------------------------------------------------------


def _restore_dims(g: np.ndarray, shape: tuple, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        g = np.expand_dims(g, tuple(a % len(shape) for a in axes))
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    val = a.val.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        _accumulate(a, _restore_dims(g, a.val.shape, axis, keepdims))

    return _make(val, (a,), vjp)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    val = a.val.mean(axis=axis, keepdims=keepdims)
    count = a.val.size / val.size

    def vjp(g):
        _accumulate(a, _restore_dims(g, a.val.shape, axis, keepdims) / count)

    return _make(val, (a,), vjp)


def tmax(a, axis=None, keepdims=False) -> Tensor:
    """Max reduction; at ties the gradient is split evenly (subgradient)."""
    a = _wrap(a)
    val = a.val.max(axis=axis, keepdims=keepdims)

    def vjp(g):
        full = a.val.max(axis=axis, keepdims=True)
        mask = a.val == full
        count = mask.sum(axis=axis, keepdims=True)
        _accumulate(a, _restore_dims(g, a.val.shape, axis, keepdims) * mask / count)

    return _make(val, (a,), vjp)


def minimum(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    take_a = a.val <= b.val
    val = np.where(take_a, a.val, b.val)

    def vjp(g):
        _accumulate(a, _unbroadcast(g * take_a, a.val.shape))
        _accumulate(b, _unbroadcast(g * ~take_a, b.val.shape))

    return _make(val, (a, b), vjp)


# shape ops ----------------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    val = a.val.reshape(shape)

    def vjp(g):
        _accumulate(a, g.reshape(a.val.shape))

    return _make(val, (a,), vjp)


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = _wrap(a)
    val = a.val.swapaxes(ax1, ax2)

    def vjp(g):
        _accumulate(a, g.swapaxes(ax1, ax2))

    return _make(val, (a,), vjp)


def concat(parts, axis=-1) -> Tensor:
    parts = [_wrap(p) for p in parts]
    val = np.concatenate([p.val for p in parts], axis=axis)
    sizes = [p.val.shape[axis] for p in parts]

    def vjp(g):
        offsets = np.cumsum([0] + sizes)
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(idx)])

    return _make(val, tuple(parts), vjp)


def getitem(a, key) -> Tensor:
    a = _wrap(a)
    val = a.val[key]

    def vjp(g):
        out = np.zeros_like(a.val)
        np.add.at(out, key, g)
        _accumulate(a, out)

    return _make(val, (a,), vjp)


def take_rows(a, idx: np.ndarray) -> Tensor:
    """Gather rows along the second-to-last axis.

    ``a`` of shape (M, G) with integer ``idx`` of shape (N,) gives (N, G);
    a leading batch axis on both gathers per batch element.
    """
    a = _wrap(a)
    idx = np.asarray(idx)
    if a.val.ndim == 2:
        key = (idx,)
    elif a.val.ndim == 3:
        key = (np.arange(a.val.shape[0])[:, None], idx)
    else:
        raise ValueError(f"take_rows supports 2-D or 3-D input, got {a.val.ndim}-D")
    val = a.val[key]

    def vjp(g):
        out = np.zeros_like(a.val)
        np.add.at(out, key, g)
        _accumulate(a, out)

    return _make(val, (a,), vjp)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.val.ndim < 2 or b.val.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    val = a.val @ b.val

    def vjp(g):
        _accumulate(a, _unbroadcast(g @ b.val.swapaxes(-1, -2), a.val.shape))
        _accumulate(b, _unbroadcast(a.val.swapaxes(-1, -2) @ g, b.val.shape))

    return _make(val, (a, b), vjp)


# composites ---------------------------------------------------------------


def softmax(a, axis=-1) -> Tensor:
    a = _wrap(a)
    shifted = add(a, Tensor(-a.val.max(axis=axis, keepdims=True)))
    e = exp(shifted)
    return div(e, tsum(e, axis=axis, keepdims=True))


def square(a) -> Tensor:
    a = _wrap(a)
    return mul(a, a)


# gradient utilities --------------------------------------------------------


def zero_grads(params: dict):
    for t in params.values():
        t.grad = None


def grad(params: dict, loss_fn, *inputs) -> dict:
    """Gradients of ``loss_fn(params, *inputs)`` for every named parameter.

    Raises NonFiniteGradient when backpropagation produces NaN or inf.
    """
    zero_grads(params)
    loss = loss_fn(params, *inputs)
    if not isinstance(loss, Tensor):
        raise TypeError("loss_fn must return a Tensor")
    loss.backward()
    grads = {}
    for name, t in params.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.val)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for parameter {name!r}")
        grads[name] = g
    return grads


def finite_difference(params: dict, loss_fn, *inputs, h: float = 1e-5) -> dict:
    """Central-difference gradients; the independent oracle for grad()."""
    out = {}
    with no_grad():
        for name, t in params.items():
            g = np.zeros_like(t.val)
            flat = t.val.ravel()
            gflat = g.ravel()
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + h
                hi = float(loss_fn(params, *inputs).val)
                flat[k] = orig - h
                lo = float(loss_fn(params, *inputs).val)
                flat[k] = orig
                gflat[k] = (hi - lo) / (2.0 * h)
            out[name] = g
    return out

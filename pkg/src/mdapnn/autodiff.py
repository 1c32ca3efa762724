"""Array-valued reverse-mode tape.

Every node holds a float64 numpy array. Operands that are not Tensor
(python floats, numpy arrays) join the forward computation as constants
and receive no gradient, which keeps tapes small: collocation points,
quadrature weights and seed vectors never show up as nodes.

The tape only ever differentiates with respect to network parameters.
Derivatives with respect to input coordinates are propagated forward as
extra value channels (see net.forward_jet), built from these same
primitives, so one reverse sweep yields parameter gradients of losses
that contain first and second input derivatives.

Gradient accumulation is single threaded, in the fixed topological order
of tape construction, so repeated runs are bitwise reproducible.
"""

import numpy as np


def _as_value(v):
    if isinstance(v, Tensor):
        return v.value
    return np.asarray(v, dtype=np.float64)


def _acc(t, g):
    # accumulate into t.grad, lazily allocated
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = tuple(p for p in parents if isinstance(p, Tensor))
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(other, -1.0) if isinstance(other, Tensor) else -_as_value(other))

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not on the tape; divide by constants")
        return scale(self, 1.0 / _as_value(other))

    def __pow__(self, n):
        return pow_int(self, n)

    # -- shape ops ----------------------------------------------------

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def rows(self, start, stop):
        return rows(self, start, stop)

    def col(self, j):
        return col(self, j)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis, keepdims)


def add(a, b):
    av, bv = _as_value(a), _as_value(b)
    out = Tensor(av + bv, (a, b))

    def back(g):
        if isinstance(a, Tensor):
            _acc(a, _unbroadcast(g, av.shape))
        if isinstance(b, Tensor):
            _acc(b, _unbroadcast(g, bv.shape))

    out._backward = back
    return out


def mul(a, b):
    av, bv = _as_value(a), _as_value(b)
    out = Tensor(av * bv, (a, b))

    def back(g):
        if isinstance(a, Tensor):
            _acc(a, _unbroadcast(g * bv, av.shape))
        if isinstance(b, Tensor):
            _acc(b, _unbroadcast(g * av, bv.shape))

    out._backward = back
    return out


def scale(a, k):
    """a * k with k constant (scalar or array)."""
    k = _as_value(k)
    out = Tensor(_as_value(a) * k, (a,))

    def back(g):
        _acc(a, _unbroadcast(g * k, a.value.shape))

    out._backward = back
    return out


def pow_int(a, n):
    if not isinstance(n, int) or n < 2:
        raise TypeError("pow_int wants an integer exponent >= 2")
    av = _as_value(a)
    out = Tensor(av ** n, (a,))

    def back(g):
        _acc(a, g * (n * av ** (n - 1)))

    out._backward = back
    return out


def tanh(a):
    y = np.tanh(_as_value(a))
    out = Tensor(y, (a,))

    def back(g):
        _acc(a, g * (1.0 - y * y))

    out._backward = back
    return out


def exp(a):
    y = np.exp(_as_value(a))
    out = Tensor(y, (a,))

    def back(g):
        _acc(a, g * y)

    out._backward = back
    return out


def negexp(a):
    """exp(-a), used as an output activation for positive fields."""
    y = np.exp(-_as_value(a))
    out = Tensor(y, (a,))

    def back(g):
        _acc(a, -g * y)

    out._backward = back
    return out


def sigmoid(a):
    av = _as_value(a)
    # stable two-branch form
    y = np.where(av >= 0, 1.0 / (1.0 + np.exp(-np.clip(av, 0.0, None))),
                 np.exp(np.clip(av, None, 0.0)) / (1.0 + np.exp(np.clip(av, None, 0.0))))
    out = Tensor(y, (a,))

    def back(g):
        _acc(a, g * y * (1.0 - y))

    out._backward = back
    return out


def softplus(a):
    # overflow-safe: max(x,0) + log1p(exp(-|x|))
    av = _as_value(a)
    y = np.maximum(av, 0.0) + np.log1p(np.exp(-np.abs(av)))
    sig = np.where(av >= 0, 1.0 / (1.0 + np.exp(-np.clip(av, 0.0, None))),
                   np.exp(np.clip(av, None, 0.0)) / (1.0 + np.exp(np.clip(av, None, 0.0))))
    out = Tensor(y, (a,))

    def back(g):
        _acc(a, g * sig)

    out._backward = back
    return out


def dotT(x, w):
    """x @ w.T; w is the (out, in) weight matrix of a layer."""
    xv, wv = _as_value(x), _as_value(w)
    out = Tensor(xv @ wv.T, (x, w))

    def back(g):
        if isinstance(x, Tensor):
            _acc(x, g @ wv)
        if isinstance(w, Tensor):
            _acc(w, g.T @ xv)

    out._backward = back
    return out


def rowdot(a, w):
    """Per-row weighted column sum: (n,k) x (k,) -> (n,1)."""
    av = _as_value(a)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    out = Tensor(av @ w[:, None], (a,))

    def back(g):
        _acc(a, g @ w[None, :])

    out._backward = back
    return out


def reshape(a, shape):
    av = _as_value(a)
    out = Tensor(av.reshape(shape), (a,))

    def back(g):
        _acc(a, g.reshape(av.shape))

    out._backward = back
    return out


def rows(a, start, stop):
    """Contiguous row slice a[start:stop]."""
    av = _as_value(a)
    out = Tensor(av[start:stop], (a,))

    def back(g):
        full = np.zeros_like(av)
        full[start:stop] = g
        _acc(a, full)

    out._backward = back
    return out


def col(a, j):
    """Single column as (n,1)."""
    av = _as_value(a)
    out = Tensor(av[:, j:j + 1], (a,))

    def back(g):
        full = np.zeros_like(av)
        full[:, j:j + 1] = g
        _acc(a, full)

    out._backward = back
    return out


def tensor_sum(a, axis=None, keepdims=False):
    av = _as_value(a)
    out = Tensor(av.sum(axis=axis, keepdims=keepdims), (a,))

    def back(g):
        if axis is None:
            _acc(a, np.broadcast_to(g, av.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _acc(a, np.broadcast_to(gg, av.shape).copy())

    out._backward = back
    return out


def tensor_mean(a, axis=None, keepdims=False):
    av = _as_value(a)
    n = av.size if axis is None else av.shape[axis]
    s = tensor_sum(a, axis, keepdims)
    return scale(s, 1.0 / n)


def backward(root, seed=None):
    """Reverse sweep from `root`, accumulating into .grad of every leaf."""
    topo = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, ready = stack.pop()
        if ready:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value) if seed is None else np.asarray(seed, dtype=np.float64)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)

"""Minimal reverse-mode differentiation over numpy arrays.

Only the operations the graph encoders, coupling stage and predictor need are
provided. Every op broadcasts like numpy and reduces gradients back onto the
operand shape, so batched inputs ``(B, N, D)`` combine freely with shared
parameters ``(D, M)``.

Subgradient conventions: ``relu'(0) = 0``, ``leaky_relu'(0) = slope``; the ball
projection uses the identity Jacobian strictly inside and the radial-shrink
Jacobian on or beyond the boundary.
"""

import contextlib

import numpy as np

from .manifold import log_scale, log_scale_deriv

# inputs of piecewise-linear ops, collected while kink_probe() is active
_kink_log = None


@contextlib.contextmanager
def kink_probe():
    """Collect the inputs of every relu / leaky_relu evaluated inside the block.

    Not thread-safe: the log is module state.
    """
    global _kink_log
    previous, _kink_log = _kink_log, []
    try:
        yield _kink_log
    finally:
        _kink_log = previous


def _float_array(x):
    """float64 unless the input already carries extended precision."""
    x = np.asarray(x)
    return x if x.dtype == np.longdouble else x.astype(np.float64, copy=False)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = _float_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{label})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _tracks(parent):
                    continue
                pg = _unbroadcast(pg, parent.data.shape)
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _tracks(t):
    return t.requires_grad or bool(t._parents)


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and _tracks(p):
                stack.append((p, False))
    return order


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    parents = tuple(parents)
    if not any(_tracks(p) for p in parents):
        return Tensor(data)
    return Tensor(data, _parents=parents, _backward=backward)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b), lambda g: (g, g))


def neg(a):
    return _node(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _node(out, (a, b), lambda g: (g / b.data, -g * out / b.data))


def power(a, exponent):
    a = as_tensor(a)
    out = a.data**exponent
    return _node(out, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if b.data.ndim == 1:
            ga = g[..., None] * b.data
            gb = np.einsum("...i,...ij->j", g, a.data) if a.data.ndim > 1 else g * a.data
            return ga, gb
        ga = g @ np.swapaxes(b.data, -1, -2)
        if a.data.ndim == 1:
            gb = np.outer(a.data, g)
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _node(a.data @ b.data, (a, b), backward)


def index(a, key):
    """Basic (non-fancy) indexing, e.g. one head of a stacked parameter."""
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return (full,)

    return _node(a.data[key], (a,), backward)


def reshape(a, shape):
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),))


def transpose(a):
    """Swap the last two axes."""
    a = as_tensor(a)
    return _node(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def swapaxes(a, i, j):
    a = as_tensor(a)
    return _node(np.swapaxes(a.data, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def total(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape),)

    return _node(out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(total(a, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(tensors):
    """Concatenate along the last axis, broadcasting the leading axes."""
    tensors = [as_tensor(t) for t in tensors]
    lead = np.broadcast_shapes(*(t.data.shape[:-1] for t in tensors))
    datas = [np.broadcast_to(t.data, lead + t.data.shape[-1:]) for t in tensors]
    bounds = np.cumsum([d.shape[-1] for d in datas])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=-1))

    return _node(np.concatenate(datas, axis=-1), tensors, backward)


def relu(a):
    a = as_tensor(a)
    if _kink_log is not None:
        _kink_log.append(a.data)
    active = a.data > 0
    return _node(np.where(active, a.data, 0.0), (a,), lambda g: (g * active,))


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    if _kink_log is not None:
        _kink_log.append(a.data)
    pos = a.data > 0
    factor = np.where(pos, 1.0, slope)
    return _node(a.data * factor, (a,), lambda g: (g * factor,))


def elu(a, alpha=1.0):
    a = as_tensor(a)
    pos = a.data > 0
    expm = np.expm1(np.minimum(a.data, 0.0))
    out = np.where(pos, a.data, alpha * expm)
    return _node(out, (a,), lambda g: (g * np.where(pos, 1.0, alpha * (expm + 1.0)),))


def cos(a):
    a = as_tensor(a)
    return _node(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def project_to_ball(a, c, epsilon):
    """Row-wise radial projection into the open ball of curvature ``-c``."""
    a = as_tensor(a)
    x = a.data
    norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    u = np.sqrt(c) * norm
    outside = u >= 1.0
    if not np.any(outside):
        return a
    safe_norm = np.where(outside, norm, 1.0)
    k = (1 - epsilon) / np.sqrt(c)
    scale = np.where(outside, k / safe_norm, 1.0)
    out = scale * x

    def backward(g):
        unit = x / safe_norm
        radial = np.sum(unit * g, axis=-1, keepdims=True) * unit
        return (np.where(outside, scale * (g - radial), g),)

    return _node(out, (a,), backward)


def log_map_origin(a, c):
    """Row-wise logarithmic map at the origin (origin maps to origin)."""
    a = as_tensor(a)
    z = a.data
    sqrt_c = np.sqrt(c)
    norm = np.sqrt(np.sum(z * z, axis=-1, keepdims=True))
    u = sqrt_c * norm
    s = log_scale(u)

    def backward(g):
        # d(s(u) z) = s dz + s'(u) sqrt(c) (z.dz / |z|) z
        ds = log_scale_deriv(u)
        safe = np.where(norm > 0, norm, 1.0)
        coef = np.where(norm > 0, ds * sqrt_c / safe, 0.0)
        return (s * g + coef * np.sum(z * g, axis=-1, keepdims=True) * z,)

    return _node(s * z, (a,), backward)


def tangent_embed(a, c, epsilon):
    return log_map_origin(project_to_ball(a, c, epsilon), c)


def row_normalize(a):
    """Divide each row by its L2 norm; zero rows stay zero."""
    a = as_tensor(a)
    x = a.data
    norm = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    nonzero = norm > 0
    safe = np.where(nonzero, norm, 1.0)
    out = np.where(nonzero, x / safe, 0.0)

    def backward(g):
        proj = np.sum(out * g, axis=-1, keepdims=True)
        return (np.where(nonzero, (g - proj * out) / safe, 0.0),)

    return _node(out, (a,), backward)


def masked_softmax(a, mask):
    """Softmax over the last axis restricted to ``mask`` (each row needs one True)."""
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    logits = np.where(mask, a.data, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - np.sum(g * p, axis=-1, keepdims=True)),)

    return _node(p, (a,), backward)


def sym_normalize_adjacency(a):
    """Differentiable ``D^-1/2 (A + I) D^-1/2`` on a batch of nonnegative matrices."""
    a = as_tensor(a)
    n = a.data.shape[-1]
    looped = add(a, np.eye(n))
    deg = total(looped, axis=-1, keepdims=True)
    inv_sqrt = power(deg, -0.5)
    return mul(mul(looped, inv_sqrt), transpose(inv_sqrt))


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over a batch of logit rows; returns ``(loss, probs)``."""
    logits = as_tensor(logits)
    z = logits.data
    labels = np.asarray(labels, dtype=np.int64)
    batch = z.shape[0]
    shifted = z - z.max(axis=-1, keepdims=True)
    logsum = np.log(np.sum(np.exp(shifted), axis=-1))
    log_probs = shifted - logsum[:, None]
    probs = np.exp(log_probs)
    loss = -np.mean(log_probs[np.arange(batch), labels])
    onehot = np.zeros_like(z)
    onehot[np.arange(batch), labels] = 1.0

    def backward(g):
        return (g * (probs - onehot) / batch,)

    return _node(np.asarray(loss), (logits,), backward), probs

"""Dense fp64 tensors with reverse-mode differentiation.

Every differentiable operation builds its output through :func:`_node`, which
records the parent tensors and a closure mapping the output gradient to one
gradient per parent.  Tensors receive a monotonically increasing id at
creation, so sorting the reachable nodes by id gives a valid topological
order and a fixed, reproducible accumulation order in :meth:`Tensor.backward`.
"""

import itertools

import numpy as np

from ..errors import DimensionError, DomainError

_ids = itertools.count()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) and data.dtype == np.float64 \
            else np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self._id = next(_ids)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        """Populate ``grad`` on every tensor reachable from this scalar.

        Leaf gradients accumulate across calls; callers zero them between
        optimizer steps.
        """
        if self.data.size != 1:
            raise DomainError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = _reachable(self)
        grads = {self._id: np.ones_like(self.data)}
        for node in order:
            g = grads.pop(node._id, None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            node.grad = g
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(parent._id)
                grads[parent._id] = pg if prev is None else prev + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tensor_sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def _reachable(root):
    seen = {}
    stack = [root]
    while stack:
        t = stack.pop()
        if t._id in seen or not t.requires_grad:
            continue
        seen[t._id] = t
        stack.extend(t._parents)
    return [seen[k] for k in sorted(seen, reverse=True)]


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    requires = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=requires, _parents=parents if requires else (),
                  _backward=backward if requires else None)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}") from None
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a):
    return _node(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}") from None
    return _node(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape),
                                         _unbroadcast(g * a.data, b.shape)))


def matmul(a, b):
    """Matrix product; ``a`` may carry leading batch axes.

    ``b`` is either a matrix shared across the batch or has the same batch
    axes as ``a``.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or (
            b.ndim > 2 and b.shape[:-2] != a.shape[:-2]):
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    if b.ndim == 2 and b.shape[1] < 8:
        # BLAS rounds narrow products differently depending on the row's
        # position; an explicit reduction keeps rows independent of order
        out = (a.data[..., :, :, None] * b.data).sum(axis=-2)
    else:
        out = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2 and a.ndim > 2:
            a2 = a.data.reshape(-1, a.shape[-1])
            gb = a2.T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _node(out, (a, b), backward)


def linear(x, weight, bias=None):
    x = _as_tensor(x)
    if x.shape[-1] != weight.shape[0] or (bias is not None and bias.shape != (weight.shape[1],)):
        raise DimensionError(
            f"linear shape mismatch: x {x.shape}, weight {weight.shape}, "
            f"bias {None if bias is None else bias.shape}")
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def leaky_relu(x, negative_slope=0.01):
    if negative_slope < 0:
        raise DomainError("negative_slope must be >= 0")
    pos = x.data > 0
    # the subgradient at 0 is the slope
    scale = pos * (1.0 - negative_slope) + negative_slope
    return _node(x.data * scale, (x,), lambda g: (g * scale,))


class BatchNormState:
    """Running statistics of one batch-norm layer."""

    def __init__(self, num_features, momentum=0.9, eps=1e-5):
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)
        self.momentum = momentum
        self.eps = eps


def batch_norm(x, gamma, beta, state, training=True):
    """Per-feature normalization over every axis but the last.

    Train mode uses batch statistics (biased variance) and folds them into
    the running statistics with ``state.momentum``; eval mode uses the running
    statistics only.
    """
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"batch_norm: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    flat = x.data.reshape(-1, d)
    n = flat.shape[0]
    if training:
        mu = flat.mean(axis=0)
        xhat = flat - mu
        var = np.einsum("ij,ij->j", xhat, xhat) / n
        m = state.momentum
        state.running_mean = m * state.running_mean + (1 - m) * mu
        state.running_var = m * state.running_var + (1 - m) * var
    else:
        xhat = flat - state.running_mean
        var = state.running_var
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat *= inv
    out = xhat * gamma.data
    out += beta.data

    def backward(g):
        g2 = g.reshape(-1, d)
        dbeta = g2.sum(axis=0)
        dgamma = np.einsum("ij,ij->j", g2, xhat)
        if training:
            dx = xhat * (dgamma / n)
            np.subtract(g2, dx, out=dx)
            dx -= dbeta / n
            dx *= gamma.data * inv
        else:
            dx = g2 * (gamma.data * inv)
        return dx.reshape(x.shape), dgamma, dbeta

    return _node(out.reshape(x.shape), (x, gamma, beta), backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data
    d = x.shape[-1]

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        dxhat = g * gamma.data
        dx = inv / d * (d * dxhat - dxhat.sum(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        return dx, dgamma, dbeta

    return _node(out, (x, gamma, beta), backward)


def _softmax_np(a, axis):
    e = np.exp(a - a.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x, axis=-1):
    x = _as_tensor(x)
    s = _softmax_np(x.data, axis)
    return _node(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def _sorted_sum(x, axis):
    # summing in sorted order makes the result independent of input order
    return np.sort(x, axis=axis).sum(axis=axis)


def attention(q, k, v):
    """Scaled dot-product attention over the second-to-last axis.

    q, k, v have shape (..., n, d).  Sums over keys are taken in sorted
    order, so permuting the n items permutes the output rows exactly.
    """
    if not (q.shape == k.shape == v.shape):
        raise DimensionError(f"attention shapes differ: {q.shape}, {k.shape}, {v.shape}")
    scale = 1.0 / np.sqrt(q.shape[-1])
    # elementwise products summed per pair keep each score independent of its position
    s = (q.data[..., :, None, :] * k.data[..., None, :, :]).sum(axis=-1) * scale
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    a = e / _sorted_sum(e, -1)[..., None]
    out = _sorted_sum(a[..., :, :, None] * v.data[..., None, :, :], -2)

    def backward(g):
        dv = np.swapaxes(a, -1, -2) @ g
        da = g @ np.swapaxes(v.data, -1, -2)
        ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) * scale
        return ds @ k.data, np.swapaxes(ds, -1, -2) @ q.data, dv

    return _node(out, (q, k, v), backward)


def max_reduce(x, axis=0):
    """Maximum along ``axis``; the gradient goes to the first maximal entry."""
    if x.shape[axis] == 0:
        raise DomainError("max_reduce over an empty axis")
    out = x.data.max(axis=axis)

    def backward(g):
        idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _node(out, (x,), backward)


def maximum(a, b):
    """Elementwise maximum of two same-shape tensors (ties go to ``a``)."""
    if a.shape != b.shape:
        raise DimensionError(f"maximum shape mismatch: {a.shape} vs {b.shape}")
    return max_reduce(stack([a, b], axis=0), axis=0)


def mse_loss(pred, target):
    target = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target
    n = diff.size
    return _node(np.array(np.mean(diff * diff)), (pred,), lambda g: (g * 2.0 * diff / n,))


def cross_entropy(logits, labels):
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != labels.size or labels.size == 0:
        raise DimensionError(f"cross_entropy: logits {logits.shape}, {labels.size} labels")
    k = logits.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise DomainError(f"labels must lie in [0, {k - 1}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(labels.size)
    loss = np.mean(logsum - z[rows, labels])

    def backward(g):
        p = np.exp(z - logsum[:, None])
        p[rows, labels] -= 1.0
        return (g * p / labels.size,)

    return _node(np.array(loss), (logits,), backward)


def tensor_sum(x, axis=None):
    out = np.sum(x.data, axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(np.asarray(out, dtype=np.float64), (x,), backward)


def mean(x, axis=None):
    n = x.size if axis is None else x.shape[axis]
    return mul(tensor_sum(x, axis), 1.0 / n)


def reshape(x, shape):
    x = _as_tensor(x)
    out = x.data.reshape(shape)
    return _node(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    x = _as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _node(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _node(out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    return _node(out, tuple(tensors), lambda g: tuple(
        np.take(g, i, axis=axis) for i in range(len(tensors))))


def gather(x, index):
    """Gather rows of a batched point set.

    ``x`` has shape (B, n, c) and ``index`` (B, ...) holds point indices; the
    result has shape (B, ..., c).
    """
    index = np.asarray(index)
    b = x.shape[0]
    flat = index.reshape(b, -1)
    rows = np.arange(b)[:, None]
    out = x.data[rows, flat].reshape(index.shape + (x.shape[-1],))

    def backward(g):
        c = x.shape[-1]
        rows_global = (rows * x.shape[1] + flat).reshape(-1, 1) * c + np.arange(c)
        gx = np.bincount(rows_global.ravel(), weights=g.ravel(), minlength=x.size)
        return (gx.reshape(x.shape),)

    return _node(out, (x,), backward)

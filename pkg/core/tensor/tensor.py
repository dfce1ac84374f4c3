"""
Dense tensors with reverse-mode differentiation.

Values are numpy arrays (row-major, float64 unless a `precision` context says
otherwise). Every op returns a new DiffTensor holding its parents and a
vector-Jacobian closure; `backward()` walks the tape in reverse topological
order and accumulates gradients into the leaves.
"""
import contextlib
import threading

import numpy as np

from core.utils.errors import NonFiniteInputError, ShapeMismatchError

__all__ = [
    "DiffTensor", "as_tensor", "parameter", "no_grad", "precision", "grad_enabled", "default_dtype",
    "add", "sub", "mul", "div", "neg", "power", "minimum", "matmul",
    "exp", "log", "sqrt", "sigmoid", "silu", "softplus",
    "sum", "mean", "reshape", "transpose", "swapaxes", "concat", "split", "take", "broadcast_to",
    "softmax", "rms_norm", "scan", "linear_scan", "window_gather", "rotate_pairs",
]

_state = threading.local()


def grad_enabled():
    return getattr(_state, "grad", True)


def default_dtype():
    return getattr(_state, "dtype", np.float64)


@contextlib.contextmanager
def no_grad():
    """Build no tape inside the block; results are plain constants."""
    previous = grad_enabled()
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = previous


@contextlib.contextmanager
def precision(dtype):
    """Scalar type for tensors constructed inside the block (float32 for benchmarking)."""
    previous = default_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = previous


class DiffTensor:
    """A value with an optional gradient and its place on the tape.

    Parameters
    ----------
    value : array_like
        Stored as a numpy array of the current default dtype.
    requires_grad : bool
        Leaves with requires_grad receive `.grad` after backward().
    name : str, optional
        Used by checkpoints and diagnostics.
    """
    __array_ufunc__ = None

    def __init__(self, value, requires_grad=False, name=None, _parents=(), _vjp=None):
        if isinstance(value, DiffTensor):
            value = value.value
        value = np.asarray(value)
        if not np.issubdtype(value.dtype, np.floating) or value.dtype.type is not default_dtype():
            value = value.astype(default_dtype())
        self.value = value
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self):
        return self.value

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return DiffTensor(self.value)

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"DiffTensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf that requires grad.

        Calling backward twice without zero_grad() adds the gradients.
        """
        if self.size != 1:
            raise ShapeMismatchError(f"backward() needs a scalar root, got shape {self.shape}")
        if grad is None:
            grad = np.ones_like(self.value)

        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads = {id(self): np.asarray(grad, dtype=self.value.dtype).reshape(self.shape)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __rtruediv__ = lambda self, other: div(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: neg(self)
    __pow__ = lambda self, p: power(self, p)

    def __getitem__(self, index):
        return _getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    @property
    def T(self):
        return swapaxes(self, -1, -2)


def as_tensor(x):
    return x if isinstance(x, DiffTensor) else DiffTensor(x)


def parameter(value, name=None):
    return DiffTensor(value, requires_grad=True, name=name)


def _node(value, parents, vjp):
    if grad_enabled() and any(p.requires_grad for p in parents):
        return DiffTensor(value, requires_grad=True, _parents=tuple(parents), _vjp=vjp)
    return DiffTensor(value)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.value / b.value
    return _node(out, (a, b),
                 lambda g: (_unbroadcast(g / b.value, a.shape), _unbroadcast(-g * out / b.value, b.shape)))


def neg(a):
    a = as_tensor(a)
    return _node(-a.value, (a,), lambda g: (-g,))


def power(a, p):
    a = as_tensor(a)
    p = float(p)
    return _node(a.value ** p, (a,), lambda g: (g * p * a.value ** (p - 1.0),))


def minimum(a, limit):
    """Elementwise min against a scalar; the gradient passes where a < limit."""
    a = as_tensor(a)
    keep = a.value < limit
    return _node(np.where(keep, a.value, limit), (a,), lambda g: (g * keep,))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.value)
    return _node(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return _node(np.log(a.value), (a,), lambda g: (g / a.value,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


def _expit(x):
    from scipy.special import expit
    return expit(x)


def sigmoid(a):
    a = as_tensor(a)
    out = _expit(a.value)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def silu(a):
    a = as_tensor(a)
    s = _expit(a.value)
    return _node(a.value * s, (a,), lambda g: (g * s * (1.0 + a.value * (1.0 - s)),))


def softplus(a):
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.value).astype(a.value.dtype, copy=False)
    return _node(out, (a,), lambda g: (g * _expit(a.value),))


# linear algebra

def matmul(a, b):
    """Batched matrix product a[..., m, k] @ b[..., k, n]."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatchError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast") from None

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
        gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return _node(np.matmul(a.value, b.value), (a, b), vjp)


# reductions

def sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = np.sum(a.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _node(out, (a,), vjp)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# shape

def reshape(a, shape):
    a = as_tensor(a)
    return _node(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes):
    a = as_tensor(a)
    inverse = np.argsort(axes)
    return _node(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inverse),))


def swapaxes(a, axis1, axis2):
    a = as_tensor(a)
    return _node(np.swapaxes(a.value, axis1, axis2), (a,), lambda g: (np.swapaxes(g, axis1, axis2),))


def broadcast_to(a, shape):
    a = as_tensor(a)
    return _node(np.broadcast_to(a.value, shape).copy(), (a,), lambda g: (_unbroadcast(g, a.shape),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _node(np.concatenate([t.value for t in tensors], axis=axis), tensors,
                 lambda g: tuple(np.split(g, bounds, axis=axis)))


def _getitem(a, index):
    def vjp(g):
        full = np.zeros_like(a.value)
        np.add.at(full, index, g)
        return (full,)
    return _node(a.value[index], (a,), vjp)


def split(a, sizes, axis=-1):
    """Split along `axis` into consecutive pieces of the given sizes."""
    a = as_tensor(a)
    axis = axis % a.ndim
    if int(np.sum(sizes)) != a.shape[axis]:
        raise ShapeMismatchError(f"split: sizes {list(sizes)} do not add up to axis {axis} of {a.shape}")
    pieces, start = [], 0
    for n in sizes:
        index = (slice(None),) * axis + (slice(start, start + n),)
        pieces.append(_getitem(a, index))
        start += n
    return pieces


def take(a, indices, axis=0):
    """Gather rows along `axis` by a 1D integer index; repeated indices accumulate in backward."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % a.ndim

    def vjp(g):
        full = np.zeros(np.moveaxis(a.value, axis, 0).shape, dtype=g.dtype)
        np.add.at(full, indices, np.moveaxis(g, axis, 0))
        return (np.moveaxis(full, 0, axis),)
    return _node(np.take(a.value, indices, axis=axis), (a,), vjp)


# composite kernels

def softmax(a, axis=-1):
    """Max-subtracted softmax. -inf entries get zero weight; NaN or +inf is rejected."""
    a = as_tensor(a)
    if np.isnan(a.value).any() or np.isposinf(a.value).any():
        raise NonFiniteInputError("softmax: input contains NaN or +inf")
    shift = np.max(a.value, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    e = np.exp(a.value - shift)
    out = e / np.sum(e, axis=axis, keepdims=True)
    return _node(out, (a,), lambda g: (out * (g - np.sum(g * out, axis=axis, keepdims=True)),))


def rms_norm(x, scale=None, eps=1e-12):
    """x / sqrt(mean(x^2) + eps) along the last axis, times a per-feature scale."""
    x = as_tensor(x)
    ms = mean(mul(x, x), axis=-1, keepdims=True)
    y = div(x, sqrt(add(ms, eps)))
    return y if scale is None else mul(y, scale)


def scan(a, axis=0):
    """Inclusive prefix sum along `axis`."""
    a = as_tensor(a)
    out = np.cumsum(a.value, axis=axis)
    return _node(out, (a,), lambda g: (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),))


def _doubling_scan(a, b):
    """h_t = a_t h_{t-1} + b_t along axis 0 with h_{-1} = 0, by recursive doubling."""
    a, h = a.copy(), b.copy()
    n = h.shape[0]
    step = 1
    while step < n:
        h[step:] = a[step:] * h[:-step] + h[step:]
        a[step:] = a[step:] * a[:-step]
        step *= 2
    return h


def linear_scan(a, b, axis=0):
    """First-order linear recurrence h_t = a_t * h_{t-1} + b_t along `axis`, h_{-1} = 0.

    Parameters
    ----------
    a : DiffTensor
        Decay factors, broadcastable to b.
    b : DiffTensor
        Inputs; the output has b's shape.
    """
    a, b = as_tensor(a), as_tensor(b)
    full = np.broadcast_shapes(a.shape, b.shape)
    av = np.moveaxis(np.broadcast_to(a.value, full), axis, 0)
    bv = np.moveaxis(np.broadcast_to(b.value, full), axis, 0)
    h = _doubling_scan(av, bv)

    def vjp(g):
        g = np.moveaxis(g, axis, 0)
        shifted = np.zeros_like(av)
        shifted[:-1] = av[1:]
        lam = np.flip(_doubling_scan(np.flip(shifted, 0), np.flip(g, 0)), 0)
        previous = np.zeros_like(h)
        previous[1:] = h[:-1]
        ga = np.moveaxis(lam * previous, 0, axis)
        gb = np.moveaxis(lam, 0, axis)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return _node(np.moveaxis(h, 0, axis), (a, b), vjp)


def window_gather(x, window):
    """Neighbourhoods of a sequence: x[..., L, d] -> [..., L, 2w+1, d].

    out[..., i, o, :] = x[..., i + o - w, :] with zeros outside the sequence,
    where w = min(window, L - 1).
    """
    x = as_tensor(x)
    length = x.shape[-2]
    w = max(0, min(int(window), length - 1))
    pad = [(0, 0)] * (x.ndim - 2) + [(w, w), (0, 0)]
    padded = np.pad(x.value, pad)
    out = np.stack([padded[..., o:o + length, :] for o in range(2 * w + 1)], axis=-2)

    def vjp(g):
        gpad = np.zeros_like(padded)
        for o in range(2 * w + 1):
            gpad[..., o:o + length, :] += g[..., o, :]
        return (gpad[..., w:w + length, :],)
    return _node(out, (x,), vjp)


def _pair_swap(v):
    out = np.empty_like(v)
    out[..., 0::2] = -v[..., 1::2]
    out[..., 1::2] = v[..., 0::2]
    return out


def _pair_swap_t(v):
    out = np.empty_like(v)
    out[..., 0::2] = v[..., 1::2]
    out[..., 1::2] = -v[..., 0::2]
    return out


def rotate_pairs(x, cos, sin):
    """Rotate feature pairs (2k, 2k+1) by angles given through per-feature cos/sin.

    cos and sin are constants broadcastable to x whose entries repeat per pair.
    """
    x = as_tensor(x)
    cos = np.asarray(cos, dtype=x.value.dtype)
    sin = np.asarray(sin, dtype=x.value.dtype)
    if x.shape[-1] % 2:
        raise ShapeMismatchError(f"rotate_pairs: feature axis {x.shape[-1]} is odd")
    out = x.value * cos + _pair_swap(x.value) * sin
    return _node(out, (x,), lambda g: (_unbroadcast(g * cos + _pair_swap_t(g * sin), x.shape),))

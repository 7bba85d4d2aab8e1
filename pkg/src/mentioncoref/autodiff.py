"""Minimal define-by-run reverse-mode automatic differentiation over numpy.

Every operation returns a :class:`Tensor` that remembers its parents and a
closure computing the parents' gradient contributions. :func:`backward` walks
the resulting graph in reverse topological order exactly once per node.

All values are 64-bit floats.
"""
from __future__ import annotations

from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Raised when an operation receives inputs of incompatible shapes."""


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 _parents: Tuple["Tensor", ...] = (), _backward: Optional[Callable] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    __array_priority__ = 100

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def param(value, name: str) -> Tensor:
    """A leaf tensor that receives gradients."""
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def const(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data, parents, backward_fn) -> Tensor:
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, _parents=parents if needs else (),
                  _backward=backward_fn if needs else None)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = const(a), const(b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = const(a), const(b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = const(a), const(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _node(a.data * b.data, (a, b), bw)


def neg(a) -> Tensor:
    a = const(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = const(a), const(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError(f"matmul: expected 1-D or 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bw(g):
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2:  # matrix @ vector
            return np.outer(g, bd), ad.T @ g
        if bd.ndim == 2:  # vector @ matrix
            return bd @ g, np.outer(ad, g)
        return g * bd, g * ad
    return _node(out, (a, b), bw)


def relu(a) -> Tensor:
    a = const(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(np.asarray(x, dtype=np.float64))


sigmoid_np = _sigmoid


def sigmoid(a) -> Tensor:
    a = const(a)
    s = _sigmoid(np.atleast_1d(a.data)).reshape(a.shape)
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),))


def log_sigmoid(a) -> Tensor:
    """log(sigmoid(x)), finite for all finite x."""
    a = const(a)
    x = a.data
    out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    s = _sigmoid(np.atleast_1d(x)).reshape(a.shape)
    return _node(out, (a,), lambda g: (g * (1.0 - s),))


def tanh(a) -> Tensor:
    a = const(a)
    t = np.tanh(a.data)
    return _node(t, (a,), lambda g: (g * (1.0 - t * t),))


def exp(a) -> Tensor:
    a = const(a)
    e = np.exp(a.data)
    return _node(e, (a,), lambda g: (g * e,))


def log(a) -> Tensor:
    a = const(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


# ---------------------------------------------------------------------------
# reductions and shape manipulation

def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = const(a)
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)
    return _node(out, (a,), bw)


def mean(a, axis=None) -> Tensor:
    a = const(a)
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def max(a, axis=None) -> Tensor:  # noqa: A001
    """Maximum; the gradient goes to the first maximal entry."""
    a = const(a)
    if axis is None:
        flat = int(np.argmax(a.data))

        def bw(g):
            grad = np.zeros(a.data.size)
            grad[flat] = g
            return (grad.reshape(a.shape),)
        return _node(a.data.reshape(-1)[flat], (a,), bw)
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def bw(g):
        grad = np.zeros(a.shape)
        np.put_along_axis(grad, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (grad,)
    return _node(out, (a,), bw)


def reshape(a, shape) -> Tensor:
    a = const(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from None
    return _node(out, (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [const(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def bw(g):
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(lo, hi)
            parts.append(g[tuple(sl)])
        return tuple(parts)
    return _node(out, tensors, bw)


def take(a, idx) -> Tensor:
    """Index along the first axis (``a[idx]``) with gradient scatter-add."""
    a = const(a)
    if isinstance(idx, slice):
        pass
    elif isinstance(idx, (int, np.integer)):
        idx = int(idx)
        if not -a.shape[0] <= idx < a.shape[0]:
            raise ShapeError(f"take: index {idx} out of range for shape {a.shape}")
    else:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.max() >= a.shape[0] or idx.min() < -a.shape[0]):
            raise ShapeError(f"take: index out of range for shape {a.shape}")
    out = a.data[idx]

    def bw(g):
        grad = np.zeros(a.shape)
        if isinstance(idx, (slice, int)):
            grad[idx] += g
        else:
            np.add.at(grad, idx, g)
        return (grad,)
    return _node(out, (a,), bw)


def softmax(a, axis: int = -1) -> Tensor:
    a = const(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)
    return _node(s, (a,), bw)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = const(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    s = np.exp(out)

    def bw(g):
        return (g - s * g.sum(axis=axis, keepdims=True),)
    return _node(out, (a,), bw)


def logsumexp(a, axis: int = -1) -> Tensor:
    """log-sum-exp along ``axis``; entries equal to -inf act as masked out."""
    a = const(a)
    m = a.data.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        lse = np.log(np.exp(a.data - m).sum(axis=axis, keepdims=True)) + m
    out = lse.squeeze(axis)

    def bw(g):
        w = np.exp(a.data - lse)
        return (np.expand_dims(g, axis) * w,)
    return _node(out, (a,), bw)


# ---------------------------------------------------------------------------
# recurrent cells

def lstm_step(x, h, c, W, U, b):
    """One LSTM step built from primitive ops.

    Gate layout along the last axis of ``W``, ``U`` and ``b`` is
    (input, forget, cell candidate, output).
    """
    x, h, c, W, U, b = map(const, (x, h, c, W, U, b))
    hidden = h.shape[-1]
    if W.shape[0] != x.shape[-1] or U.shape != (hidden, 4 * hidden) or W.shape[1] != 4 * hidden:
        raise ShapeError(f"lstm_step: x {x.shape}, h {h.shape}, W {W.shape}, U {U.shape}")
    z = x @ W + h @ U + b
    i = sigmoid(take(z, slice(0, hidden)))
    f = sigmoid(take(z, slice(hidden, 2 * hidden)))
    g = tanh(take(z, slice(2 * hidden, 3 * hidden)))
    o = sigmoid(take(z, slice(3 * hidden, 4 * hidden)))
    c_new = f * c + i * g
    h_new = o * tanh(c_new)
    return h_new, c_new


def lstm_step_np(x, h, c, W, U, b):
    """Graph-free LSTM step on raw arrays (used by decoders)."""
    hidden = h.shape[-1]
    z = x @ W + h @ U + b
    i = _sigmoid(z[..., :hidden])
    f = _sigmoid(z[..., hidden:2 * hidden])
    g = np.tanh(z[..., 2 * hidden:3 * hidden])
    o = _sigmoid(z[..., 3 * hidden:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def lstm_sequence(X, h0, c0, W, U, b) -> Tensor:
    """Run an LSTM over the rows of ``X`` as a single fused graph node.

    Returns the (T, H) matrix of hidden states. Equivalent to chaining
    :func:`lstm_step`, with a hand-written backward pass through time.
    """
    X, h0, c0, W, U, b = map(const, (X, h0, c0, W, U, b))
    T = X.shape[0]
    H = h0.shape[-1]
    if X.data.ndim != 2 or W.shape != (X.shape[1], 4 * H) or U.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise ShapeError(f"lstm_sequence: X {X.shape}, h0 {h0.shape}, W {W.shape}, U {U.shape}, b {b.shape}")
    if T == 0:
        raise ShapeError("lstm_sequence: empty input sequence")
    xw = X.data @ W.data + b.data
    hs = np.empty((T + 1, H))
    cs = np.empty((T + 1, H))
    gates = np.empty((T, 4 * H))
    hs[0], cs[0] = h0.data, c0.data
    Ud = U.data
    # sigmoid(z) = (1 + tanh(z/2)) / 2, so all four gates take one tanh call
    scale = np.full(4 * H, 0.5)
    scale[2 * H:3 * H] = 1.0
    for t in range(T):
        a = np.tanh((xw[t] + hs[t] @ Ud) * scale)
        a[:2 * H] = 0.5 + 0.5 * a[:2 * H]
        a[3 * H:] = 0.5 + 0.5 * a[3 * H:]
        gates[t] = a
        cs[t + 1] = a[H:2 * H] * cs[t] + a[:H] * a[2 * H:3 * H]
        hs[t + 1] = a[3 * H:] * np.tanh(cs[t + 1])

    def bw(gH):
        dz = np.empty((T, 4 * H))
        dh_next = np.zeros(H)
        dc_next = np.zeros(H)
        for t in range(T - 1, -1, -1):
            i, f, g, o = gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:]
            tc = np.tanh(cs[t + 1])
            dh = gH[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz[t, :H] = dc * g * i * (1.0 - i)
            dz[t, H:2 * H] = dc * cs[t] * f * (1.0 - f)
            dz[t, 2 * H:3 * H] = dc * i * (1.0 - g * g)
            dz[t, 3 * H:] = dh * tc * o * (1.0 - o)
            dh_next = Ud @ dz[t]
            dc_next = dc * f
        return (dz @ W.data.T, dh_next, dc_next, X.data.T @ dz, hs[:-1].T @ dz, dz.sum(axis=0))
    return _node(hs[1:], (X, h0, c0, W, U, b), bw)


# ---------------------------------------------------------------------------
# dispatch by name

OPS: Dict[str, Callable[..., Tensor]] = {
    "add": add, "sub": sub, "mul": mul, "neg": neg, "matmul": matmul,
    "relu": relu, "sigmoid": sigmoid, "log_sigmoid": log_sigmoid, "tanh": tanh,
    "exp": exp, "log": log, "sum": sum, "mean": mean, "max": max,
    "reshape": reshape, "concat": concat, "take": take, "softmax": softmax,
    "log_softmax": log_softmax, "logsumexp": logsumexp, "lstm_sequence": lstm_sequence,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    try:
        fn = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# backward pass

def _topological_order(root: Tensor):
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Mapping[str, Tensor]) -> Dict[str, np.ndarray]:
    """Gradients of scalar ``loss`` with respect to every tensor in ``params``.

    Parameters the loss does not depend on get an all-zero gradient.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: Dict[int, np.ndarray] = {}
    if loss.requires_grad:
        grads[id(loss)] = np.ones_like(loss.data)
        for node in reversed(_topological_order(loss)):
            g = grads.get(id(node))
            if g is None or node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad or pg is None:
                    continue
                pg = np.reshape(pg, parent.shape) if np.ndim(pg) != parent.data.ndim else pg
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg
            if node._parents:
                del grads[id(node)]
    return {name: grads.get(id(t), np.zeros(t.shape)) for name, t in params.items()}


# ---------------------------------------------------------------------------
# finite-difference checking

def numerical_gradient(fn: Callable[[], float], array: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of ``fn`` with respect to ``array``, perturbed in place."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        up = fn()
        flat[k] = orig - eps
        down = fn()
        flat[k] = orig
        gflat[k] = (up - down) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max entrywise |a - n| / max(|a|, |n|, floor)."""
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check(loss_fn: Callable[[], Tensor], params: Mapping[str, Tensor], eps: float = 1e-5,
               names: Optional[Iterable[str]] = None) -> Dict[str, float]:
    """Compare :func:`backward` against central differences for each parameter.

    ``loss_fn`` must rebuild the graph from the current parameter values on
    every call. Returns the max relative error per parameter name.
    """
    analytic = backward(loss_fn(), params)
    report = {}
    for name in (names if names is not None else params):
        t = params[name]
        numeric = numerical_gradient(lambda: float(loss_fn().data), t.data, eps)
        report[name] = relative_error(analytic[name], numeric)
    return report

"""Dense float64 tensors with reverse-mode differentiation.

Every primitive returns a new :class:`Tensor`.  When any input requires
gradients the result remembers its parents and a vector-Jacobian product
closure; :func:`backward` linearises that graph into a
:class:`ComputationTape` and replays it in reverse.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special as _sp

from .special import digamma as _digamma, trigamma as _trigamma

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def _debug() -> bool:
    return getattr(_state, "debug", False)


@contextmanager
def no_grad():
    """Evaluate without recording anything (thread-local)."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextmanager
def debug_mode(enabled: bool = True):
    """Raise ``FloatingPointError`` as soon as a primitive produces NaN/Inf."""
    prev = _debug()
    _state.debug = enabled
    try:
        yield
    finally:
        _state.debug = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "_parents", "_vjp", "_op")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()) if self.data.size == 1 else self.data.item())

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{tag})"

    def __len__(self) -> int:
        return len(self.data)

    # operator sugar
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return neg(self)
    def __pow__(self, p): return power(self, p)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None, keepdims=False): return reduce_sum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)
    def transpose(self, *axes): return transpose(self, axes or None)
    def exp(self): return exp(self)
    def log(self): return log(self)

    @property
    def T(self): return transpose(self, None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(value, parents: Sequence[Tensor], vjp: Callable, op: str) -> Tensor:
    """Wrap ``value`` as the output of a primitive.

    ``vjp(g)`` receives the upstream gradient (same shape as ``value``) and
    returns one gradient per parent (``None`` for parents it does not feed).
    Custom fused primitives are built with this function.
    """
    value = np.asarray(value, dtype=np.float64)
    if _debug() and not np.all(np.isfinite(value)):
        raise FloatingPointError(f"{op}: non-finite value in output")
    needs = _grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = value
    out.requires_grad = needs
    out.name = None
    out._parents = tuple(parents) if needs else ()
    out._vjp = vjp if needs else None
    out._op = op
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}") from None


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return make_op(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return make_op(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return make_op(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data
    return make_op(out, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape),
                              _unbroadcast(-g * out / b.data, b.shape)), "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    if isinstance(p, Tensor):
        raise TypeError("power: exponent must be a constant")
    return make_op(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1),), "power")


def square(a) -> Tensor:
    a = as_tensor(a)
    return make_op(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,), "square")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return make_op(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim < 2 or a.ndim < 1 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if a.ndim == 1:
            gb = np.multiply.outer(a.data, g)
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_op(a.data @ b.data, (a, b), vjp, "matmul")


# ---------------------------------------------------------- elementwise maps

def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_op(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return make_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sp.expit(a.data)
    return make_op(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make_op(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return make_op(out, (a,), lambda g: (g * _sp.expit(a.data),), "softplus")


def digamma(a) -> Tensor:
    a = as_tensor(a)
    return make_op(_digamma(a.data), (a,), lambda g: (g * _trigamma(a.data),), "digamma")


def erf(a) -> Tensor:
    a = as_tensor(a)
    c = 2.0 / np.sqrt(np.pi)
    return make_op(_sp.erf(a.data), (a,), lambda g: (g * c * np.exp(-a.data ** 2),), "erf")


def normal_pdf(a) -> Tensor:
    """Standard normal density."""
    a = as_tensor(a)
    out = np.exp(-0.5 * a.data ** 2) / np.sqrt(2.0 * np.pi)
    return make_op(out, (a,), lambda g: (-g * a.data * out,), "normal_pdf")


def normal_cdf(a) -> Tensor:
    a = as_tensor(a)
    pdf = np.exp(-0.5 * a.data ** 2) / np.sqrt(2.0 * np.pi)
    return make_op(_sp.ndtr(a.data), (a,), lambda g: (g * pdf,), "normal_cdf")


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return make_op(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def clamp(a, lo: float | None = None, hi: float | None = None) -> Tensor:
    """Clip to ``[lo, hi]``; gradient is zero where clipping is active."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)
    keep = out == a.data
    return make_op(out, (a,), lambda g: (g * keep,), "clamp")


def minimum(a, b) -> Tensor:
    """Elementwise min; on ties the whole gradient goes to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("minimum", a, b)
    first = a.data <= b.data
    return make_op(np.where(first, a.data, b.data), (a, b),
                   lambda g: (_unbroadcast(g * first, a.shape),
                              _unbroadcast(g * ~first, b.shape)), "minimum")


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("maximum", a, b)
    first = a.data >= b.data
    return make_op(np.where(first, a.data, b.data), (a, b),
                   lambda g: (_unbroadcast(g * first, a.shape),
                              _unbroadcast(g * ~first, b.shape)), "maximum")


def where(cond, a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    return make_op(np.where(cond, a.data, b.data), (a, b),
                   lambda g: (_unbroadcast(g * cond, a.shape),
                              _unbroadcast(g * ~cond, b.shape)), "where")


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_op(out, (a,), vjp, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return reduce_sum(a, axis, keepdims) / float(n)


def logsumexp(a, axis=-1, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = _sp.logsumexp(a.data, axis=axis, keepdims=True)
    soft = np.exp(a.data - out)

    def vjp(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        return (gk * soft,)

    return make_op(out if keepdims else np.squeeze(out, axis=axis), (a,), vjp, "logsumexp")


def log_softmax(a, axis=-1) -> Tensor:
    return a - logsumexp(a, axis=axis, keepdims=True)


def softmax(a, axis=-1) -> Tensor:
    return exp(log_softmax(a, axis=axis))


# ------------------------------------------------------------ shape handling

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {a.shape} into {shape}") from None
    return make_op(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return make_op(out, (a,), lambda g: (np.transpose(g, inv),), "transpose")


def expand_dims(a, axis) -> Tensor:
    a = as_tensor(a)
    return reshape(a, np.expand_dims(a.data, axis).shape)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ValueError(f"broadcast_to: {a.shape} is not broadcastable to {shape}") from None
    return make_op(out.copy(), (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast_to")


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    if isinstance(idx, Tensor):
        raise TypeError("getitem: index with numpy arrays, not tensors")
    out = a.data[idx]

    parts = idx if isinstance(idx, tuple) else (idx,)
    fancy = any(isinstance(i, (list, np.ndarray)) for i in parts)

    def vjp(g):
        full = np.zeros_like(a.data)
        if fancy:
            np.add.at(full, idx, g)
        else:
            full[idx] += g
        return (full,)

    return make_op(out, (a,), vjp, "getitem")


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ValueError(f"concat: {exc}") from None
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return make_op(out, ts, lambda g: tuple(np.split(g, sizes, axis=axis)), "concat")


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ValueError(f"stack: {exc}") from None
    return make_op(out, ts,
                   lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(ts))), "stack")


# ------------------------------------------------------------ linear algebra

def spd_solve(K, B) -> Tensor:
    """Solve ``K X = B`` for a batch of symmetric positive-definite ``K``.

    Factorises with Cholesky; raises ``numpy.linalg.LinAlgError`` when a
    matrix is not numerically positive definite so callers can add jitter.
    """
    K, B = as_tensor(K), as_tensor(B)
    if K.shape[-1] != K.shape[-2] or B.shape[-2] != K.shape[-1]:
        raise ValueError(f"spd_solve: shape mismatch {K.shape} vs {B.shape}")
    L = np.linalg.cholesky(K.data)
    X = _chol_solve(L, B.data)

    def vjp(g):
        gB = _chol_solve(L, g)
        gK = -gB @ np.swapaxes(X, -1, -2)
        return _unbroadcast(gK, K.shape), _unbroadcast(gB, B.shape)

    return make_op(X, (K, B), vjp, "spd_solve")


def _chol_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    # two triangular solves; np.linalg.solve on L keeps batching simple
    y = np.linalg.solve(L, B)
    return np.linalg.solve(np.swapaxes(L, -1, -2), y)


# ------------------------------------------------------------------- backward

class ComputationTape:
    """Topologically ordered record of the primitives reachable from a root."""

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

    def __len__(self) -> int:
        return len(self.nodes)

    def replay(self) -> dict[int, np.ndarray]:
        grads: dict[int, np.ndarray] = {id(self.root): np.ones_like(self.root.data)}
        for node in reversed(self.nodes):
            g = grads.get(id(node))
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=np.float64)
                if pg.shape != parent.shape:
                    pg = _unbroadcast(pg, parent.shape)
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg
            if node._parents:
                del grads[id(node)]
        return grads


def backward(root: Tensor, params: Sequence[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Gradients of scalar ``root`` with respect to leaf tensors.

    With ``params`` given, the map holds exactly those tensors (zeros for
    the ones ``root`` does not depend on); otherwise every reachable leaf
    that requires gradients.
    """
    if root.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        return {p: np.zeros_like(p.data) for p in params} if params is not None else {}
    tape = ComputationTape(root)
    grads = tape.replay()
    if params is not None:
        return {p: grads.get(id(p), np.zeros_like(p.data)) for p in params}
    return {n: grads[id(n)] for n in tape.nodes if not n._parents and id(n) in grads}

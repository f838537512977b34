"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every differentiable function in the package is built from the primitives in
this module. A primitive computes its forward value eagerly and, when any
input requires gradients, records its parents together with a closure mapping
the output gradient to one gradient per parent. ``backward`` walks that record
in reverse topological order.

Gradients accumulate: calling ``backward`` twice without ``zero_grad`` adds
the two contributions. The training loop is responsible for zeroing.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64

# Added to masked attention scores before the row softmax. exp(-1e30 - m)
# underflows to exactly 0.0 for any finite row maximum m.
MASK_PENALTY = 1e30

_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class SupportError(ValueError):
    """Two distributions do not share support where a divergence needs it."""


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording any differentiation history."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """An n-dimensional float64 array that can take part in backpropagation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    # Make ``ndarray <op> Tensor`` dispatch to the Tensor's reflected operator.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if self.requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # Operators delegate to the module-level primitives.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# Elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def bw(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), bw, "div")


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)
    return _make(a.data * factor, (a,), lambda g: (g * factor,), "scale")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)
    out = a.data ** p
    return _make(out, (a,), lambda g: (g * p * a.data ** (p - 1.0),), "pow")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def abs_(a) -> Tensor:
    # Subgradient 0 at the kink.
    a = as_tensor(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),), "abs")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def log_sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = -np.logaddexp(0.0, -x)
    return _make(out, (a,), lambda g: (g * _sigmoid(-x),), "log_sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,), "relu")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows.
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------------------
# Linear algebra and shape manipulation


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from None

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out, dtype=DTYPE), (a,), bw, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return scale(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} to {tuple(shape)}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def swapaxes(a, i: int, j: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, ts, bw, "concat")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(np.array(out, dtype=DTYPE), (a,), bw, "getitem")


def pad_time(a, before: int, axis: int = -2) -> Tensor:
    """Prepend ``before`` zero frames along ``axis``."""
    a = as_tensor(a)
    shape = list(a.shape)
    shape[axis] = before
    return concat([Tensor(np.zeros(shape)), a], axis=axis)


# ---------------------------------------------------------------------------
# Normalized distributions


def softmax_masked(scores, mask=None) -> Tensor:
    """Row softmax over the last axis with hidden positions set to exactly 0.

    ``mask`` is a boolean array (or an object with a ``visible`` attribute)
    broadcastable to ``scores``; True marks a visible entry. Hidden scores are
    shifted by ``-MASK_PENALTY`` before normalizing and then zeroed.
    """
    scores = as_tensor(scores)
    x = scores.data
    if mask is None:
        visible = None
        shifted = x
    else:
        visible = np.asarray(getattr(mask, "visible", mask), dtype=bool)
        if visible.shape[-1] != x.shape[-1] or (visible.ndim >= 2 and visible.shape[-2] != x.shape[-2]):
            raise ShapeError(f"softmax_masked: mask {visible.shape} does not fit scores {x.shape}")
        if not visible.any(axis=-1).all():
            raise ValueError("softmax_masked: mask has a row with no visible entry")
        shifted = np.where(visible, x, x - MASK_PENALTY)
    m = shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted - m)
    out = e / e.sum(axis=-1, keepdims=True)
    if visible is not None:
        out = np.where(visible, out, 0.0)

    def bw(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make(out, (scores,), bw, "softmax_masked")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    out = x - m - np.log(np.exp(x - m).sum(axis=axis, keepdims=True))

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), bw, "log_softmax")


def kl_rows(p, q) -> Tensor:
    """KL(p || q) along the last axis, natural log, with 0*log(0/q) = 0.

    Returns one value per row, so 1-D inputs give a scalar.
    """
    p, q = as_tensor(p), as_tensor(q)
    if p.shape != q.shape:
        raise ShapeError(f"kl_rows: shapes {p.shape} and {q.shape} differ")
    pd, qd = p.data, q.data
    support = pd > 0
    bad = support & (qd <= 0)
    if bad.any():
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SupportError(f"kl_rows: q is zero where p is positive at index {where}")
    safe_p = np.where(support, pd, 1.0)
    safe_q = np.where(support, qd, 1.0)
    log_ratio = np.where(support, np.log(safe_p) - np.log(safe_q), 0.0)
    out = (pd * log_ratio).sum(axis=-1)

    def bw(g):
        g = g[..., None]
        gp = np.where(support, g * (log_ratio + 1.0), 0.0)
        gq = np.where(support, -g * pd / safe_q, 0.0)
        return gp, gq

    return _make(out, (p, q), bw, "kl_rows")


def cosine_rows(a, b, eps_check: float = 0.0) -> Tensor:
    """Cosine similarity between matching rows along the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"cosine_rows: shapes {a.shape} and {b.shape} differ")
    for name, t in (("a", a), ("b", b)):
        norms = np.sqrt((t.data * t.data).sum(axis=-1))
        zero = norms <= eps_check
        if zero.any():
            row = tuple(int(i) for i in np.argwhere(zero)[0]) if zero.ndim else ()
            raise ValueError(f"cosine_rows: zero-norm row {row} in {name}")
    dot = sum_(mul(a, b), axis=-1)
    na = sqrt(sum_(mul(a, a), axis=-1))
    nb = sqrt(sum_(mul(b, b), axis=-1))
    return div(dot, mul(na, nb))


# ---------------------------------------------------------------------------
# Fused recurrence


def lstm_step(x: np.ndarray, h: np.ndarray, c: np.ndarray, w_x: np.ndarray,
              w_h: np.ndarray, bias: np.ndarray):
    """One LSTM step on raw arrays; gate order is input, forget, candidate, output."""
    z = x @ w_x + h @ w_h + bias
    H = h.shape[-1]
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = _sigmoid(z[..., 3 * H:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def lstm(x, w_x, w_h, bias) -> Tensor:
    """Unidirectional LSTM over axis -2 of ``x`` [..., T, D_in] from a zero state.

    Fused into one primitive: the forward loop keeps gate activations and the
    reverse rule runs backpropagation through time over them.
    """
    x, w_x, w_h, bias = (as_tensor(t) for t in (x, w_x, w_h, bias))
    H = w_h.shape[0]
    if w_x.shape != (x.shape[-1], 4 * H) or w_h.shape != (H, 4 * H) or bias.shape != (4 * H,):
        raise ShapeError(
            f"lstm: input {x.shape}, w_x {w_x.shape}, w_h {w_h.shape}, bias {bias.shape} inconsistent")
    xd = x.data
    T = xd.shape[-2]
    lead = xd.shape[:-2]
    xw = xd @ w_x.data + bias.data
    h = np.zeros(lead + (H,))
    c = np.zeros(lead + (H,))
    hs, cs, gates = [], [], []
    for t in range(T):
        z = xw[..., t, :] + h @ w_h.data
        i = _sigmoid(z[..., :H])
        f = _sigmoid(z[..., H:2 * H])
        g = np.tanh(z[..., 2 * H:3 * H])
        o = _sigmoid(z[..., 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates.append((i, f, g, o))
        hs.append(h)
        cs.append(c)
    out = np.stack(hs, axis=-2) if T else np.zeros(lead + (0, H))

    def bw(gout):
        gx = np.zeros(lead + (T, 4 * H))
        gwh = np.zeros_like(w_h.data)
        dh_next = np.zeros(lead + (H,))
        dc_next = np.zeros(lead + (H,))
        zero = np.zeros(lead + (H,))
        for t in range(T - 1, -1, -1):
            i, f, g, o = gates[t]
            c_t = cs[t]
            c_prev = cs[t - 1] if t > 0 else zero
            h_prev = hs[t - 1] if t > 0 else zero
            dh = gout[..., t, :] + dh_next
            tc = np.tanh(c_t)
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dz = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=-1)
            gx[..., t, :] = dz
            gwh += _flat(h_prev).T @ _flat(dz)
            dh_next = dz @ w_h.data.T
            dc_next = dc * f
        gx_in = gx @ w_x.data.T
        gwx = _flat(xd).T @ _flat(gx)
        gb = _flat(gx).sum(axis=0)
        return gx_in, gwx, gwh, gb

    return _make(out, (x, w_x, w_h, bias), bw, "lstm")


def _flat(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1])


# ---------------------------------------------------------------------------
# Reverse traversal


def backward(root: Tensor) -> None:
    """Populate ``grad`` of every gradient-requiring leaf reachable from ``root``.

    Leaf gradients accumulate across calls.
    """
    if root.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _topological_order(root)
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = node.grad + g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# Finite-difference checking


def grad_check(f: Callable[[Tensor], Tensor], x, step: float = 1e-5) -> float:
    """Max relative error between backprop and central differences of ``f`` at ``x``.

    The error per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=DTYPE)
    leaf = Tensor(x0.copy(), requires_grad=True)
    with _grad_mode(True):
        y = f(leaf)
    value = y.data
    if y.size != 1:
        raise ShapeError(f"grad_check needs a scalar function, got shape {y.shape}")
    if not np.all(np.isfinite(value)):
        raise FloatingPointError("grad_check: forward value is not finite")
    backward(y)
    analytic = leaf.grad

    numeric = np.zeros_like(x0)
    flat = numeric.reshape(-1)
    probe = x0.copy()
    pflat = probe.reshape(-1)
    with no_grad():
        for i in range(pflat.size):
            orig = pflat[i]
            pflat[i] = orig + step
            fp = f(Tensor(probe)).item()
            pflat[i] = orig - step
            fm = f(Tensor(probe)).item()
            pflat[i] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise FloatingPointError(f"grad_check: non-finite value near coordinate {i}")
            flat[i] = (fp - fm) / (2.0 * step)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float((np.abs(analytic - numeric) / denom).max()) if x0.size else 0.0


@contextlib.contextmanager
def _grad_mode(enabled: bool):
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = enabled
    try:
        yield
    finally:
        _grad_enabled = previous

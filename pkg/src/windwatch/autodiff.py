"""Reverse-mode automatic differentiation on dense float64 arrays.

A small define-by-run tape: while a :class:`Tape` is active, every operation
on tensors that require gradients appends one record (output, inputs, vjp).
``Tape.backward`` walks the records once in reverse and accumulates gradients
into the participating leaf tensors. Everything is 64-bit; any op producing
a NaN or Inf raises immediately.
"""

from __future__ import annotations

import threading
from math import isfinite

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "Tape",
    "NonFiniteError",
    "ShapeError",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "sigmoid",
    "tanh",
    "relu",
    "elu",
    "clamp",
    "reduce_sum",
    "reduce_mean",
    "concat",
    "stack",
    "take",
    "reshape",
    "grad_check",
]


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


_state = threading.local()


def _active_tape():
    return getattr(_state, "tape", None)


class Tape:
    """Ordered record of executed ops, replayed in reverse by backward()."""

    def __init__(self):
        self._records = []

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tape = None
        return False

    def __len__(self):
        return len(self._records)

    def backward(self, loss: "Tensor") -> None:
        """Accumulate d(loss)/d(leaf) into .grad of every participating tensor.

        ``loss`` must be a scalar (size-1) tensor reachable from the recorded
        ops. Records whose output never receives a gradient are skipped, so
        leaves off the path simply keep a zero gradient.
        """
        if loss.value.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.value.shape}")
        loss.grad = np.ones_like(loss.value)
        for out, inputs, vjp in reversed(self._records):
            g = out.grad
            if g is None:
                continue
            contribs = vjp(g)
            for t, c in zip(inputs, contribs):
                if c is None or not t.requires_grad:
                    continue
                t.grad = c if t.grad is None else t.grad + c


def _check_finite(v: np.ndarray, opname: str) -> None:
    # a sum of finite values is finite unless it overflows; fall back to the
    # exact elementwise check only in that rare case
    if not isfinite(v.sum()) and not np.isfinite(v).all():
        raise NonFiniteError(f"non-finite result in {opname}")


class Tensor:
    """Dense float64 array plus an accumulated gradient slot.

    Tensors are treated as immutable values except for optimizer updates to
    parameter leaves, which happen strictly between tape lifetimes.
    """

    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad: bool = False):
        v = np.asarray(value, dtype=np.float64)
        _check_finite(v, "Tensor()")
        self.value = v
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = None

    def grad_or_zeros(self) -> np.ndarray:
        return self.grad if self.grad is not None else np.zeros_like(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


def astensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value: np.ndarray, opname: str, inputs, vjp) -> Tensor:
    if not isfinite(value.sum()) and not np.isfinite(value).all():
        raise NonFiniteError(f"non-finite result in {opname}")
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    requires = False
    for t in inputs:
        if t.requires_grad:
            requires = True
            break
    out.requires_grad = requires
    if requires:
        tape = getattr(_state, "tape", None)
        if tape is not None:
            tape._records.append((out, inputs, vjp))
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    return _make(
        a.value + b.value,
        "add",
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    return _make(
        a.value - b.value,
        "sub",
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    return _make(
        a.value * b.value,
        "mul",
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def neg(a) -> Tensor:
    a = astensor(a)
    return _make(-a.value, "neg", (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul shapes {a.value.shape} x {b.value.shape}")
    return _make(
        a.value @ b.value,
        "matmul",
        (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def sigmoid(a) -> Tensor:
    a = astensor(a)
    y = expit(a.value)
    return _make(y, "sigmoid", (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a) -> Tensor:
    a = astensor(a)
    y = np.tanh(a.value)
    return _make(y, "tanh", (a,), lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    a = astensor(a)
    # subgradient 0 at the kink
    mask = a.value > 0.0
    return _make(np.where(mask, a.value, 0.0), "relu", (a,), lambda g: (g * mask,))


def elu(a, alpha: float = 1.0) -> Tensor:
    a = astensor(a)
    neg_part = alpha * np.expm1(np.minimum(a.value, 0.0))
    pos = a.value >= 0.0
    y = np.where(pos, a.value, neg_part)
    # d/dx alpha*(e^x - 1) = alpha*e^x = y + alpha on the negative branch
    return _make(y, "elu", (a,), lambda g: (g * np.where(pos, 1.0, y + alpha),))


def clamp(a, lo: float, hi: float) -> Tensor:
    a = astensor(a)
    inside = (a.value > lo) & (a.value < hi)
    return _make(
        np.clip(a.value, lo, hi), "clamp", (a,), lambda g: (g * inside,)
    )


def reduce_sum(a) -> Tensor:
    a = astensor(a)
    return _make(
        np.asarray(a.value.sum()),
        "sum",
        (a,),
        lambda g: (np.broadcast_to(g, a.value.shape),)
    )


def reduce_mean(a) -> Tensor:
    a = astensor(a)
    n = a.value.size
    return _make(
        np.asarray(a.value.mean()),
        "mean",
        (a,),
        lambda g: (np.broadcast_to(g / n, a.value.shape),),
    )


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [astensor(t) for t in tensors]
    sizes = [t.value.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(
        np.concatenate([t.value for t in tensors], axis=axis),
        "concat",
        tuple(tensors),
        vjp,
    )


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [astensor(t) for t in tensors]

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(
        np.stack([t.value for t in tensors], axis=axis), "stack", tuple(tensors), vjp
    )


def take(a, index) -> Tensor:
    """Slice view a[index]; the backward pass scatters into a zero array."""
    a = astensor(a)

    def vjp(g):
        full = np.zeros_like(a.value)
        full[index] = g
        return (full,)

    return _make(np.ascontiguousarray(a.value[index]), "take", (a,), vjp)


def reshape(a, shape) -> Tensor:
    a = astensor(a)
    return _make(
        a.value.reshape(shape), "reshape", (a,), lambda g: (g.reshape(a.value.shape),)
    )


def grad_check(loss_fn, params, probes_per_param: int = 25, eps: float = 1e-5,
               seed: int = 0) -> float:
    """Max relative error between taped gradients and central differences.

    ``loss_fn`` rebuilds the scalar loss from the current parameter values;
    it is re-evaluated with single coordinates of each parameter perturbed by
    +-eps. Probed coordinates are a seeded random subset. The caller is
    responsible for choosing a loss point away from ReLU/clamp kinks.
    """
    params = list(params)
    if not params:
        return 0.0
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    analytic = [p.grad_or_zeros().copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.value.reshape(-1)
        n = flat.size
        k = min(probes_per_param, n)
        idxs = rng.choice(n, size=k, replace=False) if n > k else np.arange(n)
        aflat = a.reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            lp = float(loss_fn().value)
            flat[i] = orig - eps
            lm = float(loss_fn().value)
            flat[i] = orig
            cd = (lp - lm) / (2.0 * eps)
            denom = max(abs(aflat[i]), abs(cd), 1e-8)
            worst = max(worst, abs(aflat[i] - cd) / denom)
    return worst

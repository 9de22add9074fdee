"""Reverse-mode automatic differentiation over float64 numpy tensors.

A :class:`Tape` records every primitive applied to its :class:`Var` leaves.
Primitives are polymorphic: called on plain arrays or floats they simply
evaluate with numpy and record nothing, so the same kernel code serves both
gradient-free inference and training.

    tape = Tape()
    x = tape.var(np.array([0.3, -0.2]))
    y = sum(tanh(x) * x)
    grads = tape.backward(y)
"""

from __future__ import annotations

import builtins
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

# Clamp tolerances shared with the geometry kernels.
EPS_ACOSH = 1e-7
ARTANH_LIMIT = 1.0 - 1e-15
DOMAIN_SLACK = 1e-9


class TapeError(RuntimeError):
    """Misuse of a tape: second backward, foreign variables, non-scalar loss."""


class DomainError(ValueError):
    """Primitive argument outside its domain beyond the clamp tolerance."""


class Var:
    """A tensor value recorded on a tape."""

    __slots__ = ("tape", "id", "value", "grad")
    __array_ufunc__ = None  # make ndarray <op> Var defer to Var's reflected ops

    def __init__(self, tape: "Tape", value: np.ndarray):
        self.tape = tape
        self.value = value
        self.grad: np.ndarray | None = None
        self.id = len(tape._vars)
        tape._vars.append(self)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def T(self):
        return transpose(self)

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.value.shape})"

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

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)


@dataclass
class Node:
    op: str
    output: Var
    inputs: tuple
    vjp: Callable[[np.ndarray], tuple]


@dataclass
class Tape:
    """Append-only record of primitive applications.

    Nodes are stored in evaluation order, so reverse append order is a valid
    reverse topological order. A tape supports exactly one backward pass.
    """

    nodes: list[Node] = field(default_factory=list)
    _vars: list[Var] = field(default_factory=list, repr=False)
    _done: bool = False

    def var(self, value) -> Var:
        """Register a leaf variable (a copy of ``value`` as float64)."""
        return Var(self, np.array(value, dtype=np.float64))

    def vars(self, values: Mapping[str, np.ndarray]) -> dict[str, Var]:
        return {k: self.var(v) for k, v in values.items()}

    def _record(self, op, value, inputs, vjp) -> Var:
        if self._done:
            raise TapeError("tape already consumed by backward()")
        out = Var(self, value)
        self.nodes.append(Node(op, out, inputs, vjp))
        return out

    def backward(self, loss: Var) -> dict[int, np.ndarray]:
        """Propagate d(loss)/d(var) to every variable on this tape.

        Returns a map from variable id to gradient; every variable also gets
        its ``grad`` attribute set (zeros when unreachable from ``loss``).
        """
        if self._done:
            raise TapeError("backward() may be called once per tape")
        if not isinstance(loss, Var) or loss.tape is not self:
            raise TapeError("loss must be a Var recorded on this tape")
        if loss.value.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.value.shape}")
        self._done = True
        grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            g = grads.get(node.output.id)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.vjp(g)):
                if not isinstance(inp, Var) or gi is None:
                    continue
                prev = grads.get(inp.id)
                grads[inp.id] = gi if prev is None else prev + gi
        for v in self._vars:
            g = grads.get(v.id)
            v.grad = np.zeros_like(v.value) if g is None else np.asarray(g, dtype=np.float64)
            grads[v.id] = v.grad
        return grads


# --------------------------------------------------------------------------
# helpers


def value(x):
    """Underlying numpy value of a Var, or ``x`` itself."""
    return x.value if isinstance(x, Var) else x


def is_var(x) -> bool:
    return isinstance(x, Var)


def _tape_of(*args) -> Tape | None:
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise TapeError("operands recorded on different tapes")
    return tape


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _shape(x) -> tuple:
    return np.shape(value(x))


def _unary(op, x, fwd, dfdx):
    """Elementwise primitive; ``dfdx(xv, yv)`` returns the local derivative."""
    if not isinstance(x, Var):
        return fwd(x)
    xv = x.value
    y = fwd(xv)
    return x.tape._record(op, y, (x,), lambda g: (g * dfdx(xv, y),))


# --------------------------------------------------------------------------
# arithmetic


def add(a, b):
    tape = _tape_of(a, b)
    av, bv = value(a), value(b)
    if tape is None:
        return av + bv
    sa, sb = _shape(a), _shape(b)
    return tape._record("add", np.asarray(av + bv, dtype=np.float64), (a, b),
                        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    tape = _tape_of(a, b)
    av, bv = value(a), value(b)
    if tape is None:
        return av - bv
    sa, sb = _shape(a), _shape(b)
    return tape._record("sub", np.asarray(av - bv, dtype=np.float64), (a, b),
                        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    tape = _tape_of(a, b)
    av, bv = value(a), value(b)
    if tape is None:
        return av * bv
    sa, sb = _shape(a), _shape(b)
    return tape._record("mul", np.asarray(av * bv, dtype=np.float64), (a, b),
                        lambda g: (_unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)))


def div(a, b):
    tape = _tape_of(a, b)
    av, bv = value(a), value(b)
    if tape is None:
        return av / bv
    y = np.asarray(av / bv, dtype=np.float64)
    sa, sb = _shape(a), _shape(b)
    return tape._record("div", y, (a, b),
                        lambda g: (_unbroadcast(g / bv, sa), _unbroadcast(-g * y / bv, sb)))


def neg(x):
    return _unary("neg", x, np.negative, lambda xv, y: -1.0)


def power(x, p: float):
    if isinstance(p, Var):
        raise TypeError("power exponent must be a constant")
    return _unary("power", x, lambda v: v ** p, lambda xv, y: p * xv ** (p - 1))


def square(x):
    return _unary("square", x, np.square, lambda xv, y: 2.0 * xv)


def matmul(a, b):
    tape = _tape_of(a, b)
    av, bv = value(a), value(b)
    if tape is None:
        return av @ bv
    if np.ndim(av) == 0 or np.ndim(bv) == 0:
        raise ValueError("matmul operands must be at least 1-D")
    if np.shape(av)[-1] != np.shape(bv)[0 if np.ndim(bv) == 1 else -2]:
        raise ValueError(f"matmul shape mismatch {np.shape(av)} @ {np.shape(bv)}")
    y = np.asarray(av @ bv, dtype=np.float64)

    def vjp(g):
        a2 = av if av.ndim > 1 else av[None, :]
        b2 = bv if bv.ndim > 1 else bv[:, None]
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        ga = (g2 @ b2.T).reshape(av.shape)
        gb = (a2.T @ g2).reshape(bv.shape)
        return ga, gb

    return tape._record("matmul", y, (a, b), vjp)


def dot(a, b, axis: int = -1, keepdims: bool = False):
    """Inner product along ``axis`` (broadcasting over the rest)."""
    tape = _tape_of(a, b)
    av, bv = value(a), value(b)
    y = np.sum(av * bv, axis=axis, keepdims=keepdims)
    if tape is None:
        return y
    sa, sb = _shape(a), _shape(b)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return _unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)

    return tape._record("dot", np.asarray(y, dtype=np.float64), (a, b), vjp)


# --------------------------------------------------------------------------
# elementwise transcendental


def exp(x):
    return _unary("exp", x, np.exp, lambda xv, y: y)


def log(x):
    return _unary("log", x, np.log, lambda xv, y: 1.0 / xv)


def sqrt(x):
    return _unary("sqrt", x, np.sqrt, lambda xv, y: 0.5 / y)


def safe_sqrt(x, floor: float = 1e-30):
    """sqrt(max(x, 0)) whose derivative is zero wherever x <= floor."""

    def fwd(v):
        return np.sqrt(np.maximum(v, 0.0))

    def d(v, y):
        return np.where(v > floor, 0.5 / np.where(v > floor, y, 1.0), 0.0)

    return _unary("safe_sqrt", x, fwd, d)


def sin(x):
    return _unary("sin", x, np.sin, lambda xv, y: np.cos(xv))


def cos(x):
    return _unary("cos", x, np.cos, lambda xv, y: -np.sin(xv))


def tanh(x):
    return _unary("tanh", x, np.tanh, lambda xv, y: 1.0 - y * y)


def cosh(x):
    return _unary("cosh", x, np.cosh, lambda xv, y: np.sinh(xv))


def sinh(x):
    return _unary("sinh", x, np.sinh, lambda xv, y: np.cosh(xv))


def arsinh(x):
    return _unary("arsinh", x, np.arcsinh, lambda xv, y: 1.0 / np.sqrt(1.0 + xv * xv))


def _check_domain(name, bad):
    if np.any(bad):
        raise DomainError(f"{name}: argument outside domain beyond clamp tolerance")


def arctanh(x):
    """Inverse tanh; arguments within DOMAIN_SLACK of +-1 are clamped."""
    xv = value(x)
    _check_domain("arctanh", np.abs(xv) > 1.0 + DOMAIN_SLACK)

    def fwd(v):
        return np.arctanh(np.clip(v, -ARTANH_LIMIT, ARTANH_LIMIT))

    def d(v, y):
        c = np.clip(v, -ARTANH_LIMIT, ARTANH_LIMIT)
        return 1.0 / (1.0 - c * c)

    return _unary("arctanh", x, fwd, d)


def arcosh(x):
    """Inverse cosh. Values are clamped to >= 1; the derivative uses
    1/sqrt(max(x^2 - 1, EPS_ACOSH)) so it stays finite at the vertex."""
    xv = value(x)
    _check_domain("arcosh", xv < 1.0 - DOMAIN_SLACK)

    def fwd(v):
        return np.arccosh(np.maximum(v, 1.0))

    def d(v, y):
        c = np.maximum(v, 1.0)
        return 1.0 / np.sqrt(np.maximum(c * c - 1.0, EPS_ACOSH))

    return _unary("arcosh", x, fwd, d)


def softplus(x):
    """log(1 + e^x) evaluated as log1p(exp(-|x|)) + max(x, 0)."""

    def fwd(v):
        return np.log1p(np.exp(-np.abs(v))) + np.maximum(v, 0.0)

    def d(v, y):
        return 0.5 * (1.0 + np.tanh(0.5 * v))  # logistic, overflow-free

    return _unary("softplus", x, fwd, d)


def leaky_relu(x, slope: float = 0.2):
    return _unary("leaky_relu", x, lambda v: np.where(v > 0, v, slope * v),
                  lambda v, y: np.where(v > 0, 1.0, slope))


def maximum(x, floor):
    """max(x, floor) against a constant; gradient 1 where x > floor."""
    if isinstance(floor, Var):
        raise TypeError("maximum: floor must be constant")
    return _unary("maximum", x, lambda v: np.maximum(v, floor),
                  lambda v, y: (v > floor).astype(np.float64))


def minimum(x, ceil):
    if isinstance(ceil, Var):
        raise TypeError("minimum: ceil must be constant")
    return _unary("minimum", x, lambda v: np.minimum(v, ceil),
                  lambda v, y: (v < ceil).astype(np.float64))


def clip(x, lo, hi):
    return _unary("clip", x, lambda v: np.clip(v, lo, hi),
                  lambda v, y: ((v > lo) & (v < hi)).astype(np.float64))


# --------------------------------------------------------------------------
# reductions and normalizers


def sum(x, axis=None, keepdims: bool = False):  # noqa: A001 - mirrors numpy
    if not isinstance(x, Var):
        return np.sum(x, axis=axis, keepdims=keepdims)
    shape = x.value.shape
    y = np.asarray(np.sum(x.value, axis=axis, keepdims=keepdims), dtype=np.float64)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return x.tape._record("sum", y, (x,), vjp)


def max(x, axis: int = 0):  # noqa: A001
    """Max along ``axis``; the subgradient goes to the first maximal entry."""
    xv = value(x)
    idx = np.argmax(xv, axis=axis)
    y = np.take_along_axis(xv, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    if not isinstance(x, Var):
        return y
    shape = xv.shape

    def vjp(g):
        out = np.zeros(shape)
        np.put_along_axis(out, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (out,)

    return x.tape._record("max", np.asarray(y, dtype=np.float64), (x,), vjp)


def norm(x, axis: int = -1, keepdims: bool = True, floor: float = 0.0):
    """Euclidean norm along ``axis``, clamped below at ``floor``.

    The derivative is x/||x|| where the norm exceeds the floor and zero
    elsewhere (including the origin).
    """
    xv = value(x)
    raw = np.sqrt(np.sum(xv * xv, axis=axis, keepdims=True))
    n = np.maximum(raw, floor)
    y = n if keepdims else np.squeeze(n, axis=axis)
    if not isinstance(x, Var):
        return y

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        active = raw > floor
        safe = np.where(active, raw, 1.0)
        return (g * np.where(active, xv / safe, 0.0),)

    return x.tape._record("norm", np.asarray(y, dtype=np.float64), (x,), vjp)


def softmax(x, axis: int = -1):
    xv = value(x)
    z = np.exp(xv - np.max(xv, axis=axis, keepdims=True))
    y = z / np.sum(z, axis=axis, keepdims=True)
    if not isinstance(x, Var):
        return y

    def vjp(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return x.tape._record("softmax", y, (x,), vjp)


def log_softmax(x, axis: int = -1):
    xv = value(x)
    shifted = xv - np.max(xv, axis=axis, keepdims=True)
    y = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    if not isinstance(x, Var):
        return y

    def vjp(g):
        return (g - np.exp(y) * np.sum(g, axis=axis, keepdims=True),)

    return x.tape._record("log_softmax", y, (x,), vjp)


# --------------------------------------------------------------------------
# structural


def concat(xs, axis: int = -1):
    tape = _tape_of(*xs)
    vals = [np.asarray(value(x), dtype=np.float64) for x in xs]
    y = np.concatenate(vals, axis=axis)
    if tape is None:
        return y
    splits = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return tape._record("concat", y, tuple(xs), vjp)


def getitem(x, index):
    """Basic or integer-array indexing (slice); gradient scatters back."""
    if not isinstance(x, Var):
        return x[index]
    shape = x.value.shape
    y = np.asarray(x.value[index], dtype=np.float64)

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return x.tape._record("slice", y, (x,), vjp)


slice_ = getitem


def take(x, idx):
    """Gather rows ``x[idx]`` (embedding lookup)."""
    idx = np.asarray(idx, dtype=np.int64)
    if not isinstance(x, Var):
        return np.take(x, idx, axis=0)
    shape = x.value.shape
    y = np.take(x.value, idx, axis=0)

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return x.tape._record("take", y, (x,), vjp)


def segment_sum(x, seg, n: int):
    """Sum rows of ``x`` into ``n`` buckets given by ``seg``."""
    seg = np.asarray(seg, dtype=np.int64)
    xv = value(x)
    y = np.zeros((n,) + xv.shape[1:])
    np.add.at(y, seg, xv)
    if not isinstance(x, Var):
        return y
    return x.tape._record("segment_sum", y, (x,), lambda g: (g[seg],))


def set_rows(base, idx, rows):
    """Copy of ``base`` with ``base[idx] = rows`` (idx without repeats)."""
    tape = _tape_of(base, rows)
    idx = np.asarray(idx, dtype=np.int64)
    y = np.array(value(base), dtype=np.float64, copy=True)
    y[idx] = value(rows)
    if tape is None:
        return y

    def vjp(g):
        gb = g.copy()
        gb[idx] = 0.0
        return gb, g[idx]

    return tape._record("set_rows", y, (base, rows), vjp)


def reshape(x, shape):
    if not isinstance(x, Var):
        return np.reshape(x, shape)
    old = x.value.shape
    return x.tape._record("reshape", x.value.reshape(shape), (x,),
                          lambda g: (g.reshape(old),))


def transpose(x):
    if not isinstance(x, Var):
        return np.transpose(x)
    return x.tape._record("transpose", x.value.T.copy(), (x,), lambda g: (g.T,))


def where(cond, a, b):
    """Elementwise select with a constant boolean mask."""
    tape = _tape_of(a, b)
    cond = np.asarray(cond, dtype=bool)
    av, bv = value(a), value(b)
    y = np.where(cond, av, bv)
    if tape is None:
        return y
    sa, sb = _shape(a), _shape(b)
    return tape._record("where", np.asarray(y, dtype=np.float64), (a, b),
                        lambda g: (_unbroadcast(np.where(cond, g, 0.0), sa),
                                   _unbroadcast(np.where(cond, 0.0, g), sb)))


# --------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    """Per-coordinate comparison of reverse-mode and central differences."""

    analytic: dict[str, np.ndarray]
    numeric: dict[str, np.ndarray]
    rel_error: dict[str, np.ndarray]
    tolerance: float

    @property
    def max_error(self) -> float:
        errs = [float(e.max()) for e in self.rel_error.values() if e.size]
        return builtins.max(errs) if errs else 0.0

    def group_max(self) -> dict[str, float]:
        return {k: float(e.max()) if e.size else 0.0 for k, e in self.rel_error.items()}

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error < self.tolerance)

    def summary(self) -> str:
        lines = [f"{name}\t{err:.3e}\t{'ok' if err < self.tolerance else 'FAIL'}"
                 for name, err in self.group_max().items()]
        return "\n".join(lines)


def relative_error(a, b, floor: float = 1e-5):
    """|a - b| / max(|a|, |b|, floor); below ``floor`` this is absolute error / floor."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(f, point, step: float = 1e-5, tolerance: float = 1e-4,
               floor: float = 1e-5) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar ``f`` with central differences.

    ``f`` maps a dict of name -> Var (or array) to a scalar. ``point`` is a
    dict of name -> array, or a single array (wrapped under the name "x").
    """
    if not isinstance(point, Mapping):
        point = {"x": point}
        inner = f
        f = lambda p: inner(p["x"])  # noqa: E731
    point = {k: np.array(v, dtype=np.float64) for k, v in point.items()}

    tape = Tape()
    leaves = tape.vars(point)
    out = f(leaves)
    analytic = {}
    if isinstance(out, Var):
        tape.backward(out)
        analytic = {k: leaves[k].grad.copy() for k in point}
    else:
        analytic = {k: np.zeros_like(v) for k, v in point.items()}

    numeric = {}
    for name, base in point.items():
        g = np.zeros_like(base)
        flat = g.reshape(-1)
        for i in range(base.size):
            probe = dict(point)
            up = base.copy().reshape(-1)
            dn = base.copy().reshape(-1)
            up[i] += step
            dn[i] -= step
            probe[name] = up.reshape(base.shape)
            fp = float(np.asarray(value(f(probe))).reshape(()))
            probe[name] = dn.reshape(base.shape)
            fm = float(np.asarray(value(f(probe))).reshape(()))
            flat[i] = (fp - fm) / (2.0 * step)
        numeric[name] = g
    errors = {k: relative_error(analytic[k], numeric[k], floor) for k in point}
    return GradCheckReport(analytic, numeric, errors, tolerance)

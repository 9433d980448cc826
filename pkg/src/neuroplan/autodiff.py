"""Reverse-mode automatic differentiation on an append-only tape.

Nodes hold numpy arrays (0-d arrays for plain scalars); every elementwise
primitive broadcasts like numpy. A node's parents always precede it on the
tape, so ``backward`` is a single reverse sweep.

    tape = Tape()
    x = tape.var(1.3)
    y = x * sin(x)
    grads = tape.backward(y)
    grads[x]          # sin(1.3) + 1.3 cos(1.3)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DIV_EPS = 1e-12

# Test hook: primitive name -> factor applied to that primitive's local partials.
FAULTS: dict[str, float] = {}


class NumericalError(ArithmeticError):
    """A primitive produced or was asked for a non-finite / undefined value."""

    def __init__(self, primitive: str, detail: str):
        super().__init__(f"{primitive}: {detail}")
        self.primitive = primitive


class TapeError(ValueError):
    pass


class Tape:
    __slots__ = ("data", "parents", "vjps", "kinds", "needs")

    def __init__(self):
        self.data: list[np.ndarray] = []
        self.parents: list[tuple[int, ...]] = []
        self.vjps: list[Callable | None] = []
        self.kinds: list[str] = []
        self.needs: list[bool] = []

    def __len__(self):
        return len(self.data)

    def _push(self, kind, data, parents=(), vjp=None, needs=False) -> "Value":
        data = np.asarray(data, dtype=float)
        if not np.isfinite(data).all():
            raise NumericalError(kind, "non-finite result")
        self.data.append(data)
        self.parents.append(parents)
        self.kinds.append(kind)
        self.needs.append(needs)
        if needs and kind in FAULTS and vjp is not None:
            vjp = _scaled(vjp, FAULTS[kind])
        self.vjps.append(vjp if needs else None)
        return Value(self, len(self.data) - 1, data)

    def lift(self, c) -> "Value":
        """Constant leaf; receives no gradient."""
        if isinstance(c, Value):
            _same_tape(self, c)
            return c
        return self._push("const", np.array(c, dtype=float))

    def var(self, c) -> "Value":
        """Differentiable leaf."""
        return self._push("var", np.array(c, dtype=float), needs=True)

    def backward(self, output: "Value", seed=None) -> "Gradients":
        if output.tape is not self:
            raise TapeError("output belongs to a different tape")
        grads: list = [None] * len(self.data)
        grads[output.id] = np.ones_like(output.data) if seed is None else np.asarray(seed, float)
        parents, vjps = self.parents, self.vjps
        for i in range(output.id, -1, -1):
            g = grads[i]
            if g is None or vjps[i] is None:
                continue
            pg = vjps[i](g)
            for p, gp in zip(parents[i], pg):
                if gp is None or not self.needs[p]:
                    continue
                gp = _unbroadcast(gp, self.data[p].shape)
                grads[p] = gp if grads[p] is None else grads[p] + gp
        return Gradients(self, grads)


class Gradients:
    """Gradient buffer aligned with tape nodes; untouched nodes read as zeros."""

    def __init__(self, tape: Tape, buf: list):
        self.tape = tape
        self._buf = buf

    def __len__(self):
        return len(self._buf)

    def __getitem__(self, v) -> np.ndarray:
        i = v.id if isinstance(v, Value) else int(v)
        g = self._buf[i]
        return np.zeros_like(self.tape.data[i]) if g is None else g


def _scaled(vjp, factor):
    def f(g):
        return tuple(None if x is None else x * factor for x in vjp(g))
    return f


def _same_tape(tape, v):
    if v.tape is not tape:
        raise TapeError("operands live on different tapes")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _tape_of(*xs) -> Tape:
    tape = None
    for x in xs:
        if isinstance(x, Value):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeError("operands live on different tapes")
    if tape is None:
        raise TapeError("at least one operand must be a Value")
    return tape


def _operands(*xs):
    tape = _tape_of(*xs)
    vals = tuple(x if isinstance(x, Value) else tape.lift(x) for x in xs)
    return tape, vals


class Value:
    __slots__ = ("tape", "id", "data")
    __array_ufunc__ = None  # make ndarray <op> Value defer to Value's reflected ops

    def __init__(self, tape: Tape, node_id: int, data: np.ndarray):
        self.tape = tape
        self.id = node_id
        self.data = data

    @property
    def scalar(self) -> float:
        return float(self.data)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Value(id={self.id}, data={self.data!r})"

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None):
        return vsum(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def _needs(tape, vals):
    return any(tape.needs[v.id] for v in vals)


def _binary(kind, a, b, fwd, vjp_of):
    tape, (a, b) = _operands(a, b)
    out = fwd(a.data, b.data)
    needs = _needs(tape, (a, b))
    return tape._push(kind, out, (a.id, b.id), vjp_of(a.data, b.data, out) if needs else None, needs)


def _unary(kind, a, fwd, vjp_of):
    tape, (a,) = _operands(a)
    out = fwd(a.data)
    needs = tape.needs[a.id]
    return tape._push(kind, out, (a.id,), vjp_of(a.data, out) if needs else None, needs)


def add(a, b):
    return _binary("add", a, b, np.add, lambda x, y, o: lambda g: (g, g))


def sub(a, b):
    return _binary("sub", a, b, np.subtract, lambda x, y, o: lambda g: (g, -g))


def mul(a, b):
    return _binary("mul", a, b, np.multiply, lambda x, y, o: lambda g: (g * y, g * x))


def div(a, b):
    tape, (a, b) = _operands(a, b)
    if (np.abs(b.data) <= DIV_EPS).any():
        raise NumericalError("div", "denominator magnitude <= 1e-12")
    return _binary("div", a, b, np.divide, lambda x, y, o: lambda g: (g / y, -g * o / y))


def neg(a):
    return _unary("neg", a, np.negative, lambda x, o: lambda g: (-g,))


def sin(a):
    return _unary("sin", a, np.sin, lambda x, o: lambda g: (g * np.cos(x),))


def cos(a):
    return _unary("cos", a, np.cos, lambda x, o: lambda g: (-g * np.sin(x),))


def tanh(a):
    return _unary("tanh", a, np.tanh, lambda x, o: lambda g: (g * (1.0 - o * o),))


def sigmoid(a):
    def fwd(x):
        return 0.5 * (1.0 + np.tanh(0.5 * x))
    return _unary("sigmoid", a, fwd, lambda x, o: lambda g: (g * o * (1.0 - o),))


def exp(a):
    tape, (a,) = _operands(a)
    if (a.data > 700.0).any():
        raise NumericalError("exp", "argument above 700 would overflow")
    return _unary("exp", a, np.exp, lambda x, o: lambda g: (g * o,))


def sqrt(a):
    """Square root; the derivative at exactly 0 is taken as 0."""
    tape, (a,) = _operands(a)
    if (a.data < 0.0).any():
        raise NumericalError("sqrt", "negative operand")

    def vjp_of(x, o):
        def f(g):
            safe = np.where(o > 0.0, o, 1.0)
            return (np.where(o > 0.0, g / (2.0 * safe), 0.0),)
        return f
    return _unary("sqrt", a, np.sqrt, vjp_of)


def square(a):
    return _unary("square", a, np.square, lambda x, o: lambda g: (2.0 * g * x,))


def abs(a):  # noqa: A001 - mirrors the primitive name
    """|a| with subgradient 0 at 0."""
    return _unary("abs", a, np.abs, lambda x, o: lambda g: (g * np.sign(x),))


def atan2(y, x):
    def vjp_of(yd, xd, o):
        r2 = xd * xd + yd * yd
        if (r2 <= DIV_EPS).any():
            raise NumericalError("atan2", "derivative undefined at the origin")
        return lambda g: (g * xd / r2, -g * yd / r2)
    return _binary("atan2", y, x, np.arctan2, vjp_of)


def minimum(a, b):
    """Elementwise min; ties send the gradient to ``a``."""
    def vjp_of(x, y, o):
        pick_a = x <= y
        return lambda g: (np.where(pick_a, g, 0.0), np.where(pick_a, 0.0, g))
    return _binary("min", a, b, np.minimum, vjp_of)


def maximum(a, b):
    def vjp_of(x, y, o):
        pick_a = x >= y
        return lambda g: (np.where(pick_a, g, 0.0), np.where(pick_a, 0.0, g))
    return _binary("max", a, b, np.maximum, vjp_of)


def _reduce_arg(kind, a, axis, argf):
    tape, (a,) = _operands(a)
    idx = argf(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis).squeeze(axis)
    needs = tape.needs[a.id]

    def vjp(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
        return (full,)
    v = tape._push(kind, out, (a.id,), vjp if needs else None, needs)
    return v, idx


def amin(a, axis=-1):
    """Min-reduction along ``axis``. Returns ``(value, argmin)``; the first
    occurrence wins ties and is the only entry receiving gradient."""
    return _reduce_arg("amin", a, axis, np.argmin)


def amax(a, axis=-1):
    return _reduce_arg("amax", a, axis, np.argmax)


def vsum(a, axis=None):
    tape, (a,) = _operands(a)
    shape = a.data.shape
    out = a.data.sum(axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)
    return tape._push("sum", out, (a.id,), vjp, tape.needs[a.id])


def matmul(a, b):
    def vjp_of(x, y, o):
        def f(g):
            ga = g @ np.swapaxes(y, -1, -2) if y.ndim > 1 else np.multiply.outer(g, y)
            if x.ndim == 1:
                gb = np.multiply.outer(x, g)
            else:
                gb = np.swapaxes(x, -1, -2) @ g
                while gb.ndim > y.ndim:
                    gb = gb.sum(axis=0)
            return ga, gb
        return f
    return _binary("matmul", a, b, np.matmul, vjp_of)


def take(a, idx):
    tape, (a,) = _operands(a)
    shape = a.data.shape

    basic = _is_basic(idx)

    def vjp(g):
        full = np.zeros(shape)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)
    return tape._push("take", a.data[idx], (a.id,), vjp, tape.needs[a.id])


def _is_basic(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(p is None or p is Ellipsis or isinstance(p, (int, np.integer, slice)) for p in parts)


def reshape(a, shape):
    tape, (a,) = _operands(a)
    old = a.data.shape
    return tape._push("reshape", a.data.reshape(shape), (a.id,),
                      lambda g: (g.reshape(old),), tape.needs[a.id])


def concat(xs, axis=-1):
    tape, xs = _operands(*xs)
    sizes = [x.data.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    out = np.concatenate([x.data for x in xs], axis=axis)
    return tape._push("concat", out, tuple(x.id for x in xs),
                      lambda g: tuple(np.split(g, cuts, axis=axis)), _needs(tape, xs))


def stack(xs, axis=0):
    tape, xs = _operands(*xs)
    out = np.stack([x.data for x in xs], axis=axis)
    n = len(xs)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))
    return tape._push("stack", out, tuple(x.id for x in xs), vjp, _needs(tape, xs))


def where(mask, a, b):
    """Select ``a`` where ``mask`` else ``b``; ``mask`` is a constant array."""
    mask = np.asarray(mask, dtype=bool)

    def vjp_of(x, y, o):
        return lambda g: (np.where(mask, g, 0.0), np.where(mask, 0.0, g))
    return _binary("where", a, b, lambda x, y: np.where(mask, x, y), vjp_of)


def backward(tape: Tape, output: Value) -> Gradients:
    return tape.backward(output)


@dataclass
class GradCheck:
    max_rel_error: float
    worst_index: int
    checked: int
    skipped: int
    analytic: np.ndarray
    numeric: np.ndarray


def grad_check_detail(f, x, eps: float = 1e-5, skip_kinks: bool = False,
                      kink_tol: float = 1e-3) -> GradCheck:
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f(tape, xv)`` builds a scalar on ``tape`` from the variable ``xv``
    (shape of ``x``). With ``skip_kinks`` a coordinate is excluded when its
    forward and backward one-sided slopes disagree by more than
    ``kink_tol`` relative, i.e. it sits on a min/abs/argmin switch.
    """
    x = np.array(x, dtype=float)
    tape = Tape()
    xv = tape.var(x)
    out = f(tape, xv)
    analytic = tape.backward(out)[xv].reshape(-1)
    f0 = out.scalar

    def ev(z):
        t = Tape()
        val = f(t, t.var(z)).scalar
        if not np.isfinite(val):
            raise NumericalError("grad_check", "non-finite function value")
        return val

    flat = x.reshape(-1)
    numeric = np.zeros_like(flat)
    errors = np.zeros_like(flat)
    skipped = 0
    for i in range(flat.size):
        zp = flat.copy()
        zp[i] += eps
        zm = flat.copy()
        zm[i] -= eps
        fp, fm = ev(zp.reshape(x.shape)), ev(zm.reshape(x.shape))
        numeric[i] = (fp - fm) / (2.0 * eps)
        if skip_kinks:
            fwd, bwd = (fp - f0) / eps, (f0 - fm) / eps
            if np.abs(fwd - bwd) > kink_tol * max(1.0, np.abs(fwd), np.abs(bwd)):
                skipped += 1
                continue
        errors[i] = np.abs(analytic[i] - numeric[i]) / max(1.0, np.abs(analytic[i]), np.abs(numeric[i]))
    worst = int(np.argmax(errors)) if errors.size else -1
    return GradCheck(float(errors.max()) if errors.size else 0.0, worst,
                     flat.size - skipped, skipped, analytic, numeric)


def grad_check(f, x, eps: float = 1e-5, **kw) -> float:
    """Max over coordinates of |analytic - fd| / max(1, |analytic|, |fd|)."""
    return grad_check_detail(f, x, eps, **kw).max_rel_error

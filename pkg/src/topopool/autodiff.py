"""Reverse-mode differentiation over numpy arrays.

A :class:`Tape` records every operation applied to parameter leaves as an
append-only list; :meth:`Tape.backward` walks it once in reverse. Operations
whose inputs are all constants are evaluated eagerly and never recorded, so the
same model code runs with or without gradients.

Operations that make a discrete decision (branch of ``maximum``, winner of
``amax``, sort order in persistence pairing, hard samples) log that decision
with :meth:`Tape.note_choice`. :func:`grad_check` uses the log to detect
coordinates sitting close to a tie, where finite differences straddle a kink.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InternalError, NumericError, ParameterError

__all__ = [
    "Tape",
    "Var",
    "as_var",
    "value_of",
    "backward",
    "grad_check",
    "GradCheckReport",
    "concat",
    "maximum",
    "minimum",
    "straight_through",
    "scatter_symmetric",
    "softmax",
    "trace",
    "frobenius",
]


class Tape:
    def __init__(self):
        self._nodes: list[tuple[list[int], Callable]] = []
        self._vars: list[Var] = []
        self.params: dict[str, Var] = {}
        self._choices = hashlib.sha1()

    def __len__(self):
        return len(self._nodes)

    def param(self, value, name: str | None = None) -> "Var":
        name = name if name is not None else f"p{len(self.params)}"
        if name in self.params:
            raise ParameterError(f"duplicate parameter name {name!r}")
        v = self._record(np.array(value, dtype=float), [], None)
        v.name = name
        self.params[name] = v
        return v

    def _record(self, value, parents: list["Var"], vjp) -> "Var":
        idx = len(self._nodes)
        for p in parents:
            if p.index >= idx:
                raise InternalError("operation recorded before its input")
        self._nodes.append(([p.index for p in parents], vjp))
        var = Var(value, self, idx)
        self._vars.append(var)
        return var

    def note_choice(self, *arrays) -> None:
        for a in arrays:
            a = np.ascontiguousarray(a)
            self._choices.update(str(a.shape).encode())
            self._choices.update(a.tobytes())

    @property
    def choice_signature(self) -> str:
        return self._choices.hexdigest()

    def backward(self, loss: "Var") -> dict[str, np.ndarray]:
        """Gradients of scalar ``loss`` with respect to every parameter leaf."""
        if loss.tape is not self:
            return {k: np.zeros_like(v.value) for k, v in self.params.items()}
        if np.size(loss.value) != 1:
            raise ParameterError("backward needs a scalar loss")
        grads: list[np.ndarray | None] = [None] * len(self._nodes)
        grads[loss.index] = np.ones_like(loss.value)
        for i in range(loss.index, -1, -1):
            g = grads[i]
            if g is None:
                continue
            parents, vjp = self._nodes[i]
            if vjp is None:
                continue
            contribs = vjp(g)
            for p, c in zip(parents, contribs):
                if c is None:
                    continue
                if p >= i:
                    raise InternalError("cycle in tape")
                grads[p] = c if grads[p] is None else grads[p] + c
        return {
            name: (grads[v.index] if grads[v.index] is not None else np.zeros_like(v.value))
            for name, v in self.params.items()
        }


def backward(tape: Tape, loss: "Var") -> dict[str, np.ndarray]:
    return tape.backward(loss)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def as_var(x) -> "Var":
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=float))


def value_of(x):
    return x.value if isinstance(x, Var) else x


def _make(value, parents, vjp) -> "Var":
    """Record ``value`` if any parent is on a tape; otherwise return a constant."""
    tape = None
    for p in parents:
        if p.tape is not None:
            if tape is not None and p.tape is not tape:
                raise ParameterError("operands belong to different tapes")
            tape = p.tape
    if tape is None:
        return Var(value)
    live = [p for p in parents]
    return tape._record(value, [p if p.tape is not None else _CONST for p in live], _wrap(vjp, live))


def _wrap(vjp, parents):
    mask = [p.tape is not None for p in parents]

    def run(g):
        out = vjp(g)
        return [c if keep else None for c, keep in zip(out, mask)]

    return run


class _Const:
    index = -1
    tape = None


_CONST = _Const()


class Var:
    """An array value, optionally tracked on a tape."""

    __array_priority__ = 1000
    __array_ufunc__ = None

    def __init__(self, value, tape: Tape | None = None, index: int = -1):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value, dtype=float)
        self.tape = tape
        self.index = index
        self.name = None

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Var{tag}(shape={self.value.shape}, tracked={self.tape is not None})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def _note(self, *arrays):
        if self.tape is not None:
            self.tape.note_choice(*arrays)

    # arithmetic
    def __add__(self, other):
        other = as_var(other)
        a, b = self.value, other.value
        return _make(a + b, [self, other], lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        other = as_var(other)
        a, b = self.value, other.value
        return _make(a - b, [self, other], lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))

    def __rsub__(self, other):
        return as_var(other) - self

    def __mul__(self, other):
        other = as_var(other)
        a, b = self.value, other.value
        return _make(a * b, [self, other], lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_var(other)
        a, b = self.value, other.value
        out = a / b
        return _make(
            out, [self, other], lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * out / b, b.shape))
        )

    def __rtruediv__(self, other):
        return as_var(other) / self

    def __neg__(self):
        return _make(-self.value, [self], lambda g: (-g,))

    def __pow__(self, k):
        if isinstance(k, Var):
            raise ParameterError("only constant exponents are supported")
        a = self.value
        return _make(a**k, [self], lambda g: (g * k * a ** (k - 1),))

    def __matmul__(self, other):
        other = as_var(other)
        a, b = self.value, other.value
        if a.ndim != 2 or b.ndim != 2:
            raise ParameterError("matmul expects 2-d operands")
        if a.shape[1] != b.shape[0]:
            raise ParameterError(f"shape mismatch {a.shape} @ {b.shape}")
        return _make(a @ b, [self, other], lambda g: (g @ b.T, a.T @ g))

    def __rmatmul__(self, other):
        return as_var(other) @ self

    def __getitem__(self, idx):
        a = self.value
        out = a[idx]

        def vjp(g):
            full = np.zeros_like(a)
            np.add.at(full, idx, g)
            return (full,)

        return _make(np.array(out, dtype=float), [self], vjp)

    @property
    def T(self):
        return _make(self.value.T, [self], lambda g: (g.T,))

    def reshape(self, *shape):
        a = self.value
        return _make(a.reshape(*shape), [self], lambda g: (g.reshape(a.shape),))

    def sum(self, axis=None, keepdims=False):
        a = self.value
        out = a.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        return _make(np.asarray(out, dtype=float), [self], vjp)

    def mean(self, axis=None, keepdims=False):
        count = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # elementwise
    def exp(self):
        out = np.exp(self.value)
        return _make(out, [self], lambda g: (g * out,))

    def log(self):
        a = self.value
        with np.errstate(divide="ignore"):
            out = np.log(a)
        return _make(out, [self], lambda g: (g / a,))

    def tanh(self):
        out = np.tanh(self.value)
        return _make(out, [self], lambda g: (g * (1.0 - out * out),))

    def sigmoid(self):
        a = self.value
        out = np.where(a >= 0, 1.0 / (1.0 + np.exp(-np.abs(a))), np.exp(-np.abs(a)) / (1.0 + np.exp(-np.abs(a))))
        return _make(out, [self], lambda g: (g * out * (1.0 - out),))

    def softplus(self):
        a = self.value
        out = np.logaddexp(0.0, a)
        sig = 0.5 * (1.0 + np.tanh(0.5 * a))
        return _make(out, [self], lambda g: (g * sig,))

    def sqrt(self):
        """Square root whose derivative at exactly 0 is taken as 0."""
        out = np.sqrt(self.value)

        def vjp(g):
            safe = np.where(out > 0, out, 1.0)
            return (np.where(out > 0, g / (2.0 * safe), 0.0),)

        return _make(out, [self], vjp)

    def abs(self):
        a = self.value
        sign = np.sign(a)
        self._note(sign)
        return _make(np.abs(a), [self], lambda g: (g * sign,))

    def relu(self):
        a = self.value
        mask = a > 0
        self._note(mask)
        return _make(np.where(mask, a, 0.0), [self], lambda g: (g * mask,))

    def amax(self):
        """Global maximum; the first maximal entry receives the gradient."""
        return _extreme(self, np.argmax)

    def amin(self):
        return _extreme(self, np.argmin)

    def detach(self) -> "Var":
        return Var(self.value.copy())


def _extreme(x: Var, pick):
    a = x.value
    k = int(pick(a.ravel()))
    x._note(np.array([k]))

    def vjp(g):
        full = np.zeros(a.size)
        full[k] = g
        return (full.reshape(a.shape),)

    return _make(np.asarray(a.ravel()[k], dtype=float), [x], vjp)


def maximum(a, b) -> Var:
    """Elementwise maximum; on ties the gradient goes to ``a``."""
    a, b = as_var(a), as_var(b)
    av, bv = np.broadcast_arrays(a.value, b.value)
    first = av >= bv
    _note_any((a, b), first)
    out = np.where(first, av, bv)
    return _make(
        out,
        [a, b],
        lambda g: (_unbroadcast(g * first, a.value.shape), _unbroadcast(g * ~first, b.value.shape)),
    )


def minimum(a, b) -> Var:
    """Elementwise minimum; on ties the gradient goes to ``a``."""
    a, b = as_var(a), as_var(b)
    av, bv = np.broadcast_arrays(a.value, b.value)
    first = av <= bv
    _note_any((a, b), first)
    out = np.where(first, av, bv)
    return _make(
        out,
        [a, b],
        lambda g: (_unbroadcast(g * first, a.value.shape), _unbroadcast(g * ~first, b.value.shape)),
    )


def _note_any(vars_, *arrays):
    for v in vars_:
        if v.tape is not None:
            v.tape.note_choice(*arrays)
            return


def concat(items, axis=0) -> Var:
    items = [as_var(v) for v in items]
    sizes = [v.value.shape[axis] for v in items]
    cuts = np.cumsum(sizes)[:-1]
    out = np.concatenate([v.value for v in items], axis=axis)
    return _make(out, items, lambda g: tuple(np.split(g, cuts, axis=axis)))


def softmax(x: Var, axis=-1) -> Var:
    x = as_var(x)
    a = x.value
    z = np.exp(a - a.max(axis=axis, keepdims=True))
    out = z / z.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, [x], vjp)


def straight_through(hard, soft: Var) -> Var:
    """Forward value ``hard``; backward passes the gradient to ``soft`` unchanged."""
    soft = as_var(soft)
    hard = np.asarray(hard, dtype=float)
    return _make(hard.copy(), [soft], lambda g: (g,))


def scatter_symmetric(values, rows, cols, n) -> Var:
    """Dense ``n x n`` matrix with ``values[k]`` at ``(rows[k], cols[k])`` and its mirror.

    Pairs with ``rows[k] == cols[k]`` are written once.
    """
    values = as_var(values)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    out = np.zeros((n, n))
    out[rows, cols] = values.value
    out[cols, rows] = values.value
    off = rows != cols

    def vjp(g):
        return (g[rows, cols] + np.where(off, g[cols, rows], 0.0),)

    return _make(out, [values], vjp)


def trace(x: Var) -> Var:
    x = as_var(x)
    n = x.value.shape[0]
    idx = np.arange(n)
    return x[idx, idx].sum()


def frobenius(x: Var) -> Var:
    x = as_var(x)
    return (x * x).sum().sqrt()


# --- gradient checking ------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    excluded: int
    worst: tuple[str, tuple] | None

    @property
    def coverage(self) -> float:
        total = self.checked + self.excluded
        return self.checked / total if total else 1.0


def _evaluate(fn, params, with_grad=False):
    tape = Tape()
    pv = {k: tape.param(v, k) for k, v in params.items()}
    out = fn(pv)
    value = float(np.asarray(value_of(out)).reshape(()))
    if not np.isfinite(value):
        raise NumericError(f"non-finite objective {value}")
    grads = tape.backward(as_var(out)) if with_grad else None
    return value, grads, tape.choice_signature


def grad_check(fn, params: dict, eps: float = 1e-5, tie_band: float = 10.0, floor: float = 1e-6):
    """Compare tape gradients of ``fn`` against central differences.

    ``fn`` maps a dict of parameter :class:`Var` leaves to a scalar :class:`Var`.
    A coordinate is excluded when moving it by ``tie_band * eps`` in either
    direction changes any discrete choice recorded on the tape. The relative
    error of a coordinate is ``|g_tape - g_fd| / max(|g_tape|, |g_fd|, floor)``.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    params = {k: np.array(v, dtype=float) for k, v in params.items()}
    _, grads, base_sig = _evaluate(fn, params, with_grad=True)
    worst_err, worst = 0.0, None
    checked = excluded = 0
    for name, arr in params.items():
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            sigs = []
            for delta in (tie_band * eps, -tie_band * eps):
                arr[idx] = orig + delta
                sigs.append(_evaluate(fn, params)[2])
            if any(s != base_sig for s in sigs):
                arr[idx] = orig
                excluded += 1
                continue
            arr[idx] = orig + eps
            fp = _evaluate(fn, params)[0]
            arr[idx] = orig - eps
            fm = _evaluate(fn, params)[0]
            arr[idx] = orig
            fd = (fp - fm) / (2 * eps)
            g = float(grads[name][idx])
            err = abs(g - fd) / max(abs(g), abs(fd), floor)
            checked += 1
            if err > worst_err:
                worst_err, worst = err, (name, idx)
    return GradCheckReport(worst_err, checked, excluded, worst)

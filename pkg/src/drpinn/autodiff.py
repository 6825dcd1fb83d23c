"""Reverse-mode automatic differentiation on an append-only tape.

Every arithmetic operation on a :class:`Var` appends one node to its
:class:`Tape` holding the primal value, the operand indices and a closure
that maps the output adjoint to operand adjoints.  Values are numpy arrays;
a 0-d array is a scalar, so the scalar graph is the special case and wider
arrays are a batching optimisation over the same node semantics.

Input derivatives (the ``dI/dt`` of the physics residual) come from
:class:`Dual`, a forward-mode tangent whose arithmetic is itself recorded on
the tape.  A reverse sweep from a loss built out of tangents therefore yields
the mixed second derivatives needed to train on ODE residuals.

Tape length for one PINN loss evaluation is bounded by
``~6 * n_layers + 10 * n_outputs + 30`` nodes (independent of the number of
collocation points, which only widens the arrays).
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tape",
    "Var",
    "Dual",
    "TapeError",
    "grad",
    "input_derivative",
    "tanh",
    "exp",
    "log",
]


class TapeError(ValueError):
    """Raised when Vars from different tapes are mixed."""


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    # sum out leading axes added by broadcasting
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tape:
    """Append-only record of a computation.

    ``parents[i]`` holds operand indices of node ``i`` and ``vjps[i]`` the
    closure computing their adjoints; leaves have no parents.
    """

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.parents: list[tuple[int, ...]] = []
        self.vjps: list[Callable | None] = []
        self.kinds: list[str] = []

    def __len__(self):
        return len(self.values)

    def var(self, value) -> "Var":
        """Register a leaf (input or trainable parameter)."""
        return self._push(np.asarray(value, dtype=float), (), None, "leaf")

    def _push(self, value, parents, vjp, kind) -> "Var":
        self.values.append(value)
        self.parents.append(parents)
        self.vjps.append(vjp)
        self.kinds.append(kind)
        return Var(self, len(self.values) - 1, value)

    def replay(self) -> list[np.ndarray]:
        """Recompute every primal value from the leaves, in tape order."""
        out: list[np.ndarray] = []
        for i, kind in enumerate(self.kinds):
            if kind == "leaf":
                out.append(self.values[i])
            else:
                args = [out[p] for p in self.parents[i]]
                out.append(_REPLAY[kind](self, i, args))
        return out


class Var:
    __slots__ = ("tape", "index", "value")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, tape: Tape, index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    def __repr__(self):
        return f"Var(index={self.index}, value={self.value!r})"

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def _same_tape(self, other: "Var"):
        if other.tape is not self.tape:
            raise TapeError("operands live on different tapes")

    # binary ops ----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        if isinstance(other, Var):
            self._same_tape(other)
            sa, sb = self.value.shape, other.value.shape
            return self.tape._push(
                self.value + other.value, (self.index, other.index),
                lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")
        c = np.asarray(other, dtype=float)
        sa = self.value.shape
        return self.tape._push(self.value + c, (self.index,),
                               lambda g: (_unbroadcast(g, sa),), "addc:" + _key(self.tape, c))

    __radd__ = __add__

    def __neg__(self):
        return self.tape._push(-self.value, (self.index,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        if isinstance(other, Var):
            self._same_tape(other)
            a, b = self.value, other.value
            return self.tape._push(
                a * b, (self.index, other.index),
                lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)), "mul")
        c = np.asarray(other, dtype=float)
        sa = self.value.shape
        return self.tape._push(self.value * c, (self.index,),
                               lambda g: (_unbroadcast(g * c, sa),), "mulc:" + _key(self.tape, c))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def reciprocal(self) -> "Var":
        a = self.value
        out = 1.0 / a
        return self.tape._push(out, (self.index,), lambda g: (-g * out * out,), "recip")

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)):
            raise TypeError("only integer powers are supported")
        k = int(k)
        a = self.value
        if k == 2:
            return self.tape._push(a * a, (self.index,), lambda g: (2.0 * g * a,), "pow:2")
        return self.tape._push(a ** k, (self.index,),
                               lambda g: (g * k * a ** (k - 1),), f"pow:{k}")

    def __matmul__(self, other):
        if isinstance(other, Dual):
            return NotImplemented
        if isinstance(other, Var):
            self._same_tape(other)
            a, b = self.value, other.value
            return self.tape._push(a @ b, (self.index, other.index),
                                   lambda g: (g @ b.T, a.T @ g), "matmul")
        c = np.asarray(other, dtype=float)
        return self.tape._push(self.value @ c, (self.index,),
                               lambda g: (g @ c.T,), "matmulc:" + _key(self.tape, c))

    def __rmatmul__(self, other):
        c = np.asarray(other, dtype=float)
        return self.tape._push(c @ self.value, (self.index,),
                               lambda g: (c.T @ g,), "rmatmulc:" + _key(self.tape, c))

    # unary ops -----------------------------------------------------------
    def exp(self) -> "Var":
        out = np.exp(self.value)
        return self.tape._push(out, (self.index,), lambda g: (g * out,), "exp")

    def log(self) -> "Var":
        a = self.value
        return self.tape._push(np.log(a), (self.index,), lambda g: (g / a,), "log")

    def tanh(self) -> "Var":
        out = np.tanh(self.value)
        return self.tape._push(out, (self.index,), lambda g: (g * (1.0 - out * out),), "tanh")

    def tanh_jvp(self, tangent) -> "Var":
        """Tangent of tanh: ``tangent * (1 - self**2)`` where self holds tanh(x)."""
        y = self.value
        d = 1.0 - y * y
        if isinstance(tangent, Var):
            self._same_tape(tangent)
            t = tangent.value
            return self.tape._push(
                t * d, (self.index, tangent.index),
                lambda g: (_unbroadcast(-2.0 * g * t * y, y.shape), _unbroadcast(g * d, t.shape)),
                "tanh_jvp")
        c = np.asarray(tangent, dtype=float)
        return self.tape._push(c * d, (self.index,),
                               lambda g: (_unbroadcast(-2.0 * g * c * y, y.shape),),
                               "tanh_jvpc:" + _key(self.tape, c))

    def sum(self) -> "Var":
        shape = self.value.shape
        return self.tape._push(np.sum(self.value), (self.index,),
                               lambda g: (np.broadcast_to(g, shape),), "sum")

    def mean(self) -> "Var":
        n = self.value.size
        return self.sum() * (1.0 / n)

    def __getitem__(self, idx):
        shape = self.value.shape
        parts = idx if isinstance(idx, tuple) else (idx,)
        fancy = any(isinstance(p, (list, np.ndarray)) for p in parts)

        def vjp(g):
            full = np.zeros(shape)
            if fancy:
                np.add.at(full, idx, g)
            else:
                full[idx] += g
            return (full,)

        return self.tape._push(self.value[idx], (self.index,), vjp, "getitem:" + _key(self.tape, idx))


# Constants captured by closures are remembered so ``Tape.replay`` can rerun
# the forward pass.
def _key(tape: Tape, c) -> str:
    store = tape.__dict__.setdefault("_consts", [])
    store.append(c)
    return str(len(store) - 1)


def _const(tape, kind):
    return tape._consts[int(kind.split(":", 1)[1])]


_REPLAY_FIXED = {
    "add": lambda a: a[0] + a[1],
    "neg": lambda a: -a[0],
    "mul": lambda a: a[0] * a[1],
    "recip": lambda a: 1.0 / a[0],
    "matmul": lambda a: a[0] @ a[1],
    "exp": lambda a: np.exp(a[0]),
    "log": lambda a: np.log(a[0]),
    "tanh": lambda a: np.tanh(a[0]),
    "tanh_jvp": lambda a: a[1] * (1.0 - a[0] * a[0]),
    "sum": lambda a: np.sum(a[0]),
}


class _Replay(dict):
    def __missing__(self, kind):
        head = kind.split(":", 1)[0]
        if head == "addc":
            return lambda tape, i, a, k=kind: a[0] + _const(tape, k)
        if head == "mulc":
            return lambda tape, i, a, k=kind: a[0] * _const(tape, k)
        if head == "matmulc":
            return lambda tape, i, a, k=kind: a[0] @ _const(tape, k)
        if head == "rmatmulc":
            return lambda tape, i, a, k=kind: _const(tape, k) @ a[0]
        if head == "tanh_jvpc":
            return lambda tape, i, a, k=kind: _const(tape, k) * (1.0 - a[0] * a[0])
        if head == "getitem":
            return lambda tape, i, a, k=kind: a[0][_const(tape, k)]
        if head == "pow":
            p = int(kind.split(":")[1])
            return lambda tape, i, a: a[0] ** p
        fixed = _REPLAY_FIXED[head]
        return lambda tape, i, a: fixed(a)


_REPLAY = _Replay()


def grad(tape: Tape, output: Var, inputs: Sequence[Var]) -> list:
    """d(output)/d(input) for each input via one reverse sweep.

    ``output`` must be a scalar.  Inputs the output does not depend on get
    zeros.  Scalar inputs give Python floats, array inputs give arrays.
    """
    if output.tape is not tape or any(v.tape is not tape for v in inputs):
        raise TapeError("output and inputs must live on the given tape")
    if output.value.size != 1:
        raise ValueError("grad needs a scalar output")
    adj: list = [None] * (output.index + 1)
    adj[output.index] = np.ones_like(output.value)
    parents, vjps = tape.parents, tape.vjps
    for i in range(output.index, -1, -1):
        g = adj[i]
        if g is None or vjps[i] is None:
            continue
        for p, gp in zip(parents[i], vjps[i](g)):
            adj[p] = gp if adj[p] is None else adj[p] + gp
    out = []
    for v in inputs:
        g = adj[v.index] if v.index < len(adj) else None
        if g is None:
            g = np.zeros_like(v.value)
        out.append(float(g) if v.value.ndim == 0 else np.asarray(g))
    return out


def _value(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


class Dual:
    """Primal/tangent pair; ``tangent`` is a Var, a constant array or None (zero)."""

    __slots__ = ("primal", "tangent")
    __array_ufunc__ = None

    def __init__(self, primal, tangent=None):
        self.primal = primal
        self.tangent = tangent

    @staticmethod
    def _split(x):
        if isinstance(x, Dual):
            return x.primal, x.tangent
        return x, None

    def __add__(self, other):
        p, t = self._split(other)
        return Dual(self.primal + p, _tadd(self.tangent, t))

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.primal, None if self.tangent is None else -self.tangent)

    def __sub__(self, other):
        return self + (-other if isinstance(other, (Dual, Var)) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        p, t = self._split(other)
        tan = _tadd(_tmul(self.tangent, p), _tmul(t, self.primal))
        return Dual(self.primal * p, tan)

    __rmul__ = __mul__

    def __matmul__(self, other):
        p, t = self._split(other)
        tan = None if self.tangent is None else self.tangent @ p
        if t is not None:
            tan = _tadd(tan, self.primal @ t)
        return Dual(self.primal @ p, tan)

    def __rmatmul__(self, other):
        p, t = self._split(other)
        tan = None if self.tangent is None else p @ self.tangent
        if t is not None:
            tan = _tadd(tan, t @ self.primal)
        return Dual(p @ self.primal, tan)

    def tanh(self):
        y = tanh(self.primal)
        if self.tangent is None:
            return Dual(y)
        if isinstance(y, Var):
            return Dual(y, y.tanh_jvp(self.tangent))
        return Dual(y, self.tangent * (1.0 - y * y))

    def exp(self):
        y = exp(self.primal)
        return Dual(y, None if self.tangent is None else self.tangent * y)

    def __getitem__(self, idx):
        t = self.tangent
        if t is not None:
            if isinstance(t, Var):
                t = t[idx]
            else:
                t = np.broadcast_to(t, _value(self.primal).shape)[idx]
        return Dual(self.primal[idx], t)


def _tadd(a, b):
    if a is None:
        return b
    if b is None:
        return a
    if isinstance(a, Var) or isinstance(b, Var):
        return a + b if isinstance(a, Var) else b + a
    return a + b


def _tmul(t, p):
    if t is None:
        return None
    if isinstance(t, Var) or isinstance(p, Var):
        return t * p if isinstance(t, Var) else p * t
    return t * p


def tanh(x):
    if isinstance(x, (Var, Dual)):
        return x.tanh()
    return np.tanh(x)


def exp(x):
    if isinstance(x, (Var, Dual)):
        return x.exp()
    return np.exp(x)


def log(x):
    if isinstance(x, Var):
        return x.log()
    return np.log(x)


def input_derivative(fn: Callable, x, column: int = 0):
    """Evaluate ``fn`` on ``x`` and differentiate w.r.t. one input row.

    ``x`` is feature-major, shape (d, batch).  Returns
    ``(outputs, d_outputs/d_x[column])`` as tape Vars (or constants), so a
    loss built from either can be differentiated again with :func:`grad`.
    """
    d = _value(x).shape[0]
    seed = np.zeros((d, 1))
    seed[column, 0] = 1.0
    out = fn(Dual(x, seed))
    tan = out.tangent
    shape = _value(out.primal).shape
    if tan is None:
        tan = np.zeros(shape)
    elif _value(tan).shape != shape:
        # tangents of affine maps stay at the seed's broadcast shape
        tan = tan + np.zeros(shape)
    return out.primal, tan

"""Reverse-mode automatic differentiation over a recording tape.

Every numeric routine in this package is written against plain Python
scalars.  Passing :class:`TracedValue` operands instead of floats makes the
same code record its computation on a :class:`Tape`, from which exact
reverse-mode gradients are recovered with :func:`grad` (or the lower-level
``Tape.adjoints``).  Branches are taken on concrete values, so the tape always
represents the branch that actually executed.

Design notes:

* One tape per evaluation call; tapes are independent and never shared.
* A tape node stores ``(opcode, parent_a, partial_a, parent_b, partial_b)``.
  Parents always have smaller indices, so a single reverse sweep over the
  node list propagates adjoints.
* Operations that could turn finite inputs into non-finite outputs raise
  :class:`DomainError` instead of writing NaN/inf onto the tape.
"""

from __future__ import annotations

import math

__all__ = [
    "DomainError",
    "TapeMixError",
    "Tape",
    "TracedValue",
    "value_of",
    "is_traced",
    "sin",
    "cos",
    "sqrt",
    "exp",
    "log",
    "smooth_abs",
    "hypot_guarded",
    "grad",
    "jacobian",
    "finite_diff_gradient",
    "max_rel_error",
]

_isfinite = math.isfinite


class DomainError(ArithmeticError):
    """A primitive was evaluated outside its domain (1/0, log(-x), ...)."""


class TapeMixError(RuntimeError):
    """Two TracedValues from different tapes were combined."""


# Opcodes are informational (debugging / introspection); the backward sweep
# only needs the precomputed local partials.
OP_INPUT = 0
OP_ADD = 1
OP_SUB = 2
OP_MUL = 3
OP_DIV = 4
OP_NEG = 5
OP_SIN = 6
OP_COS = 7
OP_SQRT = 8
OP_EXP = 9
OP_LOG = 10
OP_SABS = 11
OP_POW = 12

OP_NAMES = {
    OP_INPUT: "input",
    OP_ADD: "add",
    OP_SUB: "sub",
    OP_MUL: "mul",
    OP_DIV: "div",
    OP_NEG: "neg",
    OP_SIN: "sin",
    OP_COS: "cos",
    OP_SQRT: "sqrt",
    OP_EXP: "exp",
    OP_LOG: "log",
    OP_SABS: "smooth_abs",
    OP_POW: "pow",
}


class Tape:
    """Append-only record of scalar operations and their local partials."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def input(self, value) -> "TracedValue":
        v = float(value)
        if not _isfinite(v):
            raise DomainError("tape input must be finite, got %r" % value)
        nodes = self.nodes
        i = len(nodes)
        nodes.append((OP_INPUT, -1, 0.0, -1, 0.0))
        return TracedValue(self, v, i)

    def inputs(self, values) -> list:
        return [self.input(v) for v in values]

    def adjoints(self, output_index: int) -> list:
        """Adjoint of every node w.r.t. the node at ``output_index``.

        Single reverse sweep; each node is visited exactly once.
        """
        nodes = self.nodes
        adj = [0.0] * len(nodes)
        adj[output_index] = 1.0
        for i in range(output_index, -1, -1):
            a = adj[i]
            if a == 0.0:
                continue
            _, ia, da, ib, db = nodes[i]
            if ia >= 0:
                adj[ia] += da * a
            if ib >= 0:
                adj[ib] += db * a
        return adj


class TracedValue:
    """A float paired with its node on a :class:`Tape`.

    Supports the primitive set +, -, *, /, sin, cos, sqrt, exp, log,
    smooth_abs and comparisons (comparisons yield plain bools, so branching
    code records only the branch taken).
    """

    __slots__ = ("t", "v", "i")

    def __init__(self, tape, value, index):
        self.t = tape
        self.v = value
        self.i = index

    def __repr__(self):
        return f"TracedValue({self.v!r}, node={self.i})"

    # -- helpers -----------------------------------------------------------

    def _push(self, op, da, other, db, value):
        if not _isfinite(value):
            raise DomainError(f"{OP_NAMES[op]} produced non-finite value {value!r}")
        t = self.t
        nodes = t.nodes
        i = len(nodes)
        nodes.append((op, self.i, da, other.i if other is not None else -1, db))
        return TracedValue(t, value, i)

    def _check_tape(self, other):
        if other.t is not self.t:
            raise TapeMixError("operands come from different tapes")

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if type(other) is TracedValue:
            self._check_tape(other)
            return self._push(OP_ADD, 1.0, other, 1.0, self.v + other.v)
        o = float(other)
        if o == 0.0:
            return self
        return self._push(OP_ADD, 1.0, None, 0.0, self.v + o)

    __radd__ = __add__

    def __sub__(self, other):
        if type(other) is TracedValue:
            self._check_tape(other)
            return self._push(OP_SUB, 1.0, other, -1.0, self.v - other.v)
        o = float(other)
        if o == 0.0:
            return self
        return self._push(OP_SUB, 1.0, None, 0.0, self.v - o)

    def __rsub__(self, other):
        return self._push(OP_SUB, -1.0, None, 0.0, float(other) - self.v)

    def __neg__(self):
        return self._push(OP_NEG, -1.0, None, 0.0, -self.v)

    def __mul__(self, other):
        if type(other) is TracedValue:
            self._check_tape(other)
            v = self.v * other.v
            if not _isfinite(v):
                raise DomainError("mul produced non-finite value")
            nodes = self.t.nodes
            i = len(nodes)
            nodes.append((OP_MUL, self.i, other.v, other.i, self.v))
            return TracedValue(self.t, v, i)
        o = float(other)
        if o == 1.0:
            return self
        if o == 0.0:
            return 0.0
        return self._push(OP_MUL, o, None, 0.0, self.v * o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if type(other) is TracedValue:
            self._check_tape(other)
            if other.v == 0.0:
                raise DomainError("division by zero")
            v = self.v / other.v
            if not _isfinite(v):
                raise DomainError("div produced non-finite value")
            return self._push(OP_DIV, 1.0 / other.v, other, -v / other.v, v)
        o = float(other)
        if o == 0.0:
            raise DomainError("division by zero")
        if o == 1.0:
            return self
        return self._push(OP_DIV, 1.0 / o, None, 0.0, self.v / o)

    def __rtruediv__(self, other):
        if self.v == 0.0:
            raise DomainError("division by zero")
        o = float(other)
        v = o / self.v
        if not _isfinite(v):
            raise DomainError("div produced non-finite value")
        return self._push(OP_DIV, -v / self.v, None, 0.0, v)

    def __pow__(self, p):
        # Sugar over the core primitives: integer powers expand to products.
        if isinstance(p, int):
            if p == 2:
                return self * self
            if p == 3:
                return self * self * self
            v = self.v ** p
            if not _isfinite(v):
                raise DomainError("pow produced non-finite value")
            return self._push(OP_POW, p * self.v ** (p - 1), None, 0.0, v)
        raise TypeError("only integer exponents are supported on TracedValue")

    # -- comparisons (plain bools: branching is recorded, not differentiated)

    def __lt__(self, other):
        return self.v < _val(other)

    def __le__(self, other):
        return self.v <= _val(other)

    def __gt__(self, other):
        return self.v > _val(other)

    def __ge__(self, other):
        return self.v >= _val(other)

    def __eq__(self, other):
        return self.v == _val(other)

    def __ne__(self, other):
        return self.v != _val(other)

    __hash__ = None

    def __float__(self):
        raise TypeError(
            "refusing to coerce TracedValue to float: this would silently drop "
            "the gradient; use value_of() if the plain value is intended"
        )

    def __bool__(self):
        return self.v != 0.0


def _val(x):
    return x.v if type(x) is TracedValue else x


def value_of(x) -> float:
    """Plain float value of ``x`` whether traced or not."""
    return x.v if type(x) is TracedValue else float(x)


def is_traced(x) -> bool:
    return type(x) is TracedValue


# -- generic math: each works on floats and TracedValues alike --------------


def sin(x):
    if type(x) is TracedValue:
        return x._push(OP_SIN, math.cos(x.v), None, 0.0, math.sin(x.v))
    return math.sin(x)


def cos(x):
    if type(x) is TracedValue:
        return x._push(OP_COS, -math.sin(x.v), None, 0.0, math.cos(x.v))
    return math.cos(x)


def sqrt(x):
    if type(x) is TracedValue:
        if x.v < 0.0:
            raise DomainError(f"sqrt of negative value {x.v!r}")
        s = math.sqrt(x.v)
        # Derivative is unbounded at 0; the inf partial only reaches a
        # gradient if a nonzero adjoint actually flows through this node.
        return x._push(OP_SQRT, 0.5 / s if s > 0.0 else math.inf, None, 0.0, s)
    if x < 0.0:
        raise DomainError(f"sqrt of negative value {x!r}")
    return math.sqrt(x)


def exp(x):
    if type(x) is TracedValue:
        try:
            e = math.exp(x.v)
        except OverflowError:
            raise DomainError("exp overflow") from None
        return x._push(OP_EXP, e, None, 0.0, e)
    return math.exp(x)


def log(x):
    if type(x) is TracedValue:
        if x.v <= 0.0:
            raise DomainError(f"log of non-positive value {x.v!r}")
        return x._push(OP_LOG, 1.0 / x.v, None, 0.0, math.log(x.v))
    if x <= 0.0:
        raise DomainError(f"log of non-positive value {x!r}")
    return math.log(x)


def smooth_abs(x, eps=1e-9):
    """sqrt(x^2 + eps^2): the only quasi-smooth primitive in the set."""
    if type(x) is TracedValue:
        s = math.sqrt(x.v * x.v + eps * eps)
        return x._push(OP_SABS, x.v / s, None, 0.0, s)
    return math.sqrt(x * x + eps * eps)


def hypot_guarded(components, eps=1e-12):
    """sqrt(sum of squares + eps), generic over scalar type.

    The guard keeps the derivative bounded near zero; used for quaternion
    renormalization where exact zeros are invalid inputs anyway.
    """
    acc = eps
    for c in components:
        acc = acc + c * c
    return sqrt(acc)


# -- driver API --------------------------------------------------------------


def grad(program, x):
    """Evaluate ``program`` at ``x`` and return ``(value, gradient)``.

    ``program`` maps a list of n scalars to one scalar and must be composed
    of the supported primitives.  The gradient is the exact reverse-mode
    derivative of the branch the program actually took at ``x``.
    """
    tape = Tape()
    xs = tape.inputs(x)
    out = program(xs)
    if type(out) is not TracedValue:
        # Program output does not depend on the inputs.
        return float(out), [0.0] * len(xs)
    adj = tape.adjoints(out.i)
    return out.v, [adj[xi.i] for xi in xs]


def jacobian(program, x):
    """Rows ``d out_j / d x_i`` for a program returning a list of scalars.

    One reverse sweep per output row, all sharing a single forward pass.
    """
    tape = Tape()
    xs = tape.inputs(x)
    outs = program(xs)
    rows = []
    for out in outs:
        if type(out) is not TracedValue:
            rows.append([0.0] * len(xs))
        else:
            adj = tape.adjoints(out.i)
            rows.append([adj[xi.i] for xi in xs])
    return [value_of(o) for o in outs], rows


def finite_diff_gradient(program, x, h):
    """Central finite differences: (f(x + h e_i) - f(x - h e_i)) / 2h."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    x = [float(xi) for xi in x]
    g = []
    for i in range(len(x)):
        xp = list(x)
        xm = list(x)
        xp[i] += h
        xm[i] -= h
        g.append((value_of(program(xp)) - value_of(program(xm))) / (2.0 * h))
    return g


def max_rel_error(program, x, rel_h=1e-6):
    """Worst relative mismatch between reverse-mode and central differences.

    Uses a per-component step h_i = rel_h * max(1, |x_i|) and the safeguarded
    relative error |ad - fd| / max(1, |ad|, |fd|).
    """
    _, g = grad(program, x)
    x = [float(xi) for xi in x]
    worst = 0.0
    for i in range(len(x)):
        h = rel_h * max(1.0, abs(x[i]))
        xp = list(x)
        xm = list(x)
        xp[i] += h
        xm[i] -= h
        fd = (value_of(program(xp)) - value_of(program(xm))) / (2.0 * h)
        err = abs(g[i] - fd) / max(1.0, abs(g[i]), abs(fd))
        if err > worst:
            worst = err
    return worst

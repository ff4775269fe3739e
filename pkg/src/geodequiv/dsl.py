"""Expression language for metric entries, plus forward-mode dual arithmetic.

Metric components are given as small closed-form expressions in the chart
coordinates.  This module provides the parser (recursive descent, no implicit
multiplication), the immutable AST, a precedence-aware printer whose output
re-parses to a structurally identical tree, and first/second order dual
numbers used to push exact derivatives through every evaluation in the
package.

Scalars flowing through `Expression.evaluate` may be plain floats, numpy
arrays (vectorised evaluation over many points at once), or `Dual1`/`Dual2`
instances.  Dual payloads themselves may be vectorised: a `Dual1` can hold a
value of shape (N,) and a gradient of shape (N, nvars).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np


class DslError(Exception):
    """Base class for expression language errors."""


class DslSyntaxError(DslError):
    def __init__(self, offset: int, expected: tuple[str, ...], message: str = ""):
        self.offset = offset
        self.expected = tuple(expected)
        text = message or f"syntax error at byte {offset}, expected one of: {', '.join(expected)}"
        super().__init__(text)


class UnknownIdentifierError(DslError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier '{name}' at byte {offset}")


class DomainError(DslError):
    """Evaluation left the real domain of a function (log of <= 0 and so on)."""

    def __init__(self, function: str, argument):
        self.function = function
        self.argument = argument
        super().__init__(f"domain error in '{function}' at argument {argument!r}")


# ---------------------------------------------------------------------------
# dual numbers


def _vx(v, k: int):
    # Append k broadcast axes to a value so it multiplies gradient/hessian
    # payloads elementwise.  Plain scalars broadcast as-is.
    if np.ndim(v) == 0:
        return v
    return np.reshape(v, np.shape(v) + (1,) * k)


def _nonpos(v) -> bool:
    return bool(np.any(np.asarray(v) <= 0.0))


class Dual1:
    """Value and first-order gradient with respect to a fixed variable set."""

    __slots__ = ("value", "grad")
    __array_ufunc__ = None  # keep numpy from absorbing us into object arrays

    def __init__(self, value, grad):
        self.value = value
        self.grad = grad

    @staticmethod
    def seed(values: Sequence[float], index: int, nvars: int) -> "Dual1":
        v = np.asarray(values, dtype=float)
        g = np.zeros(v.shape + (nvars,))
        g[..., index] = 1.0
        if v.ndim == 0:
            return Dual1(float(v), g)
        return Dual1(v, g)

    def __add__(self, other):
        if isinstance(other, Dual1):
            return Dual1(self.value + other.value, self.grad + other.grad)
        return Dual1(self.value + other, self.grad)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual1):
            return Dual1(self.value - other.value, self.grad - other.grad)
        return Dual1(self.value - other, self.grad)

    def __rsub__(self, other):
        return Dual1(other - self.value, -self.grad)

    def __mul__(self, other):
        if isinstance(other, Dual1):
            return Dual1(
                self.value * other.value,
                _vx(self.value, 1) * other.grad + _vx(other.value, 1) * self.grad,
            )
        return Dual1(self.value * other, _vx(other, 1) * self.grad)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual1):
            qv = self.value / other.value
            qg = (self.grad - _vx(qv, 1) * other.grad) / _vx(other.value, 1)
            return Dual1(qv, qg)
        return Dual1(self.value / other, self.grad / _vx(other, 1))

    def __rtruediv__(self, other):
        rv = other / self.value
        return Dual1(rv, -_vx(rv / self.value, 1) * self.grad)

    def __neg__(self):
        return Dual1(-self.value, -self.grad)

    def __pow__(self, e):
        return _pow_dual(self, e)

    def _chain(self, fv, d1):
        return Dual1(fv, _vx(d1, 1) * self.grad)


class Dual2:
    """Value, gradient and symmetric Hessian in one forward pass."""

    __slots__ = ("value", "grad", "hess")
    __array_ufunc__ = None

    def __init__(self, value, grad, hess):
        self.value = value
        self.grad = grad
        self.hess = hess

    @staticmethod
    def seed(values: Sequence[float], index: int, nvars: int) -> "Dual2":
        v = np.asarray(values, dtype=float)
        g = np.zeros(v.shape + (nvars,))
        g[..., index] = 1.0
        h = np.zeros(v.shape + (nvars, nvars))
        if v.ndim == 0:
            return Dual2(float(v), g, h)
        return Dual2(v, g, h)

    def __add__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.value + other.value, self.grad + other.grad, self.hess + other.hess)
        return Dual2(self.value + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual2):
            return Dual2(self.value - other.value, self.grad - other.grad, self.hess - other.hess)
        return Dual2(self.value - other, self.grad, self.hess)

    def __rsub__(self, other):
        return Dual2(other - self.value, -self.grad, -self.hess)

    def __mul__(self, other):
        if isinstance(other, Dual2):
            cross = _outer(self.grad, other.grad)
            cross = cross + np.swapaxes(cross, -1, -2)
            return Dual2(
                self.value * other.value,
                _vx(self.value, 1) * other.grad + _vx(other.value, 1) * self.grad,
                _vx(self.value, 2) * other.hess + _vx(other.value, 2) * self.hess + cross,
            )
        return Dual2(self.value * other, _vx(other, 1) * self.grad, _vx(other, 2) * self.hess)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual2):
            qv = self.value / other.value
            qg = (self.grad - _vx(qv, 1) * other.grad) / _vx(other.value, 1)
            cross = _outer(qg, other.grad)
            cross = cross + np.swapaxes(cross, -1, -2)
            qh = (self.hess - _vx(qv, 2) * other.hess - cross) / _vx(other.value, 2)
            return Dual2(qv, qg, qh)
        return Dual2(self.value / other, self.grad / _vx(other, 1), self.hess / _vx(other, 2))

    def __rtruediv__(self, other):
        # other / self with constant numerator
        rv = other / self.value
        rg = -_vx(rv / self.value, 1) * self.grad
        cross = _outer(self.grad, self.grad)
        rh = 2.0 * _vx(rv / (self.value * self.value), 2) * cross - _vx(rv / self.value, 2) * self.hess
        return Dual2(rv, rg, rh)

    def __neg__(self):
        return Dual2(-self.value, -self.grad, -self.hess)

    def __pow__(self, e):
        return _pow_dual(self, e)

    def _chain(self, fv, d1, d2):
        return Dual2(
            fv,
            _vx(d1, 1) * self.grad,
            _vx(d1, 2) * self.hess + _vx(d2, 2) * _outer(self.grad, self.grad),
        )


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _pow_dual(z, e):
    """z**e for dual z and constant real e."""
    if isinstance(e, (Dual1, Dual2)):
        raise DomainError("^", "non-constant exponent")
    e = float(e)
    v = z.value
    if e == int(e):
        k = int(e)
        if k == 0:
            return z * 0.0 + 1.0
        vkm1 = np.power(v, k - 1)
        vk = vkm1 * v
        d1 = k * vkm1
        if isinstance(z, Dual1):
            return z._chain(vk, d1)
        vkm2 = np.power(v, k - 2) if k != 1 else np.zeros_like(np.asarray(v))
        return z._chain(vk, d1, k * (k - 1) * vkm2)
    if _nonpos(v):
        raise DomainError("^", v)
    vk = np.power(v, e)
    d1 = e * np.power(v, e - 1.0)
    if isinstance(z, Dual1):
        return z._chain(vk, d1)
    return z._chain(vk, d1, e * (e - 1.0) * np.power(v, e - 2.0))


def _pow_plain(v, e: float):
    if e == int(e):
        return np.power(v, int(e))
    if _nonpos(v):
        raise DomainError("^", v)
    return np.power(v, e)


# unary functions: plain callable, derivative, second derivative, domain guard
_FUNCTIONS: dict[str, tuple] = {
    "sin": (np.sin, np.cos, lambda v: -np.sin(v), None),
    "cos": (np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v), None),
    "exp": (np.exp, np.exp, np.exp, None),
    "log": (np.log, lambda v: 1.0 / v, lambda v: -1.0 / (v * v), _nonpos),
    "sqrt": (
        np.sqrt,
        lambda v: 0.5 / np.sqrt(v),
        lambda v: -0.25 / (v * np.sqrt(v)),
        _nonpos,
    ),
    "abs": (np.abs, np.sign, lambda v: np.zeros_like(np.asarray(v, dtype=float)), None),
}


def apply_function(name: str, z):
    """Apply a builtin unary function to a scalar-like argument."""
    f, d1, d2, guard = _FUNCTIONS[name]
    if isinstance(z, (Dual1, Dual2)):
        if guard is not None and guard(z.value):
            raise DomainError(name, z.value)
        if isinstance(z, Dual1):
            return z._chain(f(z.value), d1(z.value))
        return z._chain(f(z.value), d1(z.value), d2(z.value))
    if guard is not None and guard(z):
        raise DomainError(name, z)
    return f(z)


def d_sqrt(z):
    return apply_function("sqrt", z)


def d_exp(z):
    return apply_function("exp", z)


def d_log(z):
    return apply_function("log", z)


def scalar_value(z):
    """Strip any dual payload, returning the plain float/array value."""
    if isinstance(z, (Dual1, Dual2)):
        return z.value
    return z


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Expression:
    def variables(self) -> frozenset:
        raise NotImplementedError

    def evaluate(self, env: Mapping[str, object]):
        raise NotImplementedError

    def __str__(self) -> str:
        return _pp(self, 0)


@dataclass(frozen=True)
class Lit(Expression):
    value: float

    def variables(self):
        return frozenset()

    def evaluate(self, env):
        return self.value


@dataclass(frozen=True)
class Var(Expression):
    name: str

    def variables(self):
        return frozenset((self.name,))

    def evaluate(self, env):
        return env[self.name]


@dataclass(frozen=True)
class Add(Expression):
    l: Expression
    r: Expression

    def variables(self):
        return self.l.variables() | self.r.variables()

    def evaluate(self, env):
        return self.l.evaluate(env) + self.r.evaluate(env)


@dataclass(frozen=True)
class Sub(Expression):
    l: Expression
    r: Expression

    def variables(self):
        return self.l.variables() | self.r.variables()

    def evaluate(self, env):
        return self.l.evaluate(env) - self.r.evaluate(env)


@dataclass(frozen=True)
class Mul(Expression):
    l: Expression
    r: Expression

    def variables(self):
        return self.l.variables() | self.r.variables()

    def evaluate(self, env):
        return self.l.evaluate(env) * self.r.evaluate(env)


@dataclass(frozen=True)
class Div(Expression):
    l: Expression
    r: Expression

    def variables(self):
        return self.l.variables() | self.r.variables()

    def evaluate(self, env):
        return self.l.evaluate(env) / self.r.evaluate(env)


@dataclass(frozen=True)
class Neg(Expression):
    arg: Expression

    def variables(self):
        return self.arg.variables()

    def evaluate(self, env):
        return -self.arg.evaluate(env)


@dataclass(frozen=True)
class Pow(Expression):
    """base ^ exponent.  The exponent subtree must be variable-free; its folded
    value is cached so evaluation sees a constant real exponent."""

    base: Expression
    exponent: Expression
    exponent_value: float

    def variables(self):
        return self.base.variables()

    def evaluate(self, env):
        b = self.base.evaluate(env)
        if isinstance(b, (Dual1, Dual2)):
            return _pow_dual(b, self.exponent_value)
        return _pow_plain(b, self.exponent_value)


@dataclass(frozen=True)
class Call(Expression):
    func: str
    arg: Expression

    def variables(self):
        return self.arg.variables()

    def evaluate(self, env):
        return apply_function(self.func, self.arg.evaluate(env))


def pow_expr(base: Expression, exponent: Expression) -> Pow:
    if exponent.variables():
        raise DslError("exponent must be a constant expression")
    return Pow(base, exponent, float(exponent.evaluate({})))


# precedence levels for printing: add 1, mul 2, unary 3, pow 4, atom 5
def _prec(e: Expression) -> int:
    if isinstance(e, (Add, Sub)):
        return 1
    if isinstance(e, (Mul, Div)):
        return 2
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def _pp(e: Expression, _ctx: int) -> str:
    if isinstance(e, Lit):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_pp(e.arg, 0)})"
    if isinstance(e, Neg):
        a = _pp(e.arg, 0)
        if _prec(e.arg) < 3:
            a = f"({a})"
        return f"-{a}"
    if isinstance(e, Pow):
        b = _pp(e.base, 0)
        # base binds tighter than ^ only for atoms; ^ is right-associative
        if _prec(e.base) <= 4:
            b = f"({b})"
        x = _pp(e.exponent, 0)
        if _prec(e.exponent) < 4:
            x = f"({x})"
        return f"{b}^{x}"
    if isinstance(e, Add):
        op, lv, rv = "+", e.l, e.r
    elif isinstance(e, Sub):
        op, lv, rv = "-", e.l, e.r
    elif isinstance(e, Mul):
        op, lv, rv = "*", e.l, e.r
    else:
        op, lv, rv = "/", e.l, e.r
    p = _prec(e)
    ls = _pp(lv, 0)
    if _prec(lv) < p:
        ls = f"({ls})"
    rs = _pp(rv, 0)
    if _prec(rv) <= p:
        rs = f"({rs})"
    return f"{ls} {op} {rs}" if op in "+-" else f"{ls}{op}{rs}"


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _byte_offset(src: str, idx: int) -> int:
    return len(src[:idx].encode("utf-8"))


def _tokenize(src: str):
    toks = []
    i = 0
    n = len(src)
    while i < n:
        m = _TOKEN_RE.match(src, i)
        if m is None or m.end() == i:
            j = i
            while j < n and src[j].isspace():
                j += 1
            if j >= n:
                break
            raise DslSyntaxError(
                _byte_offset(src, j),
                ("number", "identifier", "operator"),
                f"unexpected character {src[j]!r} at byte {_byte_offset(src, j)}",
            )
        if m.lastgroup == "num":
            toks.append(("num", float(m.group("num")), m.start("num")))
        elif m.lastgroup == "ident":
            toks.append(("ident", m.group("ident"), m.start("ident")))
        else:
            toks.append((m.group("op"), m.group("op"), m.start("op")))
        i = m.end()
    toks.append(("eof", None, n))
    return toks


class _Parser:
    def __init__(self, src: str, names: Sequence[str]):
        self.src = src
        self.names = frozenset(names)
        self.toks = _tokenize(src)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def advance(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def fail(self, expected: tuple[str, ...]):
        kind, _val, idx = self.peek()
        raise DslSyntaxError(_byte_offset(self.src, idx), expected)

    def expect(self, kind: str):
        if self.peek()[0] != kind:
            self.fail((f"'{kind}'",))
        return self.advance()

    def parse(self) -> Expression:
        e = self.expr()
        if self.peek()[0] != "eof":
            self.fail(("end of input", "'+'", "'-'", "'*'", "'/'", "'^'"))
        return e

    def expr(self) -> Expression:
        e = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expression:
        e = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self) -> Expression:
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.peek()[0] == "^":
            idx = self.peek()[2]
            self.advance()
            exponent = self.unary()  # right-associative, tighter than unary minus
            if exponent.variables():
                raise DslSyntaxError(
                    _byte_offset(self.src, idx),
                    ("constant exponent",),
                    f"exponent after '^' at byte {_byte_offset(self.src, idx)} must be constant",
                )
            return pow_expr(base, exponent)
        return base

    def atom(self) -> Expression:
        kind, val, idx = self.peek()
        if kind == "num":
            self.advance()
            return Lit(float(val))
        if kind == "ident":
            self.advance()
            if self.peek()[0] == "(":
                if val not in _FUNCTIONS:
                    raise UnknownIdentifierError(val, _byte_offset(self.src, idx))
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in self.names:
                return Var(val)
            raise UnknownIdentifierError(val, _byte_offset(self.src, idx))
        if kind == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.fail(("number", "identifier", "'('", "'-'"))


def parse(src: str, names: Sequence[str]) -> Expression:
    """Parse a metric-entry expression over the declared coordinate names."""
    return _Parser(src, names).parse()


# ---------------------------------------------------------------------------
# evaluation entry points


def eval_env(names: Sequence[str], cells: Sequence) -> dict:
    return dict(zip(names, cells))


def dual1_seeds(x: Sequence[float], nvars: int | None = None, offset: int = 0) -> list[Dual1]:
    """One Dual1 per component of x, seeded at consecutive variable slots."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    total = n if nvars is None else nvars
    return [Dual1.seed(x[..., i], offset + i, total) for i in range(n)]


def dual2_seeds(x: Sequence[float], nvars: int | None = None, offset: int = 0) -> list[Dual2]:
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    total = n if nvars is None else nvars
    return [Dual2.seed(x[..., i], offset + i, total) for i in range(n)]


def eval2(expr: Expression, names: Sequence[str], x: Sequence[float]) -> Dual2:
    """Evaluate expr at x returning value, gradient and Hessian in one pass."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != len(names):
        raise ValueError("x must supply one value per declared coordinate")
    seeds = dual2_seeds(x)
    out = expr.evaluate(eval_env(names, seeds))
    if not isinstance(out, Dual2):  # constant expression
        n = len(names)
        out = Dual2(float(out), np.zeros(n), np.zeros((n, n)))
    return out


def eval_values(expr: Expression, names: Sequence[str], xs) -> np.ndarray:
    """Vectorised plain-value evaluation at a batch of points, shape (N, n)."""
    xs = np.asarray(xs, dtype=float)
    out = expr.evaluate(eval_env(names, [xs[..., i] for i in range(len(names))]))
    return np.broadcast_to(np.asarray(out, dtype=float), xs.shape[:-1]).copy()

"""Scalar fields on a 2D coordinate chart.

A :class:`ScalarField` bundles a vectorized evaluator with (optionally
analytic) gradient and Hessian evaluators.  Fields built from closed-form
expressions carry a sympy expression and differentiate symbolically; fields
built from bare callables fall back to centered finite differences with step
``1e-5 * (1 + |x|)``.  Sums, differences, and products combine analytic
derivatives exactly via linearity and the product rule, so composite
coefficients (weights, potentials, deformation families) stay
finite-difference-free whenever their ingredients are.

Expression strings use a deliberately small grammar — ``+ - * / ^``, ``exp``,
``log``, the coordinates ``x1``/``x2``, numeric literals, and parentheses —
so that serialized configuration files stay portable and reviewable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import sympy as sp

from .errors import UsageError

X1, X2 = sp.symbols("x1 x2", real=True)

_FUNCTIONS = {"exp": sp.exp, "log": sp.log}

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[()+\-*/^])"
    r")"
)


def parse_expression(text: str) -> sp.Expr:
    """Parse a grammar-restricted expression string into a sympy expression.

    Grammar: ``expr := term (('+'|'-') term)*``; ``term := unary (('*'|'/')
    unary)*``; ``unary := ('+'|'-')* power``; ``power := atom ('^' unary)?``
    (right-associative); ``atom := number | x1 | x2 | exp(expr) | log(expr)
    | '(' expr ')'``.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise UsageError(f"unparseable expression near {text[pos:pos + 12]!r}")
        pos = m.end()
        if m.group("num") is not None:
            tokens.append(("num", m.group("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name")))
        else:
            op = m.group("op")
            tokens.append(("op", "^" if op == "**" else op))
    tokens.append(("end", ""))

    idx = [0]

    def peek():
        return tokens[idx[0]]

    def take(kind, value=None):
        tk, tv = tokens[idx[0]]
        if tk != kind or (value is not None and tv != value):
            raise UsageError(f"unexpected token {tv!r} in expression {text!r}")
        idx[0] += 1
        return tv

    def parse_expr():
        node = parse_term()
        while peek() == ("op", "+") or peek() == ("op", "-"):
            op = take("op")
            rhs = parse_term()
            node = node + rhs if op == "+" else node - rhs
        return node

    def parse_term():
        node = parse_unary()
        while peek() == ("op", "*") or peek() == ("op", "/"):
            op = take("op")
            rhs = parse_unary()
            node = node * rhs if op == "*" else node / rhs
        return node

    def parse_unary():
        sign = 1
        while peek() in (("op", "-"), ("op", "+")):
            if take("op") == "-":
                sign = -sign
        return sign * parse_power()

    def parse_power():
        base = parse_atom()
        if peek() == ("op", "^"):
            take("op")
            return base ** parse_unary()
        return base

    def parse_atom():
        kind, value = peek()
        if kind == "num":
            take("num")
            return sp.Float(value) if ("." in value or "e" in value or "E" in value) else sp.Integer(value)
        if kind == "name":
            take("name")
            if value == "x1":
                return X1
            if value == "x2":
                return X2
            if value in _FUNCTIONS:
                take("op", "(")
                arg = parse_expr()
                take("op", ")")
                return _FUNCTIONS[value](arg)
            raise UsageError(f"unknown name {value!r} in expression (allowed: x1, x2, exp, log)")
        if (kind, value) == ("op", "("):
            take("op", "(")
            node = parse_expr()
            take("op", ")")
            return node
        raise UsageError(f"unexpected token {value!r} in expression {text!r}")

    node = parse_expr()
    take("end")
    return node


class _GrammarPrinter(sp.printing.str.StrPrinter):
    def _print_Pow(self, expr, rational=False):
        prec = sp.printing.precedence.precedence(expr)
        # strict on the base: '^' is right-associative in the grammar, so a
        # compound (or nested-power) base always needs parentheses
        base = self.parenthesize(expr.base, prec, strict=True)
        exp = self.parenthesize(expr.exp, prec, strict=False)
        return f"{base}^{exp}"


def serialize_expression(expr: sp.Expr) -> str:
    """Render a sympy expression in the restricted grammar (``^`` powers)."""
    bad = [f for f in expr.atoms(sp.Function) if f.func.__name__ not in _FUNCTIONS]
    if bad:
        raise UsageError(f"expression uses functions outside the grammar: {bad}")
    free = expr.free_symbols - {X1, X2}
    if free:
        raise UsageError(f"expression has free symbols outside x1, x2: {free}")
    return _GrammarPrinter().doprint(expr)


def _as_points(x) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        return pts.reshape(1, 2), True
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise UsageError(f"points must have shape (2,) or (N, 2), got {pts.shape}")
    return pts, False


def _lambdify_scalar(expr: sp.Expr) -> Callable[[np.ndarray], np.ndarray]:
    fn = sp.lambdify((X1, X2), expr, modules="numpy")

    def wrapped(pts: np.ndarray) -> np.ndarray:
        out = fn(pts[..., 0], pts[..., 1])
        return np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1]).copy()

    return wrapped


@dataclass(frozen=True)
class ScalarField:
    """A scalar function of chart coordinates with derivative evaluators.

    ``fn`` maps points of shape (N, 2) to values of shape (N,).  ``grad_fn``
    and ``hess_fn`` are optional analytic evaluators returning shapes (N, 2)
    and (N, 3) — the Hessian is stored in symmetric component order
    (h11, h12, h22).  Missing derivative evaluators fall back to centered
    finite differences.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    expr: Optional[sp.Expr] = field(default=None, compare=False)
    name: str = ""

    # -- constructors -----------------------------------------------------
    @classmethod
    def from_expression(cls, expr: Union[str, sp.Expr], name: str = "") -> "ScalarField":
        if isinstance(expr, str):
            expr = parse_expression(expr)
        expr = sp.sympify(expr)
        g1, g2 = sp.diff(expr, X1), sp.diff(expr, X2)
        h11, h12, h22 = sp.diff(g1, X1), sp.diff(g1, X2), sp.diff(g2, X2)
        val = _lambdify_scalar(expr)
        comp = [_lambdify_scalar(e) for e in (g1, g2, h11, h12, h22)]

        def grad(pts):
            return np.stack([comp[0](pts), comp[1](pts)], axis=-1)

        def hess(pts):
            return np.stack([comp[2](pts), comp[3](pts), comp[4](pts)], axis=-1)

        return cls(fn=val, grad_fn=grad, hess_fn=hess, expr=expr, name=name)

    @classmethod
    def from_callable(cls, fn: Callable, grad_fn=None, hess_fn=None, name: str = "") -> "ScalarField":
        return cls(fn=fn, grad_fn=grad_fn, hess_fn=hess_fn, expr=None, name=name)

    @classmethod
    def constant(cls, c: float, name: str = "") -> "ScalarField":
        c = float(c)

        def val(pts):
            return np.full(pts.shape[:-1], c)

        def grad(pts):
            return np.zeros(pts.shape[:-1] + (2,))

        def hess(pts):
            return np.zeros(pts.shape[:-1] + (3,))

        return cls(fn=val, grad_fn=grad, hess_fn=hess, expr=sp.Float(c) if c else sp.Integer(0),
                   name=name or str(c))

    # -- evaluation --------------------------------------------------------
    def value(self, x) -> Union[float, np.ndarray]:
        pts, single = _as_points(x)
        out = self.fn(pts)
        return float(out[0]) if single else out

    def grad(self, x) -> np.ndarray:
        pts, single = _as_points(x)
        out = self.grad_fn(pts) if self.grad_fn is not None else self._fd_grad(pts)
        return out[0] if single else out

    def hess(self, x) -> np.ndarray:
        """Hessian components (h11, h12, h22), shape (..., 3)."""
        pts, single = _as_points(x)
        out = self.hess_fn(pts) if self.hess_fn is not None else self._fd_hess(pts)
        return out[0] if single else out

    def laplacian(self, x) -> Union[float, np.ndarray]:
        h = self.hess(x)
        return h[..., 0] + h[..., 2]

    # -- finite-difference fallbacks ---------------------------------------
    def _steps(self, pts):
        return 1e-5 * (1.0 + np.linalg.norm(pts, axis=-1))

    def _fd_grad(self, pts):
        h = self._steps(pts)
        out = np.empty(pts.shape)
        for i in range(2):
            e = np.zeros_like(pts)
            e[:, i] = h
            out[:, i] = (self.fn(pts + e) - self.fn(pts - e)) / (2 * h)
        return out

    def _fd_hess(self, pts):
        h = self._steps(pts)
        ex = np.zeros_like(pts)
        ey = np.zeros_like(pts)
        ex[:, 0] = h
        ey[:, 1] = h
        f0 = self.fn(pts)
        h11 = (self.fn(pts + ex) - 2 * f0 + self.fn(pts - ex)) / h**2
        h22 = (self.fn(pts + ey) - 2 * f0 + self.fn(pts - ey)) / h**2
        h12 = (self.fn(pts + ex + ey) - self.fn(pts + ex - ey)
               - self.fn(pts - ex + ey) + self.fn(pts - ex - ey)) / (4 * h**2)
        return np.stack([h11, h12, h22], axis=-1)

    # -- algebra -----------------------------------------------------------
    def __add__(self, other: "ScalarField") -> "ScalarField":
        other = _coerce(other)
        expr = self.expr + other.expr if (self.expr is not None and other.expr is not None) else None
        return ScalarField(
            fn=lambda p, a=self, b=other: a.fn(p) + b.fn(p),
            grad_fn=lambda p, a=self, b=other: a._grad_arr(p) + b._grad_arr(p),
            hess_fn=lambda p, a=self, b=other: a._hess_arr(p) + b._hess_arr(p),
            expr=expr,
        )

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return self + (-1.0) * _coerce(other)

    def __rmul__(self, c: float) -> "ScalarField":
        c = float(c)
        expr = c * self.expr if self.expr is not None else None
        return ScalarField(
            fn=lambda p, a=self: c * a.fn(p),
            grad_fn=lambda p, a=self: c * a._grad_arr(p),
            hess_fn=lambda p, a=self: c * a._hess_arr(p),
            expr=expr,
        )

    def __mul__(self, other):
        if np.isscalar(other):
            return self.__rmul__(other)
        other = _coerce(other)
        expr = self.expr * other.expr if (self.expr is not None and other.expr is not None) else None

        def val(p, a=self, b=other):
            return a.fn(p) * b.fn(p)

        def grad(p, a=self, b=other):
            return a.fn(p)[..., None] * b._grad_arr(p) + b.fn(p)[..., None] * a._grad_arr(p)

        def hess(p, a=self, b=other):
            fa, fb = a.fn(p), b.fn(p)
            ga, gb = a._grad_arr(p), b._grad_arr(p)
            ha, hb = a._hess_arr(p), b._hess_arr(p)
            out = fa[..., None] * hb + fb[..., None] * ha
            out[..., 0] += 2 * ga[..., 0] * gb[..., 0]
            out[..., 1] += ga[..., 0] * gb[..., 1] + ga[..., 1] * gb[..., 0]
            out[..., 2] += 2 * ga[..., 1] * gb[..., 1]
            return out

        return ScalarField(fn=val, grad_fn=grad, hess_fn=hess, expr=expr)

    def _grad_arr(self, pts):
        return self.grad_fn(pts) if self.grad_fn is not None else self._fd_grad(pts)

    def _hess_arr(self, pts):
        return self.hess_fn(pts) if self.hess_fn is not None else self._fd_hess(pts)

    # -- serialization -----------------------------------------------------
    def to_expression_string(self) -> str:
        if self.expr is None:
            raise UsageError("field has no closed-form expression to serialize")
        return serialize_expression(self.expr)


def _coerce(obj) -> ScalarField:
    if isinstance(obj, ScalarField):
        return obj
    if np.isscalar(obj):
        return ScalarField.constant(float(obj))
    raise UsageError(f"cannot interpret {obj!r} as a scalar field")


ZERO = ScalarField.constant(0.0, name="0")
ONE = ScalarField.constant(1.0, name="1")

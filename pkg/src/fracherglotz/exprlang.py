"""Expression language for Lagrangians L(t, x1..xn, d1..dn, z).

A small closed grammar (constants, the problem variables, + - * /, unary
minus, and the functions pow/exp/ln/sin/cos/sqrt/gamma) is enough to state
every built-in problem, so there is no plugin mechanism.  Partial
derivatives come from forward-mode dual numbers rather than finite
differences: stationarity residuals are evaluated next to a weak
singularity and cannot afford derivative noise.  The dual type nests, so
one evaluation with dual-of-dual arguments yields second derivatives for
the reduced solver.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .fracops import digamma as _digamma_scalar
from .fracops import gamma as _gamma_scalar
from .fracops import trigamma as _trigamma_scalar

__all__ = [
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "ExprDomainError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Func",
    "EvalPoint",
    "parse",
    "format_expr",
    "evaluate",
    "partials",
    "compile_expr",
    "Dual",
]

FUNCTION_ARITY = {
    "pow": 2,
    "exp": 1,
    "ln": 1,
    "sin": 1,
    "cos": 1,
    "sqrt": 1,
    "gamma": 1,
}

# internal nodes produced by symbolic differentiation; not parseable
_DERIVED_FUNCTIONS = {"digamma": 1, "trigamma": 1}

_VAR_RE = re.compile(r"^(t|z|[xd][1-9][0-9]*)$")


class ExprSyntaxError(ValueError):
    """Malformed expression text; offset is 1-based into the source."""

    def __init__(self, message: str, offset: int, expected: tuple = ()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f" (expected one of: {', '.join(expected)})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifierError(ValueError):
    """Identifier that is neither a variable nor a known function."""


class ArityError(ValueError):
    """Function called with the wrong number of arguments."""


class ExprDomainError(ValueError):
    """Evaluation left the function's domain (ln of non-positive, etc.)."""

    def __init__(self, message: str, node=None):
        self.node = node
        super().__init__(message)


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Func:
    name: str
    args: tuple


# --------------------------------------------------------------------------
# Tokenizer / parser (recursive descent, tightest first:
# unary minus, then ^, then * /, then + -)
# --------------------------------------------------------------------------

_NUMBER_RE = re.compile(r"(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")


@dataclass(frozen=True)
class _Token:
    kind: str  # 'num', 'ident', 'op', 'lparen', 'rparen', 'comma', 'eof'
    text: str
    offset: int  # 1-based


def _tokenize(src: str) -> list:
    tokens = []
    i = 0
    while i < len(src):
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            m = _NUMBER_RE.match(src, i)
            if not m:
                raise ExprSyntaxError("malformed number", i + 1)
            tokens.append(_Token("num", m.group(0), i + 1))
            i = m.end()
            continue
        if ch.isalpha() or ch == "_":
            m = _IDENT_RE.match(src, i)
            tokens.append(_Token("ident", m.group(0), i + 1))
            i = m.end()
            continue
        if ch in "+-*/^":
            tokens.append(_Token("op", ch, i + 1))
        elif ch == "(":
            tokens.append(_Token("lparen", ch, i + 1))
        elif ch == ")":
            tokens.append(_Token("rparen", ch, i + 1))
        elif ch == ",":
            tokens.append(_Token("comma", ch, i + 1))
        else:
            raise ExprSyntaxError(f"unexpected character {ch!r}", i + 1)
        i += 1
    tokens.append(_Token("eof", "", len(src) + 1))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.pos = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        t = self.tok
        self.pos += 1
        return t

    def expect(self, kind: str, what: str):
        if self.tok.kind != kind:
            raise ExprSyntaxError(
                f"unexpected {self.tok.kind or 'end of input'}"
                f" {self.tok.text!r}".rstrip(),
                self.tok.offset,
                expected=(what,),
            )
        return self.advance()

    def parse(self):
        node = self.sum_expr()
        if self.tok.kind != "eof":
            raise ExprSyntaxError(
                f"trailing input {self.tok.text!r}", self.tok.offset,
                expected=("end of input",),
            )
        return node

    def sum_expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.power()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.power())
        return node

    def power(self):
        base = self.unary()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return Func("pow", (base, self.power()))
        return base

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "lparen":
            self.advance()
            node = self.sum_expr()
            self.expect("rparen", "')'")
            return node
        if tok.kind == "ident":
            self.advance()
            if self.tok.kind == "lparen":
                return self.call(tok)
            if not _VAR_RE.match(tok.text):
                raise UnknownIdentifierError(
                    f"unknown identifier {tok.text!r} at offset {tok.offset}"
                )
            return Var(tok.text)
        raise ExprSyntaxError(
            f"unexpected {tok.kind} {tok.text!r}".rstrip(),
            tok.offset,
            expected=("number", "identifier", "'('", "'-'"),
        )

    def call(self, name_tok: _Token):
        name = name_tok.text
        if name not in FUNCTION_ARITY:
            raise UnknownIdentifierError(
                f"unknown function {name!r} at offset {name_tok.offset}"
            )
        self.expect("lparen", "'('")
        args = [self.sum_expr()]
        while self.tok.kind == "comma":
            self.advance()
            args.append(self.sum_expr())
        if self.tok.kind != "rparen":
            raise ExprSyntaxError(
                "unterminated argument list", self.tok.offset,
                expected=("','", "')'"),
            )
        self.advance()
        if len(args) != FUNCTION_ARITY[name]:
            raise ArityError(
                f"{name} takes {FUNCTION_ARITY[name]} argument(s), got {len(args)}"
            )
        return Func(name, tuple(args))


def parse(src: str):
    """Parse expression text into an AST."""
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", 1)
    return _Parser(src).parse()


def format_expr(node) -> str:
    """Render an AST back to text; parse(format_expr(ast)) == ast."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{format_expr(node.arg)})"
    if isinstance(node, BinOp):
        return f"({format_expr(node.left)} {node.op} {format_expr(node.right)})"
    if isinstance(node, Func):
        return f"{node.name}({', '.join(format_expr(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def variables_of(node) -> set:
    """Names of the variables occurring in an AST."""
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Neg):
        return variables_of(node.arg)
    if isinstance(node, BinOp):
        return variables_of(node.left) | variables_of(node.right)
    if isinstance(node, Func):
        out = set()
        for a in node.args:
            out |= variables_of(a)
        return out
    return set()


def max_var_index(node) -> int:
    """Largest k over x<k>/d<k> occurrences (0 when none occur)."""
    return max(
        (int(name[1:]) for name in variables_of(node) if name[0] in "xd"),
        default=0,
    )


# --------------------------------------------------------------------------
# Dual numbers.  `val` may be a float, an ndarray, or another Dual, so the
# same arithmetic drives scalar gradients, grid-vectorized gradients, and
# second-order (dual-of-dual) evaluations.
# --------------------------------------------------------------------------


class Dual:
    __slots__ = ("val", "eps")

    # keep numpy from absorbing Dual into object arrays
    __array_ufunc__ = None

    def __init__(self, val, eps):
        self.val = val
        self.eps = tuple(eps)

    @staticmethod
    def seed(values):
        """One Dual per value, with unit tangents along each slot."""
        k = len(values)
        return tuple(
            Dual(v, tuple(1.0 if i == j else 0.0 for j in range(k)))
            for i, v in enumerate(values)
        )

    def __repr__(self):
        return f"Dual({self.val!r}, {self.eps!r})"

    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val + o.val, tuple(a + b for a, b in zip(self.eps, o.eps)))
        return Dual(self.val + o, self.eps)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val - o.val, tuple(a - b for a, b in zip(self.eps, o.eps)))
        return Dual(self.val - o, self.eps)

    def __rsub__(self, o):
        return Dual(o - self.val, tuple(-a for a in self.eps))

    def __neg__(self):
        return Dual(-self.val, tuple(-a for a in self.eps))

    def __mul__(self, o):
        if isinstance(o, Dual):
            return Dual(
                self.val * o.val,
                tuple(a * o.val + self.val * b for a, b in zip(self.eps, o.eps)),
            )
        return Dual(self.val * o, tuple(a * o for a in self.eps))

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            q = self.val / o.val
            return Dual(
                q, tuple((a - q * b) / o.val for a, b in zip(self.eps, o.eps))
            )
        return Dual(self.val / o, tuple(a / o for a in self.eps))

    def __rtruediv__(self, o):
        q = o / self.val
        return Dual(q, tuple(-q * a / self.val for a in self.eps))

    def _cmp_key(self):
        return _primal(self)

    def __lt__(self, o):
        return self._cmp_key() < _primal(o)

    def __le__(self, o):
        return self._cmp_key() <= _primal(o)

    def __gt__(self, o):
        return self._cmp_key() > _primal(o)

    def __ge__(self, o):
        return self._cmp_key() >= _primal(o)


def _primal(u):
    while isinstance(u, Dual):
        u = u.val
    return u


def _zero_like(u):
    return u * 0.0


# --------------------------------------------------------------------------
# Function dispatch shared by the tree evaluator and compiled expressions.
# --------------------------------------------------------------------------

_gamma_ufunc = np.frompyfunc(_gamma_scalar, 1, 1)
_digamma_ufunc = np.frompyfunc(_digamma_scalar, 1, 1)
_trigamma_ufunc = np.frompyfunc(_trigamma_scalar, 1, 1)


def _exp(u):
    if isinstance(u, Dual):
        v = _exp(u.val)
        return Dual(v, tuple(v * e for e in u.eps))
    if isinstance(u, np.ndarray):
        return np.exp(u)
    return math.exp(u)


def _ln(u):
    p = _primal(u)
    if np.any(np.asarray(p) <= 0.0):
        raise ExprDomainError("ln of a non-positive value")
    if isinstance(u, Dual):
        return Dual(_ln(u.val), tuple(e / u.val for e in u.eps))
    if isinstance(u, np.ndarray):
        return np.log(u)
    return math.log(u)


def _sin(u):
    if isinstance(u, Dual):
        c = _cos(u.val)
        return Dual(_sin(u.val), tuple(c * e for e in u.eps))
    if isinstance(u, np.ndarray):
        return np.sin(u)
    return math.sin(u)


def _cos(u):
    if isinstance(u, Dual):
        s = _sin(u.val)
        return Dual(_cos(u.val), tuple(-s * e for e in u.eps))
    if isinstance(u, np.ndarray):
        return np.cos(u)
    return math.cos(u)


def _sqrt(u):
    p = _primal(u)
    if np.any(np.asarray(p) < 0.0):
        raise ExprDomainError("sqrt of a negative value")
    if isinstance(u, Dual):
        v = _sqrt(u.val)
        return Dual(v, tuple(e / (2.0 * v) for e in u.eps))
    if isinstance(u, np.ndarray):
        return np.sqrt(u)
    return math.sqrt(u)


def _is_integer_valued(p) -> bool:
    p = np.asarray(p)
    return bool(np.all(p == np.floor(p)))


def _pow(u, p):
    if isinstance(p, Dual) and any(np.any(np.asarray(_primal(e)) != 0.0) for e in p.eps):
        # genuinely variable exponent: positive base required
        if np.any(np.asarray(_primal(u)) <= 0.0):
            raise ExprDomainError("pow with variable exponent needs a positive base")
        return _exp(p * _ln(u))
    if isinstance(p, Dual):
        p = p.val  # constant-valued dual exponent
    pp = _primal(p)
    base = _primal(u)
    if not _is_integer_valued(pp) and np.any(np.asarray(base) < 0.0):
        raise ExprDomainError("pow with non-integer exponent needs base >= 0")
    if isinstance(u, Dual):
        if np.all(np.asarray(pp) == 0.0):
            return Dual(_pow(u.val, p), tuple(_zero_like(e) for e in u.eps))
        coef = p * _pow(u.val, p - 1.0)
        return Dual(_pow(u.val, p), tuple(coef * e for e in u.eps))
    if isinstance(u, np.ndarray) or isinstance(p, np.ndarray):
        if np.any(np.asarray(base) == 0.0) and np.any(np.asarray(pp) < 0.0):
            raise ExprDomainError("zero raised to a negative power")
        return np.power(u, p)
    if u == 0.0 and p < 0.0:
        raise ExprDomainError("zero raised to a negative power")
    return u**p


def _gamma(u):
    if isinstance(u, Dual):
        g = _gamma(u.val)
        return Dual(g, tuple(g * _digamma(u.val) * e for e in u.eps))
    if isinstance(u, np.ndarray):
        return _gamma_ufunc(u).astype(float)
    return _gamma_scalar(u)


def _digamma(u):
    if isinstance(u, Dual):
        return Dual(_digamma(u.val), tuple(_trigamma_as(u.val) * e for e in u.eps))
    if isinstance(u, np.ndarray):
        return _digamma_ufunc(u).astype(float)
    return _digamma_scalar(u)


def _trigamma_as(u):
    # second-order chains stop here: trigamma is only ever needed on primals
    if isinstance(u, Dual):
        return _trigamma_as(u.val)
    if isinstance(u, np.ndarray):
        return _trigamma_ufunc(u).astype(float)
    return _trigamma_scalar(u)


def _div(l, r):
    p = _primal(r)
    if isinstance(p, np.ndarray):
        if np.any(p == 0.0):
            raise ExprDomainError("division by zero")
    elif p == 0.0:
        raise ExprDomainError("division by zero")
    return l / r


_FUNCS = {
    "pow": _pow,
    "exp": _exp,
    "ln": _ln,
    "sin": _sin,
    "cos": _cos,
    "sqrt": _sqrt,
    "gamma": _gamma,
    "digamma": _digamma,
    "trigamma": _trigamma_as,
}

_COMPILE_ENV = {
    "_pow": _pow,
    "_exp": _exp,
    "_ln": _ln,
    "_sin": _sin,
    "_cos": _cos,
    "_sqrt": _sqrt,
    "_gamma": _gamma,
    "_digamma": _digamma,
    "_trigamma": _trigamma_as,
    "_div": _div,
}


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalPoint:
    """Argument bundle (t, x_1..x_n, d_1..d_n, z)."""

    t: float
    x: tuple
    d: tuple
    z: float

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "d", tuple(self.d))
        if len(self.x) != len(self.d):
            raise ValueError("x and d must have the same length")

    @property
    def dimension(self) -> int:
        return len(self.x)


def _lookup(name: str, t, x, d, z, node):
    if name == "t":
        return t
    if name == "z":
        return z
    idx = int(name[1:]) - 1
    pool = x if name[0] == "x" else d
    if idx >= len(pool):
        raise UnknownIdentifierError(
            f"variable {name!r} exceeds the problem dimension {len(pool)}"
        )
    return pool[idx]


def _eval_node(node, t, x, d, z):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return _lookup(node.name, t, x, d, z, node)
    if isinstance(node, Neg):
        return -_eval_node(node.arg, t, x, d, z)
    if isinstance(node, BinOp):
        l = _eval_node(node.left, t, x, d, z)
        r = _eval_node(node.right, t, x, d, z)
        try:
            if node.op == "+":
                return l + r
            if node.op == "-":
                return l - r
            if node.op == "*":
                return l * r
            return _div(l, r)
        except (ExprDomainError, ZeroDivisionError, OverflowError) as exc:
            raise ExprDomainError(str(exc), node=node) from None
    if isinstance(node, Func):
        args = [_eval_node(a, t, x, d, z) for a in node.args]
        try:
            return _FUNCS[node.name](*args)
        except (ExprDomainError, ZeroDivisionError, OverflowError) as exc:
            raise ExprDomainError(str(exc), node=node) from None
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node, point: EvalPoint) -> float:
    """Evaluate an AST at a point; deterministic IEEE double arithmetic."""
    return float(_eval_node(node, point.t, point.x, point.d, point.z))


def partials(node, point: EvalPoint):
    """Value and gradient (d/dt, d/dx_1.., d/dd_1.., d/dz) at a point."""
    n = point.dimension
    seeds = Dual.seed((point.t, *point.x, *point.d, point.z))
    t = seeds[0]
    x = seeds[1 : 1 + n]
    d = seeds[1 + n : 1 + 2 * n]
    z = seeds[1 + 2 * n]
    out = _eval_node(node, t, x, d, z)
    if not isinstance(out, Dual):  # expression without variables
        return float(out), np.zeros(2 * n + 2)
    return float(out.val), np.asarray(out.eps, dtype=float)


# --------------------------------------------------------------------------
# Compilation: one pass of codegen makes the hot loops (ODE integration,
# shooting) run on plain Python arithmetic instead of tree walking.  The
# generated code calls the same dispatch helpers, so it accepts floats,
# ndarrays, and Duals alike.
# --------------------------------------------------------------------------


def _emit(node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        if node.name == "t":
            return "t"
        if node.name == "z":
            return "z"
        idx = int(node.name[1:]) - 1
        return f"{node.name[0]}[{idx}]"
    if isinstance(node, Neg):
        return f"(-{_emit(node.arg)})"
    if isinstance(node, BinOp):
        if node.op == "/":
            return f"_div({_emit(node.left)}, {_emit(node.right)})"
        return f"({_emit(node.left)} {node.op} {_emit(node.right)})"
    if isinstance(node, Func):
        return f"_{node.name}({', '.join(_emit(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


@lru_cache(maxsize=256)
def compile_expr(node):
    """Compile an AST to a callable f(t, x, d, z) with x, d sequences."""
    src = f"def _compiled(t, x, d, z):\n    return {_emit(node)}\n"
    namespace = dict(_COMPILE_ENV)
    exec(compile(src, "<expr>", "exec"), namespace)
    return namespace["_compiled"]


# --------------------------------------------------------------------------
# Symbolic differentiation.  Derivative trees are constant-folded as they
# are built, so the second derivatives the reduced solver compiles stay
# small enough for tight integration loops.
# --------------------------------------------------------------------------


def _mk_add(l, r):
    if isinstance(l, Num) and isinstance(r, Num):
        return Num(l.value + r.value)
    if isinstance(l, Num) and l.value == 0.0:
        return r
    if isinstance(r, Num) and r.value == 0.0:
        return l
    return BinOp("+", l, r)


def _mk_sub(l, r):
    if isinstance(l, Num) and isinstance(r, Num):
        return Num(l.value - r.value)
    if isinstance(r, Num) and r.value == 0.0:
        return l
    if isinstance(l, Num) and l.value == 0.0:
        return Neg(r)
    return BinOp("-", l, r)


def _mk_mul(l, r):
    if isinstance(l, Num) and isinstance(r, Num):
        return Num(l.value * r.value)
    if isinstance(l, Num):
        if l.value == 0.0:
            return Num(0.0)
        if l.value == 1.0:
            return r
    if isinstance(r, Num):
        if r.value == 0.0:
            return Num(0.0)
        if r.value == 1.0:
            return l
    return BinOp("*", l, r)


def _mk_div(l, r):
    if isinstance(l, Num) and l.value == 0.0:
        return Num(0.0)
    if isinstance(r, Num) and r.value == 1.0:
        return l
    return BinOp("/", l, r)


def _mk_pow(u, p):
    if isinstance(p, Num):
        if p.value == 0.0:
            return Num(1.0)
        if p.value == 1.0:
            return u
    return Func("pow", (u, p))


def diff_expr(node, var: str):
    """Symbolic derivative of an AST with respect to a variable name."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        d = diff_expr(node.arg, var)
        return Num(-d.value) if isinstance(d, Num) else Neg(d)
    if isinstance(node, BinOp):
        dl = diff_expr(node.left, var)
        dr = diff_expr(node.right, var)
        if node.op == "+":
            return _mk_add(dl, dr)
        if node.op == "-":
            return _mk_sub(dl, dr)
        if node.op == "*":
            return _mk_add(_mk_mul(dl, node.right), _mk_mul(node.left, dr))
        num = _mk_sub(_mk_mul(dl, node.right), _mk_mul(node.left, dr))
        return _mk_div(num, _mk_pow(node.right, Num(2.0)))
    if isinstance(node, Func):
        return _diff_func(node, var)
    raise TypeError(f"not an expression node: {node!r}")


def _diff_func(node: Func, var: str):
    name = node.name
    if name == "pow":
        u, p = node.args
        du = diff_expr(u, var)
        dp = diff_expr(p, var)
        if isinstance(dp, Num) and dp.value == 0.0:
            if isinstance(p, Num):
                coef = _mk_mul(p, _mk_pow(u, Num(p.value - 1.0)))
            else:
                coef = _mk_mul(p, _mk_pow(u, _mk_sub(p, Num(1.0))))
            return _mk_mul(coef, du)
        # variable exponent: d(u^p) = u^p * (dp ln u + p du / u)
        inner = _mk_add(
            _mk_mul(dp, Func("ln", (u,))), _mk_div(_mk_mul(p, du), u)
        )
        return _mk_mul(node, inner)
    u = node.args[0]
    du = diff_expr(u, var)
    if isinstance(du, Num) and du.value == 0.0:
        return Num(0.0)
    if name == "exp":
        return _mk_mul(node, du)
    if name == "ln":
        return _mk_div(du, u)
    if name == "sin":
        return _mk_mul(Func("cos", (u,)), du)
    if name == "cos":
        d = _mk_mul(Func("sin", (u,)), du)
        return Num(-d.value) if isinstance(d, Num) else Neg(d)
    if name == "sqrt":
        return _mk_div(du, _mk_mul(Num(2.0), node))
    if name == "gamma":
        return _mk_mul(_mk_mul(node, Func("digamma", (u,))), du)
    if name == "digamma":
        return _mk_mul(Func("trigamma", (u,)), du)
    raise ValueError(f"no derivative rule for {name}; differentiate at most twice")

"""Vector-field expressions: parsing, evaluation and symbolic differentiation.

A field on R^n (or on the covering space of the torus) is written as ``n``
component expressions separated by ``;``.  Coordinates are ``x1 .. xn``;
any other identifier must be a bound parameter and is substituted at parse
time as a named constant.  The grammar is small on purpose::

    field   := expr (';' expr)*
    expr    := term (('+' | '-') term)*
    term    := power (('*' | '/') power)*
    power   := unary (('^' | '**') ['-' | '+'] INTEGER)*
    unary   := ('-' | '+') unary | atom
    atom    := NUMBER | IDENT | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := 'sin' | 'cos' | 'exp'

Unary minus binds tighter than ``^``, so ``-x1^2`` is ``(-x1)^2``.

Numeric literals are kept as exact :class:`fractions.Fraction` values, so
evaluation at rational points is exact until a transcendental function is
hit.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

Number = Union[Fraction, float]

FUNCTIONS = ("sin", "cos", "exp")


class ParseError(ValueError):
    """Malformed field source; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int | None = None, text: str | None = None):
        self.position = position
        self.text = text
        if position is not None:
            message = f"{message} at position {position}"
            if text is not None:
                message += f"\n  {text}\n  {' ' * position}^"
        super().__init__(message)


class UnknownIdentifierError(ParseError):
    pass


class ComponentCountError(ParseError):
    pass


class EvaluationError(ArithmeticError):
    """Raised when a field cannot be evaluated at ``point`` (division by zero, overflow)."""

    def __init__(self, message: str, point):
        self.point = tuple(point)
        super().__init__(f"{message} at point {self.point}")


# ---------------------------------------------------------------------------
# AST

class Node:
    __slots__ = ()

    def __str__(self) -> str:
        return unparse_node(self)


@dataclass(frozen=True)
class Const(Node):
    value: Number
    name: str | None = None


@dataclass(frozen=True)
class Var(Node):
    index: int  # 1-based, as written in the source


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str  # one of + - * /
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))


def _num(value) -> Number:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return float(value)


# ---------------------------------------------------------------------------
# FieldExpr

@dataclass(frozen=True)
class FieldExpr:
    """An n-component vector field given by expression trees.

    Instances are immutable.  Compiled float evaluators are built lazily
    and cached on the instance.
    """

    components: tuple[Node, ...]
    dim: int
    params: Mapping[str, Number] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("field dimension must be positive")
        if len(self.components) != self.dim:
            raise ComponentCountError(
                f"expected {self.dim} components, got {len(self.components)}")
        for comp in self.components:
            for node in _walk(comp):
                if isinstance(node, Var) and not 1 <= node.index <= self.dim:
                    raise ParseError(f"coordinate x{node.index} out of range 1..{self.dim}")

    def __str__(self) -> str:
        return unparse(self)

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    @property
    def is_syntactically_zero(self) -> bool:
        return all(c == ZERO for c in self.components)

    @property
    def is_constant(self) -> bool:
        """True if no component references a coordinate."""
        return not any(isinstance(node, Var) for c in self.components for node in _walk(c))

    def partial(self, j: int) -> "FieldExpr":
        return partial(self, j)

    def simplify(self) -> "FieldExpr":
        return simplify(self)

    def jacobian(self, x) -> np.ndarray:
        return jacobian(self, x)

    @cached_property
    def compiled(self) -> Callable[[Sequence[float]], list[float]]:
        """Float evaluator ``f(x) -> list``; raises ZeroDivisionError on division by zero."""
        return _compile_vector([_codegen(c) for c in self.components], self.dim)

    @cached_property
    def derivatives(self) -> tuple["FieldExpr", ...]:
        """Symbolic partials with respect to x1 .. xn."""
        return tuple(partial(self, j) for j in range(1, self.dim + 1))

    @cached_property
    def compiled_jacobian(self) -> Callable[[Sequence[float]], list[list[float]]]:
        """Float Jacobian ``J(x)`` as nested lists, row k = component k."""
        rows = []
        for k in range(self.dim):
            rows.append([_codegen(d.components[k]) for d in self.derivatives])
        return _compile_matrix(rows, self.dim)


def constant_field(values: Iterable) -> FieldExpr:
    comps = tuple(Const(_num(v)) for v in values)
    return FieldExpr(comps, len(comps))


def zero_field(n: int) -> FieldExpr:
    return FieldExpr((ZERO,) * n, n)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^();])
""", re.VERBOSE)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            if value == "**":
                value = "^"
            tokens.append((kind, value, pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int, params: Mapping[str, Number]):
        self.text = text
        self.n = n
        self.params = params
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, v, pos = self.take()
        if v != value or kind == "end":
            found = "end of input" if kind == "end" else repr(v)
            raise ParseError(f"expected {value!r}, found {found}", pos, self.text)

    def error(self, message: str, pos: int):
        return ParseError(message, pos, self.text)

    def field(self) -> list[Node]:
        comps = [self.expr()]
        while self.peek()[1] == ";":
            self.take()
            comps.append(self.expr())
        kind, v, pos = self.peek()
        if kind != "end":
            raise self.error(f"unexpected {v!r}", pos)
        return comps

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.power()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.power())
        return node

    def power(self) -> Node:
        node = self.unary()
        while self.peek()[1] == "^":
            self.take()
            sign = 1
            while self.peek()[1] in ("-", "+"):
                if self.take()[1] == "-":
                    sign = -sign
            kind, v, pos = self.take()
            if kind != "num" or not v.isdigit():
                raise self.error("exponent must be an integer literal", pos)
            node = Pow(node, sign * int(v))
        return node

    def unary(self) -> Node:
        kind, v, _ = self.peek()
        if kind == "op" and v == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and v == "+":
            self.take()
            return self.unary()
        return self.atom()

    def atom(self) -> Node:
        kind, v, pos = self.take()
        if kind == "num":
            return Const(Fraction(v))
        if kind == "ident":
            if v in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(v, arg)
            m = re.fullmatch(r"x(\d+)", v)
            if m:
                j = int(m.group(1))
                if not 1 <= j <= self.n:
                    raise UnknownIdentifierError(
                        f"coordinate {v} out of range x1..x{self.n}", pos, self.text)
                return Var(j)
            if v in self.params:
                return Const(_num(self.params[v]), v)
            raise UnknownIdentifierError(f"unknown identifier {v!r}", pos, self.text)
        if v == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(v)
        raise self.error(f"unexpected {found}", pos)


def parse_field(text: str, n: int, params: Mapping[str, float] | None = None) -> FieldExpr:
    """Parse ``n`` ';'-separated component expressions into a :class:`FieldExpr`.

    >>> parse_field("x1*x2; sin(x1)", 2)(np.array([2.0, 3.0]))
    array([6.        , 0.90929743])
    """
    params = dict(params or {})
    for name in params:
        if name in FUNCTIONS or re.fullmatch(r"x\d+", name):
            raise ValueError(f"parameter name {name!r} is reserved")
    comps = _Parser(text, n, params).field()
    if len(comps) != n:
        raise ComponentCountError(f"expected {n} components, got {len(comps)}", None, text)
    return FieldExpr(tuple(comps), n, {k: _num(v) for k, v in params.items()})


def parse_expr(text: str, n: int, params: Mapping[str, float] | None = None) -> Node:
    """Parse a single scalar expression in ``x1 .. xn``."""
    p = _Parser(text, n, {k: _num(v) for k, v in (params or {}).items()})
    node = p.expr()
    kind, v, pos = p.peek()
    if kind != "end":
        raise p.error(f"unexpected {v!r}", pos)
    return node


# ---------------------------------------------------------------------------
# Unparsing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_PREC_POW = 3
_PREC_UNARY = 4
_PREC_ATOM = 5


def _fmt_const(c: Const) -> tuple[str, int]:
    if c.name is not None:
        return c.name, _PREC_ATOM
    v = c.value
    if isinstance(v, Fraction):
        if v < 0:
            s, p = _fmt_const(Const(-v))
            # "-8/3" reads as (-8)/3, which is the same number
            return f"-{s}", min(p, _PREC_UNARY)
        if v.denominator == 1:
            return str(v.numerator), _PREC_ATOM
        d = v.denominator
        while d % 2 == 0:
            d //= 2
        while d % 5 == 0:
            d //= 5
        if d == 1:
            # terminating decimal; Fraction(str) reproduces it exactly
            digits = 0
            q = v.denominator
            while q != 1:
                q = q // math.gcd(q, 10)
                digits += 1
            scaled = v * 10 ** digits
            s = str(scaled.numerator).rjust(digits + 1, "0")
            return f"{s[:-digits]}.{s[-digits:]}", _PREC_ATOM
        return f"{v.numerator}/{v.denominator}", _PREC["/"]
    if v < 0 or (v == 0 and math.copysign(1.0, v) < 0):
        return repr(v), _PREC_UNARY
    return repr(v), _PREC_ATOM


def _unparse(node: Node) -> tuple[str, int]:
    if isinstance(node, Const):
        return _fmt_const(node)
    if isinstance(node, Var):
        return f"x{node.index}", _PREC_ATOM
    if isinstance(node, Call):
        return f"{node.func}({_unparse(node.arg)[0]})", _PREC_ATOM
    if isinstance(node, Neg):
        s, p = _unparse(node.arg)
        if p < _PREC_UNARY:
            s = f"({s})"
        return f"-{s}", _PREC_UNARY
    if isinstance(node, Pow):
        s, p = _unparse(node.base)
        # left-associative chain: a^2^3 is (a^2)^3, so an inner Pow needs no parens
        if p < _PREC_POW:
            s = f"({s})"
        return f"{s}^{node.exponent}", _PREC_POW
    if isinstance(node, BinOp):
        prec = _PREC[node.op]
        ls, lp = _unparse(node.left)
        rs, rp = _unparse(node.right)
        if lp < prec:
            ls = f"({ls})"
        # right operand of a left-associative operator needs strictly higher precedence
        if rp <= prec:
            rs = f"({rs})"
        return f"{ls} {node.op} {rs}" if prec == 1 else f"{ls}*{rs}" if node.op == "*" \
            else f"{ls}/{rs}", prec
    raise TypeError(f"not an expression node: {node!r}")


def unparse_node(node: Node) -> str:
    return _unparse(node)[0]


def unparse(f: FieldExpr) -> str:
    return "; ".join(unparse_node(c) for c in f.components)


# ---------------------------------------------------------------------------
# Evaluation

def _walk(node: Node):
    stack = [node]
    while stack:
        nd = stack.pop()
        yield nd
        if isinstance(nd, (Neg, Call)):
            stack.append(nd.arg)
        elif isinstance(nd, BinOp):
            stack.append(nd.left)
            stack.append(nd.right)
        elif isinstance(nd, Pow):
            stack.append(nd.base)


_MATH = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


def eval_node(node: Node, x: Sequence) -> Number:
    """Evaluate one expression tree; exact when constants and ``x`` are rational."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return x[node.index - 1]
    if isinstance(node, Neg):
        return -eval_node(node.arg, x)
    if isinstance(node, BinOp):
        a = eval_node(node.left, x)
        b = eval_node(node.right, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return a / b
    if isinstance(node, Pow):
        b = eval_node(node.base, x)
        if node.exponent < 0:
            return 1 / (b ** -node.exponent)
        return b ** node.exponent
    if isinstance(node, Call):
        return _MATH[node.func](eval_node(node.arg, x))
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(f: FieldExpr, x, exact: bool = False):
    """Evaluate ``f`` at ``x``.

    Returns a float array, or with ``exact=True`` a tuple of numbers that
    stays in rational arithmetic for rational inputs.
    """
    if len(x) != f.dim:
        raise ValueError(f"point has dimension {len(x)}, field has {f.dim}")
    try:
        if exact:
            return tuple(eval_node(c, x) for c in f.components)
        return np.array(f.compiled([float(v) for v in x]), dtype=float)
    except (ZeroDivisionError, OverflowError) as exc:
        raise EvaluationError(str(exc) or type(exc).__name__, x) from exc


def jacobian(f: FieldExpr, x) -> np.ndarray:
    """Matrix with entry (k, j) = d f_k / d x_j at ``x``."""
    if len(x) != f.dim:
        raise ValueError(f"point has dimension {len(x)}, field has {f.dim}")
    try:
        return np.array(f.compiled_jacobian([float(v) for v in x]), dtype=float)
    except (ZeroDivisionError, OverflowError) as exc:
        raise EvaluationError(str(exc) or type(exc).__name__, x) from exc


def _codegen(node: Node) -> str:
    if isinstance(node, Const):
        return f"({float(node.value)!r})"
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Neg):
        return f"(-{_codegen(node.arg)})"
    if isinstance(node, BinOp):
        return f"({_codegen(node.left)}{node.op}{_codegen(node.right)})"
    if isinstance(node, Pow):
        if node.exponent == 2:
            b = _codegen(node.base)
            return f"({b}*{b})" if isinstance(node.base, Var) else f"({b}**2)"
        if node.exponent < 0:
            return f"(1.0/({_codegen(node.base)}**{-node.exponent}))"
        return f"({_codegen(node.base)}**{node.exponent})"
    if isinstance(node, Call):
        return f"_{node.func}({_codegen(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def _compile_source(body: str, n: int):
    names = ", ".join(f"x{j}" for j in range(1, n + 1))
    src = f"def _f(x):\n    {names}{',' if n == 1 else ''} = x\n    return {body}\n"
    env = {"_sin": math.sin, "_cos": math.cos, "_exp": math.exp}
    exec(compile(src, "<field>", "exec"), env)
    return env["_f"]


def _compile_vector(exprs: list[str], n: int):
    return _compile_source("[" + ", ".join(exprs) + "]", n)


def _compile_matrix(rows: list[list[str]], n: int):
    return _compile_source("[" + ", ".join("[" + ", ".join(r) + "]" for r in rows) + "]", n)


# ---------------------------------------------------------------------------
# Differentiation

def _d(node: Node, j: int) -> Node:
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.index == j else ZERO
    if isinstance(node, Neg):
        return Neg(_d(node.arg, j))
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        da, db = _d(a, j), _d(b, j)
        if node.op in "+-":
            return BinOp(node.op, da, db)
        if node.op == "*":
            return BinOp("+", BinOp("*", da, b), BinOp("*", a, db))
        return BinOp("/", BinOp("-", BinOp("*", da, b), BinOp("*", a, db)), Pow(b, 2))
    if isinstance(node, Pow):
        k = node.exponent
        if k == 0:
            return ZERO
        return BinOp("*", BinOp("*", Const(Fraction(k)), Pow(node.base, k - 1)),
                     _d(node.base, j))
    if isinstance(node, Call):
        da = _d(node.arg, j)
        if node.func == "sin":
            outer = Call("cos", node.arg)
        elif node.func == "cos":
            outer = Neg(Call("sin", node.arg))
        else:
            outer = node
        return BinOp("*", outer, da)
    raise TypeError(f"not an expression node: {node!r}")


def partial(f: FieldExpr, j: int) -> FieldExpr:
    """Exact symbolic d f / d x_j (1-based ``j``), simplified."""
    if not 1 <= j <= f.dim:
        raise ValueError(f"coordinate index {j} out of range 1..{f.dim}")
    return simplify(FieldExpr(tuple(_d(c, j) for c in f.components), f.dim, f.params))


# ---------------------------------------------------------------------------
# Simplification
#
# Two stages, iterated to a fixpoint:
#   1. local rewrites (constant folding and the usual 0/1 identities);
#   2. collection of like terms: each component is expanded into a
#      polynomial whose indeterminates are the opaque sub-terms ("atoms":
#      coordinates, sin/cos/exp calls, negative powers, non-constant
#      divisors) and rebuilt in a canonical order.
# Stage 2 is what makes e - e vanish whenever e is the same polynomial in the
# same atoms, which keeps iterated brackets compact.

def _is_const(node: Node) -> bool:
    return isinstance(node, Const)


def _fold(op: str, a: Number, b: Number) -> Number | None:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if b == 0:
        return None
    return a / b


def _fold_call(func: str, v: Number) -> Number:
    if v == 0:
        return Fraction(0) if func == "sin" else Fraction(1)
    return _MATH[func](float(v))


def _local(node: Node) -> Node:
    if isinstance(node, (Const, Var)):
        return node
    if isinstance(node, Neg):
        a = _local(node.arg)
        if _is_const(a):
            return Const(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(node, Call):
        a = _local(node.arg)
        if _is_const(a):
            try:
                return Const(_fold_call(node.func, a.value))
            except OverflowError:
                pass
        return Call(node.func, a)
    if isinstance(node, Pow):
        b = _local(node.base)
        k = node.exponent
        if k == 0:
            return ONE
        if k == 1:
            return b
        if _is_const(b):
            if b.value == 0:
                return ZERO if k > 0 else Pow(b, k)
            try:
                return Const(b.value ** k)
            except OverflowError:
                return Pow(b, k)
        if b == ONE:
            return ONE
        return Pow(b, k)
    if isinstance(node, BinOp):
        a = _local(node.left)
        b = _local(node.right)
        op = node.op
        if _is_const(a) and _is_const(b):
            v = _fold(op, a.value, b.value)
            if v is not None:
                return Const(v)
        if op == "+":
            if a == ZERO:
                return b
            if b == ZERO:
                return a
            if isinstance(b, Neg):
                return _local(BinOp("-", a, b.arg))
        elif op == "-":
            if b == ZERO:
                return a
            if a == ZERO:
                return _local(Neg(b))
            if a == b:
                return ZERO
            if isinstance(b, Neg):
                return _local(BinOp("+", a, b.arg))
        elif op == "*":
            if a == ZERO or b == ZERO:
                return ZERO
            if a == ONE:
                return b
            if b == ONE:
                return a
        else:
            if b == ONE:
                return a
            # 0/e -> 0 assumes e != 0; see docs
            if a == ZERO and b != ZERO:
                return ZERO
        return BinOp(op, a, b)
    raise TypeError(f"not an expression node: {node!r}")


# polynomial over atoms: {monomial: coefficient}, monomial = tuple of (atom, power)
# sorted by the atom's source text

def _atom_key(atom: Node) -> str:
    return unparse_node(atom)


def _mono_mul(m1: tuple, m2: tuple) -> tuple:
    powers: dict[Node, int] = {}
    for a, k in m1 + m2:
        powers[a] = powers.get(a, 0) + k
    return tuple(sorted(((a, k) for a, k in powers.items() if k), key=lambda t: _atom_key(t[0])))


def _poly_add(p: dict, q: dict, sign: int = 1) -> dict:
    out = dict(p)
    for m, c in q.items():
        v = out.get(m, 0) + sign * c
        if v == 0:
            out.pop(m, None)
        else:
            out[m] = v
    return out


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mono_mul(m1, m2)
            v = out.get(m, 0) + c1 * c2
            if v == 0:
                out.pop(m, None)
            else:
                out[m] = v
    return out


def _atom(node: Node) -> dict:
    return {((node, 1),): Fraction(1)}


def _to_poly(node: Node) -> dict:
    if isinstance(node, Const):
        return {(): node.value} if node.value != 0 else {}
    if isinstance(node, Var):
        return _atom(node)
    if isinstance(node, Neg):
        return {m: -c for m, c in _to_poly(node.arg).items()}
    if isinstance(node, BinOp):
        if node.op == "+":
            return _poly_add(_to_poly(node.left), _to_poly(node.right))
        if node.op == "-":
            return _poly_add(_to_poly(node.left), _to_poly(node.right), -1)
        if node.op == "*":
            return _poly_mul(_to_poly(node.left), _to_poly(node.right))
        if _is_const(node.right) and node.right.value != 0:
            inv = 1 / node.right.value
            return {m: c * inv for m, c in _to_poly(node.left).items()}
        return _atom(BinOp("/", _canonical(node.left), _canonical(node.right)))
    if isinstance(node, Pow):
        if node.exponent < 0:
            return _atom(Pow(_canonical(node.base), node.exponent))
        base = _to_poly(node.base)
        if len(base) == 1:
            (m, c), = base.items()
            k = node.exponent
            return {tuple((a, e * k) for a, e in m): c ** k}
        out = {(): Fraction(1)}
        for _ in range(node.exponent):
            out = _poly_mul(out, base)
        return out
    if isinstance(node, Call):
        return _atom(Call(node.func, _canonical(node.arg)))
    raise TypeError(f"not an expression node: {node!r}")


def _from_poly(p: dict) -> Node:
    if not p:
        return ZERO

    def order(item):
        m, _ = item
        return (-sum(k for _, k in m), [(_atom_key(a), -k) for a, k in m])

    out = None
    for m, c in sorted(p.items(), key=order):
        factors = [a if k == 1 else Pow(a, k) for a, k in m]
        negative = c < 0
        mag = -c if negative else c
        if out is None and negative:
            # leading sign goes on the first factor: -3*x1, -x1*x2
            if mag != 1 or not factors:
                factors.insert(0, Const(c))
            else:
                factors[0] = Neg(factors[0])
            negative = False
        elif mag != 1 or not factors:
            factors.insert(0, Const(mag))
        term = factors[0]
        for fac in factors[1:]:
            term = BinOp("*", term, fac)
        if out is None:
            out = term
        else:
            out = BinOp("-" if negative else "+", out, term)
    return out


def _canonical(node: Node) -> Node:
    return _local(_from_poly(_to_poly(_local(node))))


def simplify_node(node: Node) -> Node:
    for _ in range(50):
        nxt = _canonical(node)
        if nxt == node:
            return nxt
        node = nxt
    return node


def simplify(f: FieldExpr) -> FieldExpr:
    """Constant folding, 0/1 identities and collection of like terms.

    Idempotent.  A field whose components all reduce to the literal 0 has
    ``is_syntactically_zero`` set; fields that vanish only for semantic
    reasons (trig identities, for instance) are not detected.
    """
    return FieldExpr(tuple(simplify_node(c) for c in f.components), f.dim, f.params)

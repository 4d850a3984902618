"""Superfunction expressions in named even and odd coordinates.

Nodes are hash-consed: structurally equal expressions are the same Python
object, so equality is identity and shared subexpressions form a DAG.  The
constructor functions (:func:`add`, :func:`mul`, ...) fold constants, drop
zeros and ones, and reject parity violations, so every live node is valid.

Differentiation follows the left-derivative convention: for an odd
coordinate c, ``d_c(a*b) = d_c(a)*b + sigma(a)*d_c(b)`` where sigma negates
the odd part of ``a``.
"""

from __future__ import annotations

import math
import re
import weakref
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .errors import EvaluationError, NonInvertibleError, ParityError, ParseError
from .grassmann import GrassmannNumber, Parity

__all__ = [
    "CoordinateSystem",
    "Expr",
    "Const",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Func",
    "ZERO",
    "ONE",
    "const",
    "var",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "func",
    "as_expr",
    "sum_exprs",
    "is_zero",
    "parse",
    "to_source",
    "differentiate",
    "substitute",
    "conjugate_expr",
    "evaluate",
    "free_variables",
    "smooth_derivatives",
    "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "log")


@dataclass(frozen=True)
class CoordinateSystem:
    """Ordered even names followed by ordered odd names (graded dimension p|q)."""

    even_names: tuple[str, ...]
    odd_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "even_names", tuple(self.even_names))
        object.__setattr__(self, "odd_names", tuple(self.odd_names))
        names = self.names
        if len(set(names)) != len(names):
            raise ValueError(f"coordinate names must be unique: {names}")
        for name in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name) or name in FUNCTIONS:
                raise ValueError(f"invalid coordinate name {name!r}")

    @property
    def p(self) -> int:
        return len(self.even_names)

    @property
    def q(self) -> int:
        return len(self.odd_names)

    @property
    def n(self) -> int:
        return self.p + self.q

    @property
    def names(self) -> tuple[str, ...]:
        return self.even_names + self.odd_names

    @property
    def eps(self) -> tuple[int, ...]:
        """Parity table: 0 for even slots, 1 for odd slots."""
        return (0,) * self.p + (1,) * self.q

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown coordinate {name!r}") from None

    def parity_of(self, name: str) -> int:
        return self.eps[self.index(name)]

    def __contains__(self, name) -> bool:
        return name in self.names

    def vars(self) -> list["Var"]:
        return [var(name, e) for name, e in zip(self.names, self.eps)]

    def __str__(self):
        return f"{self.p}|{self.q} ({', '.join(self.names)})"


# ---------------------------------------------------------------------------
# Nodes


_INTERN: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


class Expr:
    """Base expression node; build through the constructor functions."""

    __slots__ = ("payload", "children", "parity", "__weakref__")

    payload: object
    children: tuple
    parity: Parity

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        return power(self, k)

    def __str__(self):
        return to_source(self)

    def __repr__(self):
        return f"{type(self).__name__}<{to_source(self)}>"

    def __reduce__(self):
        return (parse_canonical, (to_source(self), _var_table(self)))


def _node(cls, payload, children, parity):
    key = (cls, payload, tuple(id(c) for c in children))
    node = _INTERN.get(key)
    if node is None:
        node = object.__new__(cls)
        node.payload = payload
        node.children = tuple(children)
        node.parity = parity
        _INTERN[key] = node
    return node


class Const(Expr):
    __slots__ = ()

    @property
    def value(self) -> float:
        return self.payload


class Var(Expr):
    __slots__ = ()

    @property
    def name(self) -> str:
        return self.payload[0]

    @property
    def odd(self) -> bool:
        return bool(self.payload[1])


class Neg(Expr):
    __slots__ = ()

    @property
    def arg(self):
        return self.children[0]


class _Binary(Expr):
    __slots__ = ()

    @property
    def left(self):
        return self.children[0]

    @property
    def right(self):
        return self.children[1]


class Add(_Binary):
    __slots__ = ()


class Sub(_Binary):
    __slots__ = ()


class Mul(_Binary):
    __slots__ = ()


class Div(_Binary):
    __slots__ = ()


class Pow(Expr):
    __slots__ = ()

    @property
    def base(self):
        return self.children[0]

    @property
    def exponent(self) -> int:
        return self.payload


class Func(Expr):
    __slots__ = ()

    @property
    def name(self) -> str:
        return self.payload

    @property
    def arg(self):
        return self.children[0]


# ---------------------------------------------------------------------------
# Constructors


def const(value: float) -> Const:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"non-finite constant {value!r}")
    return _node(Const, value + 0.0, (), Parity.EVEN)


def var(name: str, odd: int | bool = False) -> Var:
    odd = int(bool(odd))
    return _node(Var, (name, odd), (), Parity.ODD if odd else Parity.EVEN)


ZERO = const(0.0)
ONE = const(1.0)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return const(x)
    raise TypeError(f"cannot convert {type(x).__name__} to an expression")


def is_zero(e: Expr) -> bool:
    return e is ZERO


def _is_const(e, value=None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _sum_parity(a: Expr, b: Expr) -> Parity:
    if a is ZERO:
        return b.parity
    if b is ZERO:
        return a.parity
    return a.parity if a.parity == b.parity else Parity.INHOMOGENEOUS


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return _node(Neg, None, (a,), a.parity)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value + b.value)
    if a is ZERO:
        return b
    if b is ZERO:
        return a
    return _node(Add, None, (a, b), _sum_parity(a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value - b.value)
    if b is ZERO:
        return a
    if a is ZERO:
        return neg(b)
    if a is b:
        return ZERO
    return _node(Sub, None, (a, b), _sum_parity(a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a is ZERO or b is ZERO:
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value * b.value)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    if isinstance(a, Var) and a is b and a.odd:
        return ZERO
    if isinstance(a, Neg):
        return neg(mul(a.arg, b))
    if isinstance(b, Neg):
        return neg(mul(a, b.arg))
    if isinstance(a, Const) and isinstance(b, Mul) and isinstance(b.left, Const):
        return mul(const(a.value * b.left.value), b.right)
    return _node(Mul, None, (a, b), a.parity * b.parity)


def div(a: Expr, b: Expr) -> Expr:
    if b is ZERO:
        raise NonInvertibleError("division by the constant zero")
    if b.parity is not Parity.EVEN:
        raise ParityError(f"denominator must be even, got {b.parity.name.lower()} {to_source(b)!r}")
    if a is ZERO:
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const):
        return const(a.value / b.value)
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Neg):
        return neg(div(a.arg, b))
    return _node(Div, None, (a, b), a.parity)


def power(a: Expr, k: int) -> Expr:
    if isinstance(k, float) and k.is_integer():
        k = int(k)
    if not isinstance(k, int) or k < 1:
        raise ValueError(f"only positive integer exponents are supported, got {k!r}")
    if k == 1:
        return a
    if a is ZERO:
        return ZERO
    if isinstance(a, Const):
        return const(a.value ** k)
    if a.parity is Parity.ODD:
        return ZERO
    return _node(Pow, k, (a,), a.parity)


_REAL_FUNCS = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "log": math.log}


def func(name: str, a: Expr) -> Expr:
    if name not in _REAL_FUNCS:
        raise ValueError(f"unknown function {name!r}")
    if a.parity is not Parity.EVEN:
        raise ParityError(
            f"{a.parity.name.lower()} argument to transcendental {name}(): {to_source(a)!r}"
        )
    if isinstance(a, Const):
        if name == "log" and a.value <= 0:
            raise EvaluationError(f"log of non-positive constant {a.value!r}")
        return const(_REAL_FUNCS[name](a.value))
    return _node(Func, name, (a,), Parity.EVEN)


def sum_exprs(terms: Iterable[Expr]) -> Expr:
    total = ZERO
    for t in terms:
        total = add(total, t)
    return total


# ---------------------------------------------------------------------------
# Printing


def _is_atom(e: Expr) -> bool:
    return isinstance(e, (Var, Func)) or (isinstance(e, Const) and e.value >= 0)


def to_source(e: Expr) -> str:
    """Render in the grammar accepted by :func:`parse` (round-trips exactly)."""
    memo: dict[int, str] = {}

    def src(node: Expr) -> str:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, Const):
            s = repr(node.value)
        elif isinstance(node, Var):
            s = node.name
        elif isinstance(node, Func):
            s = f"{node.name}({src(node.arg)})"
        elif isinstance(node, Neg):
            s = "-" + _wrap(node.arg, _is_atom(node.arg))
        elif isinstance(node, (Add, Sub)):
            op = " + " if isinstance(node, Add) else " - "
            right_ok = not isinstance(node.right, (Add, Sub))
            s = src(node.left) + op + _wrap(node.right, right_ok)
        elif isinstance(node, (Mul, Div)):
            op = "*" if isinstance(node, Mul) else "/"
            left_ok = not isinstance(node.left, (Add, Sub))
            right_ok = not isinstance(node.right, (Add, Sub, Mul, Div))
            s = _wrap(node.left, left_ok) + op + _wrap(node.right, right_ok)
        elif isinstance(node, Pow):
            s = _wrap(node.base, _is_atom(node.base)) + "^" + str(node.exponent)
        else:  # pragma: no cover
            raise TypeError(node)
        memo[key] = s
        return s

    def _wrap(node, ok):
        return src(node) if ok else f"({src(node)})"

    return src(e)


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str):
    pos = 0
    tokens = []
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", pos)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, lookup: Callable[[str], Var | None]):
        self.tokens = _tokenize(src)
        self.i = 0
        self.lookup = lookup

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, value, pos = self.take()
        if value != text:
            raise ParseError(f"expected {text!r}, found {value or 'end of input'!r}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {value!r}", pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            _, op, pos = self.take()
            rhs = self.term()
            e = self._apply(add if op == "+" else sub, pos, e, rhs)
        return e

    def term(self):
        e = self.factor()
        while self.peek()[1] in ("*", "/"):
            _, op, pos = self.take()
            rhs = self.factor()
            e = self._apply(mul if op == "*" else div, pos, e, rhs)
        return e

    def factor(self):
        e = self.atom()
        if self.peek()[1] == "^":
            _, _, pos = self.take()
            kind, value, vpos = self.take()
            if kind != "num" or not value.isdigit() or int(value) < 1:
                raise ParseError("exponent must be a positive integer", vpos)
            e = self._apply(power, pos, e, int(value))
        return e

    def atom(self):
        kind, value, pos = self.take()
        if kind == "num":
            return const(float(value))
        if kind == "name":
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return self._apply(func, pos, value, arg)
            v = self.lookup(value)
            if v is None:
                raise ParseError(f"unknown identifier {value!r}", pos)
            return v
        if value == "(":
            e = self.expr()
            self.expect(")")
            return e
        if value == "-":
            return neg(self.atom())
        raise ParseError(f"unexpected {value or 'end of input'!r}", pos)

    @staticmethod
    def _apply(fn, pos, *args):
        try:
            return fn(*args)
        except ParityError as exc:
            raise ParityError(f"{exc} (at position {pos})") from None
        except NonInvertibleError as exc:
            raise ParseError(str(exc), pos) from None
        except EvaluationError as exc:
            raise ParseError(str(exc), pos) from None


def parse(src: str, coords: CoordinateSystem) -> Expr:
    """Parse ``src`` against the declared coordinates.

    Raises :class:`ParseError` for lexical/grammar errors and unknown names,
    :class:`ParityError` for odd arguments to transcendentals and odd
    denominators.
    """
    table = {v.name: v for v in coords.vars()}
    return _Parser(src, table.get).parse()


def _var_table(e: Expr) -> dict[str, int]:
    return {v.name: int(v.odd) for v in _iter_vars(e)}


def parse_canonical(src: str, table: Mapping[str, int]) -> Expr:
    """Parse with an explicit ``name -> parity`` table (used for pickling)."""
    return _Parser(src, lambda n: var(n, table[n]) if n in table else None).parse()


# ---------------------------------------------------------------------------
# Structural utilities


def _iter_nodes(e: Expr):
    seen = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        yield node
        stack.extend(node.children)


def _iter_vars(e: Expr):
    return (n for n in _iter_nodes(e) if isinstance(n, Var))


def free_variables(e: Expr) -> set[str]:
    return {v.name for v in _iter_vars(e)}


def node_count(e: Expr) -> int:
    return sum(1 for _ in _iter_nodes(e))


def _rebuild(node: Expr, kids: Sequence[Expr]) -> Expr:
    if isinstance(node, Neg):
        return neg(kids[0])
    if isinstance(node, Add):
        return add(*kids)
    if isinstance(node, Sub):
        return sub(*kids)
    if isinstance(node, Mul):
        return mul(*kids)
    if isinstance(node, Div):
        return div(*kids)
    if isinstance(node, Pow):
        return power(kids[0], node.exponent)
    if isinstance(node, Func):
        return func(node.name, kids[0])
    raise TypeError(node)  # pragma: no cover


def substitute(e: Expr, mapping: Mapping[str, Expr], memo: dict | None = None) -> Expr:
    """Replace coordinates by expressions of the same parity."""
    for name, repl in mapping.items():
        if not isinstance(repl, Expr):
            raise TypeError(f"replacement for {name!r} must be an expression")
    memo = {} if memo is None else memo

    def go(node):
        key = id(node)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if isinstance(node, Var):
            out = mapping.get(node.name, node)
            if out is not node and out is not ZERO:
                want = Parity.ODD if node.odd else Parity.EVEN
                if out.parity is not want:
                    raise ParityError(f"substitution for {node.name!r} has wrong parity")
        elif isinstance(node, Const):
            out = node
        else:
            kids = [go(c) for c in node.children]
            if all(k is c for k, c in zip(kids, node.children)):
                out = node
            else:
                out = _rebuild(node, kids)
        memo[key] = out
        return out

    return go(e)


def conjugate_expr(e: Expr, memo: dict | None = None) -> Expr:
    """Symbolic conjugation: every odd coordinate replaced by its negative."""
    if e.parity is Parity.EVEN:
        return e
    if e.parity is Parity.ODD:
        return neg(e)
    mapping = {v.name: neg(v) for v in _iter_vars(e) if v.odd}
    return substitute(e, mapping, memo)


def _resolve_coord(coord, coords: CoordinateSystem | None) -> Var:
    if isinstance(coord, Var):
        return coord
    if coords is None:
        raise TypeError("a CoordinateSystem is needed to differentiate by name")
    if coord not in coords:
        raise KeyError(f"unknown coordinate {coord!r}")
    return var(coord, coords.parity_of(coord))


def differentiate(e: Expr, coord, coords: CoordinateSystem | None = None, memo: dict | None = None) -> Expr:
    """Left partial derivative of ``e`` with respect to ``coord``.

    ``coord`` is a coordinate name (resolved in ``coords``) or a :class:`Var`.
    Pass a shared ``memo`` dict to reuse work across calls with the same
    coordinate.
    """
    c = _resolve_coord(coord, coords)
    odd = c.odd
    memo = {} if memo is None else memo
    conj_memo: dict = {}

    def sigma(a):
        return conjugate_expr(a, conj_memo) if odd else a

    def d(node):
        key = id(node)
        hit = memo.get((key, c.name))
        if hit is not None:
            return hit
        if isinstance(node, Const):
            out = ZERO
        elif isinstance(node, Var):
            out = ONE if node is c else ZERO
        elif isinstance(node, Neg):
            out = neg(d(node.arg))
        elif isinstance(node, Add):
            out = add(d(node.left), d(node.right))
        elif isinstance(node, Sub):
            out = sub(d(node.left), d(node.right))
        elif isinstance(node, Mul):
            a, b = node.children
            out = add(mul(d(a), b), mul(sigma(a), d(b)))
        elif isinstance(node, Div):
            a, b = node.children
            db = d(b)
            out = div(d(a), b)
            if db is not ZERO:
                out = sub(out, mul(sigma(a), div(db, power(b, 2))))
        elif isinstance(node, Pow):
            a, k = node.base, node.exponent
            if a.parity is Parity.EVEN:
                out = mul(mul(const(k), power(a, k - 1)), d(a))
            else:
                out = d(_node(Mul, None, (a, power(a, k - 1)), a.parity)) if k > 1 else d(a)
        elif isinstance(node, Func):
            a = node.arg
            da = d(a)
            if da is ZERO:
                out = ZERO
            elif node.name == "sin":
                out = mul(func("cos", a), da)
            elif node.name == "cos":
                out = neg(mul(func("sin", a), da))
            elif node.name == "exp":
                out = mul(node, da)
            else:
                out = div(da, a)
        else:  # pragma: no cover
            raise TypeError(node)
        memo[(key, c.name)] = out
        # pin the node so its id stays unique while the memo lives
        memo.setdefault(("pin", key), node)
        return out

    return d(e)


# ---------------------------------------------------------------------------
# Evaluation


def smooth_derivatives(name: str, order: int) -> list[Callable[[float], float]]:
    """Closed-form derivative sequence f, f', ..., f^(order) of a basis function."""
    if name == "exp":
        return [math.exp] * (order + 1)
    if name == "sin":
        cyc = [math.sin, math.cos, lambda b: -math.sin(b), lambda b: -math.cos(b)]
        return [cyc[k % 4] for k in range(order + 1)]
    if name == "cos":
        cyc = [math.cos, lambda b: -math.sin(b), lambda b: -math.cos(b), math.sin]
        return [cyc[k % 4] for k in range(order + 1)]
    if name == "log":
        out: list[Callable[[float], float]] = [math.log]
        for k in range(1, order + 1):
            out.append(lambda b, k=k: (-1) ** (k - 1) * math.factorial(k - 1) / b**k)
        return out
    raise ValueError(f"unknown function {name!r}")


def evaluate(e: Expr, point: Mapping[str, GrassmannNumber], num_generators: int | None = None) -> GrassmannNumber:
    """Evaluate at a Grassmann-valued point (reference recursive evaluator).

    Even coordinates must bind even values and odd coordinates odd values.
    """
    Ls = {v.num_generators for v in point.values()}
    if num_generators is not None:
        Ls.add(num_generators)
    if len(Ls) > 1:
        raise ValueError(f"point values use different generator counts {sorted(Ls)}")
    L = Ls.pop() if Ls else 0
    memo: dict[int, GrassmannNumber] = {}
    checked: set[str] = set()

    def ev(node):
        key = id(node)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if isinstance(node, Const):
            out = GrassmannNumber.scalar(node.value, L)
        elif isinstance(node, Var):
            try:
                out = point[node.name]
            except KeyError:
                raise KeyError(f"no value bound for coordinate {node.name!r}") from None
            if node.name not in checked:
                par = out.parity()
                if out.is_zero():
                    pass
                elif node.odd and par is not Parity.ODD:
                    raise ParityError(f"odd coordinate {node.name!r} bound to a {par.name.lower()} value")
                elif not node.odd and par is not Parity.EVEN:
                    raise ParityError(f"even coordinate {node.name!r} bound to a {par.name.lower()} value")
                checked.add(node.name)
        elif isinstance(node, Neg):
            out = -ev(node.arg)
        elif isinstance(node, Add):
            out = ev(node.left) + ev(node.right)
        elif isinstance(node, Sub):
            out = ev(node.left) - ev(node.right)
        elif isinstance(node, Mul):
            out = ev(node.left) * ev(node.right)
        elif isinstance(node, Div):
            den = ev(node.right)
            if den.body() == 0.0:
                raise EvaluationError(f"non-invertible denominator {to_source(node.right)!r}")
            out = ev(node.left) * den.inverse()
        elif isinstance(node, Pow):
            out = ev(node.base) ** node.exponent
        elif isinstance(node, Func):
            a = ev(node.arg)
            if node.name == "log" and a.body() <= 0.0:
                raise EvaluationError(f"log of non-positive body {a.body()!r}")
            out = a.apply_smooth(smooth_derivatives(node.name, L))
        else:  # pragma: no cover
            raise TypeError(node)
        memo[key] = out
        return out

    return ev(e)

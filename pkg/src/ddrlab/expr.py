"""A tiny closed expression language with exact symbolic differentiation.

Grammar (EBNF)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" ["-"] INTEGER)?
    atom    := NUMBER | IDENT | FUNC "(" expr ")" | "(" expr ")"
    FUNC    := "sin" | "cos" | "exp"
    NUMBER  := digits ["." digits] [("e" | "E") ["+" | "-"] digits]

``a / b`` is sugar for ``a * b^-1``.  Numeric literals are stored as exact
rationals, so polynomial expressions can be evaluated without rounding.

Nodes are immutable and built through folding constructors (``add``,
``mul``, ...), which keep trees small; identical subtrees may be shared,
and both evaluation and differentiation are memoized per node.
"""

from __future__ import annotations

import math
import threading
import weakref
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence

__all__ = [
    "Expr", "Const", "Sym", "Add", "Sub", "Mul", "Neg", "Pow", "Func",
    "ParseError", "UnknownIdentifierError",
    "const", "sym", "add", "sub", "mul", "neg", "power", "func",
    "as_expr", "sum_exprs", "parse_expr", "differentiate", "evaluate",
    "evaluate_many", "to_text", "free_symbols",
]

FUNCTIONS = ("sin", "cos", "exp")


class ParseError(ValueError):
    """Syntax error; ``offset`` is the byte offset of the offending token."""

    def __init__(self, message: str, offset: int, source: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.source = source


class UnknownIdentifierError(ParseError):
    pass


_TABLE: "weakref.WeakValueDictionary" = weakref.WeakValueDictionary()
_TABLE_LOCK = threading.RLock()


def _interned(cls, key: tuple, init):
    # hash-consing: structurally equal nodes are the same object
    k = (cls,) + key
    obj = _TABLE.get(k)
    if obj is not None:
        return obj
    with _TABLE_LOCK:  # concurrent parses must agree on node identity
        obj = _TABLE.get(k)
        if obj is None:
            obj = object.__new__(cls)
            init(obj)
            obj._hash = hash(k)
            obj._deriv = None
            _TABLE[k] = obj
    return obj


class Expr:
    __slots__ = ("_hash", "_deriv", "__weakref__")
    level = 5  # printing precedence; higher binds tighter

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, Expr):
            return self is other
        if isinstance(other, (int, Fraction)):
            return isinstance(self, Const) and self.value == other
        return NotImplemented

    def __ne__(self, other) -> bool:
        r = self.__eq__(other)
        return r if r is NotImplemented else not r

    # arithmetic goes through the folding constructors
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

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        return mul(self, power(as_expr(other), -1))

    def __rtruediv__(self, other):
        return mul(as_expr(other), power(self, -1))

    def __pow__(self, n: int):
        return power(self, n)

    @property
    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0

    @property
    def is_constant(self) -> bool:
        return not free_symbols(self)

    def __repr__(self) -> str:
        return f"Expr({to_text(self)!r})"

    def __str__(self) -> str:
        return to_text(self)


class Const(Expr):
    __slots__ = ("value", "fvalue")

    def __new__(cls, value):
        if isinstance(value, float) and not math.isfinite(value):
            raise ValueError(f"non-finite constant {value!r}")
        value = Fraction(value)

        def init(obj):
            obj.value = value
            obj.fvalue = float(value)
        return _interned(cls, (value,), init)

    @property
    def level(self):
        if self.value.denominator != 1:
            return 2
        return 3 if self.value < 0 else 5


class Sym(Expr):
    __slots__ = ("name",)

    def __new__(cls, name: str):
        def init(obj):
            obj.name = name
        return _interned(cls, (name,), init)


class _Binary(Expr):
    __slots__ = ("a", "b")

    def __new__(cls, a: Expr, b: Expr):
        def init(obj):
            obj.a = a
            obj.b = b
        return _interned(cls, (a, b), init)


class Add(_Binary):
    __slots__ = ()
    level = 1


class Sub(_Binary):
    __slots__ = ()
    level = 1


class Mul(_Binary):
    __slots__ = ()
    level = 2


class Neg(Expr):
    __slots__ = ("a",)
    level = 3

    def __new__(cls, a: Expr):
        def init(obj):
            obj.a = a
        return _interned(cls, (a,), init)


class Pow(Expr):
    __slots__ = ("a", "n")
    level = 4

    def __new__(cls, a: Expr, n: int):
        n = int(n)

        def init(obj):
            obj.a = a
            obj.n = n
        return _interned(cls, (a, n), init)


class Func(Expr):
    __slots__ = ("name", "a")

    def __new__(cls, name: str, a: Expr):
        if name not in FUNCTIONS:
            raise ValueError(f"unknown function {name!r}")

        def init(obj):
            obj.name = name
            obj.a = a
        return _interned(cls, (name, a), init)


ZERO = Const(0)
ONE = Const(1)


# -- folding constructors ---------------------------------------------------

def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction, float, Rational)):
        return Const(value)
    if hasattr(value, "item"):  # numpy scalar
        return Const(value.item())
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def const(value) -> Const:
    return Const(value)


def sym(name: str) -> Sym:
    return Sym(name)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if b.is_zero:
        return a
    if a.is_zero:
        return neg(b)
    return Sub(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a.is_zero or b.is_zero:
        return ZERO
    if isinstance(a, Const):
        if a.value == 1:
            return b
        if a.value == -1:
            return neg(b)
    if isinstance(b, Const):
        if b.value == 1:
            return a
        if b.value == -1:
            return neg(a)
    return Mul(a, b)


def power(a: Expr, n: int) -> Expr:
    if int(n) != n:
        raise ValueError("only integer powers are supported")
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Const):
        if a.value == 0 and n < 0:
            raise ZeroDivisionError("0 raised to a negative power")
        return Const(a.value ** n)
    if isinstance(a, Pow):
        return power(a.a, a.n * n)
    return Pow(a, n)


def func(name: str, a: Expr) -> Expr:
    return Func(name, a)


def sum_exprs(terms: Iterable) -> Expr:
    """Balanced sum, keeping tree depth logarithmic in the number of terms."""
    items = [as_expr(t) for t in terms]
    items = [t for t in items if not t.is_zero]
    if not items:
        return ZERO
    while len(items) > 1:
        nxt = [add(items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


# -- differentiation ----------------------------------------------------------

def differentiate(e: Expr, coord: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to the symbol ``coord``."""
    if e._deriv is None:
        e._deriv = {}
    cached = e._deriv.get(coord)
    if cached is not None:
        return cached
    if isinstance(e, Const):
        r = ZERO
    elif isinstance(e, Sym):
        r = ONE if e.name == coord else ZERO
    elif coord not in free_symbols(e):
        r = ZERO
    elif isinstance(e, Add):
        r = add(differentiate(e.a, coord), differentiate(e.b, coord))
    elif isinstance(e, Sub):
        r = sub(differentiate(e.a, coord), differentiate(e.b, coord))
    elif isinstance(e, Mul):
        r = add(mul(differentiate(e.a, coord), e.b),
                mul(e.a, differentiate(e.b, coord)))
    elif isinstance(e, Neg):
        r = neg(differentiate(e.a, coord))
    elif isinstance(e, Pow):
        r = mul(mul(Const(e.n), power(e.a, e.n - 1)), differentiate(e.a, coord))
    elif isinstance(e, Func):
        da = differentiate(e.a, coord)
        if e.name == "sin":
            outer = Func("cos", e.a)
        elif e.name == "cos":
            outer = neg(Func("sin", e.a))
        else:
            outer = e
        r = mul(outer, da)
    else:  # pragma: no cover
        raise TypeError(type(e))
    e._deriv[coord] = r
    return r


def free_symbols(e: Expr) -> frozenset:
    d = e._deriv
    if d is None:
        e._deriv = d = {}
    fs = d.get(None)
    if fs is not None:
        return fs
    if isinstance(e, Const):
        fs = frozenset()
    elif isinstance(e, Sym):
        fs = frozenset((e.name,))
    elif isinstance(e, _Binary):
        fs = free_symbols(e.a) | free_symbols(e.b)
    else:
        fs = free_symbols(e.a)
    d[None] = fs
    return fs


# -- evaluation ---------------------------------------------------------------

_FLOAT_FUNCS = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


def _eval(e: Expr, env: Mapping, memo: dict, exact: bool):
    key = id(e)
    v = memo.get(key)
    if v is not None:
        return v
    if isinstance(e, Const):
        v = e.value if exact else e.fvalue
    elif isinstance(e, Sym):
        try:
            v = env[e.name]
        except KeyError:
            raise KeyError(f"no value for symbol {e.name!r}") from None
    elif isinstance(e, Add):
        v = _eval(e.a, env, memo, exact) + _eval(e.b, env, memo, exact)
    elif isinstance(e, Sub):
        v = _eval(e.a, env, memo, exact) - _eval(e.b, env, memo, exact)
    elif isinstance(e, Mul):
        v = _eval(e.a, env, memo, exact) * _eval(e.b, env, memo, exact)
    elif isinstance(e, Neg):
        v = -_eval(e.a, env, memo, exact)
    elif isinstance(e, Pow):
        base = _eval(e.a, env, memo, exact)
        if base == 0 and e.n < 0:
            raise ZeroDivisionError(f"division by zero evaluating {to_text(e)}")
        v = base ** e.n
    elif isinstance(e, Func):
        arg = _eval(e.a, env, memo, exact)
        if exact:
            if arg != 0:
                raise TypeError(f"{e.name} of a nonzero argument is not rational")
            v = Fraction(0) if e.name == "sin" else Fraction(1)
        else:
            v = _FLOAT_FUNCS[e.name](arg)
    else:  # pragma: no cover
        raise TypeError(type(e))
    memo[key] = v
    return v


def evaluate(e: Expr, env: Mapping, exact: bool = False):
    """Evaluate ``e``; ``exact=True`` keeps rationals (point must be rational)."""
    if exact:
        env = {k: Fraction(v) for k, v in env.items()}
    return _eval(e, env, {}, exact)


def evaluate_many(exprs: Sequence[Expr], env: Mapping, exact: bool = False) -> list:
    """Evaluate several expressions sharing one memo table."""
    if exact:
        env = {k: Fraction(v) for k, v in env.items()}
    memo: dict = {}
    return [_eval(e, env, memo, exact) for e in exprs]


# -- printing -----------------------------------------------------------------

def _const_text(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def _wrap(e: Expr, min_level: int) -> str:
    s = to_text(e)
    return f"({s})" if e.level < min_level else s


def to_text(e: Expr) -> str:
    """Print ``e`` so that ``parse_expr(to_text(e)) == e``."""
    if isinstance(e, Const):
        return _const_text(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Add):
        return f"{_wrap(e.a, 1)} + {_wrap(e.b, 2)}"
    if isinstance(e, Sub):
        return f"{_wrap(e.a, 1)} - {_wrap(e.b, 2)}"
    if isinstance(e, Mul):
        return f"{_wrap(e.a, 2)}*{_wrap(e.b, 3)}"
    if isinstance(e, Neg):
        return f"-{_wrap(e.a, 4)}"
    if isinstance(e, Pow):
        return f"{_wrap(e.a, 5)}^{e.n}"
    if isinstance(e, Func):
        return f"{e.name}({to_text(e.a)})"
    raise TypeError(type(e))  # pragma: no cover


# -- parsing ------------------------------------------------------------------

class _Parser:
    def __init__(self, source: str, names):
        self.src = source
        self.names = None if names is None else set(names)
        self.pos = 0

    def error(self, msg, offset=None, cls=ParseError):
        raise cls(msg, self.pos if offset is None else offset, self.src)

    def skip(self):
        while self.pos < len(self.src) and self.src[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.src[self.pos] if self.pos < len(self.src) else ""

    def expect(self, ch):
        if self.peek() != ch:
            found = self.peek() or "end of input"
            self.error(f"expected {ch!r}, found {found!r}")
        self.pos += 1

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek():
            self.error(f"unexpected {self.peek()!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek() in ("+", "-"):
            op = self.src[self.pos]
            self.pos += 1
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek() in ("*", "/"):
            op = self.src[self.pos]
            self.pos += 1
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else self._div(e, rhs)
        return e

    def _div(self, a, b):
        if b.is_zero:
            self.error("division by zero")
        return mul(a, power(b, -1))

    def unary(self):
        if self.peek() == "-":
            self.pos += 1
            return neg(self.unary())
        return self.pow()

    def pow(self):
        base = self.atom()
        if self.peek() == "^":
            self.pos += 1
            sign = 1
            if self.peek() == "-":
                self.pos += 1
                sign = -1
            self.skip()
            start = self.pos
            while self.pos < len(self.src) and self.src[self.pos].isdigit():
                self.pos += 1
            if start == self.pos:
                self.error("expected integer exponent")
            return power(base, sign * int(self.src[start:self.pos]))
        return base

    def number(self):
        start = self.pos
        s = self.src
        while self.pos < len(s) and s[self.pos].isdigit():
            self.pos += 1
        if self.pos < len(s) and s[self.pos] == ".":
            self.pos += 1
            while self.pos < len(s) and s[self.pos].isdigit():
                self.pos += 1
        if self.pos < len(s) and s[self.pos] in "eE":
            save = self.pos
            self.pos += 1
            if self.pos < len(s) and s[self.pos] in "+-":
                self.pos += 1
            if self.pos < len(s) and s[self.pos].isdigit():
                while self.pos < len(s) and s[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = save
        text = s[start:self.pos]
        if text == ".":
            self.error("malformed number", start)
        return Const(Fraction(text))

    def atom(self):
        ch = self.peek()
        if not ch:
            self.error("unexpected end of input")
        if ch.isdigit() or ch == ".":
            return self.number()
        if ch == "(":
            self.pos += 1
            e = self.expr()
            self.expect(")")
            return e
        if ch.isalpha() or ch == "_":
            start = self.pos
            while self.pos < len(self.src) and (self.src[self.pos].isalnum()
                                                or self.src[self.pos] == "_"):
                self.pos += 1
            name = self.src[start:self.pos]
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return func(name, arg)
            if self.names is not None and name not in self.names:
                self.error(f"unknown identifier {name!r}", start,
                           UnknownIdentifierError)
            return sym(name)
        self.error(f"unexpected {ch!r}")


def parse_expr(source: str, names: Iterable[str] | None = None) -> Expr:
    """Parse ``source``; when ``names`` is given, other identifiers are errors."""
    return _Parser(source, names).parse()

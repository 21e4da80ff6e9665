"""Chart-based scalar, vector, form and endomorphism fields.

Components are ``Expr`` trees, so every derivative used downstream (d,
Lie brackets, Nijenhuis tensors) is exact.  Fields are immutable; all
pointwise evaluation is pure.

Index conventions: ``VectorField.comps[k]`` is X^k; ``EndoField.matrix[k][l]``
is R^k_l with R d_l = sum_k R^k_l d_k; form components are keyed by 0-based
increasing multi-indices, as in :mod:`ddrlab.exterior`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import exterior as ext
from .exterior import FormValue
from .expr import (Const, Expr, Func, Sym, as_expr, differentiate,
                   evaluate_many, free_symbols, parse_expr, sum_exprs)

__all__ = [
    "Chart", "ScalarField", "VectorField", "FormField", "EndoField",
    "parse_expr", "differentiate", "exterior_derivative", "exterior_derivative_field",
    "lie_bracket", "lie_bracket_field", "wedge_fields", "pullback_field",
    "tau_field", "lint_periodic", "NonPeriodicError", "sample_points",
    "parse_multi_index",
]


class NonPeriodicError(ValueError):
    pass


@dataclass(frozen=True)
class Chart:
    dim: int
    names: tuple
    periodic: tuple

    def __post_init__(self):
        names = tuple(self.names)
        per = self.periodic
        if isinstance(per, bool):
            per = (per,) * len(names)
        per = tuple(bool(p) for p in per)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "periodic", per)
        if self.dim < 2 or self.dim % 2:
            raise ValueError(f"chart dimension must be even and >= 2, got {self.dim}")
        if len(names) != self.dim or len(per) != self.dim:
            raise ValueError("need one name and one periodicity flag per coordinate")
        if len(set(names)) != len(names):
            raise ValueError(f"coordinate names are not distinct: {names}")

    @classmethod
    def standard(cls, dim: int, periodic: bool = False, prefix: str = "x") -> "Chart":
        return cls(dim, tuple(f"{prefix}{i + 1}" for i in range(dim)), periodic)

    def parse(self, source) -> Expr:
        if isinstance(source, Expr):
            return source
        if isinstance(source, (int, float, Fraction)):
            return as_expr(source)
        return parse_expr(str(source), self.names)

    def env(self, point, exact: bool = False) -> dict:
        point = list(point)
        if len(point) != self.dim:
            raise ValueError(f"point has {len(point)} coordinates, chart has {self.dim}")
        if exact:
            return {n: Fraction(v) for n, v in zip(self.names, point)}
        return {n: float(v) for n, v in zip(self.names, point)}

    def coordinate(self, i: int) -> "ScalarField":
        return ScalarField(self, Sym(self.names[i]))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"unknown coordinate {name!r}") from None

    def _same(self, other: "Chart"):
        if self != other:
            raise ValueError("fields live on different charts")


def _eval(chart: Chart, exprs: Sequence[Expr], point, exact: bool):
    return evaluate_many(list(exprs), chart.env(point, exact), exact)


def _as_array(vals, exact: bool):
    return np.array(vals, dtype=object if exact else float)


@dataclass(frozen=True)
class ScalarField:
    chart: Chart
    expr: Expr

    @classmethod
    def parse(cls, chart: Chart, source) -> "ScalarField":
        return cls(chart, chart.parse(source))

    def __call__(self, point, exact: bool = False):
        return _eval(self.chart, [self.expr], point, exact)[0]

    def as_form(self) -> "FormField":
        return FormField(self.chart, 0, {(): self.expr})

    def differential(self) -> "FormField":
        return exterior_derivative_field(self.as_form())


@dataclass(frozen=True)
class VectorField:
    chart: Chart
    comps: tuple

    def __post_init__(self):
        comps = tuple(as_expr(c) for c in self.comps)
        if len(comps) != self.chart.dim:
            raise ValueError("vector field needs one component per coordinate")
        object.__setattr__(self, "comps", comps)

    @classmethod
    def parse(cls, chart: Chart, sources: Sequence) -> "VectorField":
        return cls(chart, tuple(chart.parse(s) for s in sources))

    @classmethod
    def coordinate(cls, chart: Chart, i: int) -> "VectorField":
        return cls(chart, tuple(Const(1 if k == i else 0) for k in range(chart.dim)))

    def __call__(self, point, exact: bool = False) -> np.ndarray:
        return _as_array(_eval(self.chart, self.comps, point, exact), exact)

    def scaled(self, f: Expr) -> "VectorField":
        return VectorField(self.chart, tuple(f * c for c in self.comps))

    def __add__(self, other: "VectorField") -> "VectorField":
        self.chart._same(other.chart)
        return VectorField(self.chart, tuple(a + b for a, b in zip(self.comps, other.comps)))


def parse_multi_index(key, dim: int) -> tuple:
    """'1,2' / (1, 2) / '12' (1-based) -> sign, 0-based increasing tuple."""
    if isinstance(key, str):
        key = key.strip()
        if key in ("", "0", "()"):
            parts = []
        elif "," in key:
            parts = [int(t) for t in key.split(",") if t.strip()]
        else:
            parts = [int(ch) for ch in key]
    else:
        parts = [int(t) for t in key]
    idx = [p - 1 for p in parts]
    if any(not 0 <= i < dim for i in idx):
        raise ValueError(f"multi-index {key!r} out of range for dimension {dim}")
    return ext.perm_sign(idx), tuple(sorted(idx))


@dataclass(frozen=True)
class FormField:
    chart: Chart
    degree: int
    comps: Mapping

    def __post_init__(self):
        clean = {}
        for I, c in dict(self.comps).items():
            I = tuple(I)
            ext._check_index(I, self.chart.dim, self.degree)
            c = as_expr(c)
            if not c.is_zero:
                clean[I] = c
        object.__setattr__(self, "comps", clean)

    @classmethod
    def parse(cls, chart: Chart, degree: int, mapping: Mapping) -> "FormField":
        """Components keyed by 1-based multi-indices ('1,2' or (1, 2))."""
        out: dict = {}
        for key, src in mapping.items():
            s, I = parse_multi_index(key, chart.dim)
            if len(I) != degree:
                raise ValueError(f"component {key!r} does not have degree {degree}")
            if not s:
                continue
            e = chart.parse(src)
            e = e if s > 0 else -e
            out[I] = out[I] + e if I in out else e
        return cls(chart, degree, out)

    @classmethod
    def zero(cls, chart: Chart, degree: int) -> "FormField":
        return cls(chart, degree, {})

    @classmethod
    def coordinate_differential(cls, chart: Chart, j: int) -> "FormField":
        return cls(chart, 1, {(j,): Const(1)})

    def __call__(self, point, exact: bool = False) -> FormValue:
        keys = list(self.comps)
        vals = _eval(self.chart, [self.comps[k] for k in keys], point, exact)
        return FormValue(self.chart.dim, self.degree, dict(zip(keys, vals)))

    def _compatible(self, other: "FormField"):
        self.chart._same(other.chart)
        if self.degree != other.degree:
            raise ValueError("forms of different degree")

    def __add__(self, other: "FormField") -> "FormField":
        self._compatible(other)
        out = dict(self.comps)
        for I, c in other.comps.items():
            out[I] = out[I] + c if I in out else c
        return FormField(self.chart, self.degree, out)

    def __neg__(self) -> "FormField":
        return FormField(self.chart, self.degree, {I: -c for I, c in self.comps.items()})

    def __sub__(self, other: "FormField") -> "FormField":
        return self + (-other)

    def scaled(self, f) -> "FormField":
        f = as_expr(f)
        return FormField(self.chart, self.degree, {I: f * c for I, c in self.comps.items()})


@dataclass(frozen=True)
class EndoField:
    chart: Chart
    matrix: tuple

    def __post_init__(self):
        n = self.chart.dim
        rows = tuple(tuple(as_expr(c) for c in row) for row in self.matrix)
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ValueError(f"endomorphism field must be {n}x{n}")
        object.__setattr__(self, "matrix", rows)

    @classmethod
    def parse(cls, chart: Chart, rows: Sequence[Sequence]) -> "EndoField":
        return cls(chart, tuple(tuple(chart.parse(c) for c in row) for row in rows))

    @classmethod
    def constant(cls, chart: Chart, M) -> "EndoField":
        M = np.asarray(M, dtype=object)
        return cls(chart, tuple(tuple(as_expr(_exactify(c)) for c in row) for row in M))

    @classmethod
    def identity(cls, chart: Chart) -> "EndoField":
        return cls.constant(chart, np.eye(chart.dim, dtype=int))

    @classmethod
    def scalar(cls, chart: Chart, f) -> "EndoField":
        f = chart.parse(f)
        n = chart.dim
        return cls(chart, tuple(tuple(f if i == j else Const(0) for j in range(n))
                                for i in range(n)))

    def __call__(self, point, exact: bool = False) -> np.ndarray:
        flat = [c for row in self.matrix for c in row]
        vals = _eval(self.chart, flat, point, exact)
        n = self.chart.dim
        return _as_array(vals, exact).reshape(n, n)

    def derivatives(self, point, exact: bool = False) -> np.ndarray:
        """Array D[l, k, j] = d_l R^k_j at ``point``."""
        n = self.chart.dim
        exprs = [differentiate(self.matrix[k][j], self.chart.names[l])
                 for l in range(n) for k in range(n) for j in range(n)]
        vals = _eval(self.chart, exprs, point, exact)
        return _as_array(vals, exact).reshape(n, n, n)

    def __matmul__(self, other):
        if isinstance(other, EndoField):
            self.chart._same(other.chart)
            return EndoField(self.chart, tuple(tuple(r) for r in _matmul_expr(self.matrix, other.matrix)))
        if isinstance(other, VectorField):
            self.chart._same(other.chart)
            return VectorField(self.chart, tuple(
                sum_exprs(self.matrix[k][l] * other.comps[l] for l in range(self.chart.dim))
                for k in range(self.chart.dim)))
        return NotImplemented

    def __add__(self, other: "EndoField") -> "EndoField":
        self.chart._same(other.chart)
        return EndoField(self.chart, tuple(tuple(a + b for a, b in zip(r, s))
                                           for r, s in zip(self.matrix, other.matrix)))

    def __sub__(self, other: "EndoField") -> "EndoField":
        self.chart._same(other.chart)
        return EndoField(self.chart, tuple(tuple(a - b for a, b in zip(r, s))
                                           for r, s in zip(self.matrix, other.matrix)))

    def scaled(self, f) -> "EndoField":
        f = as_expr(f)
        return EndoField(self.chart, tuple(tuple(f * c for c in r) for r in self.matrix))

    def transpose(self) -> "EndoField":
        n = self.chart.dim
        return EndoField(self.chart, tuple(tuple(self.matrix[j][i] for j in range(n))
                                           for i in range(n)))

    def determinant(self) -> Expr:
        return as_expr(ext.det(np.array(self.matrix, dtype=object)))

    def inverse(self) -> "EndoField":
        """Symbolic inverse as adjugate times det^-1."""
        inv = ext.inverse(np.array(self.matrix, dtype=object))
        return EndoField(self.chart, tuple(tuple(r) for r in inv))

    def column(self, i: int) -> VectorField:
        return VectorField(self.chart, tuple(row[i] for row in self.matrix))

    @property
    def is_constant(self) -> bool:
        return all(c.is_constant for row in self.matrix for c in row)


def _exactify(c):
    if isinstance(c, Expr):
        return c
    if isinstance(c, (int, Fraction)):
        return c
    if isinstance(c, np.integer):
        return int(c)
    return Fraction(float(c))


def _matmul_expr(A, B):
    n, m, k = len(A), len(B), len(B[0])
    return [[sum_exprs(A[i][l] * B[l][j] for l in range(m)
                       if not (A[i][l].is_zero or B[l][j].is_zero))
             for j in range(k)] for i in range(n)]


# -- differential operators -------------------------------------------------------

def exterior_derivative_field(alpha: FormField) -> FormField:
    """(d a)_J = sum_s (-1)^s d_{j_s} a_{J minus j_s}, exact."""
    chart, p = alpha.chart, alpha.degree
    if p >= chart.dim:
        return FormField.zero(chart, chart.dim)
    terms: dict = {}
    for I, c in alpha.comps.items():
        for s, name in enumerate(chart.names):
            if s in I:
                continue
            dc = differentiate(c, name)
            if dc.is_zero:
                continue
            sign, K = ext.merge_sign((s,), I)
            terms.setdefault(K, []).append(dc if sign > 0 else -dc)
    return FormField(chart, p + 1, {K: sum_exprs(v) for K, v in terms.items()})


def exterior_derivative(alpha: FormField, point, exact: bool = False) -> FormValue:
    return exterior_derivative_field(alpha)(point, exact)


def wedge_fields(a: FormField, b: FormField) -> FormField:
    a.chart._same(b.chart)
    p = a.degree + b.degree
    if p > a.chart.dim:
        return FormField.zero(a.chart, a.chart.dim)
    return FormField(a.chart, p, ext.wedge_coeffs(a.comps, b.comps))


def pullback_field(R: EndoField, alpha: FormField) -> FormField:
    """Symbolic R# alpha, (R# a)(v1..vp) = a(R v1, .., R vp)."""
    R.chart._same(alpha.chart)
    return FormField(alpha.chart, alpha.degree,
                     ext.pullback_coeffs(R.matrix, alpha.comps, alpha.degree))


def tau_field(L: EndoField, alpha: FormField) -> FormField:
    L.chart._same(alpha.chart)
    return FormField(alpha.chart, alpha.degree, ext.tau_coeffs(L.matrix, alpha.comps))


def lie_bracket_field(X: VectorField, Y: VectorField) -> VectorField:
    X.chart._same(Y.chart)
    ch = X.chart
    comps = []
    for k in range(ch.dim):
        terms = []
        for j, name in enumerate(ch.names):
            terms.append(X.comps[j] * differentiate(Y.comps[k], name))
            terms.append(-(Y.comps[j] * differentiate(X.comps[k], name)))
        comps.append(sum_exprs(terms))
    return VectorField(ch, tuple(comps))


def lie_bracket(X: VectorField, Y: VectorField, point, exact: bool = False) -> np.ndarray:
    """[X, Y]^k = X^j d_j Y^k - Y^j d_j X^k at ``point``."""
    return lie_bracket_field(X, Y)(point, exact)


# -- periodicity lint ----------------------------------------------------------------

def _integer_affine(e: Expr, periodic_names: set) -> bool:
    """True if ``e`` is affine in the periodic names with integer coefficients."""
    for name in periodic_names & free_symbols(e):
        d = differentiate(e, name)
        if not (d.is_constant and isinstance(d, Const) and d.value.denominator == 1):
            return False
    return True


def _periodic_ok(e: Expr, periodic_names: set) -> bool:
    if not (free_symbols(e) & periodic_names):
        return True
    if isinstance(e, Sym):
        return False
    if isinstance(e, Func):
        if e.name in ("sin", "cos"):
            return _integer_affine(e.a, periodic_names) or _periodic_ok(e.a, periodic_names)
        return _periodic_ok(e.a, periodic_names)
    if hasattr(e, "b"):
        return _periodic_ok(e.a, periodic_names) and _periodic_ok(e.b, periodic_names)
    return _periodic_ok(e.a, periodic_names)


def lint_periodic(field, raise_on_error: bool = True) -> list:
    """Reject components that are not 2*pi-periodic in the chart's periodic coordinates."""
    chart = field.chart
    per = {n for n, p in zip(chart.names, chart.periodic) if p}
    if isinstance(field, ScalarField):
        items = [("", field.expr)]
    elif isinstance(field, VectorField):
        items = [(str(k + 1), c) for k, c in enumerate(field.comps)]
    elif isinstance(field, FormField):
        items = [(",".join(str(i + 1) for i in I), c) for I, c in field.comps.items()]
    elif isinstance(field, EndoField):
        items = [(f"{i + 1},{j + 1}", c) for i, row in enumerate(field.matrix)
                 for j, c in enumerate(row)]
    else:
        raise TypeError(type(field))
    bad = [f"component {k or 'value'}: {c}" for k, c in items if not _periodic_ok(c, per)]
    if bad and raise_on_error:
        raise NonPeriodicError("non-periodic components on a periodic chart: " + "; ".join(bad))
    return bad


# -- sampling ----------------------------------------------------------------------------

def sample_points(chart: Chart, lattice: int = 0, random: int = 0, seed: int = 0,
                  box: float = 1.0) -> list:
    """Lattice points (``lattice`` per axis) plus seeded uniform random points.

    Periodic coordinates range over [0, 2 pi); others over [-box, box].
    """
    lo = np.array([0.0 if p else -box for p in chart.periodic])
    hi = np.array([2 * np.pi if p else box for p in chart.periodic])
    pts = []
    if lattice > 0:
        axes = []
        for p, a, b in zip(chart.periodic, lo, hi):
            if p:
                axes.append(a + (b - a) * (np.arange(lattice) + 0.5) / lattice)
            else:
                axes.append(np.linspace(a, b, lattice) if lattice > 1 else np.array([0.0]))
        grid = np.meshgrid(*axes, indexing="ij")
        pts.extend(np.stack([g.ravel() for g in grid], axis=1))
    if random > 0:
        rng = np.random.default_rng(seed)
        pts.extend(rng.uniform(lo, hi, size=(random, chart.dim)))
    return [np.asarray(p, dtype=float) for p in pts]

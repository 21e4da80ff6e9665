"""Nijenhuis tensors, the twisted derivation d_R and the zero-order operator r(R).

d_R is the conjugate R# d (R^{-1})#, with R acting on forms by pullback, so
that (d_R f)(X) = df(R X).  All derivatives are symbolic; (R^{-1})# alpha
is materialized through the adjugate/determinant inverse of R.

Note on signs: with the decomposition d_R = d + [tau(S), d] - r(R) (which
is verified here to machine precision), the graded commutator on functions
is [d, d_R] f = -r(R)(df), i.e. [d, d_R] f (X, Y) = -df(R^{-1} N_R(X, Y)).
``commutator_identity_residual`` takes the sign as a parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import exterior as ext
from .exterior import FormValue
from .fields import (EndoField, FormField, ScalarField, VectorField,
                     exterior_derivative, exterior_derivative_field,
                     lie_bracket, pullback_field, tau_field)

__all__ = [
    "NijenhuisValue", "SingularEndomorphismError", "nijenhuis", "nijenhuis_on",
    "nijenhuis_inverse_identity", "d_twisted", "d_twisted_field", "r_operator",
    "r_one_forms", "decomposition_residual", "decomposition_terms",
    "commutator_d_dR", "commutator_identity_residual", "recover_endomorphism",
    "maurer_cartan_norms", "DET_TOL",
]

DET_TOL = 1e-12


class SingularEndomorphismError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NijenhuisValue:
    """components[k, i, j] = N(d_i, d_j)^k, antisymmetric in (i, j)."""

    components: np.ndarray

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    def __call__(self, X, Y) -> np.ndarray:
        return np.einsum("kij,i,j->k", self.components, np.asarray(X), np.asarray(Y))

    def max_abs(self) -> float:
        return float(np.abs(self.components).max()) if self.components.size else 0.0

    def antisymmetry_defect(self) -> float:
        return float(np.abs(self.components + self.components.transpose(0, 2, 1)).max())


def nijenhuis(S: EndoField, point) -> NijenhuisValue:
    """N_S(X,Y) = [SX,SY] + S^2[X,Y] - S[SX,Y] - S[X,SY] on coordinate fields.

    With X = d_i, Y = d_j the bracket [X, Y] vanishes and SX is the i-th
    column of S, so only S and its first partials at the point are needed.
    """
    Sv = S(point)
    D = S.derivatives(point)  # D[l, k, j] = d_l S^k_j
    n = S.chart.dim
    N = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            bracket = Sv[:, i] @ D[:, :, j] - Sv[:, j] @ D[:, :, i]  # [S d_i, S d_j]
            N[:, i, j] = bracket + Sv @ D[j, :, i] - Sv @ D[i, :, j]
    return NijenhuisValue(N)


def nijenhuis_on(S: EndoField, X: VectorField, Y: VectorField, point) -> np.ndarray:
    """The defining formula on arbitrary vector fields, via symbolic brackets."""
    Sv = S(point)
    SX, SY = S @ X, S @ Y
    return (lie_bracket(SX, SY, point) + Sv @ Sv @ lie_bracket(X, Y, point)
            - Sv @ lie_bracket(SX, Y, point) - Sv @ lie_bracket(X, SY, point))


@lru_cache(maxsize=128)
def _symbolic_inverse(R: EndoField) -> EndoField:
    return R.inverse()


def _checked_value(R: EndoField, point) -> np.ndarray:
    Rv = R(point)
    d = np.linalg.det(Rv)
    if abs(d) < DET_TOL:
        raise SingularEndomorphismError(f"|det R| = {abs(d):.3g} below {DET_TOL} at {list(point)}")
    return Rv


def nijenhuis_inverse_identity(R: EndoField, point) -> float:
    """max_{i<j} |N_{R^-1}(d_i, d_j) - R^-2 N_R(R^-1 d_i, R^-1 d_j)|."""
    Rv = _checked_value(R, point)
    Ri = np.linalg.inv(Rv)
    lhs = nijenhuis(_symbolic_inverse(R), point).components
    NR = nijenhuis(R, point).components
    rhs = np.einsum("ka,abc,bi,cj->kij", Ri @ Ri, NR, Ri, Ri)
    n = R.chart.dim
    iu = np.triu_indices(n, 1)
    return float(np.abs((lhs - rhs)[:, iu[0], iu[1]]).max()) if n > 1 else 0.0


def d_twisted_field(R: EndoField, alpha: FormField) -> FormField:
    """d_R alpha = R# d (R^{-1})# alpha as an exact symbolic form field."""
    if alpha.degree == 0:
        inner = alpha
    else:
        inner = pullback_field(_symbolic_inverse(R), alpha)
    return pullback_field(R, exterior_derivative_field(inner))


def d_twisted(R: EndoField, alpha: FormField, point) -> FormValue:
    _checked_value(R, point)
    return d_twisted_field(R, alpha)(point)


def r_one_forms(R: EndoField, point) -> list:
    """r(R)(dx^m) as 2-forms: (r dx^m)(d_a, d_b) = (R^{-1} N_R(d_a, d_b))^m."""
    Rv = _checked_value(R, point)
    n = R.chart.dim
    M = np.einsum("mk,kab->mab", np.linalg.inv(Rv), nijenhuis(R, point).components)
    return [FormValue(n, 2, {(a, b): M[m, a, b] for a in range(n) for b in range(a + 1, n)})
            for m in range(n)]


def r_operator(R: EndoField, alpha: FormField, point) -> FormValue:
    """Zero-order degree-one derivation; 0 on functions, alpha(R^-1 N_R) on 1-forms."""
    n = R.chart.dim
    p = alpha.degree
    if p == 0 or p >= n:
        return FormValue.zero(n, min(p + 1, n))
    r1 = r_one_forms(R, point)
    a = alpha(point)
    out = FormValue.zero(n, p + 1)
    for I, c in a.coeffs.items():
        for h, i in enumerate(I):
            left = _basis_product(n, I[:h])
            right = _basis_product(n, I[h + 1:])
            term = ext.wedge(ext.wedge(left, r1[i]), right)
            out = out + term * (c if h % 2 == 0 else -c)
    return out


def _basis_product(n: int, I: tuple) -> FormValue:
    return FormValue(n, len(I), {tuple(I): 1})


def decomposition_terms(R: EndoField, alpha: FormField, point) -> dict:
    """The four operators of d_R = d + [tau(S), d] - r(R) applied to alpha."""
    chart = R.chart
    S = R - EndoField.identity(chart)
    d_alpha = exterior_derivative(alpha, point)
    comm = (ext.tau_action(S(point), d_alpha)
            - exterior_derivative(tau_field(S, alpha), point))
    return {
        "d_R": d_twisted(R, alpha, point),
        "d": d_alpha,
        "tau_comm": comm,
        "r": r_operator(R, alpha, point),
    }


def decomposition_residual(R: EndoField, alpha: FormField, point) -> float:
    t = decomposition_terms(R, alpha, point)
    return (t["d_R"] - t["d"] - t["tau_comm"] + t["r"]).max_abs()


def commutator_d_dR(R: EndoField, f: ScalarField, point) -> FormValue:
    """[d, d_R] f = d(d_R f) + d_R(d f); anticommutator of two odd operators."""
    _checked_value(R, point)
    fa = f.as_form()
    first = exterior_derivative_field(d_twisted_field(R, fa))
    second = d_twisted_field(R, exterior_derivative_field(fa))
    return (first + second)(point)


def commutator_identity_residual(R: EndoField, f: ScalarField, point, sign: int = -1) -> float:
    """max |[d, d_R] f - sign * df(R^{-1} N_R(., .))| over coordinate pairs."""
    lhs = commutator_d_dR(R, f, point)
    df = exterior_derivative(f.as_form(), point)
    r1 = r_one_forms(R, point)
    rhs = FormValue.zero(R.chart.dim, 2)
    for (m,), c in df.coeffs.items():
        rhs = rhs + r1[m] * c
    return (lhs - rhs * sign).max_abs()


def recover_endomorphism(deltas, points=()) -> EndoField:
    """R with R^j_i = (delta x^j)(d_i), from the images of the coordinate functions."""
    deltas = list(deltas)
    if not deltas:
        raise ValueError("need one 1-form per coordinate")
    chart = deltas[0].chart
    n = chart.dim
    if len(deltas) != n:
        raise ValueError(f"need {n} 1-forms, got {len(deltas)}")
    rows = []
    for dx in deltas:
        chart._same(dx.chart)
        if dx.degree != 1:
            raise ValueError("delta x^j must be 1-forms")
        rows.append(tuple(dx.comps.get((i,), 0) for i in range(n)))
    R = EndoField(chart, tuple(rows))
    for pt in points:
        d = np.linalg.det(R(pt))
        if abs(d) < DET_TOL:
            raise SingularEndomorphismError(
                f"recovered endomorphism is singular at {list(pt)}: the derivation "
                "kills a non-constant function")
    return R


def maurer_cartan_norms(R: EndoField, alpha: FormField, point) -> tuple:
    """(|daleth d_R + 1/2 [d_R, d_R]| alpha, |[d, d_R]| alpha) at ``point``.

    daleth d_R = [d, d_R] and 1/2 [d_R, d_R] = d_R^2, so the two agree
    whenever d_R^2 = 0.
    """
    _checked_value(R, point)
    dR = d_twisted_field(R, alpha)
    comm = exterior_derivative_field(dR) + d_twisted_field(R, exterior_derivative_field(alpha))
    mc = comm + d_twisted_field(R, dR)
    return mc(point).max_abs(), comm(point).max_abs()

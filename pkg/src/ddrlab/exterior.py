"""Pointwise exterior algebra on a 2n-dimensional real vector space.

Forms are stored sparsely over strictly increasing multi-indices.  Indices
are 0-based internally (``(0, 1)`` is dx1 ^ dx2); printing is 1-based.
Coefficients may be any scalars supporting ring arithmetic: floats and
complex numbers, exact ``Fraction`` values, or ``Expr`` trees (the fields
module reuses these kernels symbolically).

Conventions
-----------
* Forms evaluate on vectors by the determinant rule,
  ``(dx^1 ^ dx^2)(u, v) = u^1 v^2 - u^2 v^1``.
* An endomorphism ``R`` acts on forms by pullback,
  ``(R# a)(v1, ..., vp) = a(R v1, ..., R vp)``; so ``R# Q# = (Q R)#``.
  This is the action for which ``d_R f (X) = df(R X)``.
* The default orientation is ``dx^1 ^ ... ^ dx^{2n}``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .expr import Expr

__all__ = [
    "FormValue", "multi_indices", "perm_sign", "merge_sign",
    "det", "inverse", "compound", "matmul",
    "wedge", "wedge_coeffs", "tau_action", "tau_coeffs",
    "pullback_action", "pullback_coeffs", "gram_pairing",
    "volume_form", "kappa_form", "symplectic_volume", "pfaffian",
    "hodge_star", "sympl_star", "sympl_pairing_matrix", "polar_decompose",
    "as_metric", "as_symplectic", "as_endo",
    "full_basis", "operator_matrix", "degree_slices",
]


# -- multi-index bookkeeping ----------------------------------------------------

@lru_cache(maxsize=None)
def multi_indices(dim: int, p: int) -> tuple:
    """Strictly increasing ``p``-tuples in ``range(dim)``, lexicographic."""
    if p < 0 or p > dim:
        return ()
    return tuple(itertools.combinations(range(dim), p))


@lru_cache(maxsize=None)
def _index_position(dim: int, p: int) -> dict:
    return {I: k for k, I in enumerate(multi_indices(dim, p))}


def perm_sign(seq: Sequence[int]) -> int:
    """Sign of the permutation sorting ``seq``; 0 on repeated entries."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def merge_sign(I: tuple, J: tuple):
    """(sign, sorted union) with dx^I ^ dx^J = sign dx^union, or (0, None)."""
    if set(I) & set(J):
        return 0, None
    # count inversions between the two increasing runs
    inv = 0
    j = 0
    for i in I:
        while j < len(J) and J[j] < i:
            j += 1
        inv += j
    return (-1 if inv % 2 else 1), tuple(sorted(I + J))


def _is_zero(c) -> bool:
    if isinstance(c, Expr):
        return c.is_zero
    return c == 0


def _check_index(I, dim: int, p: int):
    if len(I) != p:
        raise ValueError(f"multi-index {I} has length {len(I)}, expected {p}")
    if any(not 0 <= i < dim for i in I):
        raise ValueError(f"multi-index {I} out of range for dimension {dim}")
    if any(I[k] >= I[k + 1] for k in range(len(I) - 1)):
        raise ValueError(f"multi-index {I} is not strictly increasing")


# -- forms -------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FormValue:
    """A degree-``degree`` exterior form at a point of a ``dim``-space."""

    dim: int
    degree: int
    coeffs: Mapping[tuple, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dimension must be positive")
        if not 0 <= self.degree <= self.dim:
            raise ValueError(f"degree {self.degree} outside [0, {self.dim}]")
        clean = {}
        for I, c in dict(self.coeffs).items():
            I = tuple(int(i) for i in I)
            _check_index(I, self.dim, self.degree)
            if not _is_zero(c):
                clean[I] = c
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def zero(cls, dim: int, degree: int) -> "FormValue":
        return cls(dim, degree, {})

    @classmethod
    def scalar(cls, dim: int, value) -> "FormValue":
        return cls(dim, 0, {(): value})

    @classmethod
    def basis(cls, dim: int, *indices: int) -> "FormValue":
        """dx^{i1} ^ ... ^ dx^{ip} for arbitrary (0-based) index order."""
        s = perm_sign(indices)
        return cls(dim, len(indices), {tuple(sorted(indices)): s} if s else {})

    @classmethod
    def one_form(cls, values: Sequence) -> "FormValue":
        return cls(len(values), 1, {(i,): v for i, v in enumerate(values)})

    @classmethod
    def from_vector(cls, dim: int, degree: int, vec) -> "FormValue":
        return cls(dim, degree, dict(zip(multi_indices(dim, degree), vec)))

    def to_vector(self, dtype=complex) -> np.ndarray:
        pos = _index_position(self.dim, self.degree)
        out = np.zeros(len(pos), dtype=dtype)
        for I, c in self.coeffs.items():
            out[pos[I]] = c
        return out

    def __getitem__(self, I) -> object:
        return self.coeffs.get(tuple(I), 0)

    def _compatible(self, other: "FormValue"):
        if self.dim != other.dim or self.degree != other.degree:
            raise ValueError("forms of different dimension or degree")

    def __add__(self, other: "FormValue") -> "FormValue":
        self._compatible(other)
        out = dict(self.coeffs)
        for I, c in other.coeffs.items():
            out[I] = out[I] + c if I in out else c
        return FormValue(self.dim, self.degree, out)

    def __neg__(self) -> "FormValue":
        return FormValue(self.dim, self.degree, {I: -c for I, c in self.coeffs.items()})

    def __sub__(self, other: "FormValue") -> "FormValue":
        return self + (-other)

    def __mul__(self, s) -> "FormValue":
        if isinstance(s, FormValue):
            return wedge(self, s)
        return FormValue(self.dim, self.degree, {I: c * s for I, c in self.coeffs.items()})

    def __rmul__(self, s) -> "FormValue":
        return FormValue(self.dim, self.degree, {I: s * c for I, c in self.coeffs.items()})

    def __xor__(self, other: "FormValue") -> "FormValue":
        return wedge(self, other)

    def __call__(self, *vectors):
        """Evaluate on ``degree`` tangent vectors."""
        if len(vectors) != self.degree:
            raise ValueError(f"a {self.degree}-form takes {self.degree} vectors")
        V = [list(v) for v in vectors]
        total = 0
        for I, c in self.coeffs.items():
            sub = [[V[col][row] for col in range(self.degree)] for row in I]
            total = total + c * _det_generic(sub)
        return total

    def max_abs(self) -> float:
        return max((abs(complex(c)) for c in self.coeffs.values()), default=0.0)

    def equals(self, other: "FormValue", tol: float = 0.0) -> bool:
        self._compatible(other)
        return (self - other).max_abs() <= tol

    def __eq__(self, other) -> bool:
        if not isinstance(other, FormValue):
            return NotImplemented
        return (self.dim == other.dim and self.degree == other.degree
                and (self - other).coeffs == {})

    __hash__ = None

    def __repr__(self) -> str:
        if not self.coeffs:
            return f"FormValue(dim={self.dim}, degree={self.degree}, 0)"
        terms = []
        for I in sorted(self.coeffs):
            name = "^".join(f"dx{i + 1}" for i in I) or "1"
            terms.append(f"({self.coeffs[I]})*{name}")
        return f"FormValue(dim={self.dim}, " + " + ".join(terms) + ")"


# -- small generic linear algebra ---------------------------------------------------

def _is_exact_matrix(M) -> bool:
    if isinstance(M, np.ndarray):
        return M.dtype == object
    return any(isinstance(x, (Fraction, Expr, int)) and not isinstance(x, bool)
               for row in M for x in row) and not any(
        isinstance(x, (float, complex)) for row in M for x in row)


def _det_generic(M) -> object:
    """Laplace expansion memoized over column subsets; exact in any ring."""
    n = len(M)
    if n == 0:
        return 1
    memo: dict = {}

    def rec(row: int, cols: tuple):
        if row == n:
            return 1
        key = cols
        if key in memo:
            return memo[key]
        acc = 0
        for k, c in enumerate(cols):
            entry = M[row][c]
            if _is_zero(entry):
                continue
            term = entry * rec(row + 1, cols[:k] + cols[k + 1:])
            acc = acc + term if k % 2 == 0 else acc - term
        memo[key] = acc
        return acc

    return rec(0, tuple(range(n)))


def det(M):
    """Determinant; exact for object/rational matrices, LAPACK otherwise."""
    if _is_exact_matrix(M):
        return _det_generic(M)
    M = np.asarray(M)
    if M.shape[0] == 0:
        return 1.0
    return np.linalg.det(M)


def matmul(A, B):
    """Matrix product for nested sequences of arbitrary ring elements."""
    n, m, k = len(A), len(B), len(B[0])
    out = []
    for i in range(n):
        row = []
        for j in range(k):
            acc = 0
            for l in range(m):
                a, b = A[i][l], B[l][j]
                if not (_is_zero(a) or _is_zero(b)):
                    acc = acc + a * b
            row.append(acc)
        out.append(row)
    return out


def inverse(M):
    """Matrix inverse; adjugate over determinant in the exact backend."""
    if not _is_exact_matrix(M):
        return np.linalg.inv(np.asarray(M))
    n = len(M)
    D = _det_generic(M)
    if _is_zero(D):
        raise np.linalg.LinAlgError("singular matrix")
    inv_d = (1 / D) if isinstance(D, Expr) else Fraction(1) / D
    out = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[M[r][c] for c in range(n) if c != i] for r in range(n) if r != j]
            cof = _det_generic(minor)
            out[i][j] = (cof if (i + j) % 2 == 0 else -cof) * inv_d
    return np.array(out, dtype=object)


def compound(M, p: int) -> np.ndarray:
    """p-th compound matrix: entry (I, J) is det M[I, J] over increasing I, J."""
    n = len(M)
    idx = multi_indices(n, p)
    if _is_exact_matrix(M):
        out = np.empty((len(idx), len(idx)), dtype=object)
        for a, I in enumerate(idx):
            for b, J in enumerate(idx):
                out[a, b] = _det_generic([[M[i][j] for j in J] for i in I])
        return out
    M = np.asarray(M)
    if p == 0:
        return np.ones((1, 1), dtype=M.dtype)
    rows = np.array(idx)
    sub = M[rows[:, None, :, None], rows[None, :, None, :]]
    return np.linalg.det(sub)


# -- typed matrix validation -----------------------------------------------------

def as_endo(R, dim: int | None = None):
    M = R if _is_exact_matrix(R) else np.asarray(R)
    n = len(M)
    if any(len(row) != n for row in M):
        raise ValueError("endomorphism matrix must be square")
    if dim is not None and n != dim:
        raise ValueError(f"dimension mismatch: {n} != {dim}")
    if not _is_exact_matrix(M) and not np.all(np.isfinite(M)):
        raise ValueError("endomorphism has non-finite entries")
    return M


def as_metric(g, tol: float = 1e-12):
    G = as_endo(g)
    if _is_exact_matrix(G):
        n = len(G)
        if any(G[i][j] != G[j][i] for i in range(n) for j in range(n)):
            raise ValueError("metric is not symmetric")
        if any(det([row[:k] for row in G[:k]]) <= 0 for k in range(1, n + 1)):
            raise ValueError("metric is not positive definite")
        return G
    G = np.asarray(G, dtype=float)
    scale = max(1.0, np.abs(G).max())
    if np.abs(G - G.T).max() > tol * scale:
        raise ValueError("metric is not symmetric")
    if np.linalg.eigvalsh((G + G.T) / 2).min() <= 0:
        raise ValueError("metric is not positive definite")
    return G


def as_symplectic(kappa, tol: float = 1e-12):
    K = as_endo(kappa)
    n = len(K)
    if n % 2:
        raise ValueError("symplectic form needs even dimension")
    if _is_exact_matrix(K):
        if any(K[i][j] != -K[j][i] for i in range(n) for j in range(n)):
            raise ValueError("kappa is not skew-symmetric")
        if det(K) == 0:
            raise ValueError("kappa is degenerate")
        return K
    K = np.asarray(K, dtype=float)
    scale = max(1.0, np.abs(K).max())
    if np.abs(K + K.T).max() > tol * scale:
        raise ValueError("kappa is not skew-symmetric")
    if abs(np.linalg.det(K)) <= tol * scale ** n:
        raise ValueError("kappa is degenerate")
    return K


# -- algebra kernels on coefficient dictionaries --------------------------------------

def wedge_coeffs(a: Mapping, b: Mapping) -> dict:
    out: dict = {}
    for I, ca in a.items():
        for J, cb in b.items():
            s, K = merge_sign(I, J)
            if not s:
                continue
            term = ca * cb
            if s < 0:
                term = -term
            out[K] = out[K] + term if K in out else term
    return out


def pullback_coeffs(R, coeffs: Mapping, p: int) -> dict:
    """Coefficients of R# a: (R# a)_I = sum_J a_J det R[J, I]."""
    if p == 0:
        return dict(coeffs)
    n = len(R)
    out: dict = {}
    for J, c in coeffs.items():
        for I in multi_indices(n, p):
            m = _det_generic([[R[j][i] for i in I] for j in J])
            if _is_zero(m):
                continue
            out[I] = out[I] + c * m if I in out else c * m
    return out


def tau_coeffs(L, coeffs: Mapping) -> dict:
    """tau(L) as the derivation extending a -> a(L .) on 1-forms."""
    n = len(L)
    out: dict = {}
    for I, c in coeffs.items():
        for h, i in enumerate(I):
            rest_before, rest_after = I[:h], I[h + 1:]
            for m in range(n):
                l = L[i][m]
                if _is_zero(l) or m in rest_before or m in rest_after:
                    continue
                s = perm_sign(rest_before + (m,) + rest_after)
                K = tuple(sorted(rest_before + (m,) + rest_after))
                term = c * l
                if s < 0:
                    term = -term
                out[K] = out[K] + term if K in out else term
    return out


# -- public pointwise operations -------------------------------------------------------

def _same_dim(*forms: FormValue):
    dims = {f.dim for f in forms}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")


def wedge(a: FormValue, b: FormValue) -> FormValue:
    _same_dim(a, b)
    p = a.degree + b.degree
    if p > a.dim:
        return FormValue.zero(a.dim, a.dim)  # nothing survives past top degree
    return FormValue(a.dim, p, wedge_coeffs(a.coeffs, b.coeffs))


def tau_action(L, a: FormValue) -> FormValue:
    """(tau(L) a)(v1..vp) = sum_h a(v1, .., L v_h, .., vp)."""
    L = as_endo(L, a.dim)
    return FormValue(a.dim, a.degree, tau_coeffs(L, a.coeffs))


def pullback_action(R, a: FormValue) -> FormValue:
    """(R# a)(v1..vp) = a(R v1, .., R vp)."""
    R = as_endo(R, a.dim)
    return FormValue(a.dim, a.degree, pullback_coeffs(R, a.coeffs, a.degree))


def gram_pairing(B, a: FormValue, b: FormValue):
    """Determinant extension of a bilinear form on 1-forms (matrix B[i][j] = B(dx^i, dx^j))."""
    _same_dim(a, b)
    if a.degree != b.degree:
        raise ValueError(f"degree mismatch: {a.degree} != {b.degree}")
    total = 0
    for I, ca in a.coeffs.items():
        for J, cb in b.coeffs.items():
            m = _det_generic([[B[i][j] for j in J] for i in I])
            if not _is_zero(m):
                total = total + ca * cb * m
    return total


def volume_form(dim: int, scale=1) -> FormValue:
    return FormValue(dim, dim, {tuple(range(dim)): scale})


def kappa_form(K) -> FormValue:
    """The 2-form sum_{i<j} K_ij dx^i ^ dx^j, so kappa(X, Y) = X^T K Y."""
    n = len(K)
    return FormValue(n, 2, {(i, j): K[i][j] for i in range(n) for j in range(i + 1, n)})


def symplectic_volume(K) -> FormValue:
    """kappa^n / n!, computed by repeated wedging."""
    n2 = len(K)
    kap = kappa_form(K)
    acc = FormValue.scalar(n2, 1)
    for _ in range(n2 // 2):
        acc = wedge(acc, kap)
    fact = math.factorial(n2 // 2)
    exact = _is_exact_matrix(K)
    return FormValue(n2, n2, {I: (c * Fraction(1, fact) if exact else c / fact)
                              for I, c in acc.coeffs.items()})


def pfaffian(K):
    """Coefficient of dx^1 ^ .. ^ dx^2n in kappa^n / n!."""
    return symplectic_volume(K)[tuple(range(len(K)))]


def _complement(I: tuple, dim: int) -> tuple:
    return tuple(i for i in range(dim) if i not in I)


def _star(B, scale, a: FormValue) -> FormValue:
    # b -> c with x ^ c = B(x, b) * scale * dx^{1..N} for every p-form x
    dim, p = a.dim, a.degree
    out = {}
    for I in multi_indices(dim, p):
        val = gram_pairing(B, FormValue(dim, p, {I: 1}), a)
        if _is_zero(val):
            continue
        Ic = _complement(I, dim)
        s = perm_sign(I + Ic)
        out[Ic] = val * scale if s > 0 else -(val * scale)
    return FormValue(dim, dim - p, out)


def hodge_star(g, a: FormValue, orientation: int | FormValue | None = None) -> FormValue:
    """a ^ *b = <a, b>_g dvol_g; ``orientation`` is +-1 or a top-degree form."""
    G = as_metric(g)
    if len(G) != a.dim:
        raise ValueError(f"metric dimension {len(G)} != form dimension {a.dim}")
    sign = 1
    if isinstance(orientation, FormValue):
        if orientation.dim != a.dim or orientation.degree != a.dim:
            raise ValueError("orientation must be a top-degree form of the same dimension")
        top = orientation[tuple(range(a.dim))]
        if _is_zero(top):
            raise ValueError("orientation form vanishes")
        sign = 1 if top > 0 else -1
    elif orientation is not None:
        sign = 1 if orientation > 0 else -1
    Ginv = inverse(G)
    vol = math.sqrt(float(det(G))) if not _is_exact_matrix(G) else _exact_sqrt(det(G))
    return _star(Ginv, vol * sign, a)


def _exact_sqrt(x: Fraction):
    x = Fraction(x)
    rn, rd = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if rn * rn == x.numerator and rd * rd == x.denominator:
        return Fraction(rn, rd)
    return math.sqrt(x)


def sympl_star(kappa, a: FormValue) -> FormValue:
    """a ^ *b = kappa(a, b) kappa^n/n!, kappa extended to r-forms by Gram determinants.

    The pairing on 1-forms is kappa(a#, b#) with a = kappa(a#, .), whose
    matrix is -K^{-1}.
    """
    K = as_symplectic(kappa)
    if len(K) != a.dim:
        raise ValueError(f"kappa dimension {len(K)} != form dimension {a.dim}")
    return _star(-inverse(K), pfaffian(K), a)


def sympl_pairing_matrix(kappa):
    """Matrix of the pairing kappa induces on 1-forms."""
    return -inverse(as_symplectic(kappa))


def polar_decompose(R, g=None, tol: float = 1e-12):
    """R = S J with S g-symmetric positive definite and J g-orthogonal.

    Computed by an SVD in a g-orthonormal frame (Cholesky factor of g).
    """
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    G = np.eye(n) if g is None else np.asarray(as_metric(g), dtype=float)
    s = np.linalg.svd(R, compute_uv=False)
    if s.min() <= tol * max(1.0, s.max()):
        raise np.linalg.LinAlgError("polar decomposition of a singular endomorphism")
    L = np.linalg.cholesky(G)  # G = L L^T; orthonormal coordinates w = L^T v
    Lt_inv = np.linalg.inv(L.T)
    Rh = L.T @ R @ Lt_inv
    U, sig, Vt = np.linalg.svd(Rh)
    Jh = U @ Vt
    Sh = U @ np.diag(sig) @ U.T
    J = Lt_inv @ Jh @ L.T
    S = Lt_inv @ Sh @ L.T
    return S, J


# -- dense representations --------------------------------------------------------------

@lru_cache(maxsize=None)
def full_basis(dim: int) -> tuple:
    """All increasing multi-indices ordered by degree, then lexicographically."""
    return tuple(I for p in range(dim + 1) for I in multi_indices(dim, p))


@lru_cache(maxsize=None)
def degree_slices(dim: int) -> tuple:
    out, start = [], 0
    for p in range(dim + 1):
        size = math.comb(dim, p)
        out.append(slice(start, start + size))
        start += size
    return tuple(out)


def operator_matrix(fn: Callable[[FormValue], FormValue], dim: int, degrees=None,
                    dtype=complex) -> np.ndarray:
    """Dense matrix on the full exterior algebra of a map given on basis forms."""
    basis = full_basis(dim)
    pos = {I: k for k, I in enumerate(basis)}
    M = np.zeros((len(basis), len(basis)), dtype=dtype)
    for col, I in enumerate(basis):
        if degrees is not None and len(I) not in degrees:
            continue
        img = fn(FormValue(dim, len(I), {I: 1}))
        for J, c in img.coeffs.items():
            M[pos[J], col] += c
    return M

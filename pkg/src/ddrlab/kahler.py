"""Kähler reconstruction from a calibrated pair (kappa, g).

Convention: R is defined by g(X, Y) = kappa(R X, Y).  With kappa(X, Y) =
X^T K Y and g(X, Y) = X^T G Y this gives G = R^T K, i.e. R = -K^{-1} G.
The symplectic-star checks in :mod:`ddrlab.torus` use the inverse endomorphism
(g(X, Y) = kappa(R^{-1} X, Y)); ``convert_convention`` maps between the two.

Metric fields are symmetric ``EndoField`` matrices (entry [i][j] = g_ij);
kappa is a degree-2 ``FormField``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import exterior as ext
from .expr import Const
from .fields import EndoField, FormField, exterior_derivative
from .nijenhuis import nijenhuis

__all__ = [
    "Spectrum", "OddPolynomial", "ReconstructionReport", "SpectrumError",
    "IllConditionedError", "JConstructionError", "matrix_of_two_form",
    "two_form_of_matrix", "compatibility_endo", "compatibility_field",
    "convert_convention", "check_calibrated", "spectrum_of", "constant_spectrum",
    "interpolation_polynomial", "build_J", "verify_kahler", "polar_oracle_compare",
    "reconstruct", "DEFAULT_TOLERANCES",
]

DEFAULT_TOLERANCES = {
    "cluster": 1e-7,
    "spectrum_spread": 1e-8,
    "calibration": 1e-9,
    "j_squared": 1e-9,
    "skew": 1e-9,
    "orthogonal": 1e-9,
    "s_symmetric": 1e-9,
    "nijenhuis_J": 1e-8,
    "closed": 1e-9,
    "commute": 1e-10,
    "nijenhuis_R2": 1e-8,
    "off_block": 1e-9,
    "polar": 1e-8,
}


class SpectrumError(ValueError):
    pass


class IllConditionedError(ValueError):
    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class JConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class Spectrum:
    """Distinct square roots of the eigenvalues of -R^2, largest first."""

    lambdas: tuple
    multiplicities: tuple

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lambdas)
        mult = tuple(int(m) for m in self.multiplicities)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "multiplicities", mult)
        if len(lam) != len(mult) or not lam:
            raise SpectrumError("need one multiplicity per eigenvalue")
        if any(x <= 0 for x in lam):
            raise SpectrumError(f"eigenvalues must be positive: {lam}")
        if any(a <= b for a, b in zip(lam, lam[1:])):
            raise SpectrumError(f"eigenvalues must be strictly decreasing: {lam}")
        if any(m <= 0 or m % 2 for m in mult):
            raise SpectrumError(f"multiplicities must be even and positive: {mult}")

    @property
    def dim(self) -> int:
        return sum(self.multiplicities)

    @property
    def m(self) -> int:
        return len(self.lambdas)

    def determinant(self) -> float:
        """Product of lambda_j^{2k_j}, i.e. det R for an R with this spectrum."""
        return float(np.prod([x ** k for x, k in zip(self.lambdas, self.multiplicities)]))

    def to_dict(self) -> dict:
        return {"lambdas": list(self.lambdas), "multiplicities": list(self.multiplicities)}


@dataclass(frozen=True)
class OddPolynomial:
    """P(X) = a1 X + a3 X^3 + ..., stored as ``coeffs = (a1, a3, ...)``."""

    coeffs: tuple
    condition: float = 1.0

    def __post_init__(self):
        c = tuple(float(x) for x in self.coeffs)
        if not c or not all(math.isfinite(x) for x in c):
            raise ValueError(f"odd polynomial needs finite real coefficients: {self.coeffs}")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return 2 * len(self.coeffs) - 1

    def dense(self) -> np.ndarray:
        """All coefficients a0, a1, ..., a_degree (even ones are zero)."""
        out = np.zeros(self.degree + 1)
        out[1::2] = self.coeffs
        return out

    def __call__(self, x):
        x2 = x * x
        acc = 0 * x
        for a in reversed(self.coeffs):
            acc = acc * x2 + a
        return x * acc

    def of_matrix(self, M) -> np.ndarray:
        """Horner in M^2, then multiply by M."""
        M = np.asarray(M)
        M2 = M @ M
        acc = np.zeros_like(M2)
        eye = np.eye(len(M), dtype=M2.dtype)
        for a in reversed(self.coeffs):
            acc = acc @ M2 + a * eye
        return M @ acc

    def to_dict(self) -> dict:
        return {"odd_coefficients": list(self.coeffs), "degree": self.degree,
                "condition": self.condition}


# -- fields of bilinear forms ------------------------------------------------------------

def matrix_of_two_form(kappa: FormField) -> EndoField:
    """Skew matrix field K with kappa = sum_{i<j} K_ij dx^i ^ dx^j."""
    if kappa.degree != 2:
        raise ValueError("kappa must be a 2-form")
    n = kappa.chart.dim
    rows = [[Const(0)] * n for _ in range(n)]
    for (i, j), c in kappa.comps.items():
        rows[i][j] = c
        rows[j][i] = -c
    return EndoField(kappa.chart, tuple(tuple(r) for r in rows))


def two_form_of_matrix(W: EndoField) -> FormField:
    """The 2-form (X, Y) -> X^T W Y for a skew matrix field W."""
    n = W.chart.dim
    return FormField(W.chart, 2, {(i, j): W.matrix[i][j]
                                  for i in range(n) for j in range(i + 1, n)})


def compatibility_endo(K, G) -> np.ndarray:
    """R with g(X, Y) = kappa(R X, Y), i.e. R = -K^{-1} G."""
    K = ext.as_symplectic(K)
    G = ext.as_metric(G)
    if abs(np.linalg.det(np.asarray(K, dtype=float))) < 1e-12:
        raise np.linalg.LinAlgError("degenerate kappa")
    return -np.linalg.solve(np.asarray(K, dtype=float), np.asarray(G, dtype=float))


def compatibility_field(kappa: FormField, g: EndoField) -> EndoField:
    """Symbolic R = -K^{-1} G."""
    K = matrix_of_two_form(kappa)
    return (K.inverse() @ g).scaled(-1)


def convert_convention(R):
    """Switch between g = kappa(R., .) and g = kappa(R^{-1}., .); an involution."""
    if isinstance(R, EndoField):
        return R.inverse()
    return np.linalg.inv(np.asarray(R, dtype=float))


def check_calibrated(g: EndoField, kappa: FormField, points, tol: float = 1e-9) -> tuple:
    """Whether the Riemannian volume equals kappa^n/n! at every point.

    Returns (ok, volume_residual, det_residual): the first residual is
    max |sqrt(det g) / |Pf(kappa)| - 1| and the second max |det R - 1|.
    """
    K = matrix_of_two_form(kappa)
    vol_res = det_res = 0.0
    for pt in points:
        Gv, Kv = g(pt), K(pt)
        pf = ext.pfaffian(Kv)
        vol_res = max(vol_res, abs(math.sqrt(np.linalg.det(Gv)) / abs(pf) - 1.0))
        det_res = max(det_res, abs(np.linalg.det(compatibility_endo(Kv, Gv)) - 1.0))
    return bool(vol_res <= tol and det_res <= tol), float(vol_res), float(det_res)


# -- spectrum and interpolation ----------------------------------------------------------

def _orthonormal_frame(G) -> np.ndarray:
    """L with G = L L^T; w = L^T v are g-orthonormal coordinates."""
    return np.linalg.cholesky(np.asarray(G, dtype=float))


def spectrum_of(R, tolerance: float = 1e-7, g=None) -> Spectrum:
    """Cluster the square roots of the eigenvalues of -R^2 at relative ``tolerance``."""
    R = np.asarray(R, dtype=float)
    n = len(R)
    if g is not None:
        L = _orthonormal_frame(g)
        Rh = L.T @ R @ np.linalg.inv(L.T)
        M = -(Rh @ Rh)
        ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    else:
        ev_c = np.linalg.eigvals(-(R @ R))
        scale = max(1.0, float(np.abs(ev_c).max()))
        if np.abs(ev_c.imag).max() > 1e-8 * scale:
            raise SpectrumError("-R^2 has non-real eigenvalues; R is not skew for any metric")
        ev = np.sort(ev_c.real)
    if ev.min() <= 0:
        raise SpectrumError(f"-R^2 has a nonpositive eigenvalue {ev.min():.3g}")
    lam = np.sqrt(ev)[::-1]
    groups: list = []
    for x in lam:
        if groups and abs(groups[-1][0] - x) <= tolerance * groups[-1][0]:
            groups[-1].append(x)
        else:
            groups.append([x])
    mults = [len(gr) for gr in groups]
    if any(m % 2 for m in mults):
        raise SpectrumError(f"odd multiplicity after clustering at tolerance {tolerance}: {mults}")
    assert sum(mults) == n
    return Spectrum(tuple(float(np.mean(gr)) for gr in groups), tuple(mults))


def constant_spectrum(R: EndoField, g: EndoField | None, points, tolerance: float = 1e-7,
                      spread_tol: float = 1e-8) -> tuple:
    """Spectrum shared by all points, and the largest relative spread of any lambda_j.

    Raises SpectrumError when the cluster structure differs between points
    or a spread exceeds ``spread_tol``.
    """
    points = list(points)
    if not points:
        raise ValueError("need at least one sample point")
    spectra = [spectrum_of(R(p), tolerance, None if g is None else g(p)) for p in points]
    ref = spectra[0]
    for s, p in zip(spectra[1:], points[1:]):
        if s.multiplicities != ref.multiplicities:
            raise SpectrumError(f"spectrum changes between sample points: {ref.multiplicities} "
                                f"vs {s.multiplicities} at {list(p)}")
    lam = np.array([s.lambdas for s in spectra])
    spread = float(((lam.max(axis=0) - lam.min(axis=0)) / lam.mean(axis=0)).max())
    if spread > spread_tol:
        raise SpectrumError(f"eigenvalues are not constant: relative spread {spread:.3g}")
    return Spectrum(tuple(lam.mean(axis=0)), ref.multiplicities), spread


def interpolation_polynomial(spectrum, max_condition: float = 1e12,
                             check_tol: float = 1e-10) -> OddPolynomial:
    """The odd real P of degree <= 2m-1 with P(i lambda_j) = i.

    Writing P(X) = X Q(X^2) turns the conditions into Q(-lambda_j^2) = 1/lambda_j,
    an m x m real Vandermonde system.
    """
    lam = np.asarray(spectrum.lambdas if isinstance(spectrum, Spectrum) else spectrum,
                     dtype=float)
    if len(set(lam.tolist())) != len(lam) or (lam <= 0).any():
        raise ValueError(f"need distinct positive lambdas, got {lam.tolist()}")
    t = -lam ** 2
    V = np.vander(t, len(lam), increasing=True)
    cond = float(np.linalg.cond(V))
    if not cond < max_condition:
        raise IllConditionedError(f"interpolation system condition {cond:.3g} exceeds "
                                  f"{max_condition:.3g}", cond)
    q = np.linalg.solve(V, 1.0 / lam)
    P = OddPolynomial(tuple(q), cond)
    err = max(abs(P(1j * x) - 1j) for x in lam)
    if err > check_tol:
        raise IllConditionedError(f"P(i lambda) = i violated by {err:.3g}", cond)
    return P


def build_J(R: EndoField, P: OddPolynomial, points=(), tol: float = 1e-9) -> EndoField:
    """J = P(R) as a symbolic field, checked to square to -I at ``points``."""
    chart = R.chart
    I = EndoField.identity(chart)
    R2 = R @ R
    acc = None
    for a in reversed(P.coeffs):
        term = I.scaled(a)
        acc = term if acc is None else acc @ R2 + term
    J = R @ acc
    n = chart.dim
    for pt in points:
        Jv = J(pt)
        res = float(np.abs(Jv @ Jv + np.eye(n)).max())
        if res > tol:
            raise JConstructionError(f"|J^2 + I| = {res:.3g} at {list(pt)}; "
                                     "spectrum not constant or clustered wrongly")
    return J


# -- verification -----------------------------------------------------------------------

@dataclass
class ReconstructionReport:
    spectrum: Spectrum | None
    polynomial: OddPolynomial | None
    residuals: dict = field(default_factory=dict)  # name -> per-point list
    tolerances: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=dict)
    spectrum_spread: float = 0.0
    polar_deviation: float | None = None
    n_points: int = 0
    error: str | None = None

    def max_residual(self, name: str) -> float:
        vals = self.residuals.get(name, [])
        return float(max(vals)) if vals else 0.0

    @property
    def verdicts(self) -> dict:
        out = {name: self.max_residual(name) <= self.tolerances[name]
               for name in self.residuals if name in self.tolerances}
        if self.polar_deviation is not None:
            out["polar"] = self.polar_deviation <= self.tolerances["polar"]
        return out

    @property
    def complex_structure_ok(self) -> bool:
        """Everything except closedness: J is a g-orthogonal integrable complex structure."""
        v = self.verdicts
        return self.error is None and all(ok for k, ok in v.items()
                                          if k not in ("closed", "kappa_closed"))

    @property
    def kahler(self) -> bool:
        return self.error is None and all(self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "spectrum": None if self.spectrum is None else self.spectrum.to_dict(),
            "polynomial": None if self.polynomial is None else self.polynomial.to_dict(),
            "max_residuals": {k: self.max_residual(k) for k in sorted(self.residuals)},
            "tolerances": dict(sorted(self.tolerances.items())),
            "verdicts": dict(sorted(self.verdicts.items())),
            "calibration": self.calibration,
            "spectrum_spread": self.spectrum_spread,
            "polar_deviation": self.polar_deviation,
            "points": self.n_points,
            "kahler": self.kahler,
            "error": self.error,
        }


def _off_block(M: np.ndarray, blocks: Sequence[slice]) -> float:
    mask = np.ones(M.shape, dtype=bool)
    for b in blocks:
        mask[b, b] = False
    return float(np.abs(M[mask]).max()) if mask.any() else 0.0


def block_defects(R, G, K, J, tolerance: float = 1e-7) -> dict:
    """Off-block norms of R, J (endomorphisms) and g, kappa (bilinear forms)
    in a g-orthonormal eigenbasis of -R^2 grouped by eigenvalue."""
    L = _orthonormal_frame(G)
    Lt_inv = np.linalg.inv(L.T)
    Rh = L.T @ R @ Lt_inv
    M = -(Rh @ Rh)
    ev, B = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(ev)[::-1]
    ev, B = ev[order], B[:, order]
    blocks, start = [], 0
    for i in range(1, len(ev) + 1):
        if i == len(ev) or abs(ev[i] - ev[start]) > tolerance * ev[start]:
            blocks.append(slice(start, i))
            start = i
    endo = lambda A: B.T @ (L.T @ A @ Lt_inv) @ B   # noqa: E731
    bilin = lambda A: B.T @ (np.linalg.inv(L) @ A @ Lt_inv) @ B   # noqa: E731
    return {
        "R": _off_block(endo(R), blocks),
        "J": _off_block(endo(J), blocks),
        "g": _off_block(bilin(G), blocks),
        "kappa": _off_block(bilin(K), blocks),
        "minus_R2": _off_block(B.T @ M @ B, blocks),
    }


def verify_kahler(g: EndoField, kappa: FormField, J: EndoField, points,
                  R: EndoField | None = None, tolerances: dict | None = None) -> ReconstructionReport:
    """Residuals of every property of J claimed by the reconstruction, per point."""
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    n = g.chart.dim
    eye = np.eye(n)
    omega = two_form_of_matrix(J.transpose() @ g)  # g(J X, Y) = X^T J^T G Y
    K = matrix_of_two_form(kappa)
    names = ["j_squared", "skew", "orthogonal", "nijenhuis_J", "closed", "kappa_closed"]
    if R is not None:
        names += ["s_symmetric", "s_positive", "commute", "nijenhuis_R", "nijenhuis_R2", "off_block"]
        minus_R2 = (R @ R).scaled(-1)
    res: dict = {k: [] for k in names}
    points = list(points)
    for pt in points:
        Gv, Jv = g(pt), J(pt)
        W = Jv.T @ Gv
        res["j_squared"].append(float(np.abs(Jv @ Jv + eye).max()))
        res["skew"].append(float(np.abs(W + W.T).max()))
        res["orthogonal"].append(float(np.abs(Jv.T @ Gv @ Jv - Gv).max()))
        res["nijenhuis_J"].append(nijenhuis(J, pt).max_abs())
        res["closed"].append(exterior_derivative(omega, pt).max_abs())
        res["kappa_closed"].append(exterior_derivative(kappa, pt).max_abs())
        if R is not None:
            Rv = R(pt)
            S = Rv @ np.linalg.inv(Jv)
            GS = Gv @ S
            res["s_symmetric"].append(float(np.abs(GS - GS.T).max()))
            # s_positive is 0 when g(S., .) is positive definite, else the violation
            res["s_positive"].append(max(0.0, -float(np.linalg.eigvalsh(0.5 * (GS + GS.T)).min())))
            res["commute"].append(float(np.abs(Jv @ Rv - Rv @ Jv).max()))
            res["nijenhuis_R"].append(nijenhuis(R, pt).max_abs())
            res["nijenhuis_R2"].append(nijenhuis(minus_R2, pt).max_abs())
            res["off_block"].append(max(block_defects(Rv, Gv, K(pt), Jv, tol["cluster"]).values()))
    tol.setdefault("kappa_closed", tol["closed"])
    tol.setdefault("s_positive", 0.0)
    tol.setdefault("nijenhuis_R", tol["nijenhuis_R2"])
    return ReconstructionReport(None, None, res, tol, n_points=len(points))


def polar_oracle_compare(R: EndoField, g: EndoField, J: EndoField, points) -> float:
    """max over points of |J - orthogonal polar factor of R|."""
    dev = 0.0
    for pt in points:
        _, Jp = ext.polar_decompose(R(pt), g(pt))
        dev = max(dev, float(np.abs(J(pt) - Jp).max()))
    return dev


def reconstruct(g: EndoField, kappa: FormField, points, tolerances: dict | None = None) -> ReconstructionReport:
    """Full pipeline: R, calibration, constant spectrum, P, J = P(R), checks."""
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    points = list(points)
    ok, vol_res, det_res = check_calibrated(g, kappa, points, tol["calibration"])
    calib = {"ok": ok, "volume_residual": vol_res, "det_residual": det_res}
    R = compatibility_field(kappa, g)
    try:
        spec, spread = constant_spectrum(R, g, points, tol["cluster"], tol["spectrum_spread"])
        P = interpolation_polynomial(spec)
        J = build_J(R, P, points, tol["j_squared"])
    except (SpectrumError, IllConditionedError, JConstructionError) as exc:
        return ReconstructionReport(None, None, tolerances=tol, calibration=calib,
                                    n_points=len(points), error=f"{type(exc).__name__}: {exc}")
    rep = verify_kahler(g, kappa, J, points, R=R, tolerances=tol)
    rep.spectrum, rep.polynomial = spec, P
    rep.calibration = calib
    rep.spectrum_spread = spread
    rep.polar_deviation = polar_oracle_compare(R, g, J, points)
    return rep

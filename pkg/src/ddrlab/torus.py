"""Fourier-mode operator algebra on flat tori with constant g, kappa, R.

On the mode e^{i<k,x>} every constant-coefficient operator acts on the
complexified exterior algebra C^{2^{2n}} as a finite matrix: d is wedge with
i k^flat, d_R = R# d (R^{-1})#, adjoints are taken for the pointwise
Gram inner product of g (the L^2 volume factor is common to all degrees and
cancels).  Every statement checked here is therefore an exact
finite-dimensional matrix claim per mode.

Operators are dense over ``full_basis(dim)`` (ordered by degree).  Modes of
opposite sign carry complex-conjugate matrices for real structures; the
scans assert this rather than assume it.

Endomorphisms in this module follow the convention g(X, Y) = kappa(R^{-1} X, Y)
where kappa is involved (``sympl_relations_check``); the twisted derivation
itself only needs R.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import exterior as ext
from .exterior import FormValue, degree_slices, operator_matrix

__all__ = [
    "ModeOperator", "HodgeData", "SubspaceReport", "CalibrationError",
    "mode_identity", "mode_d", "mode_d_twisted", "mode_tau", "mode_adjoint",
    "graded_commutator", "daleth", "laplacian", "inner_product_matrix",
    "pullback_matrix", "hodge_star_matrix", "sympl_star_matrix", "hodge_decomposition",
    "corollary_conditions", "ddr_lemma_check", "sympl_relations_check",
    "enumerate_modes", "scan_modes", "RANK_THRESHOLD", "INCONCLUSIVE_FACTOR",
]

RANK_THRESHOLD = 1e-9
INCONCLUSIVE_FACTOR = 10.0
ANGLE_TOL = 1e-7


class CalibrationError(ValueError):
    pass


def _degree_signs(dim: int) -> np.ndarray:
    out = np.empty(2 ** dim)
    for p, s in enumerate(degree_slices(dim)):
        out[s] = (-1) ** p
    return out


@dataclass(frozen=True, eq=False)
class ModeOperator:
    """A homogeneous operator of the given degree on one Fourier mode."""

    dim: int
    degree: int
    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=complex)
        size = 2 ** self.dim
        if M.shape != (size, size):
            raise ValueError(f"mode operator must be {size}x{size}, got {M.shape}")
        object.__setattr__(self, "matrix", M)
        mask = self._support_mask()
        stray = np.abs(M[~mask]).max() if (~mask).any() else 0.0
        scale = max(1.0, float(np.abs(M).max()))
        if stray > 1e-12 * scale:
            raise ValueError(f"matrix is not homogeneous of degree {self.degree} "
                             f"(stray entry {stray:.3g})")
        if stray:
            M = M.copy()
            M[~mask] = 0
            object.__setattr__(self, "matrix", M)

    def _support_mask(self) -> np.ndarray:
        sl = degree_slices(self.dim)
        mask = np.zeros((2 ** self.dim,) * 2, dtype=bool)
        for p, s in enumerate(sl):
            q = p + self.degree
            if 0 <= q <= self.dim:
                mask[sl[q], s] = True
        return mask

    def block(self, p: int) -> np.ndarray:
        """Matrix from the degree-p coefficient space to degree p + self.degree."""
        sl = degree_slices(self.dim)
        q = p + self.degree
        if not (0 <= p <= self.dim and 0 <= q <= self.dim):
            return np.zeros((0, math.comb(self.dim, p) if 0 <= p <= self.dim else 0), complex)
        return self.matrix[sl[q], sl[p]]

    @property
    def blocks(self) -> dict:
        return {p: self.block(p) for p in range(self.dim + 1)
                if 0 <= p + self.degree <= self.dim}

    def __matmul__(self, other: "ModeOperator") -> "ModeOperator":
        self._check(other)
        return ModeOperator(self.dim, self.degree + other.degree, self.matrix @ other.matrix)

    def __add__(self, other: "ModeOperator") -> "ModeOperator":
        self._check(other)
        if other.degree != self.degree:
            raise ValueError("cannot add operators of different degree")
        return ModeOperator(self.dim, self.degree, self.matrix + other.matrix)

    def __neg__(self) -> "ModeOperator":
        return ModeOperator(self.dim, self.degree, -self.matrix)

    def __sub__(self, other: "ModeOperator") -> "ModeOperator":
        return self + (-other)

    def __mul__(self, s) -> "ModeOperator":
        return ModeOperator(self.dim, self.degree, s * self.matrix)

    __rmul__ = __mul__

    def apply(self, a: FormValue) -> FormValue:
        q = a.degree + self.degree
        if not 0 <= q <= self.dim:
            raise ValueError(f"degree {a.degree} is mapped outside [0, {self.dim}]")
        sl = degree_slices(self.dim)
        full = np.zeros(2 ** self.dim, dtype=complex)
        full[sl[a.degree]] = a.to_vector()
        return FormValue.from_vector(self.dim, q, (self.matrix @ full)[sl[q]])

    def conj(self) -> "ModeOperator":
        return ModeOperator(self.dim, self.degree, self.matrix.conj())

    def norm(self) -> float:
        """Largest entry modulus."""
        return float(np.abs(self.matrix).max()) if self.matrix.size else 0.0

    def _check(self, other: "ModeOperator"):
        if not isinstance(other, ModeOperator) or other.dim != self.dim:
            raise ValueError("mode operators on different exterior algebras")


# -- constant matrices on the exterior algebra ---------------------------------------------

def _float_matrix(fn, dim: int) -> np.ndarray:
    return operator_matrix(fn, dim, dtype=float)


def _key(M) -> tuple:
    M = np.asarray(M, dtype=float)
    return M.shape, M.tobytes()


def _unkey(key) -> np.ndarray:
    shape, raw = key
    return np.frombuffer(raw, dtype=float).reshape(shape)


@lru_cache(maxsize=256)
def _pullback_cached(key) -> np.ndarray:
    R = _unkey(key)
    out = _float_matrix(lambda a: ext.pullback_action(R, a), len(R))
    out.setflags(write=False)
    return out


def pullback_matrix(R) -> np.ndarray:
    R = np.asarray(ext.as_endo(R), dtype=float)
    return _pullback_cached(_key(R))


def inner_product_matrix(g) -> np.ndarray:
    """Gram matrix of the pointwise inner product g^{-1} induces on forms."""
    return _inner_cached(_key(ext.as_metric(g)))


@lru_cache(maxsize=256)
def _inner_cached(key) -> np.ndarray:
    G = _unkey(key)
    dim = len(G)
    Ginv = np.linalg.inv(G)
    M = np.zeros((2 ** dim, 2 ** dim))
    for p, s in enumerate(degree_slices(dim)):
        M[s, s] = ext.compound(Ginv, p) if p else 1.0
    M.setflags(write=False)
    return M


def hodge_star_matrix(g) -> np.ndarray:
    G = np.asarray(ext.as_metric(g), dtype=float)
    return _float_matrix(lambda a: ext.hodge_star(G, a), len(G))


def sympl_star_matrix(kappa) -> np.ndarray:
    K = np.asarray(ext.as_symplectic(kappa), dtype=float)
    return _float_matrix(lambda a: ext.sympl_star(K, a), len(K))


# -- mode operators ---------------------------------------------------------------------------

def mode_identity(dim: int) -> ModeOperator:
    return ModeOperator(dim, 0, np.eye(2 ** dim))


@lru_cache(maxsize=None)
def _wedge_basis(dim: int) -> np.ndarray:
    """E[j] = matrix of left multiplication by dx^j."""
    out = np.stack([operator_matrix(lambda a: ext.wedge(FormValue.basis(dim, j), a), dim,
                                    dtype=float) for j in range(dim)])
    out.setflags(write=False)
    return out


def _wedge_matrix(v) -> np.ndarray:
    """Left multiplication by the 1-form with coefficients v."""
    v = np.asarray(v)
    return np.tensordot(v, _wedge_basis(len(v)), axes=1)


def mode_d(k) -> ModeOperator:
    """d on e^{i<k,x>}: wedge with i k^flat."""
    k = np.asarray(k)
    return ModeOperator(len(k), 1, _wedge_matrix(1j * k))


def mode_d_twisted(k, R) -> ModeOperator:
    """d_R = R# d (R^{-1})# on the mode k."""
    R = np.asarray(ext.as_endo(R, len(k)), dtype=float)
    if abs(np.linalg.det(R)) < 1e-12:
        raise np.linalg.LinAlgError("d_R needs an invertible R")
    P, Pinv = pullback_matrix(R), pullback_matrix(np.linalg.inv(R))
    return ModeOperator(len(k), 1, P @ mode_d(k).matrix @ Pinv)


def mode_tau(L) -> ModeOperator:
    L = np.asarray(ext.as_endo(L), dtype=float)
    return ModeOperator(len(L), 0, _float_matrix(lambda a: ext.tau_action(L, a), len(L)))


def mode_adjoint(op: ModeOperator, g) -> ModeOperator:
    """Adjoint for the g-induced Hermitian inner product: M^{-1} A^H M."""
    M = inner_product_matrix(g)
    if M.shape[0] != op.matrix.shape[0]:
        raise ValueError("metric and operator dimensions differ")
    return ModeOperator(op.dim, -op.degree, np.linalg.solve(M, op.matrix.conj().T @ M))


def graded_commutator(P: ModeOperator, Q: ModeOperator) -> ModeOperator:
    """[P, Q] = PQ - (-1)^{|P||Q|} QP."""
    sign = -1 if (P.degree * Q.degree) % 2 else 1
    PQ, QP = P @ Q, Q @ P
    return PQ - QP if sign > 0 else PQ + QP


def daleth(P: ModeOperator, k) -> ModeOperator:
    """[d, P] on the mode k."""
    return graded_commutator(mode_d(k), P)


def laplacian(delta: ModeOperator, g) -> ModeOperator:
    """[delta, delta*] = delta delta* + delta* delta."""
    return graded_commutator(delta, mode_adjoint(delta, g))


# -- Hodge decomposition -----------------------------------------------------------------------

@dataclass
class HodgeData:
    k: tuple
    H: ModeOperator
    G: ModeOperator
    H_R: ModeOperator
    G_R: ModeOperator
    laplacian: ModeOperator
    laplacian_R: ModeOperator
    residuals: dict = field(default_factory=dict)


def _harmonic_green(Delta: ModeOperator, M: np.ndarray, thr: float) -> tuple:
    """Blockwise M-orthogonal kernel projector and pseudo-inverse of a self-adjoint Delta."""
    dim = Delta.dim
    H = np.zeros_like(Delta.matrix)
    Gr = np.zeros_like(Delta.matrix)
    for s in degree_slices(dim):
        L = np.linalg.cholesky(M[s, s])
        Lh_inv = np.linalg.inv(L.conj().T)
        D = L.conj().T @ Delta.matrix[s, s] @ Lh_inv
        ev, V = np.linalg.eigh(0.5 * (D + D.conj().T))
        scale = max(np.abs(ev).max(), 1.0)
        zero = np.abs(ev) <= thr * scale
        P0 = V[:, zero] @ V[:, zero].conj().T
        inv = V[:, ~zero] @ np.diag(1 / ev[~zero]) @ V[:, ~zero].conj().T
        H[s, s] = Lh_inv @ P0 @ L.conj().T
        Gr[s, s] = Lh_inv @ inv @ L.conj().T
    return ModeOperator(dim, 0, H), ModeOperator(dim, 0, Gr)


def hodge_decomposition(k, g, R, threshold: float = RANK_THRESHOLD) -> HodgeData:
    """Harmonic projectors and Green operators of Delta and Delta_R on the mode k.

    Also records Delta_R = R# Delta' (R#)^{-1}, where Delta' is the Laplacian
    of g' = g(R^{-1}., R^{-1}.): R# is an isometry from g' to g.
    """
    k = tuple(int(x) for x in k)
    dim = len(k)
    G = np.asarray(ext.as_metric(g), dtype=float)
    R = np.asarray(R, dtype=float)
    M = inner_product_matrix(G)
    d, dR = mode_d(k), mode_d_twisted(k, R)
    Delta, Delta_R = laplacian(d, G), laplacian(dR, G)
    H, Gr = _harmonic_green(Delta, M, threshold)
    H_R, G_R = _harmonic_green(Delta_R, M, threshold)
    eye = mode_identity(dim)
    Rinv = np.linalg.inv(R)
    g_prime = Rinv.T @ G @ Rinv
    P = pullback_matrix(R)
    conj = ModeOperator(dim, 0, P @ laplacian(d, g_prime).matrix @ np.linalg.inv(P))
    res = {
        "decomposition": (eye - H - Delta @ Gr).norm(),
        "decomposition_R": (eye - H_R - Delta_R @ G_R).norm(),
        "idempotent": (H @ H - H).norm(),
        "idempotent_R": (H_R @ H_R - H_R).norm(),
        "harmonic_nonzero_mode": H.norm() if any(k) else 0.0,
        "laplacian_conjugation": (Delta_R - conj).norm(),
        "laplacian_R_d": graded_commutator(Delta_R, d).norm(),
        "laplacian_R_dR": graded_commutator(Delta_R, dR).norm(),
        "laplacian_dR": graded_commutator(Delta, dR).norm(),
    }
    return HodgeData(k, H, Gr, H_R, G_R, Delta, Delta_R, res)


def corollary_conditions(k, g, R) -> dict:
    """Norms of [d_R, d d*], [d_R, d* d], [d, d_R d_R*], [d, d_R* d_R]."""
    d, dR = mode_d(k), mode_d_twisted(k, R)
    ds, dRs = mode_adjoint(d, g), mode_adjoint(dR, g)
    return {
        "a": graded_commutator(dR, d @ ds).norm(),
        "b": graded_commutator(dR, ds @ d).norm(),
        "c": graded_commutator(d, dR @ dRs).norm(),
        "d": graded_commutator(d, dRs @ dR).norm(),
    }


# -- subspace computations --------------------------------------------------------------------

class _RankLog:
    """Collects singular-value margins; flags ones inside the inconclusive band."""

    def __init__(self, threshold: float):
        self.threshold = threshold
        self.min_kept = math.inf   # smallest kept sigma / cutoff
        self.max_dropped = 0.0     # largest dropped sigma / cutoff
        self.ambiguous = []

    def rank(self, sigma: np.ndarray, cutoff: float, what: str) -> int:
        if cutoff <= 0 or sigma.size == 0:
            return 0
        kept = sigma > cutoff
        if kept.any():
            self.min_kept = min(self.min_kept, float(sigma[kept].min() / cutoff))
        if (~kept).any():
            self.max_dropped = max(self.max_dropped, float(sigma[~kept].max() / cutoff))
        if ((sigma > cutoff) & (sigma < INCONCLUSIVE_FACTOR * cutoff)).any():
            self.ambiguous.append(what)
        return int(kept.sum())


def _range(A: np.ndarray, log: _RankLog, what: str) -> np.ndarray:
    if A.size == 0:
        return np.zeros((A.shape[0], 0), complex)
    U, s, _ = np.linalg.svd(A)
    cutoff = log.threshold * (s.max() if s.size else 0.0)
    r = log.rank(s, cutoff, what) if s.size and s.max() > 0 else 0
    return U[:, :r]


def _kernel(A: np.ndarray, log: _RankLog, what: str) -> np.ndarray:
    n = A.shape[1]
    _, s, Vh = np.linalg.svd(A)
    smax = s.max() if s.size else 0.0
    r = log.rank(s, log.threshold * smax, what) if smax > 0 else 0
    return Vh[r:].conj().T if r < n else np.zeros((n, 0), complex)


def _intersection(U: np.ndarray, W: np.ndarray, log: _RankLog, what: str) -> np.ndarray:
    """Orthonormal basis of span U cap span W (U, W orthonormal)."""
    n = U.shape[0]
    if U.shape[1] == 0 or W.shape[1] == 0:
        return np.zeros((n, 0), complex)
    A = np.hstack([U, -W])
    _, s, Vh = np.linalg.svd(A)
    # sigma_min of [U, -W] is sqrt(2) sin(theta/2) along principal angle theta
    full = np.concatenate([s, np.zeros(A.shape[1] - s.size)])
    kept = log.rank(full, ANGLE_TOL, what)
    null = Vh[kept:].conj().T
    if null.shape[1] == 0:
        return np.zeros((n, 0), complex)
    return _range(U @ null[:U.shape[1]], log, what + " basis")


def _max_angle(A: np.ndarray, B: np.ndarray) -> float:
    """Largest principal-angle sine between equal-dimensional subspaces."""
    if A.shape[1] != B.shape[1]:
        return 1.0
    if A.shape[1] == 0:
        return 0.0
    resid = B - A @ (A.conj().T @ B)
    return float(np.linalg.norm(resid, 2))


def _contained(A: np.ndarray, B: np.ndarray) -> float:
    """Residual of span B inside span A."""
    if B.shape[1] == 0:
        return 0.0
    if A.shape[1] == 0:
        return float(np.linalg.norm(B, 2))
    return float(np.linalg.norm(B - A @ (A.conj().T @ B), 2))


@dataclass
class SubspaceReport:
    mode: tuple
    status: str                     # pass | fail | inconclusive | not-applicable
    dims: dict
    verdict: bool | None            # (Ker d cap Ker d_R) cap (Im d + Im d_R) = Im d d_R
    lemma_verdict: bool | None      # Ker d cap Im d_R = Im d d_R
    commutator_norm: float
    max_angle: float
    lemma_max_angle: float
    margins: dict
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": list(self.mode), "status": self.status, "dims": dict(self.dims),
            "verdict": self.verdict, "lemma_verdict": self.lemma_verdict,
            "commutator_norm": self.commutator_norm, "max_angle": self.max_angle,
            "lemma_max_angle": self.lemma_max_angle, "margins": dict(self.margins),
            "notes": list(self.notes),
        }


def ddr_lemma_check(k, g, R, threshold: float = RANK_THRESHOLD, commutator_tol: float = 1e-9,
                    angle_tol: float = ANGLE_TOL) -> SubspaceReport:
    """Decide the dd_R-lemma on the mode k as a subspace identity.

    ``g`` is accepted for interface symmetry; the subspaces do not depend on it.
    """
    k = tuple(int(x) for x in k)
    ext.as_metric(g)
    d, dR = mode_d(k), mode_d_twisted(k, R)
    D, DR = d.matrix, dR.matrix
    comm = graded_commutator(d, dR).norm()
    scale = max(1.0, float(np.abs(D).max()) ** 2)
    if comm > commutator_tol * scale:
        return SubspaceReport(k, "not-applicable", {}, None, None, comm, math.nan, math.nan, {},
                              ["[d, d_R] != 0: the lemma only concerns commuting derivations"])
    log = _RankLog(threshold)
    ker_d = _kernel(D, log, "ker d")
    ker_dR = _kernel(DR, log, "ker d_R")
    im_d = _range(D, log, "im d")
    im_dR = _range(DR, log, "im d_R")
    ker_both = _kernel(np.vstack([D, DR]), log, "ker d cap ker d_R")
    im_sum = _range(np.hstack([D, DR]), log, "im d + im d_R")
    A = _intersection(ker_both, im_sum, log, "A")
    im_ddR = _range(D @ DR, log, "im d d_R")
    lemma_lhs = _intersection(ker_d, im_dR, log, "ker d cap im d_R")

    notes = []
    mono = _contained(ker_both, im_ddR)
    if mono > angle_tol:
        raise AssertionError(f"Im d d_R not inside Ker d cap Ker d_R at mode {k} ({mono:.3g})")
    dims = {"ker_d": ker_d.shape[1], "ker_dR": ker_dR.shape[1], "im_d": im_d.shape[1],
            "im_dR": im_dR.shape[1], "ker_d_cap_ker_dR": ker_both.shape[1],
            "im_d_plus_im_dR": im_sum.shape[1], "A": A.shape[1], "im_ddR": im_ddR.shape[1],
            "ker_d_cap_im_dR": lemma_lhs.shape[1]}
    angle = _max_angle(A, im_ddR)
    lemma_angle = _max_angle(lemma_lhs, im_ddR)
    verdict = dims["A"] == dims["im_ddR"] and angle <= angle_tol
    lemma = dims["ker_d_cap_im_dR"] == dims["im_ddR"] and lemma_angle <= angle_tol
    margins = {"min_kept_ratio": log.min_kept if math.isfinite(log.min_kept) else None,
               "max_dropped_ratio": log.max_dropped}
    if log.ambiguous:
        notes.append("singular values inside the inconclusive band: " + ", ".join(log.ambiguous))
        return SubspaceReport(k, "inconclusive", dims, None, None, comm, angle, lemma_angle,
                              margins, notes)
    return SubspaceReport(k, "pass" if verdict else "fail", dims, verdict, lemma, comm, angle,
                          lemma_angle, margins, notes)


# -- symplectic relations ---------------------------------------------------------------------

def _check_calibrated(G, K, tol: float):
    vol = math.sqrt(np.linalg.det(G))
    pf = abs(ext.pfaffian(K))
    if abs(vol / pf - 1) > tol:
        raise CalibrationError(f"g is not calibrated by kappa: sqrt(det g) = {vol:.6g}, "
                               f"|Pf kappa| = {pf:.6g}")


def sympl_relations_check(g, kappa, R=None, modes=((1, 0, 0, 0),), calibration_tol: float = 1e-9,
                          compat_tol: float = 1e-9) -> dict:
    """Residuals of the star relations and d_R* = -d^star, per degree r.

    ``R`` follows g(X, Y) = kappa(R^{-1} X, Y); it is derived from (g, kappa)
    when omitted.  On forms the relations use the conjugating endomorphism
    Q = R^{-1}, acting by pullback:

        star (Q^{-1})# = (-1)^r *,   * Q# = (-1)^r star,   (Q^{-1})# * = star,
        d_Q* = -d^star  with  d^star = (-1)^r star d star,

    r being the degree of the input form.
    """
    G = np.asarray(ext.as_metric(g), dtype=float)
    K = np.asarray(ext.as_symplectic(kappa), dtype=float)
    dim = len(G)
    _check_calibrated(G, K, calibration_tol)
    R5 = -np.linalg.solve(K, G)  # g = kappa(R5 ., .)
    if R is None:
        R = np.linalg.inv(R5)
    R = np.asarray(R, dtype=float)
    compat = float(np.abs(np.linalg.inv(R) - R5).max())
    if compat > compat_tol:
        raise ValueError(f"R does not satisfy g = kappa(R^-1 ., .) (residual {compat:.3g})")
    Q = R5
    hs, ss = hodge_star_matrix(G), sympl_star_matrix(K)
    P, Pinv = pullback_matrix(Q), pullback_matrix(np.linalg.inv(Q))
    sg = np.diag(_degree_signs(dim))
    sl = degree_slices(dim)
    eye = np.eye(2 ** dim)

    def per_degree(M) -> list:
        return [float(np.abs(M[:, s]).max()) for s in sl]

    out = {
        "star_Rinv": per_degree(ss @ Pinv - hs @ sg),
        "hodge_R": per_degree(hs @ P - ss @ sg),
        "Rinv_hodge": per_degree(Pinv @ hs - ss),
        "star_squared": per_degree(ss @ ss - eye),
        "compatibility": compat,
    }
    adj, comm, hyp_R, hyp_Rinv = ([0.0] * (dim + 1) for _ in range(4))
    for k in modes:
        d = mode_d(k)
        dQ = mode_d_twisted(k, Q)
        dstar = ModeOperator(dim, -1, sg @ ss @ d.matrix @ ss)
        r_adj = (mode_adjoint(dQ, G) + dstar).matrix
        c = graded_commutator(d, dstar)
        h1 = mode_d_twisted(k, Q) @ c
        h2 = mode_d_twisted(k, np.linalg.inv(Q)) @ c
        for p, s in enumerate(sl):
            adj[p] = max(adj[p], float(np.abs(r_adj[:, s]).max()))
            comm[p] = max(comm[p], float(np.abs(c.matrix[:, s]).max()))
            hyp_R[p] = max(hyp_R[p], float(np.abs(h1.matrix[:, s]).max()))
            hyp_Rinv[p] = max(hyp_Rinv[p], float(np.abs(h2.matrix[:, s]).max()))
    out.update({"adjoint_twisted": adj, "d_dstar_commutator": comm,
                "lemma_hypothesis_R": hyp_R, "lemma_hypothesis_Rinv": hyp_Rinv,
                "modes": len(modes)})
    return out


# -- mode scans --------------------------------------------------------------------------------

def enumerate_modes(dim: int, cutoff: int) -> list:
    """All integer k with |k|_inf <= cutoff, in lexicographic order."""
    return [tuple(k) for k in itertools.product(range(-cutoff, cutoff + 1), repeat=dim)]


def scan_modes(fn, modes, workers: int | None = None) -> list:
    """fn(k) over modes, concurrently, results in input order."""
    modes = list(modes)
    if workers == 1 or len(modes) < 2:
        return [fn(k) for k in modes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, modes))


def assert_conjugate_symmetry(k, R) -> float:
    """|d_R(-k) - conj d_R(k)|; zero for real R."""
    k = np.asarray(k)
    dev = (mode_d_twisted(-k, R) - mode_d_twisted(k, R).conj()).norm()
    if dev > 1e-12:
        raise AssertionError(f"conjugate-mode symmetry fails at {tuple(k)}: {dev:.3g}")
    return dev

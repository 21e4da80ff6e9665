import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddrlab import exterior as ext
from ddrlab.exterior import FormValue, degree_slices, operator_matrix
from ddrlab.kahler import compatibility_endo
from ddrlab.torus import (CalibrationError, ModeOperator, assert_conjugate_symmetry,
                          corollary_conditions, daleth, ddr_lemma_check, enumerate_modes,
                          graded_commutator, hodge_decomposition, inner_product_matrix, laplacian,
                          mode_adjoint, mode_d, mode_d_twisted, mode_identity, mode_tau,
                          pullback_matrix, scan_modes, sympl_relations_check)

from _support import calibrated_pair, random_invertible, random_spd, standard_j

seeds = st.integers(0, 2**32 - 1)
modes4 = st.tuples(*[st.integers(-3, 3)] * 4)
K4 = -standard_j(4)                       # kappa = dx1^dx2 + dx3^dx4
G_MULTI = np.diag([2.0, 2.0, 0.5, 0.5])
R5_MULTI = compatibility_endo(K4, G_MULTI)   # g = kappa(R5 ., .), spectrum (2, 1/2)
R4_MULTI = np.linalg.inv(R5_MULTI)           # g = kappa(R4^-1 ., .)


def random_homogeneous(rng, dim, degree):
    M = rng.normal(size=(2 ** dim, 2 ** dim)) + 1j * rng.normal(size=(2 ** dim, 2 ** dim))
    mask = ModeOperator(dim, degree, np.zeros((2 ** dim,) * 2))._support_mask()
    return ModeOperator(dim, degree, np.where(mask, M, 0))


# -- d and d_R on a mode --------------------------------------------------------------

def test_zero_mode_d_vanishes():
    assert mode_d((0, 0, 0, 0)).norm() == 0


def test_mode_d_on_constant():
    d = mode_d((1, 0))
    out = d.apply(FormValue.scalar(2, 1.0))
    assert out == FormValue(2, 1, {(0,): 1j})


@given(modes4)
def test_mode_d_squares_to_zero(k):
    d = mode_d(k)
    assert (d @ d).norm() == 0


def test_twist_by_identity():
    k = (1, -2, 0, 3)
    assert np.array_equal(mode_d_twisted(k, np.eye(4)).matrix, mode_d(k).matrix)


def test_twist_by_standard_structure():
    k = np.array([2, -1, 1, 3])
    J = standard_j(4)
    # composition on basis forms through the pointwise kernels
    composed = operator_matrix(
        lambda a: ext.pullback_action(J, ext.wedge(FormValue.one_form(1j * k),
                                                   ext.pullback_action(np.linalg.inv(J), a))),
        4)
    assert np.allclose(mode_d_twisted(k, J).matrix, composed, atol=1e-14)
    # R# is multiplicative, so d_J is wedge with i J^T k
    rotated = operator_matrix(lambda a: ext.wedge(FormValue.one_form(1j * (J.T @ k)), a), 4)
    assert np.allclose(mode_d_twisted(k, J).matrix, rotated, atol=1e-14)


@given(modes4, seeds)
def test_constant_twist_commutes_and_squares_to_zero(k, seed):
    R = random_invertible(np.random.default_rng(seed), 4)
    d, dR = mode_d(k), mode_d_twisted(k, R)
    scale = 1 + np.abs(dR.matrix).max() ** 2
    assert graded_commutator(d, dR).norm() <= 1e-12 * scale
    assert (dR @ dR).norm() <= 1e-12 * scale


def test_singular_twist():
    with pytest.raises(np.linalg.LinAlgError):
        mode_d_twisted((1, 0), np.zeros((2, 2)))


# -- adjoints -------------------------------------------------------------------------

def test_inner_product_matrix_is_gram_pairing():
    G = random_spd(np.random.default_rng(0), 4)
    M = inner_product_matrix(G)
    basis = ext.full_basis(4)
    Ginv = np.linalg.inv(G)
    for a, I in enumerate(basis):
        for b, J in enumerate(basis):
            if len(I) == len(J):
                expected = ext.gram_pairing(Ginv, FormValue(4, len(I), {I: 1.0}),
                                            FormValue(4, len(J), {J: 1.0}))
                assert M[a, b] == pytest.approx(expected, abs=1e-12)
            else:
                assert M[a, b] == 0


@given(modes4, seeds)
def test_adjoint_involution(k, seed):
    G = random_spd(np.random.default_rng(seed), 4)
    d = mode_d_twisted(k, random_invertible(np.random.default_rng(seed + 1), 4))
    assert np.allclose(mode_adjoint(mode_adjoint(d, G), G).matrix, d.matrix, atol=1e-10)


def test_adjoint_of_zero():
    zero = ModeOperator(4, 1, np.zeros((16, 16)))
    assert mode_adjoint(zero, np.eye(4)).norm() == 0


@given(modes4, seeds)
def test_adjoint_pairing(k, seed):
    rng = np.random.default_rng(seed)
    G = random_spd(rng, 4)
    M = inner_product_matrix(G)
    d = mode_d(k)
    ds = mode_adjoint(d, G)
    a = rng.normal(size=16) + 1j * rng.normal(size=16)
    b = rng.normal(size=16) + 1j * rng.normal(size=16)
    lhs = (d.matrix @ a).conj() @ M @ b
    rhs = a.conj() @ M @ (ds.matrix @ b)
    assert abs(lhs - rhs) <= 1e-12 * max(1, abs(lhs))


# -- graded commutator and daleth -----------------------------------------------------

def test_commutator_of_d_with_itself():
    d = mode_d((1, 2, -1, 0))
    assert graded_commutator(d, d).norm() == 0


@given(seeds, st.integers(-2, 2), st.integers(-2, 2))
def test_graded_antisymmetry(seed, p, q):
    rng = np.random.default_rng(seed)
    P, Q = random_homogeneous(rng, 4, p), random_homogeneous(rng, 4, q)
    lhs = graded_commutator(P, Q)
    rhs = graded_commutator(Q, P) * (-(-1) ** (p * q))
    assert np.allclose(lhs.matrix, rhs.matrix, atol=1e-12)


@given(seeds, st.integers(-1, 1), st.integers(-1, 1), st.integers(-1, 1))
def test_graded_jacobi(seed, p, q, r):
    rng = np.random.default_rng(seed)
    P, Q, S = (random_homogeneous(rng, 4, deg) for deg in (p, q, r))
    c = graded_commutator
    lhs = c(P, c(Q, S))
    rhs = c(c(P, Q), S) + c(Q, c(P, S)) * (-1) ** (p * q)
    assert np.abs(lhs.matrix - rhs.matrix).max() <= 1e-12 * max(1, np.abs(lhs.matrix).max())


def test_daleth_of_identity():
    assert daleth(mode_identity(4), (1, 2, 3, 0)).norm() == 0


@given(modes4, seeds)
def test_daleth_of_constant_twist(k, seed):
    R = random_invertible(np.random.default_rng(seed), 4)
    dR = mode_d_twisted(k, R)
    assert daleth(dR, k).norm() <= 1e-12 * (1 + np.abs(dR.matrix).max() ** 2)


@given(modes4, seeds)
def test_daleth_of_tau(k, seed):
    R = random_invertible(np.random.default_rng(seed), 4)
    S = R - np.eye(4)
    d, dR = mode_d(k), mode_d_twisted(k, R)
    diff = daleth(mode_tau(S), k) - (d - dR)
    assert diff.norm() <= 1e-12 * (1 + np.abs(dR.matrix).max() + np.abs(d.matrix).max())


@given(seeds, st.integers(-1, 1))
def test_daleth_squared(seed, p):
    k = (1, -1, 2, 0)
    P = random_homogeneous(np.random.default_rng(seed), 4, p)
    assert daleth(daleth(P, k), k).norm() <= 1e-11


# -- Hodge decomposition --------------------------------------------------------------

def test_hodge_zero_mode():
    hd = hodge_decomposition((0, 0, 0, 0), np.eye(4), standard_j(4))
    assert np.array_equal(hd.H.matrix, np.eye(16)) and hd.G.norm() == 0


def test_hodge_nonzero_mode():
    k = (1, 0, -2, 1)
    G = random_spd(np.random.default_rng(1), 4)
    hd = hodge_decomposition(k, G, standard_j(4))
    assert hd.H.norm() <= 1e-12
    assert np.allclose(hd.G.matrix @ hd.laplacian.matrix, np.eye(16), atol=1e-12)


def test_flat_laplacian_is_scalar_per_mode():
    k = np.array([1, 2, 0, -1])
    G = random_spd(np.random.default_rng(2), 4)
    Delta = laplacian(mode_d(k), G)
    assert np.allclose(Delta.matrix, (k @ np.linalg.solve(G, k)) * np.eye(16), atol=1e-12)


@pytest.mark.parametrize("name,G,R", [("kahler", np.eye(4), standard_j(4)),
                                      ("multi", G_MULTI, R5_MULTI)])
def test_twisted_laplacian_commutes(name, G, R):
    for k in enumerate_modes(4, 1):
        res = hodge_decomposition(k, G, R).residuals
        for key in ("laplacian_R_d", "laplacian_R_dR", "laplacian_dR"):
            assert res[key] <= 1e-11, (name, k, key, res[key])


@given(modes4, seeds)
def test_hodge_identities_generic(k, seed):
    rng = np.random.default_rng(seed)
    R = random_invertible(rng, 4, min_sv=0.5)
    G = random_spd(rng, 4)
    res = hodge_decomposition(k, G, R).residuals
    assert res["decomposition"] <= 1e-12 and res["decomposition_R"] <= 1e-10
    assert res["idempotent"] <= 1e-12 and res["idempotent_R"] <= 1e-10
    assert res["laplacian_conjugation"] <= 1e-10 * (1 + np.abs(R).max() ** 2) * 10


def test_laplacian_conjugation_metric_convention():
    # R# maps g(R^-1., R^-1.) isometrically onto g; g(R., R.) fails for non-orthogonal R
    rng = np.random.default_rng(3)
    R = random_invertible(rng, 4)
    k = (1, -2, 0, 3)
    P = pullback_matrix(R)
    d = mode_d(k)
    hd = hodge_decomposition(k, np.eye(4), R)
    wrong = P @ laplacian(d, R.T @ R).matrix @ np.linalg.inv(P)
    assert hd.residuals["laplacian_conjugation"] <= 1e-11
    assert np.abs(hd.laplacian_R.matrix - wrong).max() > 1e-3
    Q = ext.polar_decompose(R)[1]
    hdQ = hodge_decomposition(k, np.eye(4), Q)
    PQ = pullback_matrix(Q)
    same = PQ @ laplacian(d, Q.T @ Q).matrix @ np.linalg.inv(PQ)
    assert np.abs(hdQ.laplacian_R.matrix - same).max() <= 1e-11


# -- corollary conditions -------------------------------------------------------------

def test_corollary_kahler():
    for k in enumerate_modes(4, 1):
        res = corollary_conditions(k, np.eye(4), standard_j(4))
        assert max(res.values()) <= 1e-11


def test_corollary_untwisted():
    # with d_R = d the four conditions reduce to |d d* d|, which is nonzero on k != 0
    k = (1, 2, 0, -1)
    d = mode_d(k)
    ds = mode_adjoint(d, np.eye(4))
    ddd = (d @ ds @ d).norm()
    res = corollary_conditions(k, np.eye(4), np.eye(4))
    assert ddd > 1
    assert res == pytest.approx({"a": ddd, "b": ddd, "c": ddd, "d": ddd})
    assert max(corollary_conditions((0, 0, 0, 0), np.eye(4), np.eye(4)).values()) == 0


def test_corollary_generic_noncompatible():
    R = random_invertible(np.random.default_rng(4), 4)
    res = corollary_conditions((1, 0, 1, 0), np.eye(4), R)
    assert max(res.values()) > 1e-3


# -- dd_R-lemma -----------------------------------------------------------------------

def test_ddr_zero_mode():
    rep = ddr_lemma_check((0, 0, 0, 0), np.eye(4), standard_j(4))
    assert rep.verdict is True and rep.dims["A"] == 0 and rep.dims["im_ddR"] == 0


def test_ddr_kahler_small_modes():
    for k in enumerate_modes(4, 1):
        rep = ddr_lemma_check(k, np.eye(4), standard_j(4))
        assert rep.status == "pass" and rep.verdict and rep.lemma_verdict, rep.to_dict()


def test_ddr_multi_eigenvalue():
    for k in enumerate_modes(4, 1):
        rep = ddr_lemma_check(k, G_MULTI, R5_MULTI)
        assert rep.status == "pass" and rep.verdict, rep.to_dict()


def test_ddr_untwisted_fails():
    # d_R = d: Ker d cap Im d = Im d is nonzero while Im dd = 0
    rep = ddr_lemma_check((1, 0, 0, 0), np.eye(4), np.eye(4))
    assert rep.status == "fail" and rep.verdict is False
    assert rep.dims["A"] > 0 and rep.dims["im_ddR"] == 0


def test_ddr_inconclusive_band():
    # d_R = d + O(eps): the rank of Im d + Im d_R hangs on O(eps) singular values
    eps = 3e-9
    R = np.eye(4) + eps * standard_j(4)
    rep = ddr_lemma_check((1, 0, 0, 0), np.eye(4), R)
    assert rep.status == "inconclusive" and rep.verdict is None
    assert rep.notes


def test_ddr_not_applicable():
    rep = ddr_lemma_check((1, 0, 0, 0), np.eye(4), standard_j(4), commutator_tol=-1.0)
    assert rep.status == "not-applicable" and rep.verdict is None


@settings(max_examples=10)
@given(seeds, st.floats(0.3, 3.0))
def test_sympl_lemma_hypotheses_imply_ddr(seed, lam):
    G, K = calibrated_pair(np.random.default_rng(seed), (lam, 1 / lam))
    R4 = np.linalg.inv(compatibility_endo(K, G))
    modes = [k for k in enumerate_modes(4, 1) if any(k)]
    rel = sympl_relations_check(G, K, R4, modes=modes)
    hyp = max(rel["lemma_hypothesis_R"] + rel["lemma_hypothesis_Rinv"])
    scale = max(1.0, np.abs(G).max(), np.abs(K).max()) ** 4
    # constant R has N_R = 0 and constant kappa is closed, so the hypotheses hold
    assert hyp <= 1e-9 * scale
    for k in modes:
        rep = ddr_lemma_check(k, G, np.linalg.inv(R4))
        assert rep.status == "pass", rep.to_dict()


@settings(max_examples=10)
@given(seeds)
def test_corollary_implies_ddr(seed):
    rng = np.random.default_rng(seed)
    # orthogonal changes of frame keep the Kahler conditions exact
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    R = Q.T @ standard_j(4) @ Q if rng.random() < 0.7 else random_invertible(rng, 4)
    for k in [(1, 0, 0, 0), (1, -1, 2, 0), (0, 1, 1, 1)]:
        res = corollary_conditions(k, np.eye(4), R)
        if max(res.values()) <= 1e-11:
            assert ddr_lemma_check(k, np.eye(4), R).status == "pass"


# -- symplectic relations -------------------------------------------------------------

def test_sympl_standard_t2():
    rel = sympl_relations_check(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]),
                                modes=[(1, 0), (0, 1), (2, -1)])
    for key in ("star_Rinv", "hodge_R", "Rinv_hodge", "adjoint_twisted", "d_dstar_commutator"):
        assert max(rel[key]) <= 1e-11, key
    assert rel["adjoint_twisted"][0] == 0


def test_sympl_multi_eigenvalue_t4():
    rel = sympl_relations_check(G_MULTI, K4, R4_MULTI,
                                modes=enumerate_modes(4, 1))
    for key in ("star_Rinv", "hodge_R", "Rinv_hodge", "adjoint_twisted", "d_dstar_commutator",
                "star_squared"):
        assert max(rel[key]) <= 1e-10, key


def test_sympl_rejects_uncalibrated():
    with pytest.raises(CalibrationError):
        sympl_relations_check(4 * np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_sympl_rejects_wrong_convention():
    with pytest.raises(ValueError):
        sympl_relations_check(G_MULTI, K4, R5_MULTI)


# -- scans ----------------------------------------------------------------------------

def test_enumerate_modes():
    modes = enumerate_modes(4, 3)
    assert len(modes) == 7 ** 4 and len(set(modes)) == len(modes)


def test_scan_preserves_order():
    modes = enumerate_modes(2, 2)
    assert scan_modes(lambda k: k, modes, workers=4) == modes


@given(modes4, seeds)
def test_conjugate_mode_symmetry(k, seed):
    R = random_invertible(np.random.default_rng(seed), 4)
    assert assert_conjugate_symmetry(k, R) <= 1e-12


def test_degree_blocks():
    d = mode_d((1, 2, 3, 4))
    assert set(d.blocks) == {0, 1, 2, 3}
    assert d.block(4).shape == (0, 1)
    sl = degree_slices(4)
    assert np.array_equal(d.block(1), d.matrix[sl[2], sl[1]])
    with pytest.raises(ValueError):
        ModeOperator(4, 1, np.eye(16))

"""Random field generators shared by the test modules."""

from __future__ import annotations

import numpy as np

from ddrlab.fields import Chart, EndoField, FormField, ScalarField, VectorField

J0 = np.array([[0.0, -1.0], [1.0, 0.0]])


def block_diag(*blocks) -> np.ndarray:
    n = sum(len(b) for b in blocks)
    out = np.zeros((n, n))
    i = 0
    for b in blocks:
        k = len(b)
        out[i:i + k, i:i + k] = b
        i += k
    return out


def standard_j(dim: int) -> np.ndarray:
    return block_diag(*[J0] * (dim // 2))


def random_polynomial(rng, names, degree: int = 2, terms: int = 3, trig: bool = False) -> str:
    """A random polynomial in ``names`` with small integer coefficients, as source text."""
    parts = []
    for _ in range(terms):
        c = int(rng.integers(-3, 4)) or 1
        mono = [f"{names[int(rng.integers(len(names)))]}^{int(rng.integers(1, degree + 1))}"
                for _ in range(int(rng.integers(0, degree + 1)))]
        if trig and rng.random() < 0.5:
            mono.append(f"{'sin' if rng.random() < 0.5 else 'cos'}({names[int(rng.integers(len(names)))]})")
        parts.append("*".join([str(c)] + mono))
    return " + ".join(parts)


def random_scalar(rng, chart: Chart, **kw) -> ScalarField:
    return ScalarField.parse(chart, random_polynomial(rng, chart.names, **kw))


def random_vector(rng, chart: Chart, **kw) -> VectorField:
    return VectorField.parse(chart, [random_polynomial(rng, chart.names, **kw)
                                     for _ in range(chart.dim)])


def random_form(rng, chart: Chart, degree: int, **kw) -> FormField:
    from ddrlab.exterior import multi_indices
    comps = {",".join(str(i + 1) for i in I): random_polynomial(rng, chart.names, **kw)
             for I in multi_indices(chart.dim, degree)}
    return FormField.parse(chart, degree, comps)


def random_endo(rng, chart: Chart, shift: float = 3.0, scale: float = 0.25, **kw) -> EndoField:
    """shift*I plus small polynomial entries; invertible on the unit box for shift >= 3."""
    n = chart.dim
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            src = f"{scale}*({random_polynomial(rng, chart.names, **kw)})"
            if i == j:
                src = f"{shift} + {src}"
            row.append(src)
        rows.append(row)
    return EndoField.parse(chart, rows)


def random_point(rng, dim: int, box: float = 0.5) -> np.ndarray:
    return rng.uniform(-box, box, size=dim)


def random_invertible(rng, n: int, min_sv: float = 0.2) -> np.ndarray:
    while True:
        A = rng.normal(size=(n, n))
        if np.linalg.svd(A, compute_uv=False).min() > min_sv:
            return A


def random_spd(rng, n: int) -> np.ndarray:
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


def calibrated_pair(rng, lambdas):
    """(G, K) with G = B^T G0 B, K = B^T K0 B and R = -K^{-1} G of spectrum ``lambdas``.

    G0 = diag(l, l, ...), K0 = block J0-type, so -R0^2 has eigenvalues l^2 and
    det R = 1 when prod(l) = 1.  A random change of basis B preserves both.
    """
    K0 = -standard_j(2 * len(lambdas))
    G0 = np.diag([l for l in lambdas for _ in range(2)])
    B = random_invertible(rng, 2 * len(lambdas))
    return B.T @ G0 @ B, B.T @ K0 @ B


def pulled_back_structure(chart: Chart, G, K, amplitudes):
    """(g, kappa) = (F^T G F, F^T K F) with F the Jacobian of y_i = x_i + c_i sin(x_{i+1}).

    Pulling back a constant pair along a diffeomorphism keeps kappa closed,
    the compatible endomorphism integrable and its spectrum constant.
    """
    from ddrlab.kahler import two_form_of_matrix
    n = chart.dim
    names = chart.names
    rows = [["0"] * n for _ in range(n)]
    for i in range(n):
        rows[i][i] = "1"
        j = (i + 1) % n
        rows[i][j] = f"{amplitudes[i]}*cos({names[j]})"
    F = EndoField.parse(chart, rows)
    g = F.transpose() @ EndoField.constant(chart, G) @ F
    kappa = two_form_of_matrix(F.transpose() @ EndoField.constant(chart, K) @ F)
    return g, kappa

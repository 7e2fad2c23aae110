from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geomflux.errors import DimensionMismatch, NonHermitianInput
from geomflux.families import (
    AvoidedCrossingFamily,
    CallableFamily,
    MatrixPolynomialFamily,
    SeededRandomPolynomialFamily,
    SpinFamily,
    evaluate,
    family_from_config,
    finite_difference_gradient,
    gradient,
    spin_matrices,
)
from geomflux.linalg import random_hermitian

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0]).astype(complex)

BUILTINS = [SpinFamily(0.5), SpinFamily(1.0), AvoidedCrossingFamily(0.2),
            SeededRandomPolynomialFamily(5, 3, seed=3)]


def _hermitian_defect(M):
    return np.max(np.abs(M - M.conj().T))


def test_spin_family_at_north_pole():
    np.testing.assert_allclose(evaluate(SpinFamily(), [0, 0, 1]), 0.5 * SZ, atol=1e-15)


def test_spin_gradient_is_half_pauli():
    G = gradient(SpinFamily(), [0.3, -2.0, 0.1])
    np.testing.assert_allclose(G, 0.5 * np.stack([SX, SY, SZ]), atol=1e-15)


def test_polynomial_at_zero_gives_constant_term(rng):
    C0, C1 = random_hermitian(3, rng), random_hermitian(3, rng)
    fam = MatrixPolynomialFamily([((0,), C0), ((1,), C1)])
    np.testing.assert_allclose(evaluate(fam, [0.0]), C0, atol=0)


def test_polynomial_gradient_of_square(rng):
    C0, C1 = random_hermitian(3, rng), random_hermitian(3, rng)
    fam = MatrixPolynomialFamily([((0,), C0), ((2,), C1)])
    np.testing.assert_allclose(gradient(fam, [3.0])[0], 6 * C1, rtol=1e-14)


def test_seeded_family_is_reproducible():
    a = evaluate(SeededRandomPolynomialFamily(5, 3, seed=11), [0.1, 0.2, -0.3])
    b = evaluate(SeededRandomPolynomialFamily(5, 3, seed=11), [0.1, 0.2, -0.3])
    assert a.tobytes() == b.tobytes()
    c = evaluate(SeededRandomPolynomialFamily(5, 3, seed=12), [0.1, 0.2, -0.3])
    assert np.max(np.abs(a - c)) > 1e-3


@pytest.mark.parametrize("family", BUILTINS, ids=lambda f: f"{f.kind}-{f.dim}")
def test_finite_difference_matches_analytic_gradient(family, rng):
    for _ in range(5):
        R = rng.uniform(-1, 1, family.param_dim)
        G = gradient(family, R)
        F = finite_difference_gradient(family, R)
        assert np.max(np.abs(F - G)) <= 1e-7 * max(np.max(np.abs(G)), 1e-300)


@pytest.mark.parametrize("family", BUILTINS, ids=lambda f: f"{f.kind}-{f.dim}")
def test_hermiticity_at_100_points(family, rng):
    for _ in range(100):
        R = rng.uniform(-2, 2, family.param_dim)
        assert _hermitian_defect(evaluate(family, R)) == 0.0
        assert max(_hermitian_defect(g) for g in gradient(family, R)) <= 1e-10


@given(R=st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_spin_spectrum_is_plus_minus_half_norm(R):
    w = np.linalg.eigvalsh(evaluate(SpinFamily(), R))
    r = np.linalg.norm(R)
    np.testing.assert_allclose(w, [-r / 2, r / 2], atol=1e-10)


def test_spin_matrices_commutator():
    for s in (0.5, 1.0, 1.5):
        Jx, Jy, Jz = spin_matrices(s)
        np.testing.assert_allclose(Jx @ Jy - Jy @ Jx, 1j * Jz, atol=1e-13)


def test_wrong_dimension_raises():
    with pytest.raises(DimensionMismatch):
        evaluate(SpinFamily(), [0.0, 1.0])
    with pytest.raises(DimensionMismatch):
        evaluate(SpinFamily(), [0.0, np.nan, 1.0])


def test_non_hermitian_coefficient_rejected():
    with pytest.raises(NonHermitianInput):
        MatrixPolynomialFamily([((0,), np.array([[0.0, 1.0], [0.0, 0.0]]))])


def test_callable_family_uses_finite_differences():
    fam = CallableFamily(lambda R: R[0] ** 2 * SX + np.sin(R[1]) * SZ, 2, 2)
    G = gradient(fam, [0.7, 0.3])
    np.testing.assert_allclose(G[0], 1.4 * SX, atol=1e-8)
    np.testing.assert_allclose(G[1], np.cos(0.3) * SZ, atol=1e-8)


def test_family_from_config_kinds():
    assert family_from_config({"kind": "builtin-spin", "spin": 1.0}).dim == 3
    fam = family_from_config({"kind": "matrix-polynomial", "hbar": 2.0,
                              "terms": [{"powers": [1], "matrix": [[[1, 0], [0, 0]], [[0, 0], [-1, 0]]]}]})
    assert fam.hbar == 2.0
    np.testing.assert_allclose(evaluate(fam, [2.0]), 2 * SZ)
    seeded = family_from_config({"kind": "seeded-random-polynomial", "dim": 4, "param_dim": 2, "seed": 5})
    assert seeded.to_config()["seed"] == 5

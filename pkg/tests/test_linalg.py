from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geomflux.errors import NonHermitianInput
from geomflux.linalg import (
    as_hermitian,
    hermitian_eigendecomposition,
    propagator,
    random_hermitian,
    spectral_function,
)

SZ = np.diag([1.0, -1.0]).astype(complex)


def test_diagonal_matrix_sorted_with_swapped_vectors():
    eig = hermitian_eigendecomposition(np.diag([2.0, 1.0]))
    np.testing.assert_array_equal(eig.eigenvalues, [1.0, 2.0])
    np.testing.assert_allclose(np.abs(eig.eigenvectors), [[0, 1], [1, 0]], atol=0)


def test_half_sigma_z_eigenvalues():
    eig = hermitian_eigendecomposition(0.5 * SZ)
    np.testing.assert_allclose(eig.eigenvalues, [-0.5, 0.5], atol=1e-15)


def test_random_6x6_residual(rng):
    M = random_hermitian(6, rng)
    eig = hermitian_eigendecomposition(M)
    norm = eig.norm
    for k in range(6):
        v = eig.eigenvectors[:, k]
        assert np.linalg.norm(M @ v - eig.eigenvalues[k] * v) <= 1e-10 * norm


def test_non_hermitian_rejected():
    with pytest.raises(NonHermitianInput):
        hermitian_eigendecomposition(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(NonHermitianInput):
        as_hermitian(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(NonHermitianInput):
        as_hermitian(np.ones((2, 3)))


def test_tiny_defect_is_symmetrised():
    M = np.array([[1.0, 1.0 + 1e-14j], [1.0, 2.0]])
    H = as_hermitian(M)
    np.testing.assert_array_equal(H, H.conj().T)


def test_spectral_function_examples():
    M = np.diag([1.0, 2.0])
    np.testing.assert_allclose(spectral_function(M, lambda w: w), M, atol=1e-15)
    np.testing.assert_allclose(spectral_function(random_hermitian(4, np.random.default_rng(1)),
                                                 lambda w: np.exp(1j * 0 * w)), np.eye(4), atol=1e-14)
    U = spectral_function(0.5 * SZ, lambda w: np.exp(1j * w))
    np.testing.assert_allclose(U, np.diag([np.exp(0.5j), np.exp(-0.5j)]), atol=1e-15)


def test_determinism(rng):
    M = random_hermitian(8, rng)
    a, b = hermitian_eigendecomposition(M), hermitian_eigendecomposition(M.copy())
    assert a.eigenvalues.tobytes() == b.eigenvalues.tobytes()
    assert a.eigenvectors.tobytes() == b.eigenvectors.tobytes()


@given(dim=st.integers(1, 16), seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-3, 1e3))
def test_reconstruction_and_orthonormality(dim, seed, scale):
    M = random_hermitian(dim, np.random.default_rng(seed), scale)
    eig = hermitian_eigendecomposition(M)
    norm = max(eig.norm, 1e-300)
    assert np.max(np.abs(eig.reconstruct() - M)) <= 1e-10 * norm
    V = eig.eigenvectors
    assert np.max(np.abs(V.conj().T @ V - np.eye(dim))) <= 1e-10
    assert np.all(np.diff(eig.eigenvalues) >= 0)


@given(seed=st.integers(0, 2**32 - 1), t=st.floats(-1e3, 1e3))
def test_propagator_unitary(seed, t):
    U = propagator(random_hermitian(5, np.random.default_rng(seed)), t)
    assert np.max(np.abs(U @ U.conj().T - np.eye(5))) <= 1e-10

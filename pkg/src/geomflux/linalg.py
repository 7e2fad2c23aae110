"""Dense Hermitian linear algebra for the small matrices used throughout.

Everything here is a pure function of its inputs.  Eigendecompositions are
backed by LAPACK's ``zheevd`` through :func:`numpy.linalg.eigh`, which is
deterministic for identical input on a given build.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonHermitianInput

HERMITIAN_RTOL = 1e-12


def as_hermitian(M, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Validate ``M`` as Hermitian and return the exactly Hermitian ``(M + M^H)/2``.

    Raises
    ------
    NonHermitianInput
        If ``max|M - M^H| > rtol * max|M|``.
    """
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise NonHermitianInput(f"expected a non-empty square matrix, got shape {M.shape}")
    scale = np.abs(M).max()
    if not np.isfinite(scale):
        raise NonHermitianInput("matrix has non-finite entries")
    MH = M.conj().T
    defect = np.abs(M - MH).max()
    if defect > rtol * scale:
        raise NonHermitianInput(
            f"Hermiticity defect {defect:.3e} exceeds {rtol:g} * max|M| = {rtol * scale:.3e}",
            defect=float(defect),
        )
    return 0.5 * (M + MH)


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues and the matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def norm(self) -> float:
        """Spectral norm, i.e. the largest eigenvalue modulus."""
        return float(np.max(np.abs(self.eigenvalues)))

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def hermitian_eigendecomposition(M) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix.

    Eigenvalues are returned in ascending order; exact ties keep LAPACK's
    ordering, which is stable for identical input.
    """
    H = as_hermitian(M)
    w, V = np.linalg.eigh(H)
    w.setflags(write=False)
    V.setflags(write=False)
    return EigenDecomposition(w, V)


def _decomposition(M) -> EigenDecomposition:
    if isinstance(M, EigenDecomposition):
        return M
    return hermitian_eigendecomposition(M)


def spectral_function(M, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Return ``sum_k f(lambda_k) |v_k><v_k|``.

    ``f`` receives the whole eigenvalue array and must be vectorised (any
    numpy ufunc expression works).  ``M`` may also be a precomputed
    :class:`EigenDecomposition`.
    """
    eig = _decomposition(M)
    fw = np.asarray(f(eig.eigenvalues), dtype=complex)
    V = eig.eigenvectors
    return (V * fw) @ V.conj().T


def propagator(M, t: float, hbar: float = 1.0) -> np.ndarray:
    """Unitary ``exp(-i M t / hbar)``."""
    return spectral_function(M, lambda w: np.exp(-1j * w * t / hbar))


def to_eigenbasis(eig: EigenDecomposition, O) -> np.ndarray:
    V = eig.eigenvectors
    return V.conj().T @ np.asarray(O, dtype=complex) @ V


def from_eigenbasis(eig: EigenDecomposition, O) -> np.ndarray:
    V = eig.eigenvectors
    return V @ O @ V.conj().T


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """GUE-like Hermitian matrix with entries of typical size ``scale``."""
    X = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * 0.5 * (X + X.conj().T) / np.sqrt(2.0)

"""Parameterised Hermitian Hamiltonian families ``h(R)`` and their gradients."""
from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, NonHermitianInput
from .linalg import as_hermitian, random_hermitian

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

FD_REL_STEP = 1e-5


def _contract(w: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``sum_k w[k] C[k]`` for a stack of matrices."""
    return (w @ C.reshape(C.shape[0], -1)).reshape(C.shape[1:])


def parameter_point(R, param_dim: int | None = None) -> np.ndarray:
    R = np.atleast_1d(np.asarray(R, dtype=float))
    if R.ndim != 1 or R.size == 0:
        raise DimensionMismatch(f"parameter point must be a non-empty vector, got shape {R.shape}")
    if not np.isfinite(R.sum()):
        raise DimensionMismatch("parameter point has non-finite coordinates", point=R)
    if param_dim is not None and R.size != param_dim:
        raise DimensionMismatch(
            f"parameter point has {R.size} coordinates, family expects {param_dim}",
            expected=param_dim,
            got=int(R.size),
        )
    return R


def spin_matrices(spin: float = 0.5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin-``j`` matrices (Jx, Jy, Jz) in the descending-``m`` basis."""
    dim = int(round(2 * spin)) + 1
    if dim < 2 or abs((dim - 1) / 2 - spin) > 1e-12:
        raise ValueError(f"spin must be a positive half-integer, got {spin}")
    m = spin - np.arange(dim)
    jz = np.diag(m).astype(complex)
    # <m+1|J+|m> = sqrt(j(j+1) - m(m+1))
    jp = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        jp[k - 1, k] = np.sqrt(spin * (spin + 1) - m[k] * (m[k] + 1))
    jm = jp.conj().T
    return 0.5 * (jp + jm), -0.5j * (jp - jm), jz


class HamiltonianFamily:
    """A map from parameter points to Hermitian matrices.

    Subclasses implement ``_evaluate`` and optionally ``_gradient``; without
    an analytic gradient the central-difference fallback is used.
    Instances are treated as immutable.
    """

    kind = "abstract"

    def __init__(self, dim: int, param_dim: int, hbar: float = 1.0):
        if dim < 1 or param_dim < 1:
            raise ValueError("dim and param_dim must be positive")
        if not hbar > 0:
            raise ValueError("hbar must be positive")
        self.dim = int(dim)
        self.param_dim = int(param_dim)
        self.hbar = float(hbar)

    def evaluate(self, R) -> np.ndarray:
        R = parameter_point(R, self.param_dim)
        return as_hermitian(self._evaluate(R))

    def gradient(self, R) -> np.ndarray:
        """Stacked ``(param_dim, dim, dim)`` array of Hermitian ``dh/dR_i``."""
        R = parameter_point(R, self.param_dim)
        G = self._gradient(R)
        if G is None:
            G = finite_difference_gradient(self, R)
        return np.stack([as_hermitian(g, rtol=1e-10) for g in G])

    def _evaluate(self, R: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _gradient(self, R: np.ndarray):
        return None

    def to_config(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} has no config representation")

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, param_dim={self.param_dim}, hbar={self.hbar})"


def evaluate(family: HamiltonianFamily, R) -> np.ndarray:
    return family.evaluate(R)


def gradient(family: HamiltonianFamily, R) -> np.ndarray:
    return family.gradient(R)


def finite_difference_gradient(family: HamiltonianFamily, R) -> np.ndarray:
    """Central differences with one Richardson level.

    Component step is ``max(1e-5, 1e-5 |R_i|)``; the estimate combines the
    ``eps`` and ``2 eps`` stencils as ``(4 D(eps) - D(2 eps)) / 3``.
    """
    R = parameter_point(R, family.param_dim)
    out = np.empty((family.param_dim, family.dim, family.dim), dtype=complex)
    for i in range(family.param_dim):
        eps = max(FD_REL_STEP, FD_REL_STEP * abs(R[i]))
        e = np.zeros_like(R)
        e[i] = eps
        d1 = (family._evaluate(R + e) - family._evaluate(R - e)) / (2 * eps)
        d2 = (family._evaluate(R + 2 * e) - family._evaluate(R - 2 * e)) / (4 * eps)
        out[i] = (4 * d1 - d2) / 3
    return out


class SpinFamily(HamiltonianFamily):
    """Zeeman family ``h = R . J`` for spin ``j`` (default 1/2)."""

    kind = "builtin-spin"

    def __init__(self, spin: float = 0.5, hbar: float = 1.0):
        self.spin = float(spin)
        self._J = np.stack(spin_matrices(self.spin))
        super().__init__(self._J.shape[1], 3, hbar)

    def _evaluate(self, R):
        return _contract(R, self._J)

    def _gradient(self, R):
        return self._J.copy()

    def to_config(self):
        return {"kind": self.kind, "spin": self.spin, "hbar": self.hbar}


class AvoidedCrossingFamily(HamiltonianFamily):
    """Two-level avoided crossing ``h = R1 sx + R2 sz + delta sy``."""

    kind = "builtin-avoided-crossing"

    def __init__(self, delta: float = 0.1, hbar: float = 1.0):
        self.delta = float(delta)
        super().__init__(2, 2, hbar)

    def _evaluate(self, R):
        return R[0] * SIGMA_X + R[1] * SIGMA_Z + self.delta * SIGMA_Y

    def _gradient(self, R):
        return np.stack([SIGMA_X, SIGMA_Z])

    def to_config(self):
        return {"kind": self.kind, "delta": self.delta, "hbar": self.hbar}


class MatrixPolynomialFamily(HamiltonianFamily):
    """``h(R) = sum_k (prod_i R_i ** p_ki) C_k`` with Hermitian coefficients ``C_k``."""

    kind = "matrix-polynomial"

    def __init__(self, terms: Sequence[tuple[Sequence[int], np.ndarray]], hbar: float = 1.0):
        if not terms:
            raise ValueError("a matrix polynomial needs at least one term")
        powers, mats = [], []
        for p, C in terms:
            p = tuple(int(x) for x in p)
            if any(x < 0 for x in p):
                raise ValueError(f"negative power in {p}")
            try:
                mats.append(as_hermitian(C))
            except NonHermitianInput as exc:
                raise NonHermitianInput(f"coefficient for powers {p} is not Hermitian: {exc}") from exc
            powers.append(p)
        dims = {C.shape[0] for C in mats}
        pdims = {len(p) for p in powers}
        if len(dims) != 1 or len(pdims) != 1:
            raise DimensionMismatch("inconsistent coefficient shapes or power-vector lengths")
        self.powers = np.array(powers, dtype=int)
        self.coefficients = np.stack(mats)
        self.powers.setflags(write=False)
        self.coefficients.setflags(write=False)
        super().__init__(dims.pop(), pdims.pop(), hbar)

    def _monomials(self, R):
        return np.prod(R[None, :] ** self.powers, axis=1)

    def _evaluate(self, R):
        return _contract(self._monomials(R), self.coefficients)

    def _gradient(self, R):
        out = np.zeros((self.param_dim, self.dim, self.dim), dtype=complex)
        for i in range(self.param_dim):
            p = self.powers[:, i]
            reduced = self.powers.copy()
            reduced[:, i] = np.maximum(p - 1, 0)
            w = p * np.prod(R[None, :] ** reduced, axis=1)
            out[i] = _contract(w, self.coefficients)
        return out

    def to_config(self):
        return {
            "kind": self.kind,
            "dim": self.dim,
            "param_dim": self.param_dim,
            "hbar": self.hbar,
            "terms": [
                {"powers": [int(x) for x in p], "matrix": encode_complex_matrix(C)}
                for p, C in zip(self.powers, self.coefficients)
            ],
        }


class SeededRandomPolynomialFamily(MatrixPolynomialFamily):
    """Random matrix polynomial of degree <= 2, fully determined by ``seed``.

    The constant term is ``diag(0, 1, ..., N-1)`` plus a GUE perturbation,
    which keeps levels separated by O(1) gaps for ``|R_i| <~ 1``.
    """

    kind = "seeded-random-polynomial"

    def __init__(
        self,
        dim: int,
        param_dim: int,
        seed: int,
        degree: int = 2,
        hbar: float = 1.0,
        linear_scale: float = 0.3,
        quadratic_scale: float = 0.08,
    ):
        if degree not in (0, 1, 2):
            raise ValueError("degree must be 0, 1 or 2")
        self.seed = int(seed)
        self.degree = int(degree)
        self.linear_scale = float(linear_scale)
        self.quadratic_scale = float(quadratic_scale)
        rng = np.random.default_rng(self.seed)
        terms = [((0,) * param_dim, np.diag(np.arange(dim, dtype=float)) + random_hermitian(dim, rng, 0.2))]
        if degree >= 1:
            for i in range(param_dim):
                p = [0] * param_dim
                p[i] = 1
                terms.append((p, random_hermitian(dim, rng, linear_scale)))
        if degree >= 2:
            for i, j in itertools.combinations_with_replacement(range(param_dim), 2):
                p = [0] * param_dim
                p[i] += 1
                p[j] += 1
                terms.append((p, random_hermitian(dim, rng, quadratic_scale)))
        super().__init__(terms, hbar)

    def to_config(self):
        return {
            "kind": self.kind,
            "dim": self.dim,
            "param_dim": self.param_dim,
            "seed": self.seed,
            "degree": self.degree,
            "hbar": self.hbar,
        }


class CallableFamily(HamiltonianFamily):
    """Wrap an arbitrary ``R -> matrix`` function; gradients by finite differences.

    Python-API only; not expressible in a config file.
    """

    kind = "callable"

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], dim: int, param_dim: int,
                 hbar: float = 1.0, grad: Callable[[np.ndarray], np.ndarray] | None = None):
        self._func = func
        self._grad = grad
        super().__init__(dim, param_dim, hbar)

    def _evaluate(self, R):
        return np.asarray(self._func(R), dtype=complex)

    def _gradient(self, R):
        if self._grad is None:
            return None
        return np.asarray(self._grad(R), dtype=complex)


def constant_family(matrix, param_dim: int = 1, hbar: float = 1.0) -> MatrixPolynomialFamily:
    return MatrixPolynomialFamily([((0,) * param_dim, np.asarray(matrix))], hbar=hbar)


def spherical_spin_family(radius: float = 1.0, spin: float = 0.5, hbar: float = 1.0) -> CallableFamily:
    """Spin family restricted to the sphere, parameterised by ``(theta, phi)``."""
    J = np.stack(spin_matrices(spin))

    def n_hat(x):
        th, ph = x
        return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])

    def func(x):
        return radius * _contract(n_hat(x), J)

    def grad(x):
        th, ph = x
        d_th = np.array([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
        d_ph = np.array([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), 0.0])
        return radius * np.stack([_contract(d_th, J), _contract(d_ph, J)])

    return CallableFamily(func, J.shape[1], 2, hbar=hbar, grad=grad)


def encode_complex_matrix(C) -> list:
    C = np.asarray(C, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in C]


def decode_complex_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError("complex matrix must be a nested array of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def family_from_config(block: dict) -> HamiltonianFamily:
    """Build a family from an already-validated config block."""
    kind = block["kind"]
    hbar = block.get("hbar", 1.0)
    if kind == "builtin-spin":
        return SpinFamily(block.get("spin", 0.5), hbar=hbar)
    if kind == "builtin-avoided-crossing":
        return AvoidedCrossingFamily(block.get("delta", 0.1), hbar=hbar)
    if kind == "matrix-polynomial":
        terms = [(t["powers"], decode_complex_matrix(t["matrix"])) for t in block["terms"]]
        return MatrixPolynomialFamily(terms, hbar=hbar)
    if kind == "seeded-random-polynomial":
        return SeededRandomPolynomialFamily(
            block["dim"], block["param_dim"], block["seed"], degree=block.get("degree", 2), hbar=hbar
        )
    raise ValueError(f"unknown family kind {kind!r}")

"""Time-domain quantities at fixed ``R``: Heisenberg evolution, the projector-force
correlation ``Q(t)``, its regularised time integral, susceptibilities, and the
force-force representation of the metric diagonal.

Time evolution is ``O_t = exp(i h t / hbar) O exp(-i h t / hbar)``.  With
``A = P_n(R0)`` and ``B_i = d_i h`` the symmetrised correlators are::

    C_AB(t) = 1/2 <n| A_{-t} B + B A_{-t} |n>
    C_BA(t) = 1/2 <n| A B_t + B_t A |n>
    Q(t)    = C_AB(-t) - C_BA(t)
            = -2 Im sum_{m != n} sin((e_n - e_m) t / hbar) <n|P_n(R0) P_m(R) B|n>

``Q`` is a pure sine series, so its time integral only exists with a
convergence factor ``exp(-s t)``; the ``s -> 0`` limit is taken exactly on the
mode decomposition.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .families import HamiltonianFamily, parameter_point
from .geometry import _check_levels, _reference_overlap, eigen_at, fluctuation_data, spectrum
from .linalg import EigenDecomposition

TAIL_TOL = 1e-10
POINTS_PER_PERIOD = 20


def heisenberg_operator(eigensys: EigenDecomposition, O, t: float, hbar: float = 1.0) -> np.ndarray:
    """``(O_t)_jk = exp(i (e_j - e_k) t / hbar) O_jk`` in the eigenbasis, mapped back."""
    O = np.asarray(O, dtype=complex)
    if t == 0:
        return O.copy()
    V = eigensys.eigenvectors
    ph = np.exp(1j * eigensys.eigenvalues * t / hbar)
    Ot = (ph[:, None] * (V.conj().T @ O @ V)) * ph.conj()[None, :]
    return V @ Ot @ V.conj().T


def _propagate(eig: EigenDecomposition, vec: np.ndarray, times: np.ndarray, hbar: float) -> np.ndarray:
    """``exp(-i h t / hbar) vec`` for every ``t``; shape (T, N)."""
    V = eig.eigenvectors
    ph = np.exp(-1j * np.outer(times, eig.eigenvalues) / hbar)
    return (ph * (V.conj().T @ vec)[None, :]) @ V.T


def _evolved_element(eig: EigenDecomposition, bra: np.ndarray, O: np.ndarray, ket: np.ndarray,
                     times: np.ndarray, hbar: float) -> np.ndarray:
    """``<bra|O_t|ket> = <U(t) bra| O |U(t) ket>``."""
    ub = _propagate(eig, bra, times, hbar)
    uk = _propagate(eig, ket, times, hbar)
    return np.einsum("ta,ab,tb->t", ub.conj(), O, uk, optimize=True)


# ---------------------------------------------------------------------- modes

@dataclass(frozen=True)
class ModeSum:
    """Real signal ``f_i(t) = sum_m sin_coef[i, m] sin(w_m t) + cos_coef[i, m] cos(w_m t)``."""

    omegas: np.ndarray
    sin_coef: np.ndarray
    cos_coef: np.ndarray = None

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        s = np.atleast_2d(np.asarray(self.sin_coef, dtype=float))
        c = np.zeros_like(s) if self.cos_coef is None else np.atleast_2d(np.asarray(self.cos_coef, dtype=float))
        if s.shape[1] != w.size or c.shape != s.shape:
            raise ValueError("coefficient arrays must have shape (d, len(omegas))")
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "sin_coef", s)
        object.__setattr__(self, "cos_coef", c)

    @property
    def components(self) -> int:
        return self.sin_coef.shape[0]

    def evaluate(self, times) -> np.ndarray:
        wt = np.outer(self.omegas, np.asarray(times, dtype=float))
        return self.sin_coef @ np.sin(wt) + self.cos_coef @ np.cos(wt)

    def amplitude_bound(self) -> np.ndarray:
        return np.sum(np.abs(self.sin_coef) + np.abs(self.cos_coef), axis=1)

    def laplace(self, z) -> np.ndarray:
        """``int_0^inf exp(-z t) f(t) dt``; ``z = 0`` gives the exact Abel limit."""
        w = self.omegas
        if z == 0:
            zero = w == 0
            val = self.sin_coef[:, ~zero] @ (1.0 / w[~zero])
            static = np.any(self.cos_coef[:, zero] != 0, axis=1)
            return np.where(static, np.inf, val)
        den = z * z + w * w
        return self.sin_coef @ (w / den) + self.cos_coef @ (z / den)

    def laplace_t(self, s: float) -> np.ndarray:
        """``int_0^inf t exp(-s t) f(t) dt`` (requires no zero-frequency modes at ``s = 0``)."""
        w = self.omegas
        if s == 0:
            if np.any(w == 0):
                raise ZeroDivisionError("zero-frequency mode has no finite s -> 0 limit")
            return self.sin_coef @ (0.0 * w) + self.cos_coef @ (-1.0 / w ** 2)
        den = (s * s + w * w) ** 2
        return self.sin_coef @ (2 * s * w / den) + self.cos_coef @ ((s * s - w * w) / den)


@dataclass(frozen=True)
class IntegralEstimate:
    value: np.ndarray
    error: np.ndarray
    method: str
    t_max: float = 0.0
    nodes: int = 0


def quadrature_time_integral(sampler: Callable[[np.ndarray], np.ndarray], s: float, omega_max: float,
                             amplitude: np.ndarray, tail_tol: float = TAIL_TOL,
                             order: int = POINTS_PER_PERIOD) -> IntegralEstimate:
    """Gauss-Legendre panels for ``int_0^t_max exp(-s t) f(t) dt``.

    ``t_max`` is set by ``exp(-s t_max) = tail_tol``; each panel spans the
    shortest oscillation period ``2 pi / omega_max`` and carries ``order``
    nodes.  The error estimate adds the tail bound
    ``amplitude * exp(-s t_max) / s``, the difference to a lower-order rule
    on the same panels, and a rounding allowance scaled by the largest
    component.
    """
    if not s > 0:
        raise ValueError("quadrature needs s > 0")
    t_max = -np.log(tail_tol) / s
    panel = 2 * np.pi / omega_max if omega_max > 0 else t_max
    n_panels = max(1, int(np.ceil(t_max / panel)))
    edges = np.linspace(0.0, t_max, n_panels + 1)

    def rule(k):
        x, w = np.polynomial.legendre.leggauss(k)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        wt = (half[:, None] * w[None, :]).ravel() * np.exp(-s * t)
        f = np.atleast_2d(sampler(t))
        return f @ wt, np.abs(f) @ np.abs(wt), t.size

    hi, absint, nodes = rule(order)
    lo, _, _ = rule(order - 6)
    tail = np.asarray(amplitude) * np.exp(-s * t_max) / s
    # rounding in the sampled trace is set by the largest component, not each one
    err = np.abs(hi - lo) + tail + 64 * np.finfo(float).eps * np.max(absint)
    return IntegralEstimate(hi, err, "quadrature", t_max, nodes)


# ------------------------------------------------------------------ correlators

@dataclass(frozen=True)
class CorrelationData:
    """Spectral data of ``Q`` and the two symmetrised correlators at one (R, R0, n)."""

    R: np.ndarray
    R0: np.ndarray
    level: int
    hbar: float
    eig: EigenDecomposition
    z: np.ndarray            # (d, N): <n|P_n(R0) P_m(R) B_i|n>, all m including m = n
    omegas: np.ndarray       # (N,): (e_n - e_m) / hbar
    projector: np.ndarray
    forces: np.ndarray
    state: np.ndarray

    @property
    def others(self) -> np.ndarray:
        return np.arange(self.omegas.size) != self.level

    def q_modes(self) -> ModeSum:
        k = self.others
        return ModeSum(self.omegas[k], -2.0 * np.imag(self.z[:, k]))

    def c_ab_reversed_modes(self) -> ModeSum:
        """``C_AB(-t) = 1/2 <{A_t, B}>`` = sum_m Re z cos(w t) - Im z sin(w t)."""
        return ModeSum(self.omegas, -np.imag(self.z), np.real(self.z))

    def c_ba_modes(self) -> ModeSum:
        return ModeSum(self.omegas, np.imag(self.z), np.real(self.z))


def correlation_data(family: HamiltonianFamily, R, R0, n: int) -> CorrelationData:
    R = parameter_point(R, family.param_dim)
    R0 = parameter_point(R0, family.param_dim)
    eig = spectrum(family, R)
    _check_levels(eig, [n], R)
    V, w = eig.eigenvectors, eig.eigenvalues
    v = V[:, n]
    v0 = eigen_at(family, R0, n).state
    _reference_overlap(v0, v, R)
    G = family.gradient(R)
    left = np.vdot(v, v0) * (v0.conj() @ V)                 # <n|n0><n0|m>
    force = np.einsum("am,iab,b->im", V.conj(), G, v)         # <m|B_i|n>
    z = force * left[None, :]
    return CorrelationData(R, R0, n, family.hbar, eig, z, (w[n] - w) / family.hbar,
                           np.outer(v0, v0.conj()), G, v)


def _heisenberg_correlators(data: CorrelationData, times: np.ndarray):
    """(Q, C_AB, C_BA) on ``times`` from explicitly evolved operators."""
    times = np.asarray(times, dtype=float)
    v, A, hbar, eig = data.state, data.projector, data.hbar, data.eig
    Av = A @ v
    d = data.forces.shape[0]
    Q = np.empty((d, times.size))
    cab = np.empty((d, times.size))
    cba = np.empty((d, times.size))
    imag = 0.0
    for i in range(d):
        B = data.forces[i]
        Bv = B @ v
        # 1/2 <n|A B_t + B_t A|n>
        c_ba = 0.5 * (_evolved_element(eig, Av, B, v, times, hbar) + _evolved_element(eig, v, B, Av, times, hbar))
        # 1/2 <n|A_s B + B A_s|n> at s = t (C_AB(-t)) and s = -t (C_AB(t))
        c_ab_rev = 0.5 * (_evolved_element(eig, v, A, Bv, times, hbar) + _evolved_element(eig, Bv, A, v, times, hbar))
        c_ab = 0.5 * (_evolved_element(eig, v, A, Bv, -times, hbar) + _evolved_element(eig, Bv, A, v, -times, hbar))
        q = c_ab_rev - c_ba
        imag = max(imag, float(np.max(np.abs(np.imag(q)))), float(np.max(np.abs(np.imag(c_ab)))))
        Q[i], cab[i], cba[i] = q.real, c_ab.real, c_ba.real
    return Q, cab, cba, imag


def _heisenberg_q(data: CorrelationData, times: np.ndarray) -> np.ndarray:
    """``Q`` alone from explicitly evolved states, each propagated once."""
    times = np.asarray(times, dtype=float)
    v, A, hbar, eig = data.state, data.projector, data.hbar, data.eig
    uv = _propagate(eig, v, times, hbar)
    uav = _propagate(eig, A @ v, times, hbar)
    a_uv = uv @ A.T
    Q = np.empty((data.forces.shape[0], times.size))
    for i, B in enumerate(data.forces):
        ubv = _propagate(eig, B @ v, times, hbar)
        b_uv = uv @ B.T
        c_ba = 0.5 * (np.einsum("ta,ta->t", uav.conj(), b_uv) + np.einsum("ta,ta->t", b_uv.conj(), uav))
        c_ab_rev = 0.5 * (np.einsum("ta,ta->t", uv.conj(), ubv @ A.T) + np.einsum("ta,ta->t", ubv.conj(), a_uv))
        Q[i] = (c_ab_rev - c_ba).real
    return Q


@dataclass(frozen=True)
class CorrelationTrace:
    times: np.ndarray
    Q: np.ndarray
    C_AB: np.ndarray
    C_BA: np.ndarray
    level: int
    R: np.ndarray
    R0: np.ndarray
    form: str
    imag_residue: float = 0.0
    data: CorrelationData | None = field(default=None, repr=False)

    @property
    def modes(self) -> ModeSum:
        return self.data.q_modes()


def q_correlation(family: HamiltonianFamily, R, R0, n: int, times: Sequence[float],
                  form: str = "heisenberg") -> CorrelationTrace:
    """Sample ``Q_i(t)`` (and the symmetrised correlators) at ``times``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size < 1:
        raise ValueError("need at least one time")
    data = correlation_data(family, R, R0, n)
    if form == "heisenberg":
        Q, cab, cba, imag = _heisenberg_correlators(data, times)
        if imag > 1e-10:
            raise ArithmeticError(f"correlator imaginary residue {imag:.3e} exceeds 1e-10")
    elif form == "spectral":
        Q = data.q_modes().evaluate(times)
        cab = data.c_ab_reversed_modes().evaluate(-times)
        cba = data.c_ba_modes().evaluate(times)
        imag = 0.0
    else:
        raise ValueError(f"unknown form {form!r}")
    return CorrelationTrace(times, Q, cab, cba, n, data.R, data.R0, form, imag, data)


def regularized_time_integral(source, s: float, method: str = "mode-sum") -> IntegralEstimate:
    """``int_0^inf exp(-s t) Q(t) dt`` per component.

    ``source`` is a :class:`ModeSum`, :class:`CorrelationData` or
    :class:`CorrelationTrace`.  ``mode-sum`` is exact (``s = 0`` allowed);
    ``quadrature`` samples the Heisenberg-form correlator when the source
    carries correlation data, otherwise the mode sum itself.
    """
    if isinstance(source, CorrelationTrace):
        source = source.data
    modes = source.q_modes() if isinstance(source, CorrelationData) else source
    if method == "mode-sum":
        val = modes.laplace(s)
        return IntegralEstimate(val, np.zeros_like(val), method)
    if method == "quadrature":
        if isinstance(source, CorrelationData):
            def sampler(t):
                return _heisenberg_q(source, t)
        else:
            sampler = modes.evaluate
        om = float(np.max(np.abs(modes.omegas))) if modes.omegas.size else 0.0
        return quadrature_time_integral(sampler, s, om, modes.amplitude_bound())
    raise ValueError(f"unknown method {method!r}")


def neville_to_zero(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Polynomial extrapolation of ``y(x)`` to ``x = 0``; error from dropping the largest ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.atleast_2d(np.asarray(y, dtype=float))        # (k, d)

    def extrap(xs, ys):
        P = list(ys)
        k = len(xs)
        for level in range(1, k):
            for j in range(k - level):
                P[j] = (xs[j + level] * P[j] - xs[j] * P[j + 1]) / (xs[j + level] - xs[j])
        return P[0]

    full = extrap(x, y)
    if x.size < 2:
        return full, np.full_like(full, np.inf)
    order = np.argsort(x)
    reduced = extrap(x[order][:-1], y[order][:-1])
    return full, np.abs(full - reduced)


# --------------------------------------------------------------------- theorem

@dataclass(frozen=True)
class TheoremReport:
    lhs: np.ndarray
    rhs: np.ndarray
    residuals: np.ndarray
    s_values: np.ndarray
    method: str
    deltaB: np.ndarray
    lam: np.ndarray
    quadrature_by_s: np.ndarray = None
    quadrature_error_by_s: np.ndarray = None
    mode_sum_by_s: np.ndarray = None
    quadrature_lhs: np.ndarray = None
    quadrature_lhs_error: np.ndarray = None

    @property
    def quadrature_consistent(self) -> bool:
        """Quadrature matches the mode sum at every ``s`` within its own error estimate."""
        if self.quadrature_by_s is None:
            return True
        return bool(np.all(np.abs(self.quadrature_by_s - self.mode_sum_by_s) <= self.quadrature_error_by_s))

    @property
    def extrapolation_consistent(self) -> bool:
        if self.quadrature_lhs is None:
            return True
        return bool(np.all(np.abs(self.quadrature_lhs - self.lhs) <= self.quadrature_lhs_error))

    def max_relative_residual(self) -> float:
        scale = np.maximum(np.maximum(np.abs(self.lhs), np.abs(self.rhs)), 1e-12)
        return float(np.max(self.residuals / scale))


def theorem_check(family: HamiltonianFamily, R, R0, n: int,
                  s_sequence: Sequence[float] = (0.2, 0.1, 0.05), quadrature: bool = True) -> TheoremReport:
    """Compare ``-(1/2 hbar) int_0^inf Q dt`` with ``lambda_i dB_i``.

    The left side is the exact ``s -> 0`` mode sum; when ``quadrature`` is set
    the Heisenberg-form trace is also integrated at each ``s`` and
    extrapolated to ``s = 0`` in ``s**2``.
    """
    data = correlation_data(family, R, R0, n)
    hbar = family.hbar
    modes = data.q_modes()
    lhs = -modes.laplace(0.0) / (2 * hbar)
    fd = fluctuation_data(family, R, R0, n)
    rhs = fd.lam * fd.deltaB
    kw = {}
    s_arr = np.asarray(s_sequence, dtype=float)
    if quadrature and s_arr.size:
        q = [regularized_time_integral(data, s, "quadrature") for s in s_arr]
        qv = np.array([e.value for e in q])
        qe = np.array([e.error for e in q])
        ms = np.array([modes.laplace(s) for s in s_arr])
        ext, ext_err = neville_to_zero(s_arr ** 2, qv)
        kw = dict(
            quadrature_by_s=qv,
            quadrature_error_by_s=qe,
            mode_sum_by_s=ms,
            quadrature_lhs=-ext / (2 * hbar),
            quadrature_lhs_error=(ext_err + np.max(qe, axis=0)) / (2 * hbar),
        )
    return TheoremReport(lhs, rhs, np.abs(lhs - rhs), s_arr, "mode-sum", fd.deltaB, fd.lam, **kw)


@dataclass(frozen=True)
class SusceptibilityReport:
    z_values: np.ndarray
    chi_AB: np.ndarray          # (d, Z) complex
    chi_BA: np.ndarray
    extrapolated_difference: np.ndarray
    integral_Q: np.ndarray
    theorem_rhs: np.ndarray     # -2 hbar lambda_i dB_i

    @property
    def residual(self) -> np.ndarray:
        return np.abs(self.extrapolated_difference - self.theorem_rhs)


def susceptibility(family: HamiltonianFamily, R, R0, n: int, z_sequence: Sequence[complex]) -> SusceptibilityReport:
    """Laplace transforms of the two symmetrised correlators entering ``Q``.

    ``chi_AB(z)`` transforms ``C_AB(-t)`` and ``chi_BA(z)`` transforms
    ``C_BA(t)``, so ``chi_AB - chi_BA`` is the transform of ``Q``; both carry
    the static ``1/z`` term of the diagonal matrix element, which cancels in
    the difference.
    """
    data = correlation_data(family, R, R0, n)
    zs = np.atleast_1d(np.asarray(z_sequence, dtype=complex))
    ab, ba = data.c_ab_reversed_modes(), data.c_ba_modes()
    chi_ab = np.stack([ab.laplace(z) for z in zs], axis=1)
    chi_ba = np.stack([ba.laplace(z) for z in zs], axis=1)
    k = data.others
    diff = ModeSum(data.omegas[k], ab.sin_coef[:, k] - ba.sin_coef[:, k]).laplace(0.0)
    integral = data.q_modes().laplace(0.0)
    fd = fluctuation_data(family, R, R0, n)
    rhs = -2 * family.hbar * fd.lam * fd.deltaB
    return SusceptibilityReport(np.real(zs) if np.all(np.imag(zs) == 0) else zs,
                                chi_ab, chi_ba, diff, integral, rhs)


# ---------------------------------------------------------------- force-force

def force_force_modes(family: HamiltonianFamily, R, n: int) -> ModeSum:
    """Connected ``<n|(d_i h)_t d_i h|n> + <n|d_i h (d_i h)_t|n>`` as cosine modes."""
    R = parameter_point(R, family.param_dim)
    eig = spectrum(family, R)
    _check_levels(eig, [n], R)
    V, w = eig.eigenvectors, eig.eigenvalues
    F = np.einsum("am,iab,b->im", V.conj(), family.gradient(R), V[:, n])
    cos = 2 * np.abs(F) ** 2
    cos[:, n] -= 2 * np.real(F[:, n]) ** 2          # subtract <d_i h>^2 (connected part)
    keep = np.arange(w.size) != n
    omegas = (w[n] - w) / family.hbar
    return ModeSum(omegas[keep], np.zeros_like(cos[:, keep]), cos[:, keep])


def force_force_correlation(family: HamiltonianFamily, R, n: int, times) -> np.ndarray:
    return force_force_modes(family, R, n).evaluate(times)


def gii_from_force_correlation(family: HamiltonianFamily, R, n: int, s: float = 0.0) -> np.ndarray:
    """``-(1/2 hbar^2) int_0^inf t exp(-s t) [connected force-force] dt``; ``s = 0`` is the exact limit."""
    return -force_force_modes(family, R, n).laplace_t(s) / (2 * family.hbar ** 2)

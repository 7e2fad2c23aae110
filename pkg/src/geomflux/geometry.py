"""Gauge-geometric quantities of a single adiabatic level.

Conventions
-----------
* Levels are labelled by ascending energy.
* Gauge: every eigenvector is rotated so that its largest-modulus entry (the
  *pivot*, lowest index on ties) is real and positive.  Finite-difference
  stencils reuse the pivot chosen at the stencil centre so that the gauge
  is smooth across the stencil.
* ``A = i<n|dn>`` (Berry connection), ``P`` the reference potential,
  ``Omega = A - P`` the open-path connection; its line integral from the
  path start is the open-path geometric phase.
* ``B_i`` is the Hermitian operator with ``|d_i n> = i B_i |n>``; the
  generator of the parameter change is ``-hbar B``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateSpectrum,
    DimensionMismatch,
    LevelTrackingLost,
    PathNotClosed,
    ReferenceOverlapVanishing,
)
from .families import HamiltonianFamily, parameter_point
from .linalg import EigenDecomposition, hermitian_eigendecomposition

GAP_RTOL = 1e-8
OVERLAP_TOL = 1e-6
PIVOT_TIE_RTOL = 1e-9
EIG_FD_STEP = 1e-4
DELTA_B_FLOOR = 1e-10
TRACKING_MIN_OVERLAP2 = 0.5

ROUTES = ("AP", "fluctuation", "sum-over-states")
PHASE_ROUTES = ROUTES + ("metric",)


# --------------------------------------------------------------------------- gauge

def gauge_pivot(v: np.ndarray) -> int:
    a = np.abs(v)
    top = a.max()
    return int(np.flatnonzero(a >= top * (1 - PIVOT_TIE_RTOL))[0])


def fix_gauge(v: np.ndarray, pivot: int | None = None) -> np.ndarray:
    """Rotate ``v`` (vector or column stack) so entry ``pivot`` is real positive."""
    if v.ndim == 1:
        p = gauge_pivot(v) if pivot is None else pivot
        z = v[p]
        return v * (np.conj(z) / abs(z))
    pivots = [gauge_pivot(v[:, k]) for k in range(v.shape[1])] if pivot is None else pivot
    z = v[pivots, np.arange(v.shape[1])]
    return v * (np.conj(z) / np.abs(z))[None, :]


class PolynomialPhase:
    """Real scalar field ``alpha(R) = sum_k c_k prod_i R_i ** p_ki`` used as a gauge."""

    def __init__(self, terms: Sequence[tuple[Sequence[int], float]]):
        self.powers = np.array([tuple(p) for p, _ in terms], dtype=int)
        self.coef = np.array([c for _, c in terms], dtype=float)

    @classmethod
    def zero(cls, param_dim: int):
        return cls([((0,) * param_dim, 0.0)])

    @classmethod
    def random(cls, param_dim: int, rng: np.random.Generator, degree: int = 3, scale: float = 1.0):
        terms = []
        for p in np.ndindex(*(degree + 1,) * param_dim):
            if sum(p) <= degree:
                terms.append((p, scale * rng.uniform(-1, 1)))
        return cls(terms)

    def __call__(self, R) -> float:
        R = np.asarray(R, dtype=float)
        return float(self.coef @ np.prod(R[None, :] ** self.powers, axis=1))

    def gradient(self, R) -> np.ndarray:
        R = np.asarray(R, dtype=float)
        out = np.empty(R.size)
        for i in range(R.size):
            p = self.powers[:, i]
            red = self.powers.copy()
            red[:, i] = np.maximum(p - 1, 0)
            out[i] = self.coef @ (p * np.prod(R[None, :] ** red, axis=1))
        return out


def _phase(gauge, R) -> complex:
    return 1.0 if gauge is None else np.exp(1j * gauge(R))


# ---------------------------------------------------------------------- eigenpairs

@dataclass(frozen=True)
class LabeledEigenpair:
    label: int
    energy: float
    state: np.ndarray
    pivot: int


@dataclass(frozen=True)
class ReferenceEigenstate:
    base_point: np.ndarray
    state: np.ndarray
    overlap: complex


def spectrum(family: HamiltonianFamily, R) -> EigenDecomposition:
    # evaluate() already returns an exactly Hermitian matrix
    w, V = np.linalg.eigh(family.evaluate(R))
    w.setflags(write=False)
    V.setflags(write=False)
    return EigenDecomposition(w, V)


def _check_levels(eig: EigenDecomposition, levels, R) -> None:
    w = eig.eigenvalues
    tol = GAP_RTOL * eig.norm
    for n in levels:
        if not 0 <= n < w.size:
            raise DimensionMismatch(f"level {n} out of range for dimension {w.size}")
        gaps = np.abs(np.delete(w, n) - w[n])
        if gaps.size and gaps.min() <= tol:
            raise DegenerateSpectrum(
                f"level {n} is degenerate within {gaps.min():.3e} at R={np.asarray(R).tolist()}",
                level=int(n),
                point=np.asarray(R),
                gap=float(gaps.min()),
            )


def eigen_at(family: HamiltonianFamily, R, n: int, pivot: int | None = None) -> LabeledEigenpair:
    R = parameter_point(R, family.param_dim)
    eig = spectrum(family, R)
    _check_levels(eig, [n], R)
    v = eig.eigenvectors[:, n]
    p = gauge_pivot(v) if pivot is None else pivot
    return LabeledEigenpair(int(n), float(eig.eigenvalues[n]), fix_gauge(v, p), p)


def reference_state(family: HamiltonianFamily, R, R0, n: int, gauge=None) -> ReferenceEigenstate:
    """``chi_n(R) = (<n(R)|n(R0)> / |<n(R)|n(R0)>|) |n(R)>``; independent of the gauge of ``|n(R)>``."""
    R = parameter_point(R, family.param_dim)
    R0 = parameter_point(R0, family.param_dim)
    n_R = eigen_at(family, R, n).state * _phase(gauge, R)
    n_0 = eigen_at(family, R0, n).state * _phase(gauge, R0)
    c = np.vdot(n_R, n_0)
    if abs(c) < OVERLAP_TOL:
        raise ReferenceOverlapVanishing(
            f"|<n(R0)|n(R)>| = {abs(c):.3e} below {OVERLAP_TOL:g}", point=R, overlap=float(abs(c))
        )
    return ReferenceEigenstate(R0, (c / abs(c)) * n_R, np.conj(c))


# ------------------------------------------------------------------ local frames

@dataclass(frozen=True)
class LocalFrame:
    """Gauge-fixed eigenvectors of selected levels at ``R`` and their parameter derivatives.

    ``states[:, k]`` is level ``levels[k]``; ``derivs[i, :, k]`` is its
    derivative along ``R_i`` (central differences, one Richardson level).
    """

    R: np.ndarray
    eig: EigenDecomposition
    levels: tuple
    pivots: tuple
    states: np.ndarray
    derivs: np.ndarray


def _stencil_states(family, points, levels, pivots, gauge) -> np.ndarray:
    """Gauge-fixed level columns at each point, from one stacked ``eigh`` call."""
    H = np.stack([family.evaluate(x) for x in points])
    V = np.linalg.eigh(H)[1][:, :, list(levels)]
    z = V[:, list(pivots), np.arange(len(levels))]
    V = V * (np.conj(z) / np.abs(z))[:, None, :]
    if gauge is not None:
        V = V * np.array([_phase(gauge, x) for x in points])[:, None, None]
    return V


def local_frame(family: HamiltonianFamily, R, levels=None, pivots=None, gauge=None,
                step: float = EIG_FD_STEP) -> LocalFrame:
    R = parameter_point(R, family.param_dim)
    eig = spectrum(family, R)
    levels = tuple(range(family.dim)) if levels is None else tuple(int(n) for n in levels)
    _check_levels(eig, levels, R)
    V = eig.eigenvectors[:, levels]
    if pivots is None:
        pivots = tuple(gauge_pivot(V[:, k]) for k in range(len(levels)))
    pivots = tuple(pivots)

    center = fix_gauge(np.array(V), list(pivots)) * _phase(gauge, R)
    d = family.param_dim
    points = []
    eps = np.empty(d)
    for i in range(d):
        eps[i] = max(step, step * abs(R[i]))
        e = np.zeros(d)
        e[i] = eps[i]
        points += [R + e, R - e, R + 2 * e, R - 2 * e]
    S = _stencil_states(family, points, levels, pivots, gauge)
    derivs = np.empty((d,) + center.shape, dtype=complex)
    for i in range(d):
        sp, sm, sp2, sm2 = S[4 * i:4 * i + 4]
        d1 = (sp - sm) / (2 * eps[i])
        d2 = (sp2 - sm2) / (4 * eps[i])
        derivs[i] = (4 * d1 - d2) / 3
    return LocalFrame(R, eig, levels, pivots, center, derivs)


def _level_column(frame: LocalFrame, n: int) -> int:
    try:
        return frame.levels.index(n)
    except ValueError:
        raise DimensionMismatch(f"level {n} not in frame levels {frame.levels}") from None


def _connection_from_frame(frame: LocalFrame, n: int) -> np.ndarray:
    k = _level_column(frame, n)
    v = frame.states[:, k]
    return -np.imag(frame.derivs[:, :, k] @ v.conj())


def berry_connection(family: HamiltonianFamily, R, n: int, gauge=None, pivot=None) -> np.ndarray:
    """``A_n = i<n|grad n>`` in the pivot gauge (optionally times ``exp(i alpha)``).

    The value depends on the gauge convention; only loop integrals and the
    combinations in :func:`gauge_potentials` are physical.
    """
    frame = local_frame(family, R, [n], None if pivot is None else [pivot], gauge)
    return _connection_from_frame(frame, n)


def berry_connection_perturbative(family: HamiltonianFamily, R, n: int, pivot=None) -> np.ndarray:
    """Analytic pivot-gauge connection from first-order perturbation theory.

    With ``c_m = <m|d h|n> / (e_n - e_m)`` and pivot index ``p``,
    ``A = Im(sum_m c_m <p|m>) / <p|n>``.
    """
    R = parameter_point(R, family.param_dim)
    eig = spectrum(family, R)
    _check_levels(eig, [n], R)
    V = eig.eigenvectors
    v = V[:, n]
    p = gauge_pivot(v) if pivot is None else pivot
    v = fix_gauge(v, p)
    G = family.gradient(R)
    w = eig.eigenvalues
    others = [m for m in range(w.size) if m != n]
    Vo = V[:, others]
    c = np.einsum("am,iab,b->im", Vo.conj(), G, v) / (w[n] - w[others])[None, :]
    return np.imag(c @ Vo[p, :]) / v[p].real


# ------------------------------------------------------------------- B operator

def b_operator(family: HamiltonianFamily, R, R_ref=None, gauge=None) -> np.ndarray:
    """Operators ``B_i = -i (d_i U) U^dagger`` with ``U = sum_m |m(R)><m(R_ref)|``.

    Returned exactly as computed (finite-difference derivatives), so the
    Hermiticity defect is a measurable accuracy diagnostic.
    """
    R = parameter_point(R, family.param_dim)
    R_ref = R if R_ref is None else parameter_point(R_ref, family.param_dim)
    frame = local_frame(family, R, None, None, gauge)
    ref = fix_gauge(np.array(spectrum(family, R_ref).eigenvectors))
    U_dag = ref @ frame.states.conj().T
    return np.stack([-1j * (frame.derivs[i] @ ref.conj().T) @ U_dag for i in range(family.param_dim)])


def generator(family: HamiltonianFamily, R, R_ref=None) -> np.ndarray:
    """``g = i hbar (grad U) U^dagger = -hbar B``."""
    return -family.hbar * b_operator(family, R, R_ref)


def hermiticity_defect(ops: np.ndarray) -> float:
    return float(np.max(np.abs(ops - np.conj(np.swapaxes(ops, -1, -2)))))


@dataclass(frozen=True)
class FluctuationData:
    B_ops: np.ndarray
    deltaB: np.ndarray
    lam: np.ndarray
    overlap: complex
    perp_states: tuple
    mean_B: np.ndarray
    flagged: np.ndarray
    state: np.ndarray
    reference: np.ndarray
    hermiticity_defect: float


def _reference_overlap(n_0, n_R, R):
    o = np.vdot(n_0, n_R)
    if abs(o) < OVERLAP_TOL:
        raise ReferenceOverlapVanishing(
            f"|<n(R0)|n(R)>| = {abs(o):.3e} below {OVERLAP_TOL:g}",
            point=np.asarray(R),
            overlap=float(abs(o)),
        )
    return o


def fluctuation_data(family: HamiltonianFamily, R, R0, n: int, gauge=None) -> FluctuationData:
    R = parameter_point(R, family.param_dim)
    R0 = parameter_point(R0, family.param_dim)
    frame = local_frame(family, R, None, None, gauge)
    raw = np.stack([-1j * frame.derivs[i] @ frame.states.conj().T for i in range(family.param_dim)])
    defect = hermiticity_defect(raw)
    B = 0.5 * (raw + np.conj(np.swapaxes(raw, -1, -2)))
    v = frame.states[:, n]
    v0 = eigen_at(family, R0, n).state * _phase(gauge, R0)
    o = _reference_overlap(v0, v, R)

    Bv = B @ v
    mean = np.real(Bv @ v.conj())
    var = np.sum(np.abs(Bv) ** 2, axis=1) - mean ** 2
    deltaB = np.sqrt(np.maximum(var, 0.0))
    lam = np.zeros(family.param_dim)
    perps = []
    flagged = deltaB <= DELTA_B_FLOOR
    for i in range(family.param_dim):
        if flagged[i]:
            perps.append(None)
            continue
        perp = (Bv[i] - mean[i] * v) / deltaB[i]
        perps.append(perp)
        lam[i] = np.real(np.vdot(v0, perp) * np.vdot(v, v0))
    return FluctuationData(B, deltaB, lam, o, tuple(perps), mean, flagged, v, v0, defect)


# ------------------------------------------------------------------ potentials

@dataclass(frozen=True)
class GaugePotentials:
    A: np.ndarray
    P: np.ndarray
    Omega: np.ndarray
    route: str
    flagged: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def _sum_over_states_matrix(family, R, R0, n, eig=None):
    """``M_i = sum_{m != n} <n|P_n(R0) P_m(R) d_i h|n> / (e_n - e_m)`` and the overlap."""
    eig = spectrum(family, R) if eig is None else eig
    _check_levels(eig, [n], R)
    V = eig.eigenvectors
    w = eig.eigenvalues
    v = V[:, n]
    v0 = eigen_at(family, R0, n).state
    o = _reference_overlap(v0, v, R)
    G = family.gradient(R)
    others = [m for m in range(w.size) if m != n]
    Vo = V[:, others]
    # <n|n0><n0|m> <m|d_i h|n>
    left = np.vdot(v, v0) * (v0.conj() @ Vo)
    force = np.einsum("am,iab,b->im", Vo.conj(), G, v)
    M = (force * left[None, :]) @ (1.0 / (w[n] - w[others]))
    return M, o


def gauge_potentials(family: HamiltonianFamily, R, R0, n: int, route: str = "AP",
                     gauge=None) -> GaugePotentials:
    """``A``, ``P`` and ``Omega = A - P`` at ``R`` relative to the base point ``R0``.

    Routes
    ------
    ``AP``
        ``A`` and ``P`` from finite-difference eigenvector derivatives and the
        projections onto ``|n(R0)>``.
    ``fluctuation``
        ``Omega_i = lambda_i dB_i / |<n(R0)|n(R)>|^2``.
    ``sum-over-states``
        ``Omega = Im M / |<n(R0)|n(R)>|^2`` with ``M`` built from ``grad h``;
        ``A`` is the analytic pivot-gauge connection.
    """
    R = parameter_point(R, family.param_dim)
    R0 = parameter_point(R0, family.param_dim)
    if route == "AP":
        frame = local_frame(family, R, [n], None, gauge)
        v = frame.states[:, 0]
        dv = frame.derivs[:, :, 0]
        v0 = eigen_at(family, R0, n).state * _phase(gauge, R0)
        o = _reference_overlap(v0, v, R)
        A = -np.imag(dv @ v.conj())
        x = (dv @ v0.conj()) * np.vdot(v, v0)            # <n0|d n><n|n0>
        y = np.vdot(v0, v) * (dv.conj() @ v0)            # <n0|n><d n|n0>
        P = np.real(1j / (2 * abs(o) ** 2) * (x - y))
        return GaugePotentials(A, P, A - P, route, np.zeros(family.param_dim, dtype=bool))
    if route == "fluctuation":
        fd = fluctuation_data(family, R, R0, n, gauge)
        A = -fd.mean_B
        Omega = fd.lam * fd.deltaB / abs(fd.overlap) ** 2
        if fd.flagged.any():
            M, o = _sum_over_states_matrix(family, R, R0, n)
            Omega = np.where(fd.flagged, np.imag(M) / abs(o) ** 2, Omega)
        return GaugePotentials(A, A - Omega, Omega, route, fd.flagged.copy())
    if route == "sum-over-states":
        M, o = _sum_over_states_matrix(family, R, R0, n)
        Omega = np.imag(M) / abs(o) ** 2
        A = berry_connection_perturbative(family, R, n)
        if gauge is not None:
            A = A - gauge.gradient(R)
        return GaugePotentials(A, A - Omega, Omega, route, np.zeros(family.param_dim, dtype=bool))
    raise ValueError(f"unknown route {route!r}; expected one of {ROUTES}")


def gauge_transform_check(family: HamiltonianFamily, R, R0, n: int, alpha: PolynomialPhase) -> dict:
    """Compare potentials before and after ``|n> -> exp(i alpha)|n>``.

    Returns the maximum deviations from ``A -> A - grad alpha``,
    ``P -> P - grad alpha`` and ``Omega -> Omega``.
    """
    R = parameter_point(R, family.param_dim)
    before = gauge_potentials(family, R, R0, n, "AP")
    after = gauge_potentials(family, R, R0, n, "AP", gauge=alpha)
    grad = alpha.gradient(R)
    return {
        "A": float(np.max(np.abs(after.A - (before.A - grad)))),
        "P": float(np.max(np.abs(after.P - (before.P - grad)))),
        "Omega": float(np.max(np.abs(after.Omega - before.Omega))),
        "grad_alpha": grad,
    }


# ---------------------------------------------------------------------- metric

@dataclass(frozen=True)
class GeometricTensor:
    g: np.ndarray
    v: np.ndarray
    route: str

    @property
    def T(self) -> np.ndarray:
        return self.g + 1j * self.v


def _tensor_derivative(frame: LocalFrame, col: int = 0) -> np.ndarray:
    v = frame.states[:, col]
    dv = frame.derivs[:, :, col]
    proj = dv @ v.conj()                       # <n|d_i n>
    return dv.conj() @ dv.T - np.outer(proj.conj(), proj)


def metric_and_geometric_tensor(family: HamiltonianFamily, R, n: int,
                                route: str = "derivative") -> GeometricTensor:
    """Quantum geometric tensor ``T = g + i v`` of level ``n``.

    ``derivative``: ``<d_i n|d_j n> - <d_i n|n><n|d_j n>`` from finite
    differences.  ``force-states``: ``sum_{m != n} <n|d_i h|m><m|d_j h|n> /
    (e_n - e_m)^2``.
    """
    R = parameter_point(R, family.param_dim)
    if route == "derivative":
        T = _tensor_derivative(local_frame(family, R, [n]))
    elif route == "force-states":
        T = _tensor_force_states(family, R, n)
    else:
        raise ValueError(f"unknown metric route {route!r}")
    g = 0.5 * (T.real + T.real.T)
    v = 0.5 * (T.imag - T.imag.T)
    return GeometricTensor(g, v, route)


def _tensor_force_states(family, R, n):
    eig = spectrum(family, R)
    _check_levels(eig, [n], R)
    V, w = eig.eigenvectors, eig.eigenvalues
    others = [m for m in range(w.size) if m != n]
    Vo = V[:, others]
    F = np.einsum("am,iab,b->im", Vo.conj(), family.gradient(R), V[:, n])   # <m|d_i h|n>
    inv2 = 1.0 / (w[n] - w[others]) ** 2
    return (F.conj() * inv2[None, :]) @ F.T


# ---------------------------------------------------------------------- paths

@dataclass(frozen=True)
class ParameterPath:
    """Ordered parameter samples.  A closed path repeats its first sample at the end."""

    samples: np.ndarray
    closed: bool = False

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if s.shape[0] < 2:
            raise ValueError("a path needs at least two samples")
        if not np.all(np.isfinite(s)):
            raise ValueError("path samples must be finite")
        if self.closed and np.max(np.abs(s[0] - s[-1])) > 1e-12:
            raise PathNotClosed("closed path must end at its first sample",
                                mismatch=float(np.max(np.abs(s[0] - s[-1]))))
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def param_dim(self) -> int:
        return self.samples.shape[1]

    @property
    def segments(self) -> int:
        return self.samples.shape[0] - 1

    def arc_lengths(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(self.samples, axis=0), axis=1))])

    @classmethod
    def from_points(cls, points, closed: bool = False):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if closed and np.max(np.abs(pts[0] - pts[-1])) > 1e-12:
            pts = np.vstack([pts, pts[:1]])
        return cls(pts, closed)

    @classmethod
    def line(cls, start, end, segments: int = 512):
        t = np.linspace(0.0, 1.0, segments + 1)[:, None]
        start, end = np.asarray(start, float), np.asarray(end, float)
        return cls(start[None, :] * (1 - t) + end[None, :] * t, False)

    @classmethod
    def latitude_circle(cls, theta: float, segments: int = 512, radius: float = 1.0, phi0: float = 0.0):
        """Closed circle at fixed colatitude ``theta`` in a 3-parameter space."""
        phi = phi0 + 2 * np.pi * np.arange(segments + 1) / segments
        pts = radius * np.stack(
            [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.full_like(phi, np.cos(theta))], axis=1
        )
        pts[-1] = pts[0]
        return cls(pts, True)

    @classmethod
    def meridian_arc(cls, theta0: float, theta1: float, phi: float = 0.0, segments: int = 512,
                     radius: float = 1.0):
        th = np.linspace(theta0, theta1, segments + 1)
        pts = radius * np.stack([np.sin(th) * np.cos(phi), np.sin(th) * np.sin(phi), np.cos(th)], axis=1)
        return cls(pts, False)

    @classmethod
    def ellipse(cls, center, u, v, segments: int = 512):
        """Closed loop ``center + cos(t) u + sin(t) v``."""
        t = 2 * np.pi * np.arange(segments + 1) / segments
        c, u, v = (np.asarray(a, float) for a in (center, u, v))
        pts = c[None, :] + np.cos(t)[:, None] * u[None, :] + np.sin(t)[:, None] * v[None, :]
        pts[-1] = pts[0]
        return cls(pts, True)


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _refined_samples(path: ParameterPath, refine: str) -> tuple[np.ndarray, str]:
    """Return the sample array to integrate on and the effective refinement mode.

    ``coarsen``: Richardson against every other sample (needs an even
    segment count).  ``midpoint``: insert chord midpoints, then coarsen back to
    the original samples.
    """
    s = path.samples
    if refine == "auto":
        refine = "coarsen" if path.segments % 2 == 0 and path.segments >= 4 else "midpoint"
    if refine == "coarsen":
        if path.segments % 2:
            raise ValueError("coarsen refinement needs an even number of segments")
        return s, refine
    if refine == "midpoint":
        out = np.empty((2 * s.shape[0] - 1, s.shape[1]))
        out[0::2] = s
        out[1::2] = 0.5 * (s[:-1] + s[1:])
        return out, refine
    if refine == "none":
        return s, refine
    raise ValueError(f"unknown refinement {refine!r}")


def _trapezoid(values: np.ndarray, samples: np.ndarray) -> float:
    dR = np.diff(samples, axis=0)
    return float(np.sum(0.5 * np.sum((values[:-1] + values[1:]) * dR, axis=1)))


def _richardson_line_integral(values, samples, mode):
    fine = _trapezoid(values, samples)
    if mode == "none":
        return fine, float("nan"), fine, fine
    coarse = _trapezoid(values[::2], samples[::2])
    return fine + (fine - coarse) / 3.0, abs(fine - coarse) / 3.0, fine, coarse


def _wrap(x):
    return float((x + np.pi) % (2 * np.pi) - np.pi)


@dataclass(frozen=True)
class PhaseResult:
    phase: float
    error_estimate: float
    route: str
    trapezoid: float
    coarse: float
    integrand: np.ndarray
    samples: np.ndarray
    flagged: np.ndarray


def _track(states: np.ndarray, samples: np.ndarray) -> None:
    ov = np.abs(np.sum(states[:-1].conj() * states[1:], axis=1)) ** 2
    bad = np.flatnonzero(ov <= TRACKING_MIN_OVERLAP2)
    if bad.size:
        k = int(bad[0])
        raise LevelTrackingLost(
            f"adiabatic level lost between samples {k} and {k + 1} (|overlap|^2 = {ov[k]:.3f})",
            sample=k,
            point=samples[k],
        )


def _omega_metric(family, R, R0, n, gauge=None):
    fd = fluctuation_data(family, R, R0, n, gauge)
    g = metric_and_geometric_tensor(family, R, n, "derivative").g
    scale = fd.lam / abs(fd.overlap) ** 2
    Omega = np.where(fd.deltaB > DELTA_B_FLOOR, np.sign(fd.lam) * np.abs(scale) * np.sqrt(np.maximum(np.diag(g), 0)), 0.0)
    if fd.flagged.any():
        M, o = _sum_over_states_matrix(family, R, R0, n)
        Omega = np.where(fd.flagged, np.imag(M) / abs(o) ** 2, Omega)
    return Omega, fd.flagged


def open_path_phase(family: HamiltonianFamily, path: ParameterPath, n: int, route: str = "AP",
                    refine: str = "auto", gauge=None, workers: int | None = None) -> PhaseResult:
    """Line integral of ``Omega`` from the path start, composite trapezoid plus one Richardson level.

    Raises ``ReferenceOverlapVanishing`` with the offending arc length if the
    overlap with the starting eigenstate vanishes anywhere on the path.
    """
    if path.param_dim != family.param_dim:
        raise DimensionMismatch("path and family parameter dimensions differ",
                                path=path.param_dim, family=family.param_dim)
    if route not in PHASE_ROUTES:
        raise ValueError(f"unknown route {route!r}; expected one of {PHASE_ROUTES}")
    samples, mode = _refined_samples(path, refine)
    R0 = samples[0]
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(samples, axis=0), axis=1))])

    def states(x):
        return eigen_at(family, x, n).state

    _track(np.array(_map(states, samples, workers)), samples)

    def omega(k):
        try:
            if route == "metric":
                return _omega_metric(family, samples[k], R0, n, gauge)
            pot = gauge_potentials(family, samples[k], R0, n, route, gauge)
            return pot.Omega, pot.flagged
        except ReferenceOverlapVanishing as exc:
            exc.context["arc_length"] = float(arc[k])
            exc.context["sample"] = k
            raise

    out = _map(omega, range(samples.shape[0]), workers)
    vals = np.array([o for o, _ in out])
    flagged = np.array([f for _, f in out])
    value, err, fine, coarse = _richardson_line_integral(vals, samples, mode)
    return PhaseResult(value, err, route, fine, coarse, vals, samples, flagged)


@dataclass(frozen=True)
class CyclicPhaseResult:
    phase: float                 # wrapped to [-pi, pi)
    connection_integral: float   # unwrapped connection integral incl. gauge-switch corrections
    error_estimate: float
    overlap_product: float       # -arg prod <n_k|n_k+1>, Richardson-combined, wrapped
    overlap_product_raw: float
    discrepancy: float
    pivot_switches: int


def _overlap_phase(states):
    prods = np.sum(states[:-1].conj() * states[1:], axis=1)
    return -float(np.sum(np.angle(prods)))


def cyclic_berry_phase(family: HamiltonianFamily, loop: ParameterPath, n: int, gauge=None,
                       refine: str = "auto", workers: int | None = None) -> CyclicPhaseResult:
    """Berry phase of a closed loop.

    Primary value: trapezoid integral of the finite-difference connection in
    a piecewise pivot gauge, plus the exact phase jumps where the pivot
    changes, with one Richardson level.  Cross-check: the discrete
    overlap-product formula, Richardson-combined the same way.
    """
    if not loop.closed:
        raise PathNotClosed("cyclic_berry_phase needs a closed loop")
    if loop.param_dim != family.param_dim:
        raise DimensionMismatch("loop and family parameter dimensions differ")
    samples, mode = _refined_samples(loop, refine)
    K = samples.shape[0] - 1
    raw = _map(lambda x: eigen_at(family, x, n).state, samples, workers)
    raw = np.array(raw)
    _track(raw, samples)

    # pivot runs; switches only on even indices so the coarse grid sees every boundary
    run_pivot = np.empty(K, dtype=int)
    p = gauge_pivot(raw[0])
    switches = []
    for k in range(K):
        if k % 2 == 0 and k > 0:
            a = np.abs(raw[k])
            if a[p] < 0.5 * a.max():
                q = gauge_pivot(raw[k])
                switches.append((k, p, q))
                p = q
        run_pivot[k] = p

    def connection(args):
        k, piv = args
        return _connection_from_frame(local_frame(family, samples[k], [n], [piv], gauge), n)

    # sample k uses the pivot of the segment starting at k; the last sample uses the last segment's pivot
    node_pivot = np.append(run_pivot, run_pivot[-1])
    A = np.array(_map(connection, list(zip(range(K + 1), node_pivot)), workers))
    extra = {}
    for k, p_old, _ in switches:
        extra[k] = np.array(connection((k, p_old)))

    def vec(k, piv):
        return fix_gauge(raw[k], piv) * _phase(gauge, samples[k])

    total_fine = total_coarse = 0.0
    bounds = [0] + [k for k, _, _ in switches] + [K]
    for a_idx, b_idx in zip(bounds[:-1], bounds[1:]):
        vals = A[a_idx:b_idx + 1].copy()
        if b_idx in extra:
            vals[-1] = extra[b_idx]
        seg = samples[a_idx:b_idx + 1]
        total_fine += _trapezoid(vals, seg)
        if mode != "none":
            total_coarse += _trapezoid(vals[::2], seg[::2])
    jumps = 0.0
    for k, p_old, p_new in switches:
        jumps -= float(np.angle(np.vdot(vec(k, p_old), vec(k, p_new))))
    # closure: last run's gauge vs first run's gauge at the base point
    jumps -= float(np.angle(np.vdot(vec(K, run_pivot[-1]), vec(0, run_pivot[0]))))
    total_fine += jumps
    if mode == "none":
        value, err = total_fine, float("nan")
    else:
        total_coarse += jumps
        value = total_fine + (total_fine - total_coarse) / 3.0
        err = abs(total_fine - total_coarse) / 3.0

    gauged = raw * np.array([_phase(gauge, x) for x in samples])[:, None]
    op_fine = _overlap_phase(gauged)
    op_coarse = _overlap_phase(gauged[::2]) if mode != "none" else op_fine
    op_fine_w = _wrap(op_fine)
    op = op_fine_w + _wrap(op_fine - op_coarse) / 3.0
    return CyclicPhaseResult(
        _wrap(value), value, err, _wrap(op), op_fine_w, abs(_wrap(value - op)), len(switches)
    )


def phase_difference(a: float, b: float) -> float:
    """Distance between two phases modulo 2 pi."""
    return abs(_wrap(a - b))

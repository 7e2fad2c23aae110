"""Classical fast systems: energy-shell and torus ensembles, velocity-Verlet
trajectories, the classical correlation ``Q_c(t)`` and the classical
fluctuation-correlation check.

Systems are separable, ``h(r, p, R) = sum_j p_j^2 / 2 m_j + V(r, R)``.  The
observable conjugate to ``R`` is ``B = dh/dR`` (same sign convention as the
quantum gradients).  Phase-space arrays are ``(M, N)`` with one row per sample.

The correlation estimated here is::

    Q_c(t) = < A(z_t) B(z) - A(z) B(z_t) >

which is the classical counterpart of the quantum ``Q(t)``: both correlators
evolve one observable forward and the ensemble is stationary, so the
difference is odd in ``t``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _backend
from .errors import EnergyBelowMinimum, NotIntegrable, SamplingFailure, StepSizeTooLarge
from .families import parameter_point

SHELL_ETA = 1e-3
MIN_ACCEPTANCE = 1e-4
DRIFT_TOL = 1e-6
PROPOSAL_BATCH = 1 << 16
CHUNK_ROWS = 4096
GL_ORDER = 20
TAIL_TOL = 1e-10

Observable = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ---------------------------------------------------------------------- systems

class ClassicalFastSystem:
    """Base class for separable classical Hamiltonians ``p^2/2m + V(r, R)``.

    Subclasses implement ``potential``, ``force`` (``-dV/dr``),
    ``potential_gradient_R`` (``dV/dR``), ``potential_minimum`` and
    ``bounding_box``.
    """

    kind = "abstract"
    integrable = False

    def __init__(self, dof: int, param_dim: int, mass=1.0, hbar: float = 1.0):
        if dof < 1 or param_dim < 1:
            raise ValueError("dof and param_dim must be positive")
        self.dof = int(dof)
        self.param_dim = int(param_dim)
        self.mass = np.broadcast_to(np.asarray(mass, dtype=float), (self.dof,)).copy()
        if np.any(self.mass <= 0):
            raise ValueError("masses must be positive")
        self.hbar = float(hbar)

    # -- energy pieces
    def kinetic(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.sum(p * p / (2.0 * self.mass), axis=-1)

    def hamiltonian(self, r, p, R) -> np.ndarray:
        return self.kinetic(p) + self.potential(r, R)

    def potential(self, r, R) -> np.ndarray:
        raise NotImplementedError

    def force(self, r, R) -> np.ndarray:
        raise NotImplementedError

    def potential_gradient_R(self, r, R) -> np.ndarray:
        raise NotImplementedError

    def potential_minimum(self, R) -> float:
        raise NotImplementedError

    def bounding_box(self, R, energy: float) -> tuple[np.ndarray, np.ndarray]:
        """Box containing every ``r`` with ``V(r, R) <= energy``."""
        raise NotImplementedError

    def recommended_dt(self, energy: float) -> float:
        raise NotImplementedError

    def b_generator(self, r, p, R) -> np.ndarray:
        """``B(z) = dh/dR``, shape ``(M, d)``."""
        return self.potential_gradient_R(r, R)

    def b_rate(self, r, p, R) -> np.ndarray:
        """Time derivative of ``B`` along the flow, by a central directional difference."""
        r = np.atleast_2d(np.asarray(r, dtype=float))
        v = np.atleast_2d(np.asarray(p, dtype=float)) / self.mass
        scale = np.maximum(1.0, np.max(np.abs(v), axis=1, keepdims=True))
        eps = 1e-5 / scale
        g_plus = self.potential_gradient_R(r + eps * v, R)
        g_minus = self.potential_gradient_R(r - eps * v, R)
        return (g_plus - g_minus) / (2.0 * eps)

    def advance(self, r: np.ndarray, p: np.ndarray, R, dt: float, n_steps: int, kernels=None) -> None:
        """In-place velocity-Verlet steps (generic numpy version)."""
        hdt = 0.5 * dt
        f = self.force(r, R)
        for _ in range(n_steps):
            p += hdt * f
            r += dt * (p / self.mass)
            f = self.force(r, R)
            p += hdt * f

    def check_point(self, R) -> np.ndarray:
        return parameter_point(R, self.param_dim)

    def to_config(self) -> dict:
        raise NotImplementedError


class HarmonicSystem(ClassicalFastSystem):
    """Independent oscillators ``V = sum_j m_j w_j^2 (r_j - R_j)^2 / 2``.

    The parameter point is the equilibrium position, so ``d = N``.  The
    action-angle map is ``r = R + sqrt(2 I / m w) cos(theta)``,
    ``p = -sqrt(2 m w I) sin(theta)``.
    """

    kind = "builtin-harmonic"
    integrable = True

    def __init__(self, omega=(1.0,), mass=1.0, hbar: float = 1.0):
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        if np.any(omega <= 0):
            raise ValueError("frequencies must be positive")
        super().__init__(omega.size, omega.size, mass, hbar)
        self.omega = omega
        self.stiffness = self.mass * omega ** 2

    def potential(self, r, R):
        x = np.asarray(r, dtype=float) - self.check_point(R)
        return np.sum(0.5 * self.stiffness * x * x, axis=-1)

    def force(self, r, R):
        return -(self.stiffness * (np.asarray(r, dtype=float) - self.check_point(R)))

    def potential_gradient_R(self, r, R):
        # V depends on r - R, so dV/dR = -dV/dr
        return self.force(r, R)

    def b_rate(self, r, p, R):
        return -(self.omega ** 2) * np.asarray(p, dtype=float)

    def potential_minimum(self, R) -> float:
        self.check_point(R)
        return 0.0

    def bounding_box(self, R, energy):
        R = self.check_point(R)
        half = np.sqrt(2.0 * max(energy, 0.0) / self.stiffness)
        return R - half, R + half

    def recommended_dt(self, energy: float) -> float:
        return 1e-3 / float(np.max(self.omega))

    def advance(self, r, p, R, dt, n_steps, kernels=None):
        kernels = kernels or _backend.kernels
        kernels.advance_harmonic(r, p, self.check_point(R), self.stiffness, 1.0 / self.mass,
                                 float(dt), int(n_steps))

    # -- action-angle map
    def from_action_angle(self, R, actions, angles) -> tuple[np.ndarray, np.ndarray]:
        R = self.check_point(R)
        I = np.asarray(actions, dtype=float)
        amp_r = np.sqrt(2.0 * I / (self.mass * self.omega))
        amp_p = np.sqrt(2.0 * self.mass * self.omega * I)
        return R + amp_r * np.cos(angles), -amp_p * np.sin(angles)

    def to_config(self) -> dict:
        return {"kind": self.kind, "omega": self.omega.tolist(), "mass": self.mass.tolist(),
                "hbar": self.hbar}


class QuarticCoupledSystem(ClassicalFastSystem):
    """Two coupled quartic oscillators, ``V = x1^2 x2^2 + beta (x1^4 + x2^4) / 4`` with ``x = r - R``.

    The motion is bounded for ``beta > 0`` and predominantly chaotic for
    small ``beta``.
    """

    kind = "builtin-quartic-coupled"

    def __init__(self, beta: float = 0.05, mass=1.0, hbar: float = 1.0):
        if beta <= 0:
            raise ValueError("beta must be positive for bounded motion")
        super().__init__(2, 2, mass, hbar)
        self.beta = float(beta)

    def _x(self, r, R):
        return np.asarray(r, dtype=float) - self.check_point(R)

    def potential(self, r, R):
        x = self._x(r, R)
        a, b = x[..., 0] ** 2, x[..., 1] ** 2
        return a * b + 0.25 * self.beta * (a * a + b * b)

    def force(self, r, R):
        x = self._x(r, R)
        x1, x2 = x[..., 0], x[..., 1]
        a, b = x1 * x1, x2 * x2
        return np.stack([-(2.0 * x1 * b + self.beta * (x1 * a)),
                         -(2.0 * x2 * a + self.beta * (x2 * b))], axis=-1)

    def potential_gradient_R(self, r, R):
        return self.force(r, R)

    def b_rate(self, r, p, R):
        x = self._x(r, R)
        v = np.asarray(p, dtype=float) / self.mass
        x1, x2 = x[..., 0], x[..., 1]
        h11 = 2.0 * x2 * x2 + 3.0 * self.beta * x1 * x1
        h22 = 2.0 * x1 * x1 + 3.0 * self.beta * x2 * x2
        h12 = 4.0 * x1 * x2
        # dV/dR = -dV/dx, so its rate is -Hess(V) v
        return -np.stack([h11 * v[..., 0] + h12 * v[..., 1], h12 * v[..., 0] + h22 * v[..., 1]], axis=-1)

    def potential_minimum(self, R) -> float:
        self.check_point(R)
        return 0.0

    def bounding_box(self, R, energy):
        R = self.check_point(R)
        half = (4.0 * max(energy, 0.0) / self.beta) ** 0.25
        return R - half, R + half

    def recommended_dt(self, energy: float) -> float:
        # quartic time scales go as E^(-1/4)
        return 5e-4 * max(energy, 1e-12) ** -0.25

    def advance(self, r, p, R, dt, n_steps, kernels=None):
        kernels = kernels or _backend.kernels
        kernels.advance_quartic(r, p, self.check_point(R), self.beta, 1.0 / self.mass,
                                float(dt), int(n_steps))

    def to_config(self) -> dict:
        return {"kind": self.kind, "beta": self.beta, "mass": self.mass.tolist(), "hbar": self.hbar}


class SeparableSystem(ClassicalFastSystem):
    """User-defined separable system from vectorised callables.

    Parameters
    ----------
    potential, force, gradient_R : callable
        ``(r, R) -> V``, ``-dV/dr`` and ``dV/dR`` for ``r`` of shape ``(M, N)``.
    potential_minimum : float
        Lower bound of ``V`` used for shell sizing.
    box : callable
        ``(R, E) -> (lo, hi)`` enclosing ``V <= E``.
    """

    kind = "separable-analytic"

    def __init__(self, dof, param_dim, potential, force, gradient_R, potential_minimum, box,
                 mass=1.0, hbar: float = 1.0, dt: float = 1e-3):
        super().__init__(dof, param_dim, mass, hbar)
        self._V, self._F, self._G = potential, force, gradient_R
        self._vmin = float(potential_minimum)
        self._box = box
        self._dt = float(dt)

    def potential(self, r, R):
        return np.asarray(self._V(np.asarray(r, dtype=float), self.check_point(R)), dtype=float)

    def force(self, r, R):
        return np.asarray(self._F(np.asarray(r, dtype=float), self.check_point(R)), dtype=float)

    def potential_gradient_R(self, r, R):
        return np.asarray(self._G(np.asarray(r, dtype=float), self.check_point(R)), dtype=float)

    def potential_minimum(self, R) -> float:
        self.check_point(R)
        return self._vmin

    def bounding_box(self, R, energy):
        lo, hi = self._box(self.check_point(R), energy)
        return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)

    def recommended_dt(self, energy: float) -> float:
        return self._dt

    def to_config(self) -> dict:
        raise TypeError("callable systems cannot be serialised")


def system_from_config(block: dict) -> ClassicalFastSystem:
    kind = block["kind"]
    common = {"mass": block.get("mass", 1.0), "hbar": block.get("hbar", 1.0)}
    if kind == HarmonicSystem.kind:
        return HarmonicSystem(omega=block.get("omega", [1.0]), **common)
    if kind == QuarticCoupledSystem.kind:
        return QuarticCoupledSystem(beta=block.get("beta", 0.05), **common)
    raise ValueError(f"unknown classical system kind {kind!r}")


# -------------------------------------------------------------------- ensembles

@dataclass(frozen=True)
class ClassicalEnsemble:
    """Phase-space samples on an energy shell or an invariant torus.

    ``angles`` is set for torus ensembles so integrable systems can be flowed
    exactly.  ``acceptance`` is the position-acceptance rate of shell sampling.
    """

    r: np.ndarray
    p: np.ndarray
    R: np.ndarray
    weight_model: str
    value: np.ndarray
    seed: int
    acceptance: float = 1.0
    half_width: float = 0.0
    angles: np.ndarray | None = None

    @property
    def count(self) -> int:
        return self.r.shape[0]


def _shell_weight(x, w, k):
    return np.maximum(x + w, 0.0) ** k - np.maximum(x - w, 0.0) ** k


def sample_energy_shell(sys: ClassicalFastSystem, R, E: float, count: int, seed: int,
                        eta: float = SHELL_ETA) -> ClassicalEnsemble:
    """Uniform samples of the shell ``|h(r, p, R) - E| <= w``, ``w = eta (E - V_min)``.

    Positions are drawn from the exact marginal of the uniform shell measure by
    rejection from the bounding box; momenta are then drawn uniformly from the
    spherical momentum shell at that position.  This is the same distribution
    as rejection in the full phase-space box, with far fewer proposals.

    Raises
    ------
    EnergyBelowMinimum
        If ``E`` does not exceed the potential minimum.
    SamplingFailure
        If the position acceptance rate falls below ``1e-4``.
    """
    R = sys.check_point(R)
    if count < 1:
        raise ValueError("count must be positive")
    vmin = sys.potential_minimum(R)
    if not E > vmin:
        raise EnergyBelowMinimum(f"energy {E!r} is not above the potential minimum {vmin!r}",
                                 energy=E, minimum=vmin)
    w = eta * (E - vmin)
    k = 0.5 * sys.dof
    lo, hi = sys.bounding_box(R, E + w)
    fmax = max(_shell_weight(E - vmin, w, k), _shell_weight(w, w, k))
    seq = np.random.SeedSequence(seed)
    rs, ps = [], []
    accepted = proposed = 0
    while accepted < count:
        rng = np.random.default_rng(seq.spawn(1)[0])
        r = lo + (hi - lo) * rng.random((PROPOSAL_BATCH, sys.dof))
        x = E - sys.potential(r, R)
        keep = rng.random(PROPOSAL_BATCH) * fmax < _shell_weight(x, w, k)
        proposed += PROPOSAL_BATCH
        r, x = r[keep], x[keep]
        if r.shape[0]:
            lo_k = np.maximum(x - w, 0.0) ** k
            hi_k = (x + w) ** k
            kin = (lo_k + (hi_k - lo_k) * rng.random(r.shape[0])) ** (1.0 / k)
            d = rng.standard_normal((r.shape[0], sys.dof))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            rs.append(r)
            ps.append(np.sqrt(2.0 * sys.mass * kin[:, None]) * d)
            accepted += r.shape[0]
        rate = accepted / proposed
        if proposed >= 16 * PROPOSAL_BATCH and rate < MIN_ACCEPTANCE:
            raise SamplingFailure(f"shell acceptance rate {rate:.2e} below {MIN_ACCEPTANCE:g}",
                                  acceptance=rate, energy=E)
    r = np.ascontiguousarray(np.concatenate(rs)[:count])
    p = np.ascontiguousarray(np.concatenate(ps)[:count])
    return ClassicalEnsemble(r, p, R, "shell", np.array([float(E)]), int(seed),
                             acceptance=accepted / proposed, half_width=w)


def sample_torus(sys: ClassicalFastSystem, R, actions, count: int, seed: int) -> ClassicalEnsemble:
    """Uniform random angles on the torus with the given action vector."""
    if not sys.integrable:
        raise NotIntegrable(f"{sys.kind} has no action-angle map")
    R = sys.check_point(R)
    I = np.broadcast_to(np.asarray(actions, dtype=float), (sys.dof,)).copy()
    if np.any(I < 0):
        raise ValueError("actions must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    theta = 2.0 * np.pi * rng.random((count, sys.dof))
    r, p = sys.from_action_angle(R, I, theta)
    return ClassicalEnsemble(np.ascontiguousarray(r), np.ascontiguousarray(p), R, "torus", I,
                             int(seed), angles=theta)


def _evaluate(observable: Observable, r, p, M: int) -> np.ndarray:
    val = np.asarray(observable(r, p), dtype=float)
    if val.ndim == 0:
        val = np.full(M, float(val))
    return val


def _mean_stderr(values: np.ndarray):
    M = values.shape[0]
    mean = values.mean(axis=0)
    if M < 2:
        return mean, np.full_like(mean, np.inf)
    return mean, values.std(axis=0, ddof=1) / math.sqrt(M)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def microcanonical_average(sys: ClassicalFastSystem, R, E: float, observable: Observable,
                           count: int, seed: int, eta: float = SHELL_ETA):
    """Shell average ``<O>_E`` and its standard error.

    ``observable(r, p)`` receives ``(M, N)`` arrays and returns ``(M,)`` or
    ``(M, k)`` values (a scalar is broadcast).
    """
    if count < 100:
        raise ValueError("count must be at least 100")
    ens = sample_energy_shell(sys, R, E, count, seed, eta)
    mean, se = _mean_stderr(_evaluate(observable, ens.r, ens.p, ens.count))
    return _scalar(mean), _scalar(se)


def torus_average(sys: ClassicalFastSystem, actions, observable: Observable,
                  angle_grid_count: int = 256, R=None, return_error: bool = False):
    """Uniform angle-grid average of ``observable`` over the torus ``I = actions``.

    The periodic trapezoid rule converges spectrally for smooth observables.
    With ``return_error`` the difference from the half-density grid is also
    returned.
    """
    if not sys.integrable:
        raise NotIntegrable(f"{sys.kind} has no action-angle map")
    if angle_grid_count < 2:
        raise ValueError("angle_grid_count must be at least 2")
    R = np.zeros(sys.param_dim) if R is None else R

    def grid_average(n):
        axes = [2.0 * np.pi * np.arange(n) / n] * sys.dof
        theta = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
        r, p = sys.from_action_angle(R, actions, theta)
        return _evaluate(observable, r, p, theta.shape[0]).mean(axis=0)

    value = grid_average(angle_grid_count)
    if not return_error:
        return _scalar(value)
    err = np.abs(value - grid_average(max(angle_grid_count // 2, 1)))
    return _scalar(value), _scalar(err)


# ------------------------------------------------------------------- dynamics

@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    r: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    max_drift: float


def _relative_drift(E, E0) -> float:
    scale = np.maximum(np.abs(E0), 1e-300)
    return float(np.max(np.abs(E - E0) / scale))


def _step_plan(times: np.ndarray, dt: float):
    """Substep count and signed step for each grid interval (starting from ``t = 0``)."""
    edges = np.concatenate([[0.0], times])
    plan = []
    for a, b in zip(edges[:-1], edges[1:]):
        span = b - a
        n = int(math.ceil(abs(span) / dt - 1e-9)) if span != 0 else 0
        plan.append((n, span / n if n else 0.0))
    return plan


def _flow(sys: ClassicalFastSystem, r0, p0, R, times, dt, drift_tol, kernels, workers, angles=None,
          actions=None):
    """Yield ``(k, r, p)`` at each requested time.

    Integrable systems with known angles are advanced exactly; everything else
    uses velocity Verlet in fixed row chunks, so results do not depend on the
    number of workers.  Energy drift is checked at every output time.
    """
    times = np.asarray(times, dtype=float)
    if angles is not None:
        for k, t in enumerate(times):
            r, p = sys.from_action_angle(R, actions, angles + sys.omega * t)
            yield k, r, p
        return
    r = np.array(r0, dtype=float, order="C", copy=True)
    p = np.array(p0, dtype=float, order="C", copy=True)
    E0 = sys.hamiltonian(r, p, R)
    chunks = [(a, min(a + CHUNK_ROWS, r.shape[0])) for a in range(0, r.shape[0], CHUNK_ROWS)]
    pool = ThreadPoolExecutor(workers) if workers > 1 and len(chunks) > 1 else None
    try:
        for k, (n, h) in enumerate(_step_plan(times, dt)):
            if n:
                def work(ab, n=n, h=h):
                    a, b = ab
                    sys.advance(r[a:b], p[a:b], R, h, n, kernels)
                if pool is None:
                    for ab in chunks:
                        work(ab)
                else:
                    list(pool.map(work, chunks))
                drift = _relative_drift(sys.hamiltonian(r, p, R), E0)
                if drift > drift_tol:
                    raise StepSizeTooLarge(
                        f"relative energy drift {drift:.3e} exceeds {drift_tol:g} at t={times[k]!r} with dt={dt!r}",
                        dt=dt, drift=drift, time=float(times[k]))
            yield k, r, p
    finally:
        if pool is not None:
            pool.shutdown()


def trajectory(sys: ClassicalFastSystem, R, start, t_grid, dt: float | None = None,
               drift_tol: float = DRIFT_TOL, backend: str | None = None) -> Trajectory:
    """Velocity-Verlet trajectory from ``start = (r, p)`` sampled on ``t_grid``.

    Each grid interval is split into equal substeps no longer than ``dt``.  A
    descending grid integrates backwards in time.

    Raises
    ------
    StepSizeTooLarge
        If the relative energy drift exceeds ``drift_tol`` anywhere on the grid.
    """
    R = sys.check_point(R)
    r0 = np.atleast_2d(np.asarray(start[0], dtype=float))
    p0 = np.atleast_2d(np.asarray(start[1], dtype=float))
    if r0.shape != (1, sys.dof) or p0.shape != (1, sys.dof):
        raise ValueError(f"start must be two vectors of length {sys.dof}")
    E0 = float(sys.hamiltonian(r0, p0, R)[0])
    dt = sys.recommended_dt(E0) if dt is None else float(dt)
    if not dt > 0:
        raise ValueError("dt must be positive")
    kernels = _backend.get_kernels(backend)
    times = np.asarray(t_grid, dtype=float)
    rs, ps = np.empty((times.size, sys.dof)), np.empty((times.size, sys.dof))
    for k, r, p in _flow(sys, r0, p0, R, times, dt, drift_tol, kernels, 1):
        rs[k], ps[k] = r[0], p[0]
    energy = sys.hamiltonian(rs, ps, R)
    return Trajectory(times, rs, ps, energy, _relative_drift(energy, np.full_like(energy, E0)))


# ------------------------------------------------------------------ correlation

class GaussianWindow:
    """``exp(-|z - z0|^2 / 2 sigma^2)`` on phase space ``z = (r, p)``."""

    def __init__(self, r0, p0, sigma: float = 1.0):
        self.r0 = np.asarray(r0, dtype=float)
        self.p0 = np.asarray(p0, dtype=float)
        self.sigma = float(sigma)

    def __call__(self, r, p):
        d2 = np.sum((r - self.r0) ** 2, axis=-1) + np.sum((p - self.p0) ** 2, axis=-1)
        return np.exp(-d2 / (2.0 * self.sigma ** 2))


@dataclass(frozen=True)
class ClassicalTrace:
    """Sampled ``Q_c(t)`` with per-time standard errors, shape ``(T, d)``."""

    times: np.ndarray
    Q: np.ndarray
    stderr: np.ndarray
    max_drift: float = 0.0

    def envelope(self, t0: float, t1: float) -> float:
        mask = (self.times >= t0) & (self.times <= t1)
        if not np.any(mask):
            raise ValueError(f"no samples in [{t0}, {t1}]")
        return float(np.max(np.abs(self.Q[mask])))

    def decay(self, window: float = 20.0) -> tuple[float, float, float]:
        """Early envelope, late envelope and their ratio over windows of length ``window``."""
        t_end = float(self.times[-1])
        early = self.envelope(0.0, window)
        late = self.envelope(t_end - window, t_end)
        return early, late, (late / early if early > 0 else math.inf)


def _pair(A_obs, B_obs, r, p, M):
    a = _evaluate(A_obs, r, p, M)
    b = _evaluate(B_obs, r, p, M)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    return a, b


def _q_samples(A_obs, B_obs, a0, b0, r, p, M):
    a, b = _pair(A_obs, B_obs, r, p, M)
    return a * b0 - a0 * b


def _flow_args(sys, ensemble, exact):
    if exact and ensemble.angles is not None and sys.integrable:
        return {"angles": ensemble.angles, "actions": ensemble.value}
    return {}


def _ensemble_dt(sys, ensemble, dt):
    if dt is not None:
        return float(dt)
    E = float(np.max(sys.hamiltonian(ensemble.r, ensemble.p, ensemble.R)))
    return sys.recommended_dt(E)


def classical_correlation(sys: ClassicalFastSystem, R, ensemble: ClassicalEnsemble,
                          A_obs: Observable | None = None, B_obs: Observable | None = None,
                          times: Sequence[float] = (), dt: float | None = None,
                          sigma: float = 1.0, estimator: str = "direct",
                          drift_tol: float = DRIFT_TOL, backend: str | None = None,
                          workers: int = 1, exact_flow: bool = True) -> ClassicalTrace:
    """Monte Carlo estimate of ``Q_c(t) = <A(z_t) B(z) - A(z) B(z_t)>``.

    Defaults: ``A`` is a Gaussian window of width ``sigma`` centred on the
    first ensemble sample; ``B = dh/dR``.

    ``estimator="direct"`` averages ``A(z_t) B(z) - A(z) B(z_t)``.
    ``estimator="stationary"`` uses invariance of the ensemble to average
    ``A(z) [B(z_{-t}) - B(z_t)]`` instead, which needs a backward trajectory
    per sample but only evaluates ``A`` at ``t = 0``; the backward flow is the
    forward flow of the momentum-reversed point.  Torus ensembles of
    integrable systems are flowed exactly unless ``exact_flow`` is false.
    """
    R = sys.check_point(R)
    if ensemble.count < 2:
        raise SamplingFailure("ensemble needs at least two samples", count=ensemble.count)
    if estimator not in ("direct", "stationary"):
        raise ValueError(f"unknown estimator {estimator!r}")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be a non-empty increasing grid starting at t >= 0")
    A_obs = A_obs or GaussianWindow(ensemble.r[0], ensemble.p[0], sigma)
    B_obs = B_obs or (lambda r, p: sys.b_generator(r, p, R))
    M = ensemble.count
    a0, b0 = _pair(A_obs, B_obs, ensemble.r, ensemble.p, M)
    d = max(a0.shape[1], b0.shape[1])
    Q = np.empty((times.size, d))
    se = np.empty((times.size, d))
    dt = _ensemble_dt(sys, ensemble, dt)
    kernels = _backend.get_kernels(backend)
    flow = _flow_args(sys, ensemble, exact_flow)
    if estimator == "direct":
        r0, p0 = ensemble.r, ensemble.p
    else:
        r0 = np.concatenate([ensemble.r, ensemble.r])
        p0 = np.concatenate([ensemble.p, -ensemble.p])
        if flow:
            flow["angles"] = np.concatenate([flow["angles"], -flow["angles"]])
    for k, r, p in _flow(sys, r0, p0, R, times, dt, drift_tol, kernels, workers, **flow):
        if estimator == "direct":
            q = _q_samples(A_obs, B_obs, a0, b0, r, p, M)
        else:
            b_fwd = _pair(A_obs, B_obs, r[:M], p[:M], M)[1]
            b_bwd = _pair(A_obs, B_obs, r[M:], -p[M:], M)[1]
            q = a0 * (b_bwd - b_fwd)
        Q[k], se[k] = _mean_stderr(q)
    drift = 0.0 if flow else _relative_drift(sys.hamiltonian(r, p, R), sys.hamiltonian(r0, p0, R))
    return ClassicalTrace(times, Q, se, drift)


@dataclass(frozen=True)
class WindowEnsemble:
    """Shell samples drawn with density proportional to a window ``A``.

    ``norm`` estimates the shell average ``<A>_E`` (with ``norm_stderr``), so
    ``<A f>_E = norm * mean(f over ensemble)``.
    """

    ensemble: ClassicalEnsemble
    window: GaussianWindow
    norm: float
    norm_stderr: float


def sample_window_shell(sys: ClassicalFastSystem, R, E: float, count: int, seed: int,
                        sigma: float = 1.0, center=None, eta: float = SHELL_ETA) -> WindowEnsemble:
    """Shell samples thinned with acceptance probability ``A(z)`` for a Gaussian window.

    The window centre defaults to the first sample of the shell ensemble for
    ``seed``.  Thinning is done in seeded batches, so the result is
    deterministic.
    """
    seq = np.random.SeedSequence(seed)
    base_seed, thin_seed = (int(c.generate_state(1)[0]) for c in seq.spawn(2))
    if center is None:
        first = sample_energy_shell(sys, R, E, 1, base_seed, eta)
        center = (first.r[0], first.p[0])
    window = GaussianWindow(center[0], center[1], sigma)
    thin = np.random.SeedSequence(thin_seed)
    rs, ps = [], []
    kept = drawn = 0
    batch = max(4 * count, 1024)
    acceptance = 1.0
    for b in range(10_000):
        ens = sample_energy_shell(sys, R, E, batch, int(thin.spawn(1)[0].generate_state(1)[0]), eta)
        acceptance = ens.acceptance
        u = np.random.default_rng(thin.spawn(1)[0]).random(batch)
        keep = u < window(ens.r, ens.p)
        rs.append(ens.r[keep])
        ps.append(ens.p[keep])
        kept += int(keep.sum())
        drawn += batch
        if kept >= count:
            break
        if drawn >= 16 * batch and kept / drawn < MIN_ACCEPTANCE:
            raise SamplingFailure(f"window acceptance {kept / drawn:.2e} below {MIN_ACCEPTANCE:g}",
                                  acceptance=kept / drawn, sigma=sigma)
    frac = kept / drawn
    r = np.ascontiguousarray(np.concatenate(rs)[:count])
    p = np.ascontiguousarray(np.concatenate(ps)[:count])
    out = ClassicalEnsemble(r, p, sys.check_point(R), "shell", np.array([float(E)]), int(seed),
                            acceptance=acceptance, half_width=eta * (E - sys.potential_minimum(R)))
    return WindowEnsemble(out, window, frac, math.sqrt(frac * (1.0 - frac) / drawn))


def windowed_correlation(sys: ClassicalFastSystem, R, E: float, times: Sequence[float], count: int,
                         seed: int, sigma: float = 1.0, B_obs: Observable | None = None,
                         dt: float | None = None, drift_tol: float = DRIFT_TOL,
                         backend: str | None = None, workers: int = 1) -> ClassicalTrace:
    """``Q_c(t)`` on the shell for the Gaussian window ``A``, by importance sampling.

    Samples are drawn from the shell density weighted by ``A`` and the
    stationary estimator is applied with ``A`` replaced by ``<A>_E``.  Every
    trajectory then starts inside the window, which gives a far smaller
    standard error than the direct estimator at the same cost.
    """
    w = sample_window_shell(sys, R, E, count, seed, sigma)
    norm = w.norm
    trace = classical_correlation(sys, R, w.ensemble, A_obs=lambda r, p: norm, B_obs=B_obs,
                                  times=times, dt=dt, estimator="stationary", drift_tol=drift_tol,
                                  backend=backend, workers=workers)
    rel = w.norm_stderr / norm if norm > 0 else 0.0
    se = np.hypot(trace.stderr, np.abs(trace.Q) * rel)
    return ClassicalTrace(trace.times, trace.Q, se, trace.max_drift)


# --------------------------------------------------------------------- theorem

def _lagrange_at_zero(x: np.ndarray) -> np.ndarray:
    w = np.ones_like(x)
    for k in range(x.size):
        for j in range(x.size):
            if j != k:
                w[k] *= x[j] / (x[j] - x[k])
    return w


@dataclass(frozen=True)
class ClassicalTheoremReport:
    """Both sides of ``lim_{s->0} int e^{-st} Q_c dt = -2 hbar lambda_c Var(B)``.

    ``tolerance`` is three times the combined error: standard errors of both
    sides in quadrature plus the numerical (quadrature and extrapolation)
    error of the left side.
    """

    kind: str
    lhs: np.ndarray
    lhs_stderr: np.ndarray
    rhs: np.ndarray
    rhs_stderr: np.ndarray
    numerical_error: np.ndarray
    s_values: np.ndarray
    lhs_by_s: np.ndarray
    lam_c: float
    decay: tuple | None = None
    trace: ClassicalTrace | None = field(default=None, repr=False)

    @property
    def residual(self) -> np.ndarray:
        return np.abs(self.lhs - self.rhs)

    @property
    def combined_error(self) -> np.ndarray:
        return np.hypot(self.lhs_stderr, self.rhs_stderr) + self.numerical_error

    @property
    def tolerance(self) -> np.ndarray:
        return 3.0 * self.combined_error

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residual <= self.tolerance))


def _torus_laplace(sys, ens, R, A_obs, B_obs, a0, b0, s, order=GL_ORDER):
    """Per-sample ``int_0^T e^{-st} q(t) dt`` by Gauss-Legendre panels of one fastest period."""
    M = ens.count
    period = 2.0 * np.pi / float(np.max(sys.omega))
    t_end = math.log(1.0 / TAIL_TOL) / s
    n_panels = int(math.ceil(t_end / period))
    acc = {}
    bound = 0.0
    for n_nodes in (order, order - 6):
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        total = 0.0
        for j in range(n_panels):
            t = j * period + 0.5 * period * (x + 1.0)
            theta = ens.angles[None, :, :] + sys.omega * t[:, None, None]
            r, p = sys.from_action_angle(R, ens.value, theta.reshape(-1, sys.dof))
            q = _q_samples(A_obs, B_obs, np.tile(a0, (t.size, 1)), np.tile(b0, (t.size, 1)), r, p, M * t.size)
            q = q.reshape(t.size, M, -1)
            if n_nodes == order:
                bound = max(bound, float(np.max(np.abs(q.mean(axis=1)))))
            total = total + np.einsum("k,kmd->md", 0.5 * period * w * np.exp(-s * t), q)
        acc[n_nodes] = total
    per_sample = acc[order]
    quad_err = np.abs(per_sample.mean(axis=0) - acc[order - 6].mean(axis=0))
    tail = bound * math.exp(-s * n_panels * period) / s
    return per_sample, quad_err + tail + 1e-15 * np.abs(per_sample).mean(axis=0) * n_panels


def _grid_laplace(sys, ens, R, A_obs, B_obs, a0, b0, s_values, t_max, record_dt, dt, drift_tol,
                  backend, workers):
    """Per-sample Simpson integrals on a Verlet grid for every ``s``; also returns the mean trace."""
    n = int(math.ceil(t_max / record_dt))
    n += n % 2
    times = np.linspace(0.0, t_max, n + 1)
    h = times[1] - times[0]
    simpson = np.where(np.arange(n + 1) % 2 == 1, 4.0, 2.0)
    simpson[0] = simpson[-1] = 1.0
    simpson *= h / 3.0
    trap = np.full(n + 1, h)
    trap[0] = trap[-1] = 0.5 * h
    M = ens.count
    d = max(a0.shape[1], b0.shape[1])
    acc = np.zeros((s_values.size, M, d))
    acc_trap = np.zeros((s_values.size, d))
    Q = np.zeros((n + 1, d))
    se = np.zeros((n + 1, d))
    for k, r, p in _flow(sys, ens.r, ens.p, R, times[1:], dt, drift_tol,
                         _backend.get_kernels(backend), workers):
        q = _q_samples(A_obs, B_obs, a0, b0, r, p, M)
        Q[k + 1], se[k + 1] = _mean_stderr(q)
        decay = np.exp(-s_values * times[k + 1])
        acc += (simpson[k + 1] * decay)[:, None, None] * q[None]
        acc_trap += (trap[k + 1] * decay)[:, None] * Q[k + 1][None]
    # q(0) = 0 identically, so the t = 0 node contributes nothing
    quad_err = np.abs(acc.mean(axis=1) - acc_trap)
    late = np.max(np.abs(Q[times >= t_max - 20.0]), axis=0)
    tail = late[None, :] * np.exp(-s_values * t_max)[:, None] / s_values[:, None]
    return acc, quad_err + tail, ClassicalTrace(times, Q, se)


def classical_theorem_check(sys: ClassicalFastSystem, R, kind: str = "torus", value=None,
                            s_sequence: Sequence[float] = (0.2, 0.1, 0.05), lam_c: float = 1.0,
                            A_obs: Observable | None = None, B_obs: Observable | None = None,
                            B_gen: Observable | None = None, count: int = 4096, seed: int = 0,
                            t_max: float = 200.0, record_dt: float = 0.1, dt: float | None = None,
                            extrapolation: str = "auto", drift_tol: float = DRIFT_TOL,
                            backend: str | None = None, workers: int = 1) -> ClassicalTheoremReport:
    """Compare the regularised ``int Q_c dt`` with ``-2 hbar lambda_c Var(B_gen)``.

    Defaults: ``B_gen = B_obs = dh/dR`` and ``A_obs = hbar lambda_c dB/dt``.
    With these choices ``Q_c = 2 hbar lambda_c dC/dt`` for the autocorrelation
    ``C(t) = <B(z_t) B(z)>``, so the identity holds whenever the long-time
    average of ``C`` is ``<B>^2``.

    ``kind="torus"`` uses random angles at action ``value`` (integrable systems
    only) and exact flow with panel quadrature.  ``kind="shell"`` samples the
    energy shell ``E = value`` and integrates Verlet trajectories to ``t_max``
    with Simpson's rule; the report then carries the decay of ``Q_c``.  The
    ``s -> 0`` limit is a polynomial extrapolation in ``s^2`` (torus) or ``s``
    (shell) unless ``extrapolation`` says otherwise.
    """
    R = sys.check_point(R)
    s_values = np.asarray(s_sequence, dtype=float)
    if s_values.ndim != 1 or s_values.size < 2 or np.any(s_values <= 0) or np.unique(s_values).size != s_values.size:
        raise ValueError("s_sequence needs at least two distinct positive values")
    B_gen = B_gen or (lambda r, p: sys.b_generator(r, p, R))
    B_obs = B_obs or B_gen
    if A_obs is None:
        c = sys.hbar * lam_c
        A_obs = lambda r, p: c * sys.b_rate(r, p, R)  # noqa: E731
    if kind == "torus":
        if not sys.integrable:
            raise NotIntegrable(f"{sys.kind} has no action-angle map; use the shell ensemble")
        ens = sample_torus(sys, R, 1.0 if value is None else value, count, seed)
    elif kind == "shell":
        ens = sample_energy_shell(sys, R, 1.0 if value is None else float(value), count, seed)
    else:
        raise ValueError(f"unknown ensemble kind {kind!r}")
    M = ens.count
    a0, b0 = _pair(A_obs, B_obs, ens.r, ens.p, M)

    decay, trace = None, None
    if kind == "torus":
        per_s, errs = [], []
        for s in s_values:
            ps, e = _torus_laplace(sys, ens, R, A_obs, B_obs, a0, b0, float(s))
            per_s.append(ps)
            errs.append(e)
        per_s, quad_err = np.stack(per_s), np.stack(errs)
    else:
        dt = _ensemble_dt(sys, ens, dt)
        per_s, quad_err, trace = _grid_laplace(sys, ens, R, A_obs, B_obs, a0, b0, s_values, t_max,
                                               record_dt, dt, drift_tol, backend, workers)
        decay = trace.decay()

    mode = ("s2" if kind == "torus" else "s") if extrapolation == "auto" else extrapolation
    x = s_values ** 2 if mode == "s2" else s_values
    weights = _lagrange_at_zero(x)
    extrapolated = np.einsum("k,kmd->md", weights, per_s)
    lhs, lhs_se = _mean_stderr(extrapolated)
    means = per_s.mean(axis=1)
    order = np.argsort(x)[:-1]
    reduced = _lagrange_at_zero(x[order]) @ means[order]
    numerical = np.abs(lhs - reduced) + np.abs(weights) @ quad_err

    b = _evaluate(B_gen, ens.r, ens.p, M)
    b = b[:, None] if b.ndim == 1 else b
    dev2 = (b - b.mean(axis=0)) ** 2
    var, var_se = _mean_stderr(dev2)
    scale = -2.0 * sys.hbar * lam_c
    return ClassicalTheoremReport(kind, lhs, lhs_se, scale * var, abs(scale) * var_se, numerical,
                                  s_values, means, float(lam_c), decay, trace)

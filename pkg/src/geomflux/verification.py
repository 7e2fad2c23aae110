"""Invariant suite over built-in families.

Each ``criterion_*`` function runs one group of checks at fixed tolerances
and returns :class:`CheckResult` rows.  Every input is derived from a single
base seed, so results are reproducible and independent of ``workers``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import classical as cl
from .correlation import q_correlation, susceptibility, theorem_check, gii_from_force_correlation
from .families import SeededRandomPolynomialFamily, SpinFamily, spherical_spin_family
from .geometry import (
    ParameterPath,
    PolynomialPhase,
    cyclic_berry_phase,
    eigen_at,
    fluctuation_data,
    gauge_potentials,
    gauge_transform_check,
    metric_and_geometric_tensor,
    open_path_phase,
    phase_difference,
)

PHASE_SAMPLES = 2048
GAUGE_SAMPLES = 512
ROUTE_FAMILIES = 20
ROUTE_PAIRS = 20
ROUTE_DIM = 5
ROUTE_PARAM_DIM = 3
MIN_OVERLAP = 1e-3
S_SEQUENCE = (0.2, 0.1, 0.05)
Z_SEQUENCE = (0.2, 0.1, 0.05)


@dataclass(frozen=True)
class CheckResult:
    """One row of the verification table.

    ``value`` is the worst case observed over ``cases`` and is compared with
    ``tolerance`` using ``comparison`` (``<=`` or ``>=``).
    """

    criterion: int
    check: str
    cases: int
    value: float
    tolerance: float
    comparison: str = "<="
    passed: bool = field(init=False)

    def __post_init__(self):
        ok = self.value <= self.tolerance if self.comparison == "<=" else self.value >= self.tolerance
        object.__setattr__(self, "passed", bool(ok and math.isfinite(self.value)))

    def as_dict(self) -> dict:
        return asdict(self)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


# ------------------------------------------------------------------ ensembles

@dataclass(frozen=True)
class RouteCase:
    family: SeededRandomPolynomialFamily
    R: np.ndarray
    R0: np.ndarray
    n: int


def route_ensemble(seed: int = 0, families: int = ROUTE_FAMILIES, pairs: int = ROUTE_PAIRS,
                   dim: int = ROUTE_DIM, param_dim: int = ROUTE_PARAM_DIM) -> Iterator[RouteCase]:
    """Seeded random families with random ``(R, R0, n)`` whose reference overlap exceeds ``1e-3``."""
    for f in range(families):
        fam = SeededRandomPolynomialFamily(dim, param_dim, seed * 1000 + f)
        rng = _rng(seed, 1, f)
        made = 0
        while made < pairs:
            R = rng.uniform(-1.0, 1.0, param_dim)
            R0 = R + rng.normal(0.0, 0.4, param_dim)
            n = int(rng.integers(dim))
            ov = abs(np.vdot(eigen_at(fam, R0, n).state, eigen_at(fam, R, n).state))
            if ov > MIN_OVERLAP:
                made += 1
                yield RouteCase(fam, R, R0, n)


def _seeded_loops(seed: int, count: int = 3, segments: int = PHASE_SAMPLES):
    out = []
    for j in range(count):
        fam = SeededRandomPolynomialFamily(4, 2, seed * 1000 + 500 + j)
        rng = _rng(seed, 2, j)
        c = rng.uniform(-0.5, 0.5, 2)
        loop = ParameterPath.ellipse(c, [0.4, 0.0], [0.0, 0.3], segments=segments)
        out.append((fam, loop, int(rng.integers(4))))
    return out


def _spin_phase_expected(theta0: float) -> float:
    return math.pi * (1.0 - math.cos(theta0))


# ------------------------------------------------------------------ criteria

def criterion_1(seed: int = 0, workers: int = 1) -> list[CheckResult]:
    """Spin-1/2 cyclic phase on latitude circles versus the solid angle."""
    fam = SpinFamily(0.5)
    worst = 0.0
    for theta0 in (0.5, math.pi / 2, 2.0):
        res = cyclic_berry_phase(fam, ParameterPath.latitude_circle(theta0, PHASE_SAMPLES), 0, workers=workers)
        mag = _spin_phase_expected(theta0)
        sign = 1.0 if phase_difference(res.overlap_product, mag) <= phase_difference(res.overlap_product, -mag) else -1.0
        worst = max(worst, phase_difference(res.phase, sign * mag))
    return [CheckResult(1, "spin cyclic phase vs solid angle", 3, worst, 1e-6)]


def criterion_2(seed: int = 0, workers: int = 1) -> list[CheckResult]:
    """Open-path phase on closed loops equals the cyclic phase modulo 2 pi."""
    # on the equator the antipodal state is orthogonal to the start, so the open-path phase is undefined there
    cases = [(SpinFamily(0.5), ParameterPath.latitude_circle(t, PHASE_SAMPLES), 0) for t in (0.5, 1.2, 2.0)]
    cases += _seeded_loops(seed)
    worst = 0.0
    for fam, loop, n in cases:
        cyc = cyclic_berry_phase(fam, loop, n, workers=workers)
        op = open_path_phase(fam, loop, n, workers=workers)
        worst = max(worst, phase_difference(op.phase, cyc.phase))
    return [CheckResult(2, "open-path phase on loops vs cyclic phase", len(cases), worst, 1e-6)]


def criterion_3(seed: int = 0, workers: int = 1) -> list[CheckResult]:
    """Three routes to Omega agree componentwise."""
    worst, count = 0.0, 0
    for case in route_ensemble(seed):
        om = [gauge_potentials(case.family, case.R, case.R0, case.n, r).Omega
              for r in ("AP", "fluctuation", "sum-over-states")]
        worst = max(worst, float(np.max(np.abs(om[0] - om[1]))), float(np.max(np.abs(om[0] - om[2]))),
                    float(np.max(np.abs(om[1] - om[2]))))
        count += 1
    return [CheckResult(3, "Omega route equivalence", count, worst, 1e-7)]


def criterion_4(seed: int = 0, workers: int = 1, gauges: int = 10) -> list[CheckResult]:
    """Omega and both phases are unchanged by random polynomial gauge fields."""
    spin = SpinFamily(0.5)
    setups = [(spin, np.array([0.3, -0.4, 0.8]), np.array([0.1, 0.2, 1.0]), 0,
               ParameterPath.latitude_circle(1.0, GAUGE_SAMPLES),
               ParameterPath.line([0.6, 0.0, 0.8], [0.0, 0.6, 0.8], GAUGE_SAMPLES // 2))]
    for fam, loop, n in _seeded_loops(seed, 2, GAUGE_SAMPLES):
        c = loop.samples[0]
        setups.append((fam, loop.samples[len(loop.samples) // 3], c, n, loop,
                       ParameterPath.line(c, c + np.array([0.3, 0.2]), GAUGE_SAMPLES // 2)))
    om_worst = open_worst = cyc_worst = 0.0
    for f_idx, (fam, R, R0, n, loop, line) in enumerate(setups):
        rng = _rng(seed, 4, f_idx)
        open_ref = open_path_phase(fam, line, n, workers=workers).phase
        cyc_ref = cyclic_berry_phase(fam, loop, n, workers=workers).phase
        for _ in range(gauges):
            alpha = PolynomialPhase.random(fam.param_dim, rng)
            om_worst = max(om_worst, gauge_transform_check(fam, R, R0, n, alpha)["Omega"])
            open_worst = max(open_worst, abs(open_path_phase(fam, line, n, gauge=alpha, workers=workers).phase - open_ref))
            cyc_worst = max(cyc_worst, phase_difference(cyclic_berry_phase(fam, loop, n, gauge=alpha, workers=workers).phase, cyc_ref))
    cases = len(setups) * gauges
    return [CheckResult(4, "gauge invariance of Omega", cases, om_worst, 1e-9),
            CheckResult(4, "gauge invariance of open-path phase", cases, open_worst, 1e-9),
            CheckResult(4, "gauge invariance of cyclic phase", cases, cyc_worst, 1e-9)]


def criterion_5(seed: int = 0, workers: int = 1) -> list[CheckResult]:
    """Fluctuation-correlation theorem by mode sum, with the quadrature cross-check on every case."""
    cases = route_ensemble(seed)

    def one(case):
        rep = theorem_check(case.family, case.R, case.R0, case.n, S_SEQUENCE, quadrature=True)
        err = np.maximum(rep.quadrature_error_by_s, 1e-300)
        return (float(np.max(rep.residuals)),
                float(np.max(np.abs(rep.quadrature_by_s - rep.mode_sum_by_s) / err)))

    out = [one(case) for case in cases]
    worst = max(r for r, _ in out)
    quad_ratio = max(q for _, q in out)
    return [CheckResult(5, "theorem residual (mode sum)", len(out), worst, 1e-8),
            CheckResult(5, "quadrature deviation / reported error", len(out), quad_ratio, 1.0)]


def criterion_6(seed: int = 0, workers: int = 1) -> list[CheckResult]:
    """Heisenberg-picture and spectral Q(t) agree on 100 times per case."""
    times = np.linspace(0.0, 50.0, 100)
    worst, count = 0.0, 0
    for case in route_ensemble(seed):
        a = q_correlation(case.family, case.R, case.R0, case.n, times, "heisenberg").Q
        b = q_correlation(case.family, case.R, case.R0, case.n, times, "spectral").Q
        worst = max(worst, float(np.max(np.abs(a - b))))
        count += 1
    return [CheckResult(6, "Heisenberg vs spectral Q(t)", count, worst, 1e-10)]


def criterion_7(seed: int = 0, workers: int = 1) -> list[CheckResult]:
    """Metric identities and the spin-1/2 sphere metric."""
    fluct = routes = ff = 0.0
    count = 0
    for case in route_ensemble(seed):
        gd = metric_and_geometric_tensor(case.family, case.R, case.n, "derivative")
        gf = metric_and_geometric_tensor(case.family, case.R, case.n, "force-states")
        fd = fluctuation_data(case.family, case.R, case.R0, case.n)
        diag = np.diag(gd.g)
        fluct = max(fluct, float(np.max(np.abs(fd.deltaB ** 2 - diag))))
        routes = max(routes, float(np.max(np.abs(gd.T - gf.T))))
        ff = max(ff, float(np.max(np.abs(gii_from_force_correlation(case.family, case.R, case.n) - diag))))
        count += 1
    sphere = spherical_spin_family(1.0, 0.5)
    spin = 0.0
    thetas = (0.3, 0.9, math.pi / 2, 2.2)
    for th in thetas:
        g = metric_and_geometric_tensor(sphere, [th, 0.7], 0).g
        spin = max(spin, abs(g[0, 0] - 0.25), abs(g[1, 1] - math.sin(th) ** 2 / 4))
    return [CheckResult(7, "dB^2 vs g_ii", count, fluct, 1e-8),
            CheckResult(7, "derivative vs force-states tensor", count, routes, 1e-7),
            CheckResult(7, "force-force g_ii vs g_ii", count, ff, 1e-8),
            CheckResult(7, "spin sphere metric", len(thetas), spin, 1e-7)]


def criterion_8(seed: int = 0, workers: int = 1) -> list[CheckResult]:
    """Susceptibility difference at z -> 0 equals the regularised integral of Q."""
    worst, count = 0.0, 0
    for case in route_ensemble(seed):
        rep = susceptibility(case.family, case.R, case.R0, case.n, Z_SEQUENCE)
        worst = max(worst, float(np.max(rep.residual)))
        count += 1
    return [CheckResult(8, "susceptibility limit vs integral of Q", count, worst, 1e-8)]


def criterion_9(seed: int = 0, workers: int = 1, window_count: int = 4000) -> list[CheckResult]:
    """Classical shell and torus averages, the torus theorem, and correlation decay."""
    rows = []
    h1 = cl.HarmonicSystem([1.0])
    mean, se = cl.microcanonical_average(h1, [0.0], 1.0, lambda r, p: 0.5 * p[:, 0] ** 2, 100_000, seed)
    rows.append(CheckResult(9, "harmonic shell <p^2/2> - E/2 (in stderr)", 1, abs(mean - 0.5) / se, 3.0))

    h2 = cl.HarmonicSystem([1.0, 1.3])
    I = np.array([0.7, 0.4])
    R = np.zeros(2)
    dev = max(
        abs(cl.torus_average(h2, I, lambda r, p: h2.hamiltonian(r, p, R)) - float(h2.omega @ I)),
        float(np.max(np.abs(cl.torus_average(h2, I, lambda r, p: r)))),
        float(np.max(np.abs(cl.torus_average(h2, I, lambda r, p: r ** 2) - I / (h2.mass * h2.omega)))),
    )
    rows.append(CheckResult(9, "torus averages vs closed forms", 3, dev, 1e-8))

    rep = cl.classical_theorem_check(h2, R, "torus", I, count=4096, seed=seed)
    rows.append(CheckResult(9, "harmonic torus theorem residual / combined error", 2,
                            float(np.max(rep.residual / rep.combined_error)), 3.0))

    quartic = cl.QuarticCoupledSystem(0.05)
    tq = cl.windowed_correlation(quartic, [0.0, 0.0], 1.0, np.arange(1, 801) * 0.25, window_count, seed,
                                 sigma=0.5, workers=workers)
    rows.append(CheckResult(9, "quartic correlation envelope ratio at t=200", window_count, tq.decay()[2], 0.2))
    th = cl.windowed_correlation(h2, R, 1.0, np.arange(1, 401) * 0.25, window_count, seed,
                                 sigma=0.5, workers=workers)
    rows.append(CheckResult(9, "harmonic correlation envelope ratio at t=100", window_count, th.decay()[2], 0.1, ">="))
    return rows


def criterion_10(seed: int = 0, workers: int = 1) -> list[CheckResult]:
    """Results are bit-identical for different worker counts."""
    fam, loop, n = _seeded_loops(seed, 1)[0]
    a = open_path_phase(fam, loop, n, workers=1).phase
    b = open_path_phase(fam, loop, n, workers=max(2, workers)).phase
    quartic = cl.QuarticCoupledSystem(0.05)
    times = np.arange(1, 21) * 0.25
    ta = cl.windowed_correlation(quartic, [0.0, 0.0], 1.0, times, 3000, seed, sigma=0.5, workers=1)
    tb = cl.windowed_correlation(quartic, [0.0, 0.0], 1.0, times, 3000, seed, sigma=0.5, workers=max(2, workers))
    mismatches = int(a != b) + int(not np.array_equal(ta.Q, tb.Q))
    return [CheckResult(10, "bitwise mismatches across worker counts", 2, float(mismatches), 0.0)]


CRITERIA: dict[int, Callable[..., list[CheckResult]]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


def run_all(seed: int = 0, workers: int = 1, criteria=None) -> list[CheckResult]:
    rows: list[CheckResult] = []
    for k in sorted(criteria or CRITERIA):
        rows.extend(CRITERIA[k](seed=seed, workers=workers))
    return rows

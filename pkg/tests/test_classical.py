from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geomflux.classical import (
    HarmonicSystem,
    QuarticCoupledSystem,
    classical_correlation,
    classical_theorem_check,
    microcanonical_average,
    sample_energy_shell,
    sample_torus,
    torus_average,
    trajectory,
    windowed_correlation,
)
from geomflux.errors import EnergyBelowMinimum, NotIntegrable, StepSizeTooLarge

OSC = HarmonicSystem(omega=[1.0])
OSC2 = HarmonicSystem(omega=[1.0, 1.3])
QUARTIC = QuarticCoupledSystem(beta=0.05)


def _p2(r, p):
    return 0.5 * p[:, 0] ** 2


# -------------------------------------------------------------------- averages

def test_constant_observable_is_normalised():
    mean, se = microcanonical_average(OSC, [0.0], 1.0, lambda r, p: 1.0, 1000, seed=1)
    assert mean == 1.0 and se == 0.0
    assert torus_average(OSC2, [1.0, 0.5], lambda r, p: np.ones(r.shape[0])) == 1.0


def test_equipartition_on_harmonic_shell():
    E = 2.0
    mean, se = microcanonical_average(OSC, [0.0], E, _p2, 20_000, seed=2)
    assert abs(mean - E / 2) <= 3 * se


def test_parity_on_symmetric_potential():
    mean, se = microcanonical_average(QUARTIC, [0.0, 0.0], 1.0, lambda r, p: r[:, 0], 10_000, seed=3)
    assert abs(mean) <= 3 * se


def test_shell_samples_lie_on_the_shell():
    ens = sample_energy_shell(QUARTIC, [0.1, -0.2], 1.5, 2000, seed=4)
    assert ens.count == 2000
    assert np.max(np.abs(QUARTIC.hamiltonian(ens.r, ens.p, [0.1, -0.2]) - 1.5)) <= ens.half_width


def test_energy_below_minimum():
    with pytest.raises(EnergyBelowMinimum):
        microcanonical_average(OSC, [0.0], -1.0, _p2, 100, seed=0)


def test_stderr_scales_with_sample_count():
    se = [microcanonical_average(OSC, [0.0], 1.0, _p2, n, seed=5)[1] for n in (1_000, 10_000, 100_000)]
    for a, b in zip(se[:-1], se[1:]):
        ratio = a / b
        assert math.sqrt(10) / 2 <= ratio <= 2 * math.sqrt(10)


@given(I=st.floats(0.01, 5.0), omega=st.floats(0.2, 4.0))
def test_torus_closed_forms(I, omega):
    sys = HarmonicSystem(omega=[omega])
    energy = torus_average(sys, [I], lambda r, p: sys.hamiltonian(r, p, [0.0]))
    assert abs(energy - omega * I) <= 1e-10 * max(1.0, omega * I)
    assert abs(torus_average(sys, [I], lambda r, p: r[:, 0])) <= 1e-10
    assert abs(torus_average(sys, [I], lambda r, p: r[:, 0] ** 2) - I / omega) <= 1e-8


def test_torus_matches_microcanonical():
    I, omega = 0.8, 1.0
    obs = lambda r, p: r[:, 0] ** 2 + 0.3 * p[:, 0] ** 4  # noqa: E731
    exact = torus_average(OSC, [I], obs)
    mean, se = microcanonical_average(OSC, [0.0], omega * I, obs, 20_000, seed=6)
    assert abs(mean - exact) <= 3 * se


def test_torus_requires_integrable_system():
    with pytest.raises(NotIntegrable):
        torus_average(QUARTIC, [1.0, 1.0], lambda r, p: r[:, 0])
    with pytest.raises(NotIntegrable):
        sample_torus(QUARTIC, [0.0, 0.0], [1.0, 1.0], 10, seed=0)
    with pytest.raises(NotIntegrable):
        classical_theorem_check(QUARTIC, [0.0, 0.0], kind="torus", value=[1.0, 1.0])


def test_seed_determinism():
    a = sample_energy_shell(QUARTIC, [0.0, 0.0], 1.0, 500, seed=7)
    b = sample_energy_shell(QUARTIC, [0.0, 0.0], 1.0, 500, seed=7)
    c = sample_energy_shell(QUARTIC, [0.0, 0.0], 1.0, 500, seed=8)
    assert a.r.tobytes() == b.r.tobytes() and a.p.tobytes() == b.p.tobytes()
    assert a.r.tobytes() != c.r.tobytes()


# ------------------------------------------------------------------ dynamics

def test_harmonic_trajectory_matches_cosine():
    tr = trajectory(OSC, [0.0], ([1.0], [0.0]), [10.0], dt=1e-3)
    assert abs(tr.r[0, 0] - math.cos(10.0)) <= 1e-6
    assert abs(tr.p[0, 0] + math.sin(10.0)) <= 1e-6


def test_fixed_point_is_stationary():
    tr = trajectory(QUARTIC, [0.3, -0.1], ([0.3, -0.1], [0.0, 0.0]), np.linspace(1, 5, 5), dt=1e-3)
    np.testing.assert_array_equal(tr.r, np.tile([0.3, -0.1], (5, 1)))
    np.testing.assert_array_equal(tr.p, 0.0)


def test_time_reversal_returns_to_start():
    start = ([0.4, -0.7], [0.9, 0.2])
    fwd = trajectory(OSC2, [0.0, 0.0], start, [10.0], dt=1e-3)
    back = trajectory(OSC2, [0.0, 0.0], (fwd.r[0], fwd.p[0]), [-10.0], dt=1e-3)
    assert np.max(np.abs(back.r[0] - start[0])) <= 1e-8
    assert np.max(np.abs(back.p[0] - start[1])) <= 1e-8


def test_energy_drift_within_bound():
    tr = trajectory(QUARTIC, [0.0, 0.0], ([0.5, 0.0], [0.0, 1.2]), np.linspace(1, 50, 50))
    assert tr.max_drift <= 1e-6


def test_large_step_is_reported():
    with pytest.raises(StepSizeTooLarge):
        trajectory(QUARTIC, [0.0, 0.0], ([1.5, 0.0], [0.0, 1.2]), [5.0], dt=0.2)


def test_backends_agree():
    start = ([0.5, 0.1], [0.0, 1.2])
    a = trajectory(QUARTIC, [0.0, 0.0], start, [3.0], dt=1e-3, backend="python")
    b = trajectory(QUARTIC, [0.0, 0.0], start, [3.0], dt=1e-3)
    assert a.r.tobytes() == b.r.tobytes() and a.p.tobytes() == b.p.tobytes()


# --------------------------------------------------------------- correlation

def test_constant_observables_give_zero_correlation():
    ens = sample_energy_shell(QUARTIC, [0.0, 0.0], 1.0, 200, seed=9)
    tr = classical_correlation(QUARTIC, [0.0, 0.0], ens, A_obs=lambda r, p: 2.0, B_obs=lambda r, p: 3.0,
                               times=[0.0, 1.0, 2.0])
    np.testing.assert_array_equal(tr.Q, 0.0)


def test_correlation_vanishes_at_zero_time():
    ens = sample_torus(OSC2, [0.0, 0.0], [1.0, 0.5], 500, seed=10)
    tr = classical_correlation(OSC2, [0.0, 0.0], ens, times=[0.0, 0.5])
    assert np.all(np.abs(tr.Q[0]) <= 1e-15)


def test_harmonic_correlation_does_not_decay():
    R = [0.0, 0.0]
    ens = sample_torus(OSC2, R, [1.0, 0.5], 2000, seed=11)
    tr = classical_correlation(OSC2, R, ens, A_obs=lambda r, p: OSC2.b_rate(r, p, R),
                               times=np.linspace(0, 100, 1001))
    early, late, ratio = tr.decay()
    assert ratio >= 0.1


def test_windowed_correlation_is_deterministic():
    kw = dict(times=np.linspace(0, 5, 11), count=200, seed=12, sigma=0.5)
    a = windowed_correlation(QUARTIC, [0.0, 0.0], 1.0, **kw)
    b = windowed_correlation(QUARTIC, [0.0, 0.0], 1.0, workers=2, **kw)
    assert a.Q.tobytes() == b.Q.tobytes()
    assert np.all(np.isfinite(a.stderr))


# -------------------------------------------------------------------- theorem

def test_classical_theorem_constant_observables():
    rep = classical_theorem_check(OSC2, [0.0, 0.0], kind="torus", value=[1.0, 0.5],
                                  A_obs=lambda r, p: 1.0, B_obs=lambda r, p: 1.0,
                                  B_gen=lambda r, p: np.ones(r.shape[0]), count=256, seed=1)
    np.testing.assert_allclose(rep.lhs, 0, atol=1e-12)
    np.testing.assert_allclose(rep.rhs, 0, atol=1e-12)


def test_classical_theorem_harmonic_torus():
    rep = classical_theorem_check(OSC2, [0.0, 0.0], kind="torus", value=[1.0, 0.5], count=2048, seed=3)
    assert rep.passed, (rep.residual, rep.tolerance)


def test_quartic_correlation_decays():
    tr = windowed_correlation(QUARTIC, [0.0, 0.0], 1.0, np.linspace(0, 200, 801), 1000, seed=0, sigma=0.5)
    assert tr.decay()[2] <= 0.2

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geomflux.errors import DegenerateSpectrum, ReferenceOverlapVanishing
from geomflux.families import SeededRandomPolynomialFamily, SpinFamily, constant_family, spherical_spin_family
from geomflux.correlation import (
    ModeSum,
    gii_from_force_correlation,
    heisenberg_operator,
    q_correlation,
    regularized_time_integral,
    susceptibility,
    theorem_check,
)
from geomflux.geometry import metric_and_geometric_tensor
from geomflux.linalg import hermitian_eigendecomposition, random_hermitian

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
RANDOM = SeededRandomPolynomialFamily(5, 3, seed=3)
SPIN = SpinFamily(0.5)


def _pairs(rng, count=20):
    out = []
    while len(out) < count:
        R, R0 = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
        try:
            theorem_check(RANDOM, R, R0, 0, quadrature=False)
        except ReferenceOverlapVanishing:
            continue
        out.append((R, R0))
    return out


# ---------------------------------------------------------------- Heisenberg

def test_heisenberg_at_zero_time_is_identity(rng):
    eig = hermitian_eigendecomposition(random_hermitian(4, rng))
    O = random_hermitian(4, rng)
    np.testing.assert_array_equal(heisenberg_operator(eig, O, 0.0), O)


def test_heisenberg_commuting_operator_is_static(rng):
    eig = hermitian_eigendecomposition(random_hermitian(4, rng))
    O = eig.eigenvectors @ np.diag([1.0, -2.0, 0.5, 3.0]) @ eig.eigenvectors.conj().T
    np.testing.assert_allclose(heisenberg_operator(eig, O, 7.3), O, atol=1e-12)


def test_heisenberg_spin_precession():
    eig = hermitian_eigendecomposition(0.5 * SZ)
    np.testing.assert_allclose(heisenberg_operator(eig, SX, math.pi), -SX, atol=1e-12)


@given(t=st.floats(-1e3, 1e3))
def test_heisenberg_preserves_hermiticity(t):
    rng = np.random.default_rng(11)
    eig = hermitian_eigendecomposition(random_hermitian(5, rng))
    Ot = heisenberg_operator(eig, random_hermitian(5, rng), t)
    assert np.max(np.abs(Ot - Ot.conj().T)) <= 1e-10


# ------------------------------------------------------------------------ Q(t)

def test_q_vanishes_at_zero_time():
    tr = q_correlation(RANDOM, [0.2, -0.1, 0.4], [0.0, 0.3, 0.1], 1, [0.0, 1.0])
    assert np.max(np.abs(tr.Q[:, 0])) <= 1e-12


def test_q_vanishes_when_points_coincide():
    R = [0.2, -0.1, 0.4]
    tr = q_correlation(RANDOM, R, R, 2, np.linspace(0, 20, 41))
    assert np.max(np.abs(tr.Q)) <= 1e-10


def test_heisenberg_and_spectral_forms_agree(rng):
    times = np.linspace(0, 50, 100)
    for R, R0 in _pairs(rng, 5):
        h = q_correlation(RANDOM, R, R0, 0, times, "heisenberg")
        s = q_correlation(RANDOM, R, R0, 0, times, "spectral")
        assert np.max(np.abs(h.Q - s.Q)) <= 1e-10
        assert np.max(np.abs(h.C_AB - s.C_AB)) <= 1e-10
        assert np.max(np.abs(h.C_BA - s.C_BA)) <= 1e-10


def test_q_is_a_pure_sine_series():
    modes = q_correlation(RANDOM, [0.1, 0.2, 0.3], [0.3, 0.2, 0.1], 0, [0.0]).modes
    np.testing.assert_array_equal(modes.cos_coef, 0.0)
    t = np.linspace(0.1, 5, 7)
    np.testing.assert_allclose(modes.evaluate(-t), -modes.evaluate(t), atol=1e-14)


def test_q_degenerate_spectrum():
    with pytest.raises(DegenerateSpectrum):
        q_correlation(SPIN, [0, 0, 0], [0, 0, 1], 0, [0.0])


# ------------------------------------------------------------ time integrals

def test_single_mode_laplace_closed_form():
    modes = ModeSum([2.0], [[1.0]])
    assert regularized_time_integral(modes, 1.0).value[0] == pytest.approx(0.4, abs=1e-15)
    q = regularized_time_integral(modes, 1.0, "quadrature")
    assert abs(q.value[0] - 0.4) <= q.error[0]


def test_zero_signal_integrates_to_zero():
    modes = ModeSum([1.0, 2.0], [[0.0, 0.0]])
    assert regularized_time_integral(modes, 0.0).value[0] == 0.0
    assert regularized_time_integral(modes, 0.3, "quadrature").value[0] == 0.0


def test_quadrature_matches_mode_sum():
    tr = q_correlation(RANDOM, [0.4, -0.3, 0.2], [0.1, 0.0, 0.5], 0, [0.0])
    exact = regularized_time_integral(tr, 0.05).value
    quad = regularized_time_integral(tr, 0.05, "quadrature")
    assert np.max(np.abs(quad.value - exact) / np.maximum(np.abs(exact), 1e-12)) <= 1e-6
    assert np.all(np.abs(quad.value - exact) <= quad.error)


def test_quadrature_requires_positive_s():
    with pytest.raises(ValueError):
        regularized_time_integral(ModeSum([1.0], [[1.0]]), 0.0, "quadrature")


# ------------------------------------------------------------------- theorem

def test_theorem_on_random_ensemble(rng):
    worst = 0.0
    for R, R0 in _pairs(rng):
        rep = theorem_check(RANDOM, R, R0, 0, quadrature=False)
        mask = rep.deltaB > 1e-8
        worst = max(worst, float(np.max(rep.residuals[mask], initial=0.0)))
    assert worst <= 1e-8


def test_theorem_at_base_point():
    R = [0.3, 0.1, -0.2]
    rep = theorem_check(RANDOM, R, R, 1, quadrature=False)
    assert np.max(np.abs(rep.lhs)) <= 1e-10 and np.max(np.abs(rep.rhs)) <= 1e-10


def test_theorem_spin_example():
    rep = theorem_check(SPIN, [math.sin(0.5), 0, math.cos(0.5)], [0, 0, 1], 0)
    assert rep.max_relative_residual() <= 1e-8
    assert np.max(rep.residuals) <= 1e-8
    assert rep.quadrature_consistent and rep.extrapolation_consistent


def test_theorem_quadrature_cross_check():
    rep = theorem_check(RANDOM, [0.4, -0.3, 0.2], [0.1, 0.0, 0.5], 0, s_sequence=(0.2, 0.1, 0.05))
    assert rep.quadrature_consistent
    assert rep.extrapolation_consistent
    err = np.abs(rep.quadrature_by_s - rep.mode_sum_by_s)
    assert np.all(err <= rep.quadrature_error_by_s)


# ------------------------------------------------------------ susceptibility

def test_susceptibility_matches_theorem(rng):
    for R, R0 in _pairs(rng, 5):
        rep = susceptibility(RANDOM, R, R0, 0, [0.5, 0.1])
        assert np.max(rep.residual) <= 1e-8
        np.testing.assert_allclose(rep.extrapolated_difference, rep.integral_Q, atol=1e-12)


def test_susceptibility_at_base_point():
    R = [0.2, 0.2, 0.2]
    rep = susceptibility(RANDOM, R, R, 0, [1.0])
    assert np.max(np.abs(rep.extrapolated_difference)) <= 1e-10


def test_susceptibility_difference_is_laplace_of_q():
    R, R0 = [0.4, -0.3, 0.2], [0.1, 0.0, 0.5]
    zs = [1.0, 0.3]
    rep = susceptibility(RANDOM, R, R0, 0, zs)
    tr = q_correlation(RANDOM, R, R0, 0, [0.0])
    for k, z in enumerate(zs):
        np.testing.assert_allclose(rep.chi_AB[:, k] - rep.chi_BA[:, k],
                                   regularized_time_integral(tr, z).value, atol=1e-12)


def test_single_mode_susceptibility_closed_form():
    w, z = 1.0, 1.0
    modes = ModeSum([w], [[0.0]], [[1.0]])
    assert modes.laplace(z)[0] == pytest.approx(z / (z * z + w * w), abs=1e-15)


# --------------------------------------------------------------- force-force

def test_force_force_constant_family(rng):
    fam = constant_family(random_hermitian(3, rng), param_dim=2)
    np.testing.assert_allclose(gii_from_force_correlation(fam, [0.1, 0.2], 0), 0, atol=1e-14)


def test_force_force_spin_theta_component():
    g = gii_from_force_correlation(spherical_spin_family(), [1.0, 0.3], 0)
    assert abs(g[0] - 0.25) <= 1e-8
    assert abs(g[1] - math.sin(1.0) ** 2 / 4) <= 1e-8


def test_force_force_matches_metric(rng):
    for _ in range(10):
        R = rng.uniform(-1, 1, 3)
        for n in range(RANDOM.dim):
            g = metric_and_geometric_tensor(RANDOM, R, n, "force-states").g
            assert np.max(np.abs(gii_from_force_correlation(RANDOM, R, n) - np.diag(g))) <= 1e-8


def test_force_force_regularised_limit():
    R = [0.1, 0.3, -0.2]
    exact = gii_from_force_correlation(RANDOM, R, 0)
    near = gii_from_force_correlation(RANDOM, R, 0, s=1e-4)
    np.testing.assert_allclose(near, exact, rtol=1e-5)

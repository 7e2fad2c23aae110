from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest

from geomflux import _backend, _kernels_py

try:
    from geomflux import _kernels as compiled
except ImportError:  # pragma: no cover
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def _state(rng, M, N):
    return rng.standard_normal((M, N)), rng.standard_normal((M, N))


@needs_compiled
def test_harmonic_kernels_bitwise_equal(rng):
    r, p = _state(rng, 37, 3)
    args = (np.array([0.1, -0.2, 0.3]), np.array([1.0, 1.69, 0.5]), np.array([1.0, 0.5, 2.0]), 1e-3, 250)
    r1, p1, r2, p2 = r.copy(), p.copy(), r.copy(), p.copy()
    compiled.advance_harmonic(r1, p1, *args)
    _kernels_py.advance_harmonic(r2, p2, *args)
    assert r1.tobytes() == r2.tobytes() and p1.tobytes() == p2.tobytes()


@needs_compiled
def test_quartic_kernels_bitwise_equal(rng):
    r, p = _state(rng, 41, 2)
    args = (np.array([0.2, -0.1]), 0.05, np.array([1.0, 1.0]), 5e-4, 400)
    r1, p1, r2, p2 = r.copy(), p.copy(), r.copy(), p.copy()
    compiled.advance_quartic(r1, p1, *args)
    _kernels_py.advance_quartic(r2, p2, *args)
    assert r1.tobytes() == r2.tobytes() and p1.tobytes() == p2.tobytes()


def test_zero_steps_leave_state_unchanged(rng):
    r, p = _state(rng, 5, 2)
    r0, p0 = r.copy(), p.copy()
    _backend.kernels.advance_quartic(r, p, np.zeros(2), 0.05, np.ones(2), 1e-3, 0)
    np.testing.assert_array_equal(r, r0)
    np.testing.assert_array_equal(p, p0)


def test_backend_selection():
    assert _backend.get_kernels("python") is _kernels_py
    with pytest.raises(ValueError):
        _backend.get_kernels("fortran")
    assert _backend.BACKEND in ("compiled", "python")


def test_environment_forces_pure_python():
    env = dict(os.environ, GEOMFLUX_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import geomflux; print(geomflux.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"

"""Pure-numpy fallback for the compiled Verlet kernels (same signatures, same arithmetic order)."""
import numpy as np

BACKEND = "python"


def advance_harmonic(r, p, center, k, inv_mass, dt, n_steps):
    hdt = 0.5 * dt
    x, q = r.copy(), p.copy()
    f = -(k * (x - center))
    for _ in range(n_steps):
        q = q + hdt * f
        x = x + dt * (q * inv_mass)
        f = -(k * (x - center))
        q = q + hdt * f
    r[...] = x
    p[...] = q


def _quartic_force(x1, x2, beta):
    a = x1 * x1
    b = x2 * x2
    return -(2.0 * x1 * b + beta * (x1 * a)), -(2.0 * x2 * a + beta * (x2 * b))


def advance_quartic(r, p, center, beta, inv_mass, dt, n_steps):
    hdt = 0.5 * dt
    r1, r2 = r[:, 0].copy(), r[:, 1].copy()
    q1, q2 = p[:, 0].copy(), p[:, 1].copy()
    c1, c2 = center[0], center[1]
    im1, im2 = inv_mass[0], inv_mass[1]
    f1, f2 = _quartic_force(r1 - c1, r2 - c2, beta)
    for _ in range(n_steps):
        q1 = q1 + hdt * f1
        q2 = q2 + hdt * f2
        r1 = r1 + dt * (q1 * im1)
        r2 = r2 + dt * (q2 * im2)
        f1, f2 = _quartic_force(r1 - c1, r2 - c2, beta)
        q1 = q1 + hdt * f1
        q2 = q2 + hdt * f2
    r[:, 0], r[:, 1] = r1, r2
    p[:, 0], p[:, 1] = q1, q2

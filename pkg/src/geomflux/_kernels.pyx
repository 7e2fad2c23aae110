# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled velocity-Verlet kernels for the builtin classical systems.

Arrays are updated in place.  Arithmetic is written in the same order as
``_kernels_py`` so the two backends agree to rounding.
"""

BACKEND = "compiled"


cdef enum:
    BLOCK = 64


def advance_harmonic(double[:, ::1] r, double[:, ::1] p, const double[::1] center,
                     const double[::1] k, const double[::1] inv_mass, double dt, long n_steps):
    """``n_steps`` Verlet steps of ``V = sum_j k_j (r_j - c_j)^2 / 2``.

    Every (sample, coordinate) pair is an independent oscillator, so the
    flattened elements are advanced in blocks.
    """
    cdef Py_ssize_t e0, e, i, j, nb, M = r.shape[0], N = r.shape[1], total = r.shape[0] * r.shape[1]
    cdef long step
    cdef double hdt = 0.5 * dt
    cdef double x[BLOCK]
    cdef double q[BLOCK]
    cdef double f[BLOCK]
    cdef double kk[BLOCK]
    cdef double cc[BLOCK]
    cdef double im[BLOCK]
    with nogil:
        e0 = 0
        while e0 < total:
            nb = min(BLOCK, total - e0)
            for i in range(nb):
                e = e0 + i
                j = e % N
                x[i] = r[e // N, j]
                q[i] = p[e // N, j]
                kk[i] = k[j]
                cc[i] = center[j]
                im[i] = inv_mass[j]
                f[i] = -(kk[i] * (x[i] - cc[i]))
            for step in range(n_steps):
                for i in range(nb):
                    q[i] = q[i] + hdt * f[i]
                    x[i] = x[i] + dt * (q[i] * im[i])
                    f[i] = -(kk[i] * (x[i] - cc[i]))
                    q[i] = q[i] + hdt * f[i]
            for i in range(nb):
                e = e0 + i
                r[e // N, e % N] = x[i]
                p[e // N, e % N] = q[i]
            e0 += BLOCK


def advance_quartic(double[:, ::1] r, double[:, ::1] p, const double[::1] center,
                    double beta, const double[::1] inv_mass, double dt, long n_steps):
    """``n_steps`` Verlet steps of ``V = x1^2 x2^2 + beta (x1^4 + x2^4) / 4``, ``x = r - c``.

    Samples are advanced in blocks so the inner loop runs over independent
    trajectories and pipelines well.
    """
    cdef Py_ssize_t m0, m, i, nb, M = r.shape[0]
    cdef long step
    cdef double hdt = 0.5 * dt
    cdef double c1 = center[0], c2 = center[1], im1 = inv_mass[0], im2 = inv_mass[1]
    cdef double x1, x2, a, b
    cdef double r1[BLOCK]
    cdef double r2[BLOCK]
    cdef double q1[BLOCK]
    cdef double q2[BLOCK]
    cdef double f1[BLOCK]
    cdef double f2[BLOCK]
    with nogil:
        m0 = 0
        while m0 < M:
            nb = min(BLOCK, M - m0)
            for i in range(nb):
                m = m0 + i
                r1[i] = r[m, 0]
                r2[i] = r[m, 1]
                q1[i] = p[m, 0]
                q2[i] = p[m, 1]
                x1 = r1[i] - c1
                x2 = r2[i] - c2
                a = x1 * x1
                b = x2 * x2
                f1[i] = -(2.0 * x1 * b + beta * (x1 * a))
                f2[i] = -(2.0 * x2 * a + beta * (x2 * b))
            for step in range(n_steps):
                for i in range(nb):
                    q1[i] = q1[i] + hdt * f1[i]
                    q2[i] = q2[i] + hdt * f2[i]
                    r1[i] = r1[i] + dt * (q1[i] * im1)
                    r2[i] = r2[i] + dt * (q2[i] * im2)
                    x1 = r1[i] - c1
                    x2 = r2[i] - c2
                    a = x1 * x1
                    b = x2 * x2
                    f1[i] = -(2.0 * x1 * b + beta * (x1 * a))
                    f2[i] = -(2.0 * x2 * a + beta * (x2 * b))
                    q1[i] = q1[i] + hdt * f1[i]
                    q2[i] = q2[i] + hdt * f2[i]
            for i in range(nb):
                m = m0 + i
                r[m, 0] = r1[i]
                r[m, 1] = r2[i]
                p[m, 0] = q1[i]
                p[m, 1] = q2[i]
            m0 += BLOCK

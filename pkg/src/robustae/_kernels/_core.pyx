# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: xoshiro256** stream generation and one-sided Jacobi sweeps.

Mirrors the contracts of ``robustae._kernels.pure``.
"""

from libc.math cimport fabs, sqrt

import numpy as np


ctypedef unsigned long long u64


cdef inline u64 _rotl(u64 x, int k) noexcept nogil:
    return (x << k) | (x >> (64 - k))


def fill_uniform(u64[::1] state, double[::1] out):
    """Fill 1-D float64 `out` with uniforms in [0, 1); `state` is uint64[4]."""
    cdef u64 s0 = state[0], s1 = state[1], s2 = state[2], s3 = state[3]
    cdef u64 r, t
    cdef Py_ssize_t k, n = out.shape[0]
    with nogil:
        for k in range(n):
            r = _rotl(s1 * 5ULL, 7) * 9ULL
            t = s1 << 17
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = _rotl(s3, 45)
            out[k] = <double> (r >> 11) * (1.0 / 9007199254740992.0)
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3


def next_u64_block(u64[::1] state, u64[::1] out):
    """Fill 1-D uint64 `out` with raw generator words."""
    cdef u64 s0 = state[0], s1 = state[1], s2 = state[2], s3 = state[3]
    cdef u64 t
    cdef Py_ssize_t k, n = out.shape[0]
    with nogil:
        for k in range(n):
            out[k] = _rotl(s1 * 5ULL, 7) * 9ULL
            t = s1 << 17
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = _rotl(s3, 45)
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3


def jacobi_rows(double[:, ::1] at, double[:, ::1] vt, int max_sweeps, double tol):
    """One-sided Jacobi: orthogonalize the rows of `at` in place.

    The same plane rotations are applied to the rows of `vt`.  A pair is
    rotated only when its normalized off-diagonal exceeds `tol`, so a
    converged sweep leaves both matrices untouched.

    Returns (sweeps_used, last_sweep_max_off).
    """
    cdef Py_ssize_t m = at.shape[0], n = at.shape[1], mv = vt.shape[1]
    cdef Py_ssize_t i, j, k
    cdef int sweep = 0
    cdef double gamma, alpha, beta, denom, rel, off, zeta, t, c, s, x, y
    cdef double max_sq, floor_sq, dim_eps
    cdef double[::1] sq
    if m < 2:
        return 0, 0.0
    sq = np.empty(m, dtype=np.float64)
    # Rows below this share of the largest norm carry no resolvable direction
    # (the SVD wrapper replaces them); rotating them against live rows can
    # leave exactly-parallel roundoff remnants that never converge.
    dim_eps = <double> (m if m > n else n) * 2.220446049250313e-16
    off = 0.0
    while sweep < max_sweeps:
        sweep += 1
        off = 0.0
        with nogil:
            # Cached squared row norms, refreshed once per sweep.
            max_sq = 0.0
            for i in range(m):
                alpha = 0.0
                for k in range(n):
                    alpha += at[i, k] * at[i, k]
                sq[i] = alpha
                if alpha > max_sq:
                    max_sq = alpha
            floor_sq = max_sq * dim_eps * dim_eps
            for i in range(m - 1):
                if sq[i] <= floor_sq:
                    continue
                for j in range(i + 1, m):
                    if sq[j] <= floor_sq:
                        continue
                    gamma = 0.0
                    for k in range(n):
                        gamma += at[i, k] * at[j, k]
                    denom = sqrt(sq[i] * sq[j])
                    rel = fabs(gamma) / denom
                    if rel > off:
                        off = rel
                    if rel <= tol:
                        continue
                    alpha = sq[i]
                    beta = sq[j]
                    zeta = (beta - alpha) / (2.0 * gamma)
                    if zeta >= 0.0:
                        t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                    else:
                        t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = c * t
                    for k in range(n):
                        x = at[i, k]
                        y = at[j, k]
                        at[i, k] = c * x - s * y
                        at[j, k] = s * x + c * y
                    for k in range(mv):
                        x = vt[i, k]
                        y = vt[j, k]
                        vt[i, k] = c * x - s * y
                        vt[j, k] = s * x + c * y
                    sq[i] = c * c * alpha - 2.0 * c * s * gamma + s * s * beta
                    sq[j] = s * s * alpha + 2.0 * c * s * gamma + c * c * beta
        if off <= tol:
            return sweep, off
    return max_sweeps, off

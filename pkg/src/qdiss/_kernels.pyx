# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for trajectory ensembles.

The pure-Python twins live in ``_fallback`` and must produce the same numbers:
integer paths are bit-identical, floating paths agree to the last few ulps
(libm and numpy may round transcendental functions differently).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, log, sqrt, M_PI
from libc.stdint cimport uint32_t, uint64_t

cnp.import_array()

cdef uint32_t M0 = 0xD2511F53u
cdef uint32_t M1 = 0xCD9E8D57u
cdef uint32_t W0 = 0x9E3779B9u
cdef uint32_t W1 = 0xBB67AE85u
cdef double TWO53 = 9007199254740992.0


cdef inline void _philox(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t x0, x1, x2, x3
    cdef int r
    x0 = c[0]; x1 = c[1]; x2 = c[2]; x3 = c[3]
    for r in range(10):
        p0 = <uint64_t>M0 * x0
        p1 = <uint64_t>M1 * x2
        x0 = <uint32_t>(p1 >> 32) ^ x1 ^ k0
        x1 = <uint32_t>p1
        x2 = <uint32_t>(p0 >> 32) ^ x3 ^ k1
        x3 = <uint32_t>p0
        k0 = k0 + W0
        k1 = k1 + W1
    c[0] = x0; c[1] = x1; c[2] = x2; c[3] = x3


def philox4x32(cnp.uint32_t[:, ::1] ctr, cnp.uint32_t[::1] key):
    """Philox4x32-10 applied row-wise to an (n, 4) counter array."""
    cdef Py_ssize_t i, n = ctr.shape[0]
    out = np.empty((n, 4), dtype=np.uint32)
    cdef cnp.uint32_t[:, ::1] o = out
    cdef uint32_t c[4]
    cdef uint32_t k0 = key[0], k1 = key[1]
    with nogil:
        for i in range(n):
            c[0] = ctr[i, 0]; c[1] = ctr[i, 1]; c[2] = ctr[i, 2]; c[3] = ctr[i, 3]
            _philox(c, k0, k1)
            o[i, 0] = c[0]; o[i, 1] = c[1]; o[i, 2] = c[2]; o[i, 3] = c[3]
    return out


cdef inline double _uniform(uint32_t a, uint32_t b) noexcept nogil:
    return ((<double>(a >> 5)) * 67108864.0 + <double>(b >> 6) + 0.5) / TWO53


def normal_pairs(cnp.uint64_t[::1] ids, uint32_t step, uint32_t purpose, cnp.uint32_t[::1] key):
    """Two standard normals per id from counter (id_lo, id_hi, step, purpose)."""
    cdef Py_ssize_t i, n = ids.shape[0]
    out = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef uint32_t c[4]
    cdef uint32_t k0 = key[0], k1 = key[1]
    cdef double u1, u2, r
    with nogil:
        for i in range(n):
            c[0] = <uint32_t>(ids[i] & 0xFFFFFFFFu)
            c[1] = <uint32_t>(ids[i] >> 32)
            c[2] = step
            c[3] = purpose
            _philox(c, k0, k1)
            u1 = _uniform(c[0], c[1])
            u2 = _uniform(c[2], c[3])
            r = sqrt(-2.0 * log(u1))
            o[i, 0] = r * cos(2.0 * M_PI * u2)
            o[i, 1] = r * sin(2.0 * M_PI * u2)
    return out


def normals(cnp.uint64_t[::1] ids, uint32_t step, uint32_t purpose, cnp.uint32_t[::1] key):
    """First member of :func:`normal_pairs` only."""
    cdef Py_ssize_t i, n = ids.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint32_t c[4]
    cdef uint32_t k0 = key[0], k1 = key[1]
    with nogil:
        for i in range(n):
            c[0] = <uint32_t>(ids[i] & 0xFFFFFFFFu)
            c[1] = <uint32_t>(ids[i] >> 32)
            c[2] = step
            c[3] = purpose
            _philox(c, k0, k1)
            o[i] = sqrt(-2.0 * log(_uniform(c[0], c[1]))) * cos(2.0 * M_PI * _uniform(c[2], c[3]))
    return out


def em_step(double[::1] x, double[::1] v, double[::1] dU, double[::1] fq, double[::1] noise,
            double dt, double gamma, double inv_m, double sig):
    """In-place semi-implicit Euler-Maruyama update.

    v <- v + dt (F / m) - dt gamma v + sig * noise,  x <- x + dt v
    with F = -U'(x) + fq, U' given by its polynomial coefficients (low to high).
    Empty ``fq`` or ``noise`` arrays mean zero.
    """
    cdef Py_ssize_t i, j, n = x.shape[0], nc = dU.shape[0]
    cdef bint use_q = fq.shape[0] > 0, use_n = noise.shape[0] > 0
    cdef double xi, f, vi
    with nogil:
        for i in range(n):
            xi = x[i]
            f = 0.0
            for j in range(nc - 1, -1, -1):
                f = f * xi + dU[j]
            f = -f
            if use_q:
                f = f + fq[i]
            vi = v[i]
            vi = vi + dt * (f * inv_m) - dt * gamma * vi
            if use_n:
                vi = vi + sig * noise[i]
            v[i] = vi
            x[i] = xi + dt * vi


def linear_bin(double[::1] x, double x0, double dx, Py_ssize_t n):
    """Cloud-in-cell weights of unit particles on nodes x0 + k dx; out-of-range mass is dropped."""
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, k, m = x.shape[0]
    cdef double s, w
    with nogil:
        for i in range(m):
            s = (x[i] - x0) / dx
            if s < 0.0 or s >= n - 1:
                continue
            k = <Py_ssize_t>s
            w = s - k
            o[k] += 1.0 - w
            o[k + 1] += w
    return out

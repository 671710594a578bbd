# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rationing-rate kernel.

Mirrors :mod:`darkpool_eq._kernels_py` exactly; see that module for the
derivation of the integrand.
"""

from libc.math cimport exp, log, lgamma, fabs
from scipy.special.cython_special cimport gammainc

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _inner(double a, double b, double c, double k,
                          double y, double lgk1) noexcept nogil:
    # E_X[min(1, (a + cX) / D)] with D = b + c*y and X ~ Gamma(k, 1)
    cdef double d = b + c * y
    cdef double t = (d - a) / c
    cdef double f, pk
    if t <= 0.0:
        return 1.0
    f = gammainc(k, t)
    pk = exp(k * log(t) - t - lgk1)
    return 1.0 - f * (1.0 - (a + c * k) / d) - c * k * pk / d


cdef double _tail(double a, double b, double c, double k, double u0,
                  double u1, const double[::1] x, const double[::1] w,
                  double lgk, double lgk1) noexcept nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double half = 0.5 * (u1 - u0), mid = 0.5 * (u1 + u0)
    cdef double acc = 0.0, u, y, dens
    for i in range(n):
        u = mid + half * x[i]
        y = exp(u)
        # Gamma density times the Jacobian dy = y du
        dens = exp(k * u - y - lgk)
        acc += w[i] * dens * _inner(a, b, c, k, y, lgk1)
    return half * acc


def rate(double a, double b, double c, double k, double ylo, double yhi,
         const double[::1] x_hi, const double[::1] w_hi,
         const double[::1] x_lo, const double[::1] w_lo):
    """Return ``(E[min(1, (a + cX)/(b + cY))], error estimate)``.

    ``X, Y`` are i.i.d. Gamma(k, 1) and ``c > 0``. ``[ylo, yhi]`` is the
    quantile-truncated support.
    """
    cdef double y0 = (a - b) / c
    cdef double lo = ylo
    cdef double base = 0.0
    cdef double i_hi, i_lo
    cdef double lgk = lgamma(k), lgk1 = lgamma(k + 1.0)
    if y0 > 0.0:
        base = gammainc(k, y0)
        if y0 > lo:
            lo = y0
    if lo >= yhi:
        return base, 0.0
    with nogil:
        i_hi = _tail(a, b, c, k, log(lo), log(yhi), x_hi, w_hi, lgk, lgk1)
        i_lo = _tail(a, b, c, k, log(lo), log(yhi), x_lo, w_lo, lgk, lgk1)
    return base + i_hi, fabs(i_hi - i_lo)

"""Pure numpy rationing-rate kernel.

For ``X, Y`` i.i.d. Gamma(k, 1) and ``c > 0`` the rate

    E[min(1, (a + cX) / (b + cY))]

is reduced to a one-dimensional integral. Conditional on ``Y = y`` put
``D = b + cy`` and ``t = (D - a) / c``. When ``t <= 0`` the ratio is at
least one. Otherwise

    E_X[min(1, (a + cX)/D)] = 1 - F_k(t) + (a F_k(t) + c k F_{k+1}(t)) / D

with ``F_k`` the regularized lower incomplete gamma function. The outer
integral is split at the kink ``y0 = (a - b)/c`` and integrated in
``log y`` with Gauss-Legendre nodes, which keeps small shapes well
conditioned.
"""

import numpy as np
from scipy.special import gammainc, gammaln


def _tail(a, b, c, k, u0, u1, x, w):
    half = 0.5 * (u1 - u0)
    u = 0.5 * (u1 + u0) + half * x
    y = np.exp(u)
    dens = np.exp(k * u - y - gammaln(k))
    d = b + c * y
    t = (d - a) / c
    inner = np.ones_like(y)
    m = t > 0.0
    tm = t[m]
    f = gammainc(k, tm)
    pk = np.exp(k * np.log(tm) - tm - gammaln(k + 1.0))
    inner[m] = 1.0 - f * (1.0 - (a + c * k) / d[m]) - c * k * pk / d[m]
    return half * np.dot(w, dens * inner)


def rate(a, b, c, k, ylo, yhi, x_hi, w_hi, x_lo, w_lo):
    """Return ``(E[min(1, (a + cX)/(b + cY))], error estimate)``."""
    y0 = (a - b) / c
    lo = ylo
    base = 0.0
    if y0 > 0.0:
        base = float(gammainc(k, y0))
        lo = max(lo, y0)
    if lo >= yhi:
        return base, 0.0
    u0, u1 = np.log(lo), np.log(yhi)
    i_hi = _tail(a, b, c, k, u0, u1, x_hi, w_hi)
    i_lo = _tail(a, b, c, k, u0, u1, x_lo, w_lo)
    return base + float(i_hi), float(abs(i_hi - i_lo))

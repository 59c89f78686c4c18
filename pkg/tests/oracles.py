"""Independent reference computations shared by the test modules."""

import math

import numpy as np
from scipy import integrate, optimize


def chi2_sf_quad(x, df):
    """Survival function by adaptive quadrature of the chi-square density."""
    k = df / 2.0
    logc = -k * math.log(2.0) - math.lgamma(k)

    def dens(s):
        return math.exp(logc + (k - 1) * math.log(s) - s / 2) if s > 0 else 0.0

    if x == 0:
        return 1.0
    # integrate the smaller tail for accuracy
    if x > df:
        val, _ = integrate.quad(dens, x, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
        return val
    val, _ = integrate.quad(dens, 0, x, epsabs=1e-14, epsrel=1e-12, limit=200)
    return 1.0 - val


def chi2_quantile_quad(p, df):
    """Upper quantile ``q`` with ``P(chi2_df > q) = 1 - p``, by root finding on the quadrature."""
    return optimize.brentq(lambda q: chi2_sf_quad(q, df) - (1 - p), 1e-9, 200.0, xtol=1e-12)


def bisect_lambda(psi):
    """Root of sum psi / (1 + lam psi) on the feasible interval by bisection."""
    lo = -1.0 / psi.max() + 1e-12
    hi = -1.0 / psi.min() - 1e-12

    def g(lam):
        return np.sum(psi / (1 + lam * psi))

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return 0.5 * (lo + hi)

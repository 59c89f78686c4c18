"""Profile least-squares fitting of the mean parameters and OLS for the variance.

The profiled objective is

    S(gamma) = sum_i (Y_i - l(X_i; gamma1) - m_hat^{(-i)}(W_i' gamma2))^2

with ``m_hat^{(-i)}`` the leave-one-out Nadaraya-Watson fit.  It is minimized
over ``(gamma1, gamma2_free)`` with Nelder-Mead (scipy), restarted once from
the best vertex.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .core import Identification, ModelSpec, Series, Theta, materialize_gamma2
from .errors import CollinearityError, DataError, DegenerateFitError, DomainError
from .kernel import INV_SQRT_2PI, KernelConfig, _self_sums

__all__ = [
    "FitResult",
    "profile_objective",
    "loo_link",
    "default_init",
    "profile_ls_fit",
    "variance_ls_fit",
]

log = logging.getLogger(__name__)

_DENSITY_FLOOR = 1e-12


@dataclass(frozen=True)
class FitResult:
    theta_hat: Theta
    sse: float
    residuals: np.ndarray
    iterations: int
    converged: bool
    sse_init: float = np.nan


def loo_link(series: Series, theta: Theta, spec: ModelSpec, cfg: KernelConfig | None = None):
    """Leave-one-out link fit ``m_hat^{(-i)}`` and density ``f^{(-i)}`` at each index.

    The index is formed with the unit-length direction ``gamma2 / |gamma2|``,
    so the fit depends on the direction only and FixFirst and UnitNorm
    searches minimize the same criterion.  A Manual bandwidth is therefore
    expressed on the unit-direction scale.
    """
    cfg = cfg or KernelConfig()
    n = series.n
    if n < 2:
        raise DomainError("leave-one-out smoothing needs n >= 2")
    g2 = materialize_gamma2(theta, spec)
    t = series.w @ (g2 / np.linalg.norm(g2))
    resid = series.y - spec.linear.value(series.x, theta.gamma1)
    h = cfg.bandwidth(t)
    order = np.argsort(t, kind="stable")
    VT = np.ascontiguousarray(np.vstack([np.ones(n), resid])[:, order])
    ST, _ = _self_sums(t[order], h, VT, np.zeros((0, n)), False)
    S = np.empty((n, 2))
    S[order] = ST.T
    f = S[:, 0] * (INV_SQRT_2PI / ((n - 1) * h))
    low = f < _DENSITY_FLOOR
    if low.all():
        raise DegenerateFitError("index density vanishes at every observation")
    m = np.empty(n)
    m[~low] = S[~low, 1] / S[~low, 0]
    # isolated points get the global mean so isolation is never rewarded
    m[low] = resid.mean()
    return m, f, resid


def profile_objective(series, theta, spec, cfg=None) -> tuple[float, np.ndarray]:
    m, _, resid = loo_link(series, theta, spec, cfg)
    e = resid - m
    return float(e @ e), e


def default_init(series: Series, spec: ModelSpec) -> Theta:
    """OLS for ``gamma1`` (with intercept) and the leading principal axis of ``W``."""
    n = series.n
    if spec.d1:
        A = np.column_stack([np.ones(n), series.x])
        coef, *_ = np.linalg.lstsq(A, series.y, rcond=None)
        g1 = coef[1:]
    else:
        g1 = np.zeros(0)
    _, vecs = np.linalg.eigh(np.cov(series.w, rowvar=False))
    v = vecs[:, -1]
    if v[0] < 0:
        v = -v
    if spec.identification is Identification.FIX_FIRST:
        if abs(v[0]) < 1e-8:
            g2 = np.zeros(spec.d_W - 1)
        else:
            g2 = v[1:] / v[0]
    else:
        g2 = v[1:] / np.linalg.norm(v)
    return Theta(g1, g2, np.zeros(spec.d_beta))


def profile_ls_fit(
    series: Series,
    spec: ModelSpec,
    cfg: KernelConfig | None = None,
    init: Theta | None = None,
    max_evals: int = 2000,
    xatol: float = 1e-6,
) -> FitResult:
    """Minimize the profiled least-squares criterion over ``(gamma1, gamma2_free)``.

    Parameters
    ----------
    series : Series
    spec : ModelSpec
    cfg : KernelConfig, optional
        Smoothing used inside the objective (default ScaledRate).
    init : Theta, optional
        Starting point; :func:`default_init` when omitted.
    max_evals : int
        Evaluation budget of each Nelder-Mead run.
    xatol : float
        Simplex-size stopping threshold.

    Returns
    -------
    FitResult
        ``theta_hat`` keeps ``init.beta`` untouched; use
        :func:`variance_ls_fit` on the residuals for ``beta``.
    """
    series.check(spec)
    if series.n < 10 * (spec.d1 + spec.d_W):
        raise DataError(f"need at least {10 * (spec.d1 + spec.d_W)} observations to fit")
    init = init if init is not None else default_init(series, spec)
    init.check(spec)
    unit = spec.identification is Identification.UNIT_NORM

    def objective(v):
        th = init.with_free_vector(v)
        if unit and th.gamma2_free @ th.gamma2_free >= 1.0:
            return np.inf
        return profile_objective(series, th, spec, cfg)[0]

    x0 = init.free_vector()
    sse0 = objective(x0)
    opts = dict(xatol=xatol, fatol=np.inf, maxfev=max_evals, adaptive=x0.size > 4)
    nfev = 0
    res = optimize.minimize(objective, x0, method="Nelder-Mead", options=opts)
    nfev += res.nfev
    res2 = optimize.minimize(objective, res.x, method="Nelder-Mead", options=opts)
    nfev += res2.nfev
    best = res2 if res2.fun <= res.fun else res
    x_best = best.x if best.fun <= sse0 else x0
    theta_hat = init.with_free_vector(x_best)
    sse, resid = profile_objective(series, theta_hat, spec, cfg)
    converged = bool(res2.status == 0)
    if not converged:
        log.info("Nelder-Mead stopped on its evaluation budget: %s", res2.message)
    return FitResult(theta_hat, sse, resid, nfev, converged, sse0)


def variance_ls_fit(residuals, y, spec: ModelSpec) -> np.ndarray:
    """OLS of squared mean residuals on the variance regressors.

    ``residuals`` and ``y`` are aligned with the series rows; the first
    ``r`` rows, which lack lags, are dropped.
    """
    vf = spec.variance
    if vf is None:
        raise DomainError("variance fit needs a CHPLSIM spec")
    residuals = np.asarray(residuals, dtype=float)
    y = np.asarray(y, dtype=float)
    r = spec.r
    n = residuals.size
    if n - r <= spec.d_beta:
        raise DataError("too few observations for the variance regression")
    A = vf.design(y[r - vf.lags : n - vf.lags])
    target = residuals[r:] ** 2
    gram = A.T @ A
    if np.linalg.cond(gram) > 1e12:
        raise CollinearityError("variance regressors are collinear")
    return np.linalg.solve(gram, A.T @ target)

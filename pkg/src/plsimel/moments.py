"""Unconditional estimating functions for PLSIM and CHPLSIM.

The mean block of a row is

    (g_mu * f) * J' [ f^2 (grad l * f - eta_X) ; eta_m' (W f - eta_W) ]

and the CHPLSIM variance block is ``(g_mu^2 - sigma^2) f^2 * grad_beta sigma^2``.
Weighting by ``f^4`` and ``f^2`` clears every division by the index density,
so no row contains a denominator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Family, ModelSpec, Series, Theta, full_jacobian
from .errors import DataError, DegeneratePointError, DomainError
from .kernel import EtaProfile

__all__ = [
    "MomentMatrix",
    "g_mu",
    "g_sigma",
    "psi_plsim",
    "psi_chplsim",
    "build_psi",
]


@dataclass(frozen=True)
class MomentMatrix:
    psi: np.ndarray
    row_index: np.ndarray

    @property
    def n_eff(self) -> int:
        return self.psi.shape[0]

    @property
    def d(self) -> int:
        return self.psi.shape[1]


def _residual(series, theta, spec):
    return series.y - spec.linear.value(series.x, theta.gamma1)


def g_mu(series: Series, theta: Theta, eta: EtaProfile, i: int, spec: ModelSpec) -> float:
    """Mean residual ``Y_i - l(X_i) - m_hat(t_i)`` at observation ``i``."""
    f = eta.eta_f[i]
    if not f > 0:
        raise DegeneratePointError(f"zero index density at observation {i}", index=i)
    l_i = float(spec.linear.value(series.x[i : i + 1], theta.gamma1)[0])
    return float(series.y[i] - l_i - eta.eta_m[i] / f)


def _variance_terms(series, theta, spec):
    vf = spec.variance
    r = spec.r
    y_lag = series.y[r - vf.lags : series.n - vf.lags]
    design = vf.design(y_lag)
    return design @ theta.beta, design


def g_sigma(series: Series, theta: Theta, eta: EtaProfile, i: int, spec: ModelSpec) -> float:
    """Variance residual ``g_mu^2 - sigma^2`` at observation ``i >= r``."""
    if spec.variance is None:
        raise DomainError("g_sigma needs a CHPLSIM spec")
    if i < spec.r:
        raise DomainError(f"observation {i} lacks the {spec.r} lags the variance needs")
    y_lag = series.y[i - spec.variance.lags]
    s2 = float(spec.variance.value(np.array([y_lag]), theta.beta)[0])
    return g_mu(series, theta, eta, i, spec) ** 2 - s2


def _check_finite(psi, row_index):
    bad = ~np.all(np.isfinite(psi), axis=1)
    if bad.any():
        k = int(row_index[np.argmax(bad)])
        raise DataError(f"non-finite moment row at observation {k}")


def _mean_block(series, theta, eta, spec):
    """Rows ``(g_mu f) * J' grad`` for all observations, plus ``g_mu f``."""
    f = eta.eta_f
    gf = _residual(series, theta, spec) * f - eta.eta_m
    grad_l = np.asarray(spec.linear.gradient(series.x, theta.gamma1), dtype=float)
    grad_l = grad_l.reshape(series.n, spec.d1)
    lin = (f**2)[:, None] * (grad_l * f[:, None] - eta.eta_X)
    idx = eta.eta_m_prime[:, None] * (series.w * f[:, None] - eta.eta_W)
    stacked = np.hstack([lin, idx])
    with np.errstate(invalid="ignore", over="ignore"):
        # non-finite rows are reported by _check_finite
        return gf[:, None] * (stacked @ full_jacobian(theta, spec)), gf


def _check_inputs(series, theta, eta, spec):
    series.check(spec)
    theta.check(spec)
    if eta.n != series.n:
        raise DataError(f"nuisance profile has {eta.n} points, series has {series.n}")
    if spec.r > 0 and series.n <= spec.r:
        raise DomainError(f"need more than r={spec.r} observations")


def psi_plsim(series: Series, theta: Theta, eta: EtaProfile, spec: ModelSpec) -> MomentMatrix:
    _check_inputs(series, theta, eta, spec)
    block, _ = _mean_block(series, theta, eta, spec)
    rows = np.arange(spec.r, series.n)
    psi = block[spec.r :]
    _check_finite(psi, rows)
    return MomentMatrix(psi, rows)


def psi_chplsim(series: Series, theta: Theta, eta: EtaProfile, spec: ModelSpec) -> MomentMatrix:
    """Stacked mean and variance rows; the first ``r`` observations are dropped."""
    if spec.family is not Family.CHPLSIM:
        raise DomainError("psi_chplsim needs a CHPLSIM spec")
    _check_inputs(series, theta, eta, spec)
    r = spec.r
    block, gf = _mean_block(series, theta, eta, spec)
    sigma2, grad_beta = _variance_terms(series, theta, spec)
    f2 = eta.eta_f[r:] ** 2
    # g_sigma * f^2 = (g_mu f)^2 - sigma^2 f^2
    gs_f2 = gf[r:] ** 2 - sigma2 * f2
    psi = np.hstack([block[r:], gs_f2[:, None] * grad_beta])
    rows = np.arange(r, series.n)
    _check_finite(psi, rows)
    return MomentMatrix(psi, rows)


def build_psi(series: Series, theta: Theta, eta: EtaProfile, spec: ModelSpec) -> MomentMatrix:
    if spec.family is Family.CHPLSIM:
        return psi_chplsim(series, theta, eta, spec)
    return psi_plsim(series, theta, eta, spec)

"""Empirical likelihood dual solver and the Wilks chi-square test.

The Lagrange multiplier maximizes ``sum_i log*(1 + lambda' psi_i)`` where
``log*`` is the logarithm continued below ``1/n`` by its second-order Taylor
expansion (Owen's pseudo-logarithm).  The continuation is concave and defined
on the whole line, so Newton steps can never leave the domain.  When the
origin is interior to the convex hull of the rows the maximizer of ``log*``
coincides with the maximizer of ``log``; when it is not, the objective is
unbounded and the iterates run off to infinity.

The solve runs in whitened coordinates ``psi L^{-T}`` (``L L' = psi' psi / n``),
which makes the iteration invariant to invertible linear maps of the rows.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DegenerateVarianceError, DomainError, UnderdeterminedError
from .kernel import EtaProfile, estimate_eta, oracle_eta
from .moments import build_psi

__all__ = [
    "Status",
    "ELResult",
    "solve_lambda",
    "gammainc_lower",
    "gammainc_upper",
    "chi2_sf",
    "OracleNuisance",
    "wilks_test",
]

TOL = 1e-10
MAX_ITER = 100
_HULL_SCALE = 1e8


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    HULL_VIOLATION = "HullViolation"
    MAX_ITER = "MaxIter"


@dataclass(frozen=True)
class ELResult:
    lambda_: np.ndarray
    ell_n: float
    wilks: float
    df: int
    p_value: float
    weights: np.ndarray
    status: Status
    iterations: int = 0
    grad_norm: float = math.nan
    extra: dict = field(default_factory=dict)

    def rejects(self, alpha: float) -> bool:
        return self.p_value < alpha

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "wilks": self.wilks,
            "df": self.df,
            "p_value": self.p_value,
            "ell_n": self.ell_n,
            "lambda": self.lambda_.tolist(),
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            **self.extra,
        }


def _logstar(z, a):
    """Pseudo-log and its first two derivatives; ``a`` is the threshold ``1/n``."""
    inside = z >= a
    zc = np.where(inside, z, a)
    val = np.where(
        inside,
        np.log(zc),
        math.log(a) - 1.5 + 2.0 * z / a - 0.5 * (z / a) ** 2,
    )
    d1 = np.where(inside, 1.0 / zc, 2.0 / a - z / a**2)
    d2 = np.where(inside, -1.0 / zc**2, -1.0 / a**2)
    return val, d1, d2


def solve_lambda(psi, tol: float = TOL, max_iter: int = MAX_ITER) -> ELResult:
    """Lagrange multiplier, log-likelihood ratio and Wilks statistic.

    Parameters
    ----------
    psi : MomentMatrix or array of shape (n, d)
        Estimating-function rows.
    tol : float
        Convergence threshold on the max-norm of the mean gradient, measured
        in whitened coordinates.
    max_iter : int
        Newton iteration cap.

    Returns
    -------
    ELResult
        ``status`` is ``HullViolation`` (with ``wilks = inf`` and
        ``p_value = 0``) when the origin is outside the convex hull of the rows.
    """
    psi = np.asarray(getattr(psi, "psi", psi), dtype=float)
    if psi.ndim == 1:
        psi = psi[:, None]
    n, d = psi.shape
    if n <= d:
        raise UnderdeterminedError(f"need more rows than moment conditions, got n={n}, d={d}")
    if not np.all(np.isfinite(psi)):
        raise DomainError("moment rows contain non-finite values")

    gram = psi.T @ psi / n
    evals = np.linalg.eigvalsh(gram)
    if not evals[0] > 1e-12 * max(evals[-1], 0.0) or evals[-1] <= 0:
        raise DegenerateVarianceError("moment rows have a rank-deficient second-moment matrix")
    L = linalg.cholesky(gram, lower=True)
    z_psi = linalg.solve_triangular(L, psi.T, lower=True).T

    a = 1.0 / n
    lam = np.zeros(d)
    radius = _HULL_SCALE / np.max(np.linalg.norm(z_psi, axis=1))
    status = Status.MAX_ITER
    val, d1, d2 = _logstar(np.ones(n), a)
    obj = val.sum()
    it = 0
    gnorm = math.inf
    for it in range(1, max_iter + 1):
        grad = z_psi.T @ d1
        gnorm = float(np.max(np.abs(grad))) / n
        if gnorm <= tol:
            status = Status.CONVERGED
            break
        hess = (z_psi * d2[:, None]).T @ z_psi
        step = np.linalg.solve(-hess, grad)
        t = 1.0
        # near the maximum the objective change is pure rounding noise
        slack = 64 * np.finfo(float).eps * (n + abs(obj))
        for _ in range(60):
            cand = lam + t * step
            cval, cd1, cd2 = _logstar(1.0 + z_psi @ cand, a)
            cobj = cval.sum()
            if cobj >= obj - slack:
                break
            t *= 0.5
        else:
            # no ascent at machine precision: at the maximum up to rounding
            status = Status.CONVERGED if gnorm <= 1e-6 else Status.MAX_ITER
            break
        lam, obj, d1, d2 = cand, cobj, cd1, cd2
        if np.linalg.norm(lam) > radius:
            status = Status.HULL_VIOLATION
            break

    z = 1.0 + z_psi @ lam
    if status is Status.CONVERGED and np.any(z < a):
        # the pseudo-log maximizer lies outside the log domain: no EL weights exist
        status = Status.HULL_VIOLATION

    lam_orig = linalg.solve_triangular(L, lam, lower=True, trans="T")
    if status is Status.HULL_VIOLATION:
        return ELResult(
            lam_orig, math.inf, math.inf, d, 0.0, np.full(n, np.nan), status, it, gnorm
        )
    ell = float(np.sum(np.log(z)))
    wilks = 2.0 * ell
    return ELResult(
        lam_orig,
        ell,
        wilks,
        d,
        chi2_sf(max(wilks, 0.0), d),
        1.0 / (n * z),
        status,
        it,
        gnorm,
    )


# --- regularized incomplete gamma --------------------------------------------

_EPS = 1e-16
_TINY = 1e-300


def _gser(a, x):
    # series for P(a, x), valid for x < a + 1
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gcf(a, x):
    # modified Lentz continued fraction for Q(a, x), valid for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    dd = 1.0 / b
    frac = dd
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        dd = an * dd + b
        if abs(dd) < _TINY:
            dd = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        dd = 1.0 / dd
        delta = dd * c
        frac *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * frac


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x)``."""
    if a <= 0:
        raise DomainError("shape must be positive")
    if x < 0:
        raise DomainError("x must be nonnegative")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return _gser(a, x)
    return 1.0 - _gcf(a, x)


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    if a <= 0:
        raise DomainError("shape must be positive")
    if x < 0:
        raise DomainError("x must be nonnegative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _gser(a, x)
    return _gcf(a, x)


def chi2_sf(x: float, df: int) -> float:
    """Chi-square survival function ``P(chi2_df > x)``."""
    if df < 1:
        raise DomainError("df must be at least 1")
    if x < 0 or math.isnan(x):
        raise DomainError(f"chi-square statistic must be nonnegative, got {x}")
    return gammainc_upper(0.5 * df, 0.5 * x)


@dataclass(frozen=True)
class OracleNuisance:
    """Independent training path plus the analytic index density."""

    train: object
    density: object


def wilks_test(series, theta0, spec, cfg=None, eta_source=None) -> ELResult:
    """EL ratio test of the simple hypothesis ``theta = theta0``.

    ``eta_source`` selects the nuisance vector: ``None`` (kernel estimates on
    the full sample), an :class:`~plsimel.kernel.EtaProfile` already aligned
    with ``series``, or an :class:`OracleNuisance`.
    """
    series.check(spec)
    theta0.check(spec)
    if eta_source is None:
        eta = estimate_eta(series, theta0, spec, cfg, leave_one_out=False)
    elif isinstance(eta_source, EtaProfile):
        eta = eta_source
    elif isinstance(eta_source, OracleNuisance):
        eta = oracle_eta(series, theta0, spec, eta_source.train, eta_source.density, cfg)
    else:
        raise DomainError(f"unknown nuisance source {eta_source!r}")
    return solve_lambda(build_psi(series, theta0, eta, spec))

"""Gaussian-kernel Nadaraya-Watson estimators of the nuisance vector.

For an index ``t = W' gamma2`` the five nuisance functions are

* ``eta_f``  -- density of the index,
* ``eta_m``  -- ``E[Y - l(X) | t] * f(t)``,
* ``eta_m_prime`` -- ``f(t)**2 * d/dt E[Y - l(X) | t]``,
* ``eta_X``  -- ``E[grad l(X) | t] * f(t)``,
* ``eta_W``  -- ``E[W | t] * f(t)``.

Kernel sums are evaluated by direct double loops (no binning, trees or FFT).
Terms whose kernel weight underflows to exactly zero are skipped after
sorting, which does not change any sum.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .core import ModelSpec, Series, Theta, materialize_gamma2
from .errors import ConfigError, DegeneratePointError, DomainError

__all__ = [
    "kernel_eval",
    "kernel_deriv",
    "BandwidthRule",
    "KernelConfig",
    "EtaSource",
    "EtaProfile",
    "estimate_eta",
    "eta_at",
    "conditional_at",
    "oracle_eta",
    "gaussian_density",
]

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# exp(-u**2 / 2) is exactly 0.0 in double precision beyond this
_CUTOFF = 38.7


def kernel_eval(u):
    """Gaussian kernel ``(2 pi)^(-1/2) exp(-u^2 / 2)``."""
    u = np.asarray(u, dtype=float)
    return INV_SQRT_2PI * np.exp(-0.5 * u * u)


def kernel_deriv(u):
    """Derivative of the Gaussian kernel, ``-u K(u)``."""
    u = np.asarray(u, dtype=float)
    return -u * kernel_eval(u)


@numba.njit(cache=True)
def _self_sums(t, h, VT, PT, include_self):
    # ST[:, i] = sum_j exp(-u_ij^2/2) VT[:, j]
    # DT[:, i] = sum_j -u_ij exp(-u_ij^2/2) PT[:, j]
    # with u_ij = (t[j] - t[i]) / h.  t sorted ascending; columns are observations.
    q, n = VT.shape
    p = PT.shape[0]
    ST = np.zeros((q, n))
    DT = np.zeros((p, n))
    kb = np.empty(n)
    ub = np.empty(n)
    for i in range(n):
        if include_self:
            for c in range(q):
                ST[c, i] += VT[c, i]
        ti = t[i]
        end = n
        for j in range(i + 1, n):
            u = (t[j] - ti) / h
            if u > _CUTOFF:
                end = j
                break
            k = math.exp(-0.5 * u * u)
            kb[j] = k
            ub[j] = u * k
        # pair (i, j) contributes to both rows; K' is odd so the sign flips
        for c in range(q):
            acc = 0.0
            vi = VT[c, i]
            for j in range(i + 1, end):
                acc += kb[j] * VT[c, j]
                ST[c, j] += kb[j] * vi
            ST[c, i] += acc
        for c in range(p):
            acc = 0.0
            pi = PT[c, i]
            for j in range(i + 1, end):
                acc -= ub[j] * PT[c, j]
                DT[c, j] += ub[j] * pi
            DT[c, i] += acc
    return ST, DT


@numba.njit(cache=True)
def _cross_sums(t_eval, t_data, h, VT, PT, rescale):
    # same sums with evaluation points distinct from the (sorted) data.
    # With rescale, each point's kernel weights are divided by the weight of
    # its nearest data point and the window widens to match, so ratios of
    # sums stay finite however far the point is from the data.
    m = t_eval.shape[0]
    q, n = VT.shape
    p = PT.shape[0]
    ST = np.zeros((q, m))
    DT = np.zeros((p, m))
    near = np.searchsorted(t_data, t_eval)
    for i in range(m):
        ti = t_eval[i]
        shift = 0.0
        reach = _CUTOFF
        if rescale and n > 0:
            gap = np.inf
            if near[i] < n:
                gap = min(gap, t_data[near[i]] - ti)
            if near[i] > 0:
                gap = min(gap, ti - t_data[near[i] - 1])
            shift = 0.5 * (gap / h) ** 2
            reach = math.sqrt(2.0 * shift + _CUTOFF * _CUTOFF)
        lo = np.searchsorted(t_data, ti - reach * h)
        for j in range(lo, n):
            u = (t_data[j] - ti) / h
            if u > reach:
                break
            k = math.exp(shift - 0.5 * u * u)
            for c in range(q):
                ST[c, i] += k * VT[c, j]
            ku = u * k
            for c in range(p):
                DT[c, i] -= ku * PT[c, j]
    return ST, DT


class BandwidthRule(str, enum.Enum):
    MANUAL = "Manual"
    SCALED_RATE = "ScaledRate"


@dataclass(frozen=True)
class KernelConfig:
    """Kernel and bandwidth choice.

    ``ScaledRate`` uses ``h = n**(-1/5) / C`` with ``C`` the sample standard
    deviation of the index; ``Manual`` uses the given ``h``.
    """

    bandwidth_rule: BandwidthRule = BandwidthRule.SCALED_RATE
    h: float | None = None
    kernel: str = "Gaussian"

    def __post_init__(self):
        object.__setattr__(self, "bandwidth_rule", BandwidthRule(self.bandwidth_rule))
        if self.kernel != "Gaussian":
            raise ConfigError(f"unsupported kernel {self.kernel!r}")
        if self.bandwidth_rule is BandwidthRule.MANUAL:
            if self.h is None or not self.h > 0:
                raise ConfigError(f"bandwidth must be positive, got {self.h}")

    @classmethod
    def manual(cls, h):
        return cls(BandwidthRule.MANUAL, h)

    def bandwidth(self, index) -> float:
        if self.bandwidth_rule is BandwidthRule.MANUAL:
            return float(self.h)
        index = np.asarray(index, dtype=float)
        n = index.size
        sd = float(np.std(index, ddof=1)) if n > 1 else 0.0
        if not sd > 0:
            raise ConfigError("ScaledRate bandwidth needs a non-constant index")
        return n ** (-0.2) / sd


@dataclass(frozen=True)
class EtaSource:
    kind: str  # "Estimated" or "Oracle"
    h: float
    leave_one_out: bool = False


@dataclass(frozen=True)
class EtaProfile:
    """The nuisance vector evaluated at the index points ``t``."""

    t: np.ndarray
    eta_f: np.ndarray
    eta_m: np.ndarray
    eta_m_prime: np.ndarray
    eta_X: np.ndarray
    eta_W: np.ndarray
    source: EtaSource

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def m_hat(self) -> np.ndarray:
        """Profiled link ``eta_m / eta_f``; raises on zero density."""
        zero = np.flatnonzero(self.eta_f <= 0)
        if zero.size:
            raise DegeneratePointError(
                f"zero index density at observation {zero[0]}", index=int(zero[0])
            )
        return self.eta_m / self.eta_f

    def perturbed(self, delta: "EtaProfile") -> "EtaProfile":
        return EtaProfile(
            self.t,
            self.eta_f + delta.eta_f,
            self.eta_m + delta.eta_m,
            self.eta_m_prime + delta.eta_m_prime,
            self.eta_X + delta.eta_X,
            self.eta_W + delta.eta_W,
            self.source,
        )


def _columns(series: Series, theta: Theta, spec: ModelSpec):
    g2 = materialize_gamma2(theta, spec)
    t = series.w @ g2
    resid = series.y - spec.linear.value(series.x, theta.gamma1)
    grad = np.asarray(spec.linear.gradient(series.x, theta.gamma1), dtype=float)
    grad = grad.reshape(series.n, spec.d1)
    V = np.column_stack([np.ones(series.n), resid, grad, series.w])
    P = np.column_stack([np.ones(series.n), resid])
    return t, V, P


def _assemble(S, D, norm, h, d1):
    S = S * (INV_SQRT_2PI / (norm * h))
    D = D * INV_SQRT_2PI
    f = S[:, 0]
    m = S[:, 1]
    # chain rule: d/dt K((t_j - t)/h) = -K'(u) / h
    m_prime = -(f * D[:, 1] - m * D[:, 0]) / (norm * h * h)
    return f, m, m_prime, S[:, 2 : 2 + d1], S[:, 2 + d1 :]


def estimate_eta(
    series: Series,
    theta: Theta,
    spec: ModelSpec,
    cfg: KernelConfig | None = None,
    leave_one_out: bool = False,
) -> EtaProfile:
    """Kernel estimates of the nuisance vector at each observation's index.

    With ``leave_one_out`` the observation's own term is dropped and the
    normalizer becomes ``n - 1``.
    """
    cfg = cfg or KernelConfig()
    n = series.n
    if n < 1:
        raise DomainError("empty series")
    if leave_one_out and n < 2:
        raise DomainError("leave-one-out smoothing needs n >= 2")
    t, V, P = _columns(series, theta, spec)
    h = cfg.bandwidth(t)
    if not h > 0:
        raise ConfigError(f"bandwidth must be positive, got {h}")
    order = np.argsort(t, kind="stable")
    ST, DT = _self_sums(
        t[order], h, np.ascontiguousarray(V[order].T), np.ascontiguousarray(P[order].T),
        not leave_one_out,
    )
    S = np.empty((n, ST.shape[0]))
    D = np.empty((n, DT.shape[0]))
    S[order] = ST.T
    D[order] = DT.T
    norm = n - 1 if leave_one_out else n
    f, m, mp, ex, ew = _assemble(S, D, norm, h, spec.d1)
    return EtaProfile(t, f, m, mp, ex, ew, EtaSource("Estimated", h, leave_one_out))


def _sorted_cross(points, series, theta, spec, h, rescale):
    if not h > 0:
        raise ConfigError(f"bandwidth must be positive, got {h}")
    points = np.asarray(points, dtype=float).reshape(-1)
    t, V, P = _columns(series, theta, spec)
    order = np.argsort(t, kind="stable")
    ST, DT = _cross_sums(
        points, t[order], h, np.ascontiguousarray(V[order].T), np.ascontiguousarray(P[order].T),
        rescale,
    )
    return points, ST.T, DT.T


def eta_at(
    points,
    series: Series,
    theta: Theta,
    spec: ModelSpec,
    h: float,
) -> EtaProfile:
    """Full-sample kernel estimates evaluated at arbitrary index ``points``."""
    points, S, D = _sorted_cross(points, series, theta, spec, h, False)
    f, m, mp, ex, ew = _assemble(S, D, series.n, h, spec.d1)
    return EtaProfile(points, f, m, mp, ex, ew, EtaSource("Estimated", h, False))


def conditional_at(points, series: Series, theta: Theta, spec: ModelSpec, h: float):
    """Nadaraya-Watson conditional means and link slope at index ``points``.

    Returns ``(m, m_prime, E[X|t], E[W|t])`` computed from ratios of kernel
    sums that are rescaled per point, so they stay finite where the density
    estimate itself underflows.  Far from the data they tend to the values
    at the nearest data point.
    """
    points, S, D = _sorted_cross(points, series, theta, spec, h, True)
    s0 = S[:, 0]
    empty = np.flatnonzero(s0 <= 0)
    if empty.size:
        raise DegeneratePointError(
            f"no smoothing mass at point {empty[0]}", index=int(empty[0])
        )
    m = S[:, 1] / s0
    # derivative of the ratio S1/S0 in t; D holds sums against -u K(u)
    m_prime = -(D[:, 1] - m * D[:, 0]) / (s0 * h)
    d1 = spec.d1
    return m, m_prime, S[:, 2 : 2 + d1] / s0[:, None], S[:, 2 + d1 :] / s0[:, None]


def gaussian_density(variance: float) -> Callable[[np.ndarray], np.ndarray]:
    """Centered normal density with the given variance."""
    sd = math.sqrt(variance)
    return lambda t: kernel_eval(np.asarray(t) / sd) / sd


def oracle_eta(
    series: Series,
    theta: Theta,
    spec: ModelSpec,
    train: Series,
    true_index_density: Callable[[np.ndarray], np.ndarray] | None,
    cfg: KernelConfig | None = None,
) -> EtaProfile:
    """Nuisance vector from an independent training path and the true density.

    Conditional means (``m``, ``m'``, ``E[X|t]``, ``E[W|t]``) are learned by
    kernel smoothing on ``train`` and evaluated at the index values of
    ``series``; they are then rescaled by the analytic index density, so that
    ``eta_m = m_hat * f``, ``eta_m_prime = m_hat' * f**2`` and so on.
    """
    if true_index_density is None:
        raise ConfigError("oracle nuisance needs the true index density")
    cfg = cfg or KernelConfig()
    g2 = materialize_gamma2(theta, spec)
    h = cfg.bandwidth(train.w @ g2)
    t = series.w @ g2
    m, m_prime, ex, ew = conditional_at(t, train, theta, spec, h)
    f = np.asarray(true_index_density(t), dtype=float)
    return EtaProfile(
        t,
        f,
        m * f,
        m_prime * f**2,
        ex * f[:, None],
        ew * f[:, None],
        EtaSource("Oracle", h, False),
    )

"""Sample paths for the two simulation designs.

``Design51``
    ``W_i = rho_w W_{i-1} + N(0, S)`` with ``S_kl = 0.5**|k-l|``, and
    ``Y_i = g11 Y_{i-1} + g12 Y_{i-2} + m(W_i' gamma2) + sigma_i zeta_i`` where
    ``sigma_i^2 = b1 + b2 Y_{i-1}^2`` and ``m(u) = 0.75 sin^2(pi u)``.
``DesignSupB2``
    Same ``W``; ``u_i = sqrt(mu_i) zeta_i`` with
    ``mu_i = g11 u_{i-1}^2 + g12 u_{i-2}^2 + 0.25 + 0.75 sin^2(pi W_i' gamma2)``,
    observed only through ``R_i = rho0 R_{i-1} + u_i``.

Random streams: replication ``k`` of master seed ``s`` draws from
``PCG64(SeedSequence(s, spawn_key=(k,)))``.  Streams for different ``k`` are
statistically independent, so replications can run in any order or process.
Draw order inside a path is fixed: stationary ``W_0``, the ``W`` shocks, then
the innovations.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Identification, ModelSpec, Series, Theta, materialize_gamma2
from .errors import ConfigError, DomainError

__all__ = [
    "Preset",
    "Innovation",
    "SimDesign",
    "SimPath",
    "simulate",
    "rng_for",
    "draw_innovations",
    "index_covariance",
    "index_variance",
    "ergodicity_bound",
    "design51_link",
    "supb2_link",
]

log = logging.getLogger(__name__)

_FIX_FIRST_3 = ModelSpec.plsim(2, 3)


class Preset(str, enum.Enum):
    DESIGN51 = "Design51"
    SUPB2 = "DesignSupB2"


class Innovation(str, enum.Enum):
    GAUSSIAN = "Gaussian"
    UNIFORM = "Uniform"
    MIXTURE = "Mixture"


def design51_link(u):
    return 0.75 * np.sin(np.pi * np.asarray(u)) ** 2


def supb2_link(u):
    return 0.25 + design51_link(u)


def index_covariance(d_W: int = 3) -> np.ndarray:
    k = np.arange(d_W)
    return 0.5 ** np.abs(k[:, None] - k[None, :])


def index_variance(gamma2, rho_w: float = 0.25) -> float:
    """Stationary variance of ``W' gamma2`` under the VAR(1) covariate law."""
    g = np.asarray(gamma2, dtype=float)
    return float(g @ index_covariance(g.size) @ g) / (1.0 - rho_w**2)


def ergodicity_bound(theta: Theta, rho_w: float) -> float:
    """Left side of the sufficient geometric-ergodicity condition (< 1 suffices).

    Uses ``E|zeta| <= 1`` for unit-variance innovations.
    """
    g = theta.gamma1
    b2 = theta.beta[1] if theta.beta.size > 1 else 0.0
    lag = abs(g[0]) + (abs(g[1]) if g.size > 1 else 0.0) + math.sqrt(max(b2, 0.0))
    return max(lag, abs(rho_w))


def _default_theta(preset):
    if Preset(preset) is Preset.DESIGN51:
        return Theta([0.1, 0.0], [1.0, 1.0], [0.9, 0.1])
    return Theta([0.1, 0.0], [1.0, 1.0])


@dataclass(frozen=True)
class SimDesign:
    """Simulation settings.  ``theta_true`` uses the FixFirst convention."""

    preset: Preset = Preset.DESIGN51
    n: int = 2000
    burn_in: int = 500
    innovation: Innovation = Innovation.GAUSSIAN
    theta_true: Theta | None = None
    rho_w: float = 0.25
    rho0: float = 0.1
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        object.__setattr__(self, "preset", Preset(self.preset))
        object.__setattr__(self, "innovation", Innovation(self.innovation))
        if self.theta_true is None:
            object.__setattr__(self, "theta_true", _default_theta(self.preset))
        if self.n < 10:
            raise ConfigError("n must be at least 10")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be nonnegative")
        if not abs(self.rho_w) < 1:
            raise ConfigError("covariate VAR coefficient must be below 1 in modulus")
        if self.theta_true.gamma1.size != 2 or self.theta_true.gamma2_free.size != 2:
            raise ConfigError("presets use two lags and a three-dimensional index")
        if self.preset is Preset.DESIGN51 and self.theta_true.beta.size != 2:
            raise ConfigError("Design51 needs beta = (b1, b2)")
        if ergodicity_bound(self.theta_true, self.rho_w) >= 1:
            log.warning("parameters do not meet the sufficient ergodicity condition")

    @property
    def gamma2(self) -> np.ndarray:
        return materialize_gamma2(self.theta_true, _FIX_FIRST_3)

    def with_(self, **kw) -> "SimDesign":
        fields = {
            k: getattr(self, k)
            for k in ("preset", "n", "burn_in", "innovation", "theta_true",
                      "rho_w", "rho0", "seed", "stream")
        }
        fields.update(kw)
        return SimDesign(**fields)


@dataclass(frozen=True)
class SimPath:
    """Simulated series plus the hidden quantities used to generate it."""

    series: Series
    eps: np.ndarray
    sigma2: np.ndarray
    design: SimDesign
    u: np.ndarray | None = None
    r: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def draw_innovations(rng: np.random.Generator, kind, size: int) -> np.ndarray:
    """Zero-mean, unit-variance innovations of the requested law."""
    kind = Innovation(kind)
    if kind is Innovation.GAUSSIAN:
        return rng.standard_normal(size)
    if kind is Innovation.UNIFORM:
        s = math.sqrt(3.0)
        return rng.uniform(-s, s, size)
    # 0.5 N(-1/sqrt6, 1/6) + 0.5 N(1/sqrt6, 3/2)
    first = rng.random(size) < 0.5
    z = rng.standard_normal(size)
    m = 1.0 / math.sqrt(6.0)
    return np.where(first, -m + math.sqrt(1.0 / 6.0) * z, m + math.sqrt(1.5) * z)


def _covariates(rng, total, rho, d_W=3):
    S = index_covariance(d_W)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("covariate covariance is not positive definite") from exc
    w_prev = (L @ rng.standard_normal(d_W)) / math.sqrt(1.0 - rho**2)
    shocks = rng.standard_normal((total, d_W)) @ L.T
    W = np.empty((total, d_W))
    for i in range(total):
        w_prev = rho * w_prev + shocks[i]
        W[i] = w_prev
    return W


def simulate(design: SimDesign) -> SimPath:
    rng = rng_for(design.seed, design.stream)
    n, burn = design.n, design.burn_in
    total = n + burn
    W = _covariates(rng, total, design.rho_w)
    zeta = draw_innovations(rng, design.innovation, total)
    g11, g12 = design.theta_true.gamma1
    index = W @ design.gamma2

    if design.preset is Preset.DESIGN51:
        b1, b2 = design.theta_true.beta
        mean_nl = design51_link(index)
        # two zero pre-sample values feed the first lags
        Y = np.zeros(total + 2)
        s2 = np.empty(total)
        for i in range(total):
            y1, y2 = Y[i + 1], Y[i]
            s2[i] = b1 + b2 * y1 * y1
            Y[i + 2] = g11 * y1 + g12 * y2 + mean_nl[i] + math.sqrt(s2[i]) * zeta[i]
        keep = slice(burn, total)
        y = Y[2:][keep]
        x = np.column_stack([Y[1:-1][keep], Y[:-2][keep]])
        eps = np.sqrt(s2[keep]) * zeta[keep]
        series = Series(y, x, W[keep])
        return SimPath(series, eps, s2[keep], design)

    mean_nl = supb2_link(index)
    U2 = np.zeros(total + 2)
    u = np.empty(total)
    mu = np.empty(total)
    R = np.empty(total)
    r_prev = 0.0
    for i in range(total):
        mu[i] = g11 * U2[i + 1] + g12 * U2[i] + mean_nl[i]
        if mu[i] <= 0:
            raise DomainError(f"non-positive conditional variance at step {i}")
        u[i] = math.sqrt(mu[i]) * zeta[i]
        U2[i + 2] = u[i] * u[i]
        r_prev = design.rho0 * r_prev + u[i]
        R[i] = r_prev
    keep = slice(burn, total)
    y = U2[2:][keep]
    x = np.column_stack([U2[1:-1][keep], U2[:-2][keep]])
    eps = y - mu[keep]
    series = Series(y, x, W[keep])
    return SimPath(series, eps, mu[keep], design, u=u[keep], r=R[keep])

"""Model descriptions, parameter bundles and identification reparametrizations.

Jacobian orientation
--------------------
``jacobian_gamma2`` and ``full_jacobian`` return the ``d x (d - 1)`` matrix
``d gamma / d gamma_free``.  Gradients with respect to the full parameter are
column vectors, so the reduced gradient is ``J.T @ grad``.  Everything
downstream uses this orientation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import ConfigError, DataError, DomainError, SingularityError

__all__ = [
    "Family",
    "Identification",
    "ModelSpec",
    "Theta",
    "Series",
    "LINEAR_FORMS",
    "VARIANCE_FORMS",
    "materialize_gamma2",
    "jacobian_gamma2",
    "full_jacobian",
]


class Family(str, enum.Enum):
    PLSIM = "PLSIM"
    CHPLSIM = "CHPLSIM"


class Identification(str, enum.Enum):
    FIX_FIRST = "FixFirst"
    UNIT_NORM = "UnitNorm"


@dataclass(frozen=True)
class LinearForm:
    """Parametric part ``l(X; gamma1)`` and its gradient in ``gamma1``."""

    name: str
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class VarianceForm:
    """Conditional variance ``beta_1 + beta_2 * z`` where ``z`` depends on
    the lagged response only.  ``regressor`` maps ``Y_{i-1}`` to ``z``."""

    name: str
    lags: int
    n_params: int
    regressor: Callable[[np.ndarray], np.ndarray]

    def design(self, y_lag):
        z = self.regressor(np.asarray(y_lag, dtype=float))
        return np.column_stack([np.ones_like(z), z])

    def value(self, y_lag, beta):
        return self.design(y_lag) @ np.asarray(beta, dtype=float)


LINEAR_FORMS = {
    "Linear": LinearForm(
        "Linear",
        value=lambda x, g1: x @ g1,
        gradient=lambda x, g1: x,
    ),
}

VARIANCE_FORMS = {
    "ArchLag1": VarianceForm("ArchLag1", 1, 2, lambda y1: y1**2),
    "LogSquare": VarianceForm(
        "LogSquare", 1, 2, lambda y1: np.log(np.maximum(y1**2, 1.0))
    ),
}


def _vec(a) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of a PLSIM or CHPLSIM instance."""

    family: Family
    d_X: int
    d_W: int
    d_beta: int = 0
    r: int = 0
    identification: Identification = Identification.FIX_FIRST
    linear_form: str = "Linear"
    variance_form: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(
            self, "identification", Identification(self.identification)
        )
        if self.linear_form not in LINEAR_FORMS:
            raise ConfigError(f"unknown linear form {self.linear_form!r}")
        if self.d_X < 0:
            raise ConfigError("d_X must be nonnegative")
        if self.d_W < 2:
            raise ConfigError("d_W must be at least 2")
        if self.r < 0:
            raise ConfigError("lag depth r must be nonnegative")
        if self.family is Family.PLSIM:
            if self.d_beta != 0 or self.variance_form is not None:
                raise ConfigError("PLSIM takes no variance part")
        else:
            if self.variance_form not in VARIANCE_FORMS:
                raise ConfigError(
                    f"CHPLSIM needs a variance form, one of {sorted(VARIANCE_FORMS)}"
                )
            vf = VARIANCE_FORMS[self.variance_form]
            if self.d_beta != vf.n_params:
                raise ConfigError(
                    f"{vf.name} has {vf.n_params} parameters, got d_beta={self.d_beta}"
                )
            if self.r < vf.lags:
                raise ConfigError(f"{vf.name} needs r >= {vf.lags}")

    @property
    def d1(self) -> int:
        # only the built-in Linear form exists, for which d1 = d_X
        return self.d_X

    @property
    def d_gamma(self) -> int:
        return self.d1 + self.d_W

    @property
    def moment_dim(self) -> int:
        return self.d1 + self.d_W - 1 + self.d_beta

    @property
    def linear(self) -> LinearForm:
        return LINEAR_FORMS[self.linear_form]

    @property
    def variance(self) -> VarianceForm | None:
        if self.variance_form is None:
            return None
        return VARIANCE_FORMS[self.variance_form]

    @classmethod
    def plsim(cls, d_X, d_W, identification=Identification.FIX_FIRST):
        return cls(Family.PLSIM, d_X, d_W, identification=identification)

    @classmethod
    def chplsim(
        cls, d_X, d_W, variance_form="ArchLag1", identification=Identification.FIX_FIRST
    ):
        vf = VARIANCE_FORMS[variance_form]
        return cls(
            Family.CHPLSIM,
            d_X,
            d_W,
            d_beta=vf.n_params,
            r=vf.lags,
            identification=identification,
            variance_form=variance_form,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family.value,
            "d_X": self.d_X,
            "d_W": self.d_W,
            "d_beta": self.d_beta,
            "r": self.r,
            "identification": self.identification.value,
            "linear_form": self.linear_form,
            "variance_form": self.variance_form,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelSpec":
        keys = {
            "family",
            "d_X",
            "d_W",
            "d_beta",
            "r",
            "identification",
            "linear_form",
            "variance_form",
        }
        unknown = set(d) - keys
        if unknown:
            raise ConfigError(f"unknown ModelSpec keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid ModelSpec: {exc}") from exc


@dataclass(frozen=True)
class Theta:
    """Finite-dimensional parameters ``(gamma1, gamma2_free, beta)``."""

    gamma1: np.ndarray
    gamma2_free: np.ndarray
    beta: np.ndarray = field(default_factory=lambda: _vec([]))

    def __post_init__(self):
        for name in ("gamma1", "gamma2_free", "beta"):
            object.__setattr__(self, name, _vec(getattr(self, name)))

    def check(self, spec: ModelSpec) -> None:
        if self.gamma1.size != spec.d1:
            raise ConfigError(f"gamma1 has length {self.gamma1.size}, expected {spec.d1}")
        if self.gamma2_free.size != spec.d_W - 1:
            raise ConfigError(
                f"gamma2_free has length {self.gamma2_free.size}, expected {spec.d_W - 1}"
            )
        if self.beta.size != spec.d_beta:
            raise ConfigError(f"beta has length {self.beta.size}, expected {spec.d_beta}")

    def free_vector(self) -> np.ndarray:
        """Stack ``(gamma1, gamma2_free)``, the coordinates an optimizer moves."""
        return np.concatenate([self.gamma1, self.gamma2_free])

    def with_free_vector(self, v) -> "Theta":
        v = np.asarray(v, dtype=float)
        k = self.gamma1.size
        return Theta(v[:k], v[k:], self.beta)

    def to_dict(self) -> dict[str, list[float]]:
        return {
            "gamma1": self.gamma1.tolist(),
            "gamma2_free": self.gamma2_free.tolist(),
            "beta": self.beta.tolist(),
        }

    @classmethod
    def from_gamma2(cls, gamma1, gamma2, beta=(), identification=Identification.FIX_FIRST):
        """Build from a full ``gamma2``, rescaling it to the identified form."""
        g2 = np.asarray(gamma2, dtype=float)
        if Identification(identification) is Identification.FIX_FIRST:
            if g2[0] == 0:
                raise DomainError("first gamma2 component is zero; cannot fix it to 1")
            return cls(gamma1, g2[1:] / g2[0], beta)
        nrm = np.linalg.norm(g2)
        if nrm == 0:
            raise DomainError("gamma2 is the zero vector")
        g2 = g2 / nrm
        if g2[0] < 0:
            g2 = -g2
        return cls(gamma1, g2[1:], beta)


@dataclass(frozen=True)
class Series:
    """Observed sample: response ``y``, linear covariates ``x``, index covariates ``w``."""

    y: np.ndarray
    x: np.ndarray
    w: np.ndarray
    index: np.ndarray | None = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float).reshape(-1)
        n = y.size
        x = np.array(self.x, dtype=float)
        w = np.array(self.w, dtype=float)
        if x.ndim == 1:
            x = x.reshape(n, -1) if n else x.reshape(0, 0)
        if w.ndim == 1:
            w = w.reshape(n, -1) if n else w.reshape(0, 0)
        if x.shape[0] != n or w.shape[0] != n:
            raise DataError(
                f"row counts differ: y={n}, x={x.shape[0]}, w={w.shape[0]}"
            )
        for name, arr in (("y", y), ("x", x), ("w", w)):
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(arr))[0]
                raise DataError(f"non-finite entry in {name} at {tuple(int(b) for b in bad)}")
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)
        if self.index is not None:
            idx = np.asarray(self.index)
            if idx.shape[0] != n:
                raise DataError("index length differs from y")
            object.__setattr__(self, "index", idx)

    @property
    def n(self) -> int:
        return self.y.size

    def check(self, spec: ModelSpec) -> None:
        if self.x.shape[1] != spec.d_X:
            raise DataError(f"x has {self.x.shape[1]} columns, model expects {spec.d_X}")
        if self.w.shape[1] != spec.d_W:
            raise DataError(f"w has {self.w.shape[1]} columns, model expects {spec.d_W}")

    def slice(self, start=None, stop=None) -> "Series":
        s = np.s_[start:stop]
        idx = None if self.index is None else self.index[s]
        return Series(self.y[s], self.x[s], self.w[s], idx)


def materialize_gamma2(theta: Theta, spec: ModelSpec) -> np.ndarray:
    """Full index direction ``gamma2`` (length ``d_W``) from its free part."""
    g = theta.gamma2_free
    if spec.identification is Identification.FIX_FIRST:
        return np.concatenate([[1.0], g])
    sq = float(g @ g)
    if sq > 1.0:
        raise DomainError(f"UnitNorm needs |gamma2_free| <= 1, got {math.sqrt(sq):.6g}")
    return np.concatenate([[math.sqrt(1.0 - sq)], g])


def jacobian_gamma2(theta: Theta, spec: ModelSpec) -> np.ndarray:
    """``d gamma2 / d gamma2_free`` as a ``d_W x (d_W - 1)`` matrix."""
    g = theta.gamma2_free
    k = spec.d_W - 1
    top = np.zeros((1, k))
    if spec.identification is Identification.UNIT_NORM:
        sq = float(g @ g)
        if sq >= 1.0:
            raise SingularityError("UnitNorm Jacobian is singular on the unit sphere")
        top[0] = -g / math.sqrt(1.0 - sq)
    return np.vstack([top, np.eye(k)])


def full_jacobian(theta: Theta, spec: ModelSpec) -> np.ndarray:
    """Block-diagonal ``diag(I_{d1}, J2)`` of shape ``(d1 + d_W) x (d1 + d_W - 1)``."""
    d1 = spec.d1
    J2 = jacobian_gamma2(theta, spec)
    J = np.zeros((d1 + spec.d_W, d1 + spec.d_W - 1))
    J[:d1, :d1] = np.eye(d1)
    J[d1:, d1:] = J2
    return J

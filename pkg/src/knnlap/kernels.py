"""Kernel profiles ``k0``, bandwidth symmetrizations ``phi`` and their moments.

A kNN affinity evaluates ``k0(|x_i - x_j|^2 / (eps * phi(rho_i, rho_j)^2))``.
Two profile families are supported:

* :class:`Exponential` -- ``(4 pi)^(-d/2) exp(-eta/4)`` (normalized, with
  ``m0 = 1`` and ``m2 = 2`` in every dimension) or the bare ``exp(-eta/4)``.
* :class:`Indicator` -- ``1[0 <= eta <= s]`` for a support end ``s``.

Both serialize to short tokens (``"exp"``, ``"ind:3"``, ...) that appear in
config files and CSV columns; see :func:`parse_kernel` and
:func:`parse_phi`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError

# exp(-x) underflows to subnormals past ~708; arguments past the clamp and
# values below 1e-300 are returned as exact zeros
_MAX_EXPONENT = 690.0
_TINY = 1e-300


class RateClass(enum.Enum):
    """Point-wise convergence regime of a ``(k0, phi)`` pair."""

    FAST = "fast"
    SLOW_I = "slow-I"
    SLOW_II = "slow-II"
    SLOW_III = "slow-III"

    @property
    def is_fast(self) -> bool:
        return self is RateClass.FAST


def unit_ball_volume(d: int) -> float:
    """Volume ``alpha_d = pi^(d/2) / Gamma(d/2 + 1)`` of the unit ball in R^d."""
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class KernelMoments:
    """Moments ``m0 = int k0(|u|^2) du`` and ``m2 = (1/d) int |u|^2 k0(|u|^2) du``."""

    m0: float
    m2: float
    d: int

    def __post_init__(self):
        if not (self.m0 > 0 and self.m2 > 0):
            raise DomainError("kernel moments must be positive")

    @property
    def ratio(self) -> float:
        """The random-walk normalization ``m2 / (2 m0)``."""
        return self.m2 / (2.0 * self.m0)


class KernelSpec:
    """Base class of kernel profiles. Subclasses are frozen dataclasses."""

    smooth: bool = False

    def evaluate(self, eta, d: int = 1):
        raise NotImplementedError

    def evaluate_bare(self, eta):
        """Profile without any dimension-dependent normalization constant."""
        raise NotImplementedError

    def moments(self, d: int) -> KernelMoments:
        raise NotImplementedError

    def moments_bare(self, d: int) -> KernelMoments:
        raise NotImplementedError

    @property
    def token(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.token


@dataclass(frozen=True)
class Exponential(KernelSpec):
    """``k0(eta) = c_d exp(-eta / 4)``; ``c_d = (4 pi)^(-d/2)`` when normalized."""

    normalized: bool = True
    smooth = True

    def evaluate(self, eta, d: int = 1):
        out = self.evaluate_bare(eta)
        if self.normalized:
            out = out * (4.0 * math.pi) ** (-d / 2)
            out = np.where(out < _TINY, 0.0, out)
        return out if np.ndim(out) else float(out)

    def evaluate_bare(self, eta):
        eta = np.asarray(eta, dtype=float)
        _check_eta(eta)
        x = eta * 0.25
        out = np.where(x >= _MAX_EXPONENT, 0.0, np.exp(-np.minimum(x, _MAX_EXPONENT)))
        return out if out.ndim else float(out)

    def moments(self, d: int) -> KernelMoments:
        if self.normalized:
            return KernelMoments(1.0, 2.0, d)
        return self.moments_bare(d)

    def moments_bare(self, d: int) -> KernelMoments:
        c = (4.0 * math.pi) ** (d / 2)
        return KernelMoments(c, 2.0 * c, d)

    @property
    def token(self) -> str:
        return "exp"


@dataclass(frozen=True)
class Indicator(KernelSpec):
    """``k0(eta) = 1`` on ``[0, support_end]`` and 0 elsewhere."""

    support_end: float = 1.0

    def __post_init__(self):
        if not self.support_end > 0:
            raise DomainError("indicator support end must be positive")

    def evaluate(self, eta, d: int = 1):
        return self.evaluate_bare(eta)

    def evaluate_bare(self, eta):
        eta = np.asarray(eta, dtype=float)
        _check_eta(eta)
        out = (eta <= self.support_end).astype(float)
        return out if out.ndim else float(out)

    def moments(self, d: int) -> KernelMoments:
        return self.moments_bare(d)

    def moments_bare(self, d: int) -> KernelMoments:
        a = unit_ball_volume(d)
        s = self.support_end
        return KernelMoments(a * s ** (d / 2), a * s ** ((d + 2) / 2) / (d + 2), d)

    @property
    def token(self) -> str:
        return f"ind:{self.support_end:g}"


def _check_eta(eta: np.ndarray) -> None:
    if np.any(eta < 0) or np.any(np.isnan(eta)):
        raise DomainError("kernel argument eta must be non-negative")


class PhiRule(enum.Enum):
    """Symmetric, 1-homogeneous rule combining two bandwidths into one."""

    MIN = "min"
    MAX = "max"
    GEOMETRIC_MEAN = "geo"
    ARITHMETIC_MEAN = "mean"
    SQUARE_MEAN = "sqmean"

    @property
    def smooth(self) -> bool:
        return self not in (PhiRule.MIN, PhiRule.MAX)

    @property
    def token(self) -> str:
        return self.value

    @property
    def constants(self) -> dict:
        """Documented regularity constants (not used by any computation)."""
        if self.smooth:
            return {"L_phi": 1.2, "delta_phi": 0.1, "c_min": 1.0, "c_max": 1.0}
        return {"L_phi": 1.0, "delta_phi": 1.0, "c_min": 1.0, "c_max": 1.0}

    def __call__(self, u, v):
        """Vectorized evaluation without domain checks."""
        if self is PhiRule.MIN:
            return np.minimum(u, v)
        if self is PhiRule.MAX:
            return np.maximum(u, v)
        if self is PhiRule.GEOMETRIC_MEAN:
            return np.sqrt(u * v)
        if self is PhiRule.ARITHMETIC_MEAN:
            return (u + v) * 0.5
        return np.sqrt((u * u + v * v) * 0.5)

    def __str__(self):
        return self.value


def eval_k0(spec: KernelSpec, d: int, eta):
    """Evaluate the kernel profile at ``eta >= 0`` in intrinsic dimension ``d``."""
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    return spec.evaluate(eta, d)


def k0_moments(spec: KernelSpec, d: int) -> KernelMoments:
    """Closed-form moments of ``spec`` in dimension ``d``."""
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    return spec.moments(d)


def eval_phi(rule: PhiRule, u, v):
    """Evaluate ``phi(u, v)`` for positive ``u`` and ``v``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(~(u > 0)) or np.any(~(v > 0)):
        raise DomainError("phi requires strictly positive arguments")
    out = rule(u, v)
    return float(out) if np.ndim(out) == 0 else out


def classify_rate(spec: KernelSpec, rule: PhiRule) -> RateClass:
    """Fast/slow regime of a kernel pair."""
    if spec.smooth:
        return RateClass.FAST if rule.smooth else RateClass.SLOW_I
    return RateClass.SLOW_II if rule.smooth else RateClass.SLOW_III


def parse_kernel(token: str) -> KernelSpec:
    """Parse ``"exp"``, ``"exp:bare"`` or ``"ind:<support_end>"``."""
    token = token.strip().lower()
    if token == "exp":
        return Exponential(normalized=True)
    if token == "exp:bare":
        return Exponential(normalized=False)
    if token.startswith("ind"):
        _, _, end = token.partition(":")
        try:
            return Indicator(float(end) if end else 1.0)
        except ValueError:
            raise FormatError(f"bad indicator kernel token {token!r}") from None
    raise FormatError(f"unknown kernel token {token!r}")


def parse_phi(token: str) -> PhiRule:
    try:
        return PhiRule(token.strip().lower())
    except ValueError:
        raise FormatError(f"unknown phi token {token!r}") from None

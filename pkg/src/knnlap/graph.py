"""Adaptive-bandwidth affinities and graph Laplacians.

Two parameterizations are supported:

* :class:`Theoretical` ``(eps)`` uses the rescaled bandwidth ``rho_hat`` and
  the ``eps^(-d/2)``-normalized kernel;
* :class:`Practical` ``(sigma0)`` uses the raw kNN radius ``r_hat`` and the
  bare kernel, so the intrinsic dimension never enters the weights.

With ``eps = sigma0^2 r_k`` and a 1-homogeneous ``phi`` the two affinities
differ by the constant ``(4 pi eps)^(-d/2)`` (exponential kernel), and the
random-walk Laplacians coincide.

Every Laplacian is returned with the sign convention ``L f ~ +Delta f``,
i.e. ``L = -(scaling) (D - W)``, so it is negative semi-definite.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _backend
from ._core_py import PHI_CODES
from .errors import (
    DegenerateBandwidthError,
    DomainError,
    EmptyNeighborhoodError,
    IsolatedVertexError,
    ParameterError,
)
from .kernels import Exponential, Indicator, KernelMoments, KernelSpec, PhiRule
from .knn import BandwidthProfile, PointCloud


@dataclass(frozen=True)
class Theoretical:
    """Kernel scale ``eps`` applied to the rescaled bandwidth ``rho_hat``."""

    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps}")


@dataclass(frozen=True)
class Practical:
    """Kernel scale ``sigma0`` applied to the raw kNN radius ``r_hat``."""

    sigma0: float

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise DomainError(f"sigma0 must be positive, got {self.sigma0}")

    @classmethod
    def from_sigma0_sq(cls, sigma0_sq: float) -> "Practical":
        return cls(float(np.sqrt(sigma0_sq)))

    @property
    def sigma0_sq(self) -> float:
        return self.sigma0 * self.sigma0


class LaplacianKind(enum.Enum):
    """Plain (``UN``, ``RW``) or ``phi^2``-normalized (``*_TILDE``) Laplacians."""

    UN = "un"
    RW = "rw"
    UN_TILDE = "un-tilde"
    RW_TILDE = "rw-tilde"

    @property
    def normalized(self) -> bool:
        return self in (LaplacianKind.UN_TILDE, LaplacianKind.RW_TILDE)

    @property
    def random_walk(self) -> bool:
        return self in (LaplacianKind.RW, LaplacianKind.RW_TILDE)


@dataclass(frozen=True, eq=False)
class AffinityMatrix:
    """Dense symmetric affinity together with the choices that produced it."""

    values: np.ndarray
    param: Theoretical | Practical
    normalized: bool
    kernel: KernelSpec
    phi: PhiRule
    d: int

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, fmt="%.17g", delimiter=",")


def _kernel_code(kernel: KernelSpec):
    if isinstance(kernel, Exponential):
        return 0, 0.0
    if isinstance(kernel, Indicator):
        return 1, float(kernel.support_end)
    raise ParameterError(f"unsupported kernel {kernel!r}")


def _weight_setup(param, profile: BandwidthProfile, kernel: KernelSpec):
    """Bandwidth vector, distance scale, prefactor and normalization scale."""
    d = profile.d
    if isinstance(param, Theoretical):
        norm = kernel.evaluate(0.0, d) / kernel.evaluate_bare(0.0)
        return profile.rho_hat, param.eps, param.eps ** (-d / 2) * norm, 1.0
    if isinstance(param, Practical):
        s2 = param.sigma0_sq
        return profile.r_hat, s2, 1.0, s2
    raise ParameterError(f"unknown parameterization {param!r}")


def _check_bandwidth(bw):
    if np.any(~(np.asarray(bw) > 0)):
        raise DegenerateBandwidthError(
            "zero kNN bandwidth (duplicate points with small k); increase k or deduplicate"
        )


def affinity(
    cloud: PointCloud,
    profile: BandwidthProfile,
    kernel: KernelSpec,
    phi: PhiRule,
    param: Theoretical | Practical,
    normalized: bool = False,
    drop_below: float | None = None,
) -> AffinityMatrix:
    """Dense kNN-adaptive affinity matrix.

    Parameters
    ----------
    cloud : PointCloud
    profile : BandwidthProfile
        Bandwidths of ``cloud`` (``rho_hat`` or ``r_hat`` depending on ``param``).
    kernel, phi
        Kernel profile and bandwidth symmetrization.
    param : Theoretical or Practical
    normalized : bool
        Divide entry ``(i, j)`` by ``phi^2`` (theoretical) or
        ``sigma0^2 phi^2`` (practical).
    drop_below : float, optional
        Zero out entries smaller than this threshold.

    Returns
    -------
    AffinityMatrix
    """
    if profile.n != cloud.n:
        raise ParameterError("profile and cloud sizes differ")
    bw, scale, pref, norm_scale = _weight_setup(param, profile, kernel)
    _check_bandwidth(bw)
    code, support = _kernel_code(kernel)
    W = _backend.core.dense_affinity(
        cloud.points, np.ascontiguousarray(bw, dtype=float), code, support,
        PHI_CODES[phi.value], scale, pref, norm_scale, bool(normalized),
        _backend.get_threads(),
    )
    if drop_below is not None:
        W[W < drop_below] = 0.0
    return AffinityMatrix(W, param, bool(normalized), kernel, phi, profile.d)


def degree(W: AffinityMatrix | np.ndarray) -> np.ndarray:
    """Row sums of ``W``; raises on an isolated (zero-degree) vertex."""
    values = W.values if isinstance(W, AffinityMatrix) else np.asarray(W, dtype=float)
    deg = values.sum(axis=1)
    bad = np.flatnonzero(~(deg > 0))
    if bad.size:
        raise IsolatedVertexError(f"{bad.size} isolated vertices, first at index {bad[0]}")
    return deg


def _moments(kernel, d, moments):
    return moments if moments is not None else kernel.moments(d)


def laplacian_matrix(
    kind: LaplacianKind,
    W: AffinityMatrix,
    profile: BandwidthProfile,
    moments: KernelMoments | None = None,
) -> np.ndarray:
    """Dense graph Laplacian of the requested kind.

    Random-walk kinds divide by the moment ratio ``m2 / (2 m0)`` (1 for the
    exponential kernel). Unnormalized kinds use the dimension-free rescaled
    form for :class:`Practical` affinities and the ``eps``-scaled form for
    :class:`Theoretical` ones.
    """
    if kind.normalized != W.normalized:
        raise ParameterError(f"{kind.value} Laplacian requires normalized={kind.normalized} affinity")
    mom = _moments(W.kernel, W.d, moments)
    values = W.values
    n = W.n
    deg = degree(values)
    if isinstance(W.param, Practical):
        h = W.param.sigma0_sq * profile.r_hat ** 2
    else:
        h = W.param.eps * profile.rho_hat ** 2
    if kind.random_walk:
        P = values / deg[:, None]
        P[np.diag_indices(n)] -= 1.0
        return P / (mom.ratio * h)[:, None]
    A = values.copy()
    A[np.diag_indices(n)] -= deg
    if isinstance(W.param, Practical):
        row = 1.0 / (n * h) if kind is LaplacianKind.UN else np.full(n, 1.0 / n)
    else:
        c = 1.0 / (0.5 * mom.m2 * n * W.param.eps)
        row = c / profile.rho_hat ** 2 if kind is LaplacianKind.UN else np.full(n, c)
    return A * row[:, None]


def laplacian_apply_at(
    kind: LaplacianKind,
    x0,
    f0: float,
    cloud: PointCloud,
    f_values,
    profile: BandwidthProfile,
    r_hat0: float,
    kernel: KernelSpec,
    phi: PhiRule,
    param: Theoretical | Practical,
    moments: KernelMoments | None = None,
) -> float:
    """Evaluate the Laplacian of ``f`` at an out-of-sample point ``x0``.

    Parameters
    ----------
    x0 : array_like, shape (m,)
        Evaluation point (not a member of ``cloud``).
    f0 : float
        ``f(x0)``.
    f_values : array_like, shape (N,)
        ``f`` at the cloud points.
    r_hat0 : float
        kNN radius of ``x0`` against ``cloud``.

    Returns
    -------
    float
    """
    f_values = np.asarray(f_values, dtype=float)
    if f_values.shape != (cloud.n,):
        raise ParameterError("f_values must have one entry per cloud point")
    mom = _moments(kernel, profile.d, moments)
    bw, scale, pref, norm_scale = _weight_setup(param, profile, kernel)
    bw0 = r_hat0 if isinstance(param, Practical) else r_hat0 / np.sqrt(profile.r_k)
    _check_bandwidth(bw)
    _check_bandwidth(bw0)
    code, support = _kernel_code(kernel)
    q = np.ascontiguousarray(x0, dtype=float).ravel()
    w = _backend.core.query_weights(
        cloud.points, q, np.ascontiguousarray(bw, dtype=float), float(bw0), code,
        support, PHI_CODES[phi.value], scale, norm_scale, kind.normalized,
    )
    total = w.sum()
    if not total > 0:
        raise EmptyNeighborhoodError("all kernel weights at the evaluation point vanish")
    h0 = scale * bw0 * bw0
    # centering first keeps constants exact and avoids cancellation
    s = w @ (f_values - f0)
    if kind.random_walk:
        return float(s / total / (mom.ratio * h0))
    s = pref * s
    n = cloud.n
    if isinstance(param, Practical):
        return float(s / (n * h0) if kind is LaplacianKind.UN else s / n)
    c = 1.0 / (0.5 * mom.m2 * n * param.eps)
    return float(c * s / (bw0 * bw0) if kind is LaplacianKind.UN else c * s)

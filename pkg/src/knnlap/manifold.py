"""Analytic closed curve in R^4 with a non-uniform sampling density.

The curve is a sum of circles traced at integer frequencies,

    iota(t) = S * (A_1 cos 2 pi n_1 t, A_1 sin 2 pi n_1 t, A_2 cos 2 pi n_2 t, ...)

with ``S = 1 / (2 pi sqrt(sum A_i^2 n_i^2))`` so that ``|iota'(t)| = 1`` and
``t in [0, 1)`` is arclength. The default frequencies ``(1, 5)`` and
amplitudes ``(1, 0.4)`` give ambient dimension 4 and the geometric
correction ``omega = 101 pi^2 / 5``.

The density is ``p(t) = 1 + sum_j a_j sin(2 pi n_j t)`` (defaults
``a = (1/2, 1/4)``, ``n = (2, 3)``), and the test function is
``f(t) = sin 2 pi (t - 0.1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, FitQualityError, NumericalError, OutOfRegimeError, ParameterError
from .knn import BandwidthProfile, PointCloud

CDF_GRID_SIZE = 2 ** 16
SUP_GRID_SIZE = 10_000


@dataclass(frozen=True)
class BandwidthComparison:
    """Per-point empirical, population and corrected population bandwidths."""

    t: np.ndarray
    rho_hat: np.ndarray
    rho_bar: np.ndarray
    rho_bar_r: np.ndarray
    r: float

    @property
    def rel_corrected(self) -> np.ndarray:
        return np.abs(self.rho_hat - self.rho_bar_r) / self.rho_bar_r

    @property
    def rel_uncorrected(self) -> np.ndarray:
        return np.abs(self.rho_hat - self.rho_bar) / self.rho_bar

    @property
    def eps_rho_k(self) -> float:
        """Uniform relative error against the corrected bandwidth."""
        return float(self.rel_corrected.max())


@dataclass(frozen=True)
class CurveManifold:
    """Analytic test curve with density, test function and bandwidth targets.

    Parameters
    ----------
    frequencies, amplitudes : tuple
        Circle components of the embedding; one ``(cos, sin)`` pair each.
    density_terms : tuple of (coefficient, frequency)
        ``p(t) = 1 + sum a sin(2 pi n t)``. Empty gives the uniform density.
    test_shift : float
        Phase of the test function ``sin 2 pi (t - test_shift)``.
    omega_override : float, optional
        Replaces the closed-form geometric correction (e.g. 0 to disable it).
    """

    frequencies: tuple = (1, 5)
    amplitudes: tuple = (1.0, 0.4)
    density_terms: tuple = ((0.5, 2), (0.25, 3))
    test_shift: float = 0.1
    omega_override: float | None = None
    d: int = field(default=1, init=False)

    def __post_init__(self):
        if len(self.frequencies) != len(self.amplitudes) or not self.frequencies:
            raise ParameterError("frequencies and amplitudes must be non-empty and equally long")
        if any(int(n) != n or n < 1 for n in self.frequencies):
            raise ParameterError("frequencies must be positive integers")
        if any(not a > 0 for a in self.amplitudes):
            raise ParameterError("amplitudes must be positive")
        if any(int(n) != n or n < 1 for _, n in self.density_terms):
            raise ParameterError("density frequencies must be positive integers")
        if sum(abs(a) for a, _ in self.density_terms) >= 1:
            raise ParameterError("density coefficients must keep p strictly positive")
        object.__setattr__(self, "frequencies", tuple(int(n) for n in self.frequencies))
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        object.__setattr__(self, "density_terms",
                           tuple((float(a), int(n)) for a, n in self.density_terms))

    @classmethod
    def from_config(cls, config: dict | str | None = None) -> "CurveManifold":
        """Build from ``"curve-b1"`` or ``{"name": "curve-b1", <overrides>}``."""
        if config is None:
            config = {}
        if isinstance(config, str):
            config = {"name": config}
        config = dict(config)
        name = config.pop("name", "curve-b1")
        if name != "curve-b1":
            raise ParameterError(f"unknown manifold {name!r}")
        if "density_terms" in config:
            config["density_terms"] = tuple(tuple(x) for x in config["density_terms"])
        for key in ("frequencies", "amplitudes"):
            if key in config:
                config[key] = tuple(config[key])
        try:
            return cls(**config)
        except TypeError as exc:
            raise ParameterError(str(exc)) from None

    @property
    def ambient_dim(self) -> int:
        return 2 * len(self.frequencies)

    @property
    def scale(self) -> float:
        s = sum(a * a * n * n for a, n in zip(self.amplitudes, self.frequencies))
        return 1.0 / (2.0 * math.pi * math.sqrt(s))

    # -- embedding ---------------------------------------------------------

    def embed(self, t) -> np.ndarray:
        """Ambient coordinates of arclength ``t`` (wrapped mod 1)."""
        t = np.asarray(t, dtype=float)
        cols = []
        for a, n in zip(self.amplitudes, self.frequencies):
            ang = 2.0 * math.pi * n * t
            cols += [a * np.cos(ang), a * np.sin(ang)]
        return self.scale * np.stack(cols, axis=-1)

    def embed_d1(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        cols = []
        for a, n in zip(self.amplitudes, self.frequencies):
            w = 2.0 * math.pi * n
            cols += [-a * w * np.sin(w * t), a * w * np.cos(w * t)]
        return self.scale * np.stack(cols, axis=-1)

    # -- density -----------------------------------------------------------

    def density(self, t):
        t = np.asarray(t, dtype=float)
        out = np.ones_like(t)
        for a, n in self.density_terms:
            out = out + a * np.sin(2.0 * math.pi * n * t)
        return out

    def density_d1(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for a, n in self.density_terms:
            w = 2.0 * math.pi * n
            out = out + a * w * np.cos(w * t)
        return out

    def density_d2(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for a, n in self.density_terms:
            w = 2.0 * math.pi * n
            out = out - a * w * w * np.sin(w * t)
        return out

    @cached_property
    def _sup_grid(self) -> np.ndarray:
        return np.arange(SUP_GRID_SIZE) / SUP_GRID_SIZE

    @cached_property
    def p_min(self) -> float:
        return float(self.density(self._sup_grid).min())

    @cached_property
    def p_max(self) -> float:
        return float(self.density(self._sup_grid).max())

    @cached_property
    def _cdf_table(self):
        grid = np.linspace(0.0, 1.0, CDF_GRID_SIZE + 1)
        p = self.density(grid)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(grid))])
        return grid, cdf / cdf[-1]

    def cdf(self, t):
        """Distribution function extended periodically: ``cdf(t + 1) = cdf(t) + 1``."""
        grid, cdf = self._cdf_table
        t = np.asarray(t, dtype=float)
        base = np.floor(t)
        return base + np.interp(t - base, grid, cdf)

    def inverse_cdf(self, u):
        grid, cdf = self._cdf_table
        u = np.asarray(u, dtype=float)
        base = np.floor(u)
        return base + np.interp(u - base, cdf, grid)

    def sample_t(self, n: int, rng: np.random.Generator, lo: float = 0.0, hi: float = 1.0):
        """Draw ``n`` arclengths from ``p`` restricted to ``[lo, hi]`` (wrapped mod 1)."""
        c_lo, c_hi = self.cdf(lo), self.cdf(hi)
        t = self.inverse_cdf(c_lo + (c_hi - c_lo) * rng.random(n))
        t = np.mod(t, 1.0)
        return np.where(t >= 1.0, 0.0, t)

    def sample(self, n: int, seed: int) -> PointCloud:
        """``n`` i.i.d. points from ``p``, deterministic in ``seed``."""
        if n < 1:
            raise ParameterError(f"sample size must be >= 1, got {n}")
        t = self.sample_t(int(n), np.random.default_rng(seed))
        return PointCloud(self.embed(t), t)

    # -- test function and limiting operators ------------------------------

    def test_function(self, t):
        return np.sin(2.0 * math.pi * (np.asarray(t, dtype=float) - self.test_shift))

    def test_function_d1(self, t):
        return 2.0 * math.pi * np.cos(2.0 * math.pi * (np.asarray(t, dtype=float) - self.test_shift))

    def test_function_d2(self, t):
        return -(2.0 * math.pi) ** 2 * self.test_function(t)

    def limiting_ops(self, t):
        """``(Delta_p f, L_p f)`` for the test function.

        ``Delta_p f = f'' + f' p'/p`` and ``L_p f = f'' + (1 - 2/d) f' p'/p``.
        """
        drift = self.test_function_d1(t) * self.density_d1(t) / self.density(t)
        f2 = self.test_function_d2(t)
        return f2 + drift, f2 + (1.0 - 2.0 / self.d) * drift

    # -- geometric correction ----------------------------------------------

    def omega(self) -> float:
        """Geometric correction ``|iota''|^2 / 4``, constant along the curve."""
        if self.omega_override is not None:
            return float(self.omega_override)
        s2 = self.scale ** 2
        return 0.25 * sum(
            s2 * a * a * (2.0 * math.pi * n) ** 4 for a, n in zip(self.amplitudes, self.frequencies)
        )

    def omega_numeric(self, t: float = 0.25, eps_grid=None) -> float:
        """Estimate the geometric correction from indicator-kernel arc integrals.

        For ``h = 1[0, 1]`` the arc integral
        ``eps^(-1/2) int h(|iota(t) - iota(s)|^2 / eps) ds`` expands as
        ``m0 + eps (m2 / 2) omega + O(eps^2)`` with ``m0 = 2``, ``m2 = 2/3``;
        a quadratic fit in ``eps`` recovers the linear coefficient.
        """
        eps = np.asarray(
            np.geomspace(1e-4, 1e-3, 10) if eps_grid is None else eps_grid, dtype=float
        )
        if eps.size < 4 or np.any(~(eps > 0)):
            raise FitQualityError("need at least 4 positive eps values")
        x0 = self.embed(t)

        def chord2(u):
            diff = self.embed(t + u) - x0
            return float(diff @ diff)

        # chords are monotone out to a quarter of the tightest circle
        u_max = 0.25 / max(self.frequencies)
        vals = []
        for e in eps:
            if chord2(u_max) <= e or chord2(-u_max) <= e:
                raise FitQualityError(f"eps = {e} too large for a local expansion")
            b = brentq(lambda u: chord2(u) - e, 0.0, u_max, xtol=1e-15, rtol=1e-15)
            a = brentq(lambda u: chord2(-u) - e, 0.0, u_max, xtol=1e-15, rtol=1e-15)
            vals.append((a + b) / math.sqrt(e))
        c2, c1, c0 = np.polyfit(eps, np.array(vals), 2)
        if abs(c0 - 2.0) > 1e-3:
            raise FitQualityError(f"fitted intercept {c0} departs from m0 = 2")
        return float(c1 / (0.5 * 2.0 / 3.0))

    def q_correction(self, t):
        """``Q = (p''/p + omega) / (2 (d + 2))``."""
        return (self.density_d2(t) / self.density(t) + self.omega()) / (2.0 * (self.d + 2))

    @cached_property
    def q_sup(self) -> float:
        """``max |Q|`` over a uniform grid."""
        return float(np.abs(self.q_correction(self._sup_grid)).max())

    @cached_property
    def r0(self) -> float:
        """Largest correction scale for which the corrected bandwidth is well posed."""
        d = self.d
        rho_max = (2.0 / self.p_min) ** (1.0 / d)
        return (d + 2) / (2.0 * d * (self.q_sup + 1.0) * rho_max ** 2)

    # -- population bandwidth ----------------------------------------------

    def population_bandwidth(self, t, r: float, strict: bool = True, tol: float = 1e-12):
        """Corrected population bandwidth: root of ``s^d (1 + r Q s^2) = 1 / p``.

        Parameters
        ----------
        t : array_like
            Arclength positions.
        r : float
            Correction scale, usually ``r_k``. ``r = 0`` gives ``p^(-1/d)``.
        strict : bool
            Enforce ``r <= r0`` and search only the guaranteed bracket
            ``[(2/(3p))^(1/d), (2/p)^(1/d)]``. With ``strict=False`` any
            ``r >= 0`` is accepted and the root is bracketed adaptively.
        tol : float
            Absolute bisection tolerance.
        """
        if not r >= 0:
            raise DomainError(f"correction scale must be non-negative, got {r}")
        if strict and r > self.r0:
            raise OutOfRegimeError(f"r = {r:.4g} exceeds r0 = {self.r0:.4g}")
        t = np.asarray(t, dtype=float)
        p = self.density(t)
        Q = self.q_correction(t)
        return solve_bandwidth(p, Q, float(r), self.d, strict, tol)

    def bandwidth_sup_error(self, cloud: PointCloud, profile: BandwidthProfile,
                            strict: bool = True):
        """Relative error of ``rho_hat`` against the corrected population bandwidth.

        Returns
        -------
        eps_rho_k : float
            ``max_i |rho_hat_i - rho_bar_r(t_i)| / rho_bar_r(t_i)`` with ``r = r_k``.
        table : BandwidthComparison
            Per-point values, including the uncorrected ``p^(-1/d)`` target.
        """
        if cloud.intrinsic is None:
            raise ParameterError("cloud has no intrinsic coordinates")
        if profile.n != cloud.n or profile.d != self.d:
            raise ParameterError("profile does not match the cloud or manifold dimension")
        t = cloud.intrinsic
        rho_bar = self.density(t) ** (-1.0 / self.d)
        rho_bar_r = self.population_bandwidth(t, profile.r_k, strict=strict)
        table = BandwidthComparison(t, profile.rho_hat, rho_bar, rho_bar_r, profile.r_k)
        return table.eps_rho_k, table


def _residual(s, p, Q, r, d):
    return s ** d * (1.0 + r * Q * s * s) - 1.0 / p


def solve_bandwidth(p, Q, r: float, d: int = 1, strict: bool = True, tol: float = 1e-12):
    """Root ``s > 0`` of ``s^d (1 + r Q s^2) = 1 / p`` by vectorized bisection.

    With ``strict`` the search is confined to ``[(2/(3p))^(1/d), (2/p)^(1/d)]``
    and a failed sign check raises :class:`NumericalError`.
    """
    p = np.asarray(p, dtype=float)
    Q = np.broadcast_to(np.asarray(Q, dtype=float), p.shape)
    if r == 0:
        return p ** (-1.0 / d)
    if strict:
        lo = (2.0 / (3.0 * p)) ** (1.0 / d)
        hi = (2.0 / p) ** (1.0 / d)
        if np.any(_residual(lo, p, Q, r, d) > 0) or np.any(_residual(hi, p, Q, r, d) < 0):
            raise NumericalError("bandwidth bracket fails the sign condition")
    else:
        # the residual is increasing in s wherever 1 + 3 r Q s^2 > 0
        if np.any(Q < 0):
            if np.any(1.0 + 3.0 * r * Q * (2.0 / p) ** (2.0 / d) <= 0):
                raise OutOfRegimeError("negative curvature term makes the root ambiguous")
        lo = np.zeros_like(p)
        hi = np.broadcast_to(np.asarray(p ** (-1.0 / d)), p.shape).copy()
        for _ in range(200):
            short = _residual(hi, p, Q, r, d) < 0
            if not np.any(short):
                break
            hi[short] *= 2.0
        else:
            raise OutOfRegimeError("no root found for the corrected bandwidth")
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        # stop once the brackets are adjacent floats
        if np.all((mid == lo) | (mid == hi)):
            break
        neg = _residual(mid, p, Q, r, d) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    out = 0.5 * (lo + hi)
    return float(out) if out.ndim == 0 else out

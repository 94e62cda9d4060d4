"""Convergence experiments on the analytic test curve.

Three experiments are provided:

* :func:`bandwidth_experiment` compares the empirical bandwidth against the
  plain and corrected population bandwidths on one sample;
* :func:`run_convergence` measures the point-wise error of the normalized
  random-walk Laplacian at a fixed point over a grid of kernel scales, and
  fits variance- and bias-regime slopes;
* :func:`knn_rate_experiment` tracks the uniform bandwidth error as the sample
  grows along a ``k(N)`` schedule.

All randomness derives from a master seed through :class:`numpy.random.SeedSequence`
spawn keys, so results do not depend on execution order or thread count.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from ._core_py import PHI_CODES
from .errors import FitQualityError, FormatError, ParameterError
from .graph import LaplacianKind, Practical, _kernel_code, laplacian_apply_at
from .kernels import KernelSpec, PhiRule, RateClass, parse_kernel, parse_phi
from .knn import BandwidthProfile, PointCloud, knn_all, knn_query, weighted_knn_distance
from .manifold import BandwidthComparison, CurveManifold

CASES = {
    "i": ("exp", "geo"),
    "ii": ("exp", "sqmean"),
    "iii": ("exp", "min"),
    "iv": ("ind:3", "geo"),
    "v": ("ind:3", "min"),
}

# spawn-key tags separating the independent random streams
_TAG_PROBE = 1
_TAG_REPLICA = 2
_TAG_CELL = 3


def default_sigma0_sq_grid(n: int = 12, lo: float = 0.06, hi: float = 1.54) -> tuple:
    return tuple(float(x) for x in np.geomspace(lo, hi, n))


def derive_seed(master_seed: int, *keys: int) -> int:
    """Deterministic 64-bit seed for the stream ``(master_seed, *keys)``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def case_spec(case: str) -> tuple[KernelSpec, PhiRule]:
    try:
        k0, phi = CASES[case]
    except KeyError:
        raise ParameterError(f"unknown case {case!r}; expected one of {list(CASES)}") from None
    return parse_kernel(k0), parse_phi(phi)


# -- slope fitting ----------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through log-log points, with its grid window."""

    window: tuple
    slope: float
    intercept: float
    r2: float


def fit_slope(xs, ys, window: tuple | None = None) -> SlopeFit:
    """Ordinary least squares of ``ys`` on ``xs`` (both already in log scale).

    Raises
    ------
    FitQualityError
        Fewer than 3 points or all ``xs`` equal.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 3:
        raise FitQualityError("slope fit needs at least 3 paired points")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise FitQualityError("slope fit needs finite values")
    xc = xs - xs.mean()
    sxx = xc @ xc
    if sxx <= 0:
        raise FitQualityError("degenerate abscissae: all x values are equal")
    slope = (xc @ (ys - ys.mean())) / sxx
    intercept = ys.mean() - slope * xs.mean()
    resid = ys - (intercept + slope * xs)
    sst = ((ys - ys.mean()) ** 2).sum()
    r2 = 1.0 if sst == 0 else max(0.0, 1.0 - (resid @ resid) / sst)
    return SlopeFit(window if window is not None else (0, xs.size), float(slope),
                    float(intercept), float(r2))


def error_windows(values) -> tuple[tuple, tuple]:
    """Variance window (maximal decreasing prefix) and bias window (maximal increasing suffix).

    Windows are half-open index ranges into ``values``; both include the
    turning point when there is one.
    """
    diff = np.diff(np.asarray(values, dtype=float))
    i = 0
    while i < diff.size and diff[i] < 0:
        i += 1
    j = diff.size
    while j > 0 and diff[j - 1] > 0:
        j -= 1
    return (0, i + 1), (j, diff.size + 1)


def _window_fit(log_x, values, window, min_points=3):
    a, b = window
    if b - a < min_points:
        return None
    return fit_slope(log_x[a:b], np.log(np.asarray(values)[a:b]), window)


# -- bandwidth experiment ---------------------------------------------------


@dataclass(frozen=True)
class BandwidthExperiment:
    """One sample compared against the bandwidth targets for several ``k``."""

    n: int
    seed: int
    tables: dict  # k -> BandwidthComparison

    def summary(self) -> list[dict]:
        rows = []
        for k, tab in self.tables.items():
            rows.append({
                "k": k,
                "r_k": tab.r,
                "mean_rel_corrected": float(tab.rel_corrected.mean()),
                "mean_rel_uncorrected": float(tab.rel_uncorrected.mean()),
                "max_rel_corrected": float(tab.rel_corrected.max()),
                "max_rel_uncorrected": float(tab.rel_uncorrected.max()),
            })
        return rows

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "t", "rho_hat", "rho_bar", "rho_bar_r"])
            for k, tab in self.tables.items():
                order = np.argsort(tab.t, kind="stable")
                for i in order:
                    w.writerow([k] + [_fmt(v) for v in
                                      (tab.t[i], tab.rho_hat[i], tab.rho_bar[i], tab.rho_bar_r[i])])


def bandwidth_experiment(n: int, k_list, seed: int, mf: CurveManifold | None = None,
                         enforce_regime: bool = False) -> BandwidthExperiment:
    """Empirical vs. population bandwidths on one sample of size ``n``.

    With ``enforce_regime`` any ``k`` whose ``r_k`` exceeds the manifold's
    ``r0`` is rejected; otherwise it is kept with a warning and the corrected
    bandwidth is solved without the guaranteed bracket.
    """
    mf = mf or CurveManifold()
    cloud = mf.sample(n, seed)
    tables = {}
    for k in k_list:
        profile = BandwidthProfile.from_radii(knn_all(cloud, int(k)), int(k), n, mf.d)
        strict = profile.r_k <= mf.r0
        if not strict:
            msg = f"k = {k}: r_k = {profile.r_k:.4g} exceeds r0 = {mf.r0:.4g}"
            if enforce_regime:
                warnings.warn(msg + "; rejected", stacklevel=2)
                continue
            warnings.warn(msg + "; solving without the guaranteed bracket", stacklevel=2)
        _, tab = mf.bandwidth_sup_error(cloud, profile, strict=strict)
        tables[int(k)] = tab
    return BandwidthExperiment(n, seed, tables)


# -- point-wise convergence -------------------------------------------------


@dataclass(frozen=True)
class ConvergenceConfig:
    """Parameters of the point-wise convergence experiment.

    ``n_neighborhood`` points are drawn from the density restricted to the
    selected arc around ``x0_t``. With ``common_random_numbers`` one sample
    per replica is shared by every case and kernel scale; otherwise every
    ``(case, sigma0_sq, replica)`` cell draws its own sample.
    """

    cases: tuple = tuple(CASES)
    sigma0_sq: tuple = field(default_factory=default_sigma0_sq_grid)
    k: int = 512
    n_neighborhood: int = 4800
    replicas: int = 200
    x0_t: float = 0.84
    master_seed: int = 0
    neighborhood_threshold: float = 1e-3
    probe_n: int = 40000
    probe_runs: int = 1000
    probe_grid: int = 50
    probe_halfwidth: float = 0.12
    grid_m: int = 10000
    common_random_numbers: bool = True
    manifold: dict = field(default_factory=lambda: {"name": "curve-b1"})

    def __post_init__(self):
        object.__setattr__(self, "cases", tuple(self.cases))
        object.__setattr__(self, "sigma0_sq", tuple(float(s) for s in self.sigma0_sq))
        for c in self.cases:
            case_spec(c)
        s = np.asarray(self.sigma0_sq)
        if s.size < 1 or np.any(~(s > 0)) or np.any(np.diff(s) <= 0):
            raise ParameterError("sigma0_sq grid must be positive and strictly increasing")
        if self.replicas < 1:
            raise ParameterError("replicas must be >= 1")
        if not 0 < self.neighborhood_threshold < 1:
            raise ParameterError("neighborhood_threshold must lie in (0, 1)")
        if not 1 <= self.k < self.n_neighborhood:
            raise ParameterError("need 1 <= k < n_neighborhood")
        if self.k > self.probe_n:
            raise ParameterError("need k <= probe_n")
        if self.grid_m < 1000:
            raise ParameterError("grid_m must be at least 1000")
        if self.probe_grid < 3 or self.probe_runs < 1:
            raise ParameterError("probe_grid must be >= 3 and probe_runs >= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ParameterError("master_seed must be an unsigned 64-bit integer")

    @classmethod
    def from_json(cls, source) -> "ConvergenceConfig":
        """Load from a JSON file path, JSON text or an already-parsed dict."""
        if isinstance(source, dict):
            data = dict(source)
        else:
            text = str(source)
            if not text.lstrip().startswith(("{", "[")):
                try:
                    text = Path(text).read_text()
                except OSError as exc:
                    raise FormatError(f"cannot read config {source}: {exc}") from None
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON config: {exc}") from None
        if not isinstance(data, dict):
            raise FormatError("config must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise FormatError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def manifold_obj(self) -> CurveManifold:
        return CurveManifold.from_config(self.manifold)


@dataclass(frozen=True)
class ExperimentRecord:
    """One sampled error measurement."""

    case: str
    sigma0_sq: float
    k: int
    n: int
    replica: int
    err: float
    errbar: float
    seed: int
    wall_time: float = 0.0


def _probe_affinity(kernel, phi, d2, sigma0_sq, r0, ry):
    ph = phi(r0, ry)
    return kernel.evaluate_bare(d2 / (sigma0_sq * ph * ph))


def select_neighborhood(
    mf: CurveManifold,
    x0_t: float,
    cases=tuple(CASES),
    sigma0_sq=None,
    k_grid=(512,),
    threshold: float = 1e-3,
    probe_n: int = 40000,
    probe_runs: int = 1000,
    probe_grid: int = 50,
    halfwidth: float = 0.12,
    master_seed: int = 0,
) -> tuple[float, float]:
    """Arc interval outside which every probed affinity to ``x0`` stays below ``threshold``.

    Each probe run samples ``probe_n`` points from the full curve, computes
    the kNN radius at ``x0`` and at ``probe_grid`` even grid points within
    ``halfwidth`` of it, and marks grid points whose affinity to ``x0`` reaches
    ``threshold`` for any case, kernel scale or ``k``. The returned interval
    is the union over runs, widened by one grid step on each side. If marks
    reach the edge of the probe window, the window is doubled and the search
    repeated; at half the circle the full domain is returned with a warning.

    Returns
    -------
    (lo, hi) : tuple of float
        Interval in unwrapped arclength, ``lo < x0_t < hi``.
    """
    if not 0 < threshold < 1:
        raise ParameterError("threshold must lie in (0, 1)")
    sigma0_sq = default_sigma0_sq_grid() if sigma0_sq is None else tuple(sigma0_sq)
    specs = [case_spec(c) for c in cases]
    while True:
        if halfwidth >= 0.5:
            warnings.warn("neighborhood covers the whole curve; using the full domain", stacklevel=2)
            return x0_t - 0.5, x0_t + 0.5
        grid = np.linspace(x0_t - halfwidth, x0_t + halfwidth, probe_grid)
        step = grid[1] - grid[0]
        q = mf.embed(np.concatenate([[x0_t], grid]))
        d2 = ((q[1:] - q[0]) ** 2).sum(axis=1)
        marked = np.zeros(probe_grid, bool)
        for run in range(probe_runs):
            rng = np.random.default_rng(derive_seed(master_seed, _TAG_PROBE, run))
            cloud = PointCloud(mf.embed(mf.sample_t(probe_n, rng)))
            for k in k_grid:
                radii = knn_query(cloud, q, int(k))
                for kernel, phi in specs:
                    for s2 in sigma0_sq:
                        marked |= _probe_affinity(kernel, phi, d2, s2, radii[0], radii[1:]) >= threshold
        if marked[0] or marked[-1]:
            halfwidth *= 2.0
            continue
        idx = np.flatnonzero(marked)
        lo = min(x0_t - step, grid[idx[0]] - step) if idx.size else x0_t - step
        hi = max(x0_t + step, grid[idx[-1]] + step) if idx.size else x0_t + step
        return float(lo), float(hi)


@dataclass
class _Setup:
    cfg: ConvergenceConfig
    mf: CurveManifold
    interval: tuple
    mass: float
    x0: np.ndarray
    f0: float
    target: float
    specs: dict

    @property
    def n_effective(self) -> float:
        """Global sample size whose restriction to the interval has ``n_neighborhood`` points."""
        return self.cfg.n_neighborhood / self.mass


def prepare(cfg: ConvergenceConfig, interval: tuple | None = None) -> _Setup:
    """Resolve the manifold, neighborhood and limiting value for ``cfg``."""
    mf = cfg.manifold_obj()
    if interval is None:
        interval = select_neighborhood(
            mf, cfg.x0_t, cfg.cases, cfg.sigma0_sq, (cfg.k,), cfg.neighborhood_threshold,
            cfg.probe_n, cfg.probe_runs, cfg.probe_grid, cfg.probe_halfwidth, cfg.master_seed,
        )
    lo, hi = interval
    mass = float(mf.cdf(hi) - mf.cdf(lo))
    return _Setup(cfg, mf, (float(lo), float(hi)), mass, mf.embed(cfg.x0_t),
                  float(mf.test_function(cfg.x0_t)), float(mf.limiting_ops(cfg.x0_t)[0]),
                  {c: case_spec(c) for c in cfg.cases})


def _sample_neighborhood(setup: _Setup, seed: int):
    rng = np.random.default_rng(seed)
    t = setup.mf.sample_t(setup.cfg.n_neighborhood, rng, *setup.interval)
    cloud = PointCloud(setup.mf.embed(t))
    k = setup.cfg.k
    profile = BandwidthProfile.from_radii(knn_all(cloud, k), k, cloud.n, setup.mf.d)
    r_hat0 = float(knn_query(cloud, setup.x0, k)[0])
    return cloud, setup.mf.test_function(t), profile, r_hat0


def _cell_error(setup, sample, case, sigma0_sq):
    cloud, f_values, profile, r_hat0 = sample
    kernel, phi = setup.specs[case]
    val = laplacian_apply_at(
        LaplacianKind.RW_TILDE, setup.x0, setup.f0, cloud, f_values, profile, r_hat0,
        kernel, phi, Practical.from_sigma0_sq(sigma0_sq),
    )
    return abs(val - setup.target)


def pointwise_error(cfg: ConvergenceConfig, sigma0_sq: float, replica: int, case: str | None = None,
                    setup: _Setup | None = None) -> float:
    """Sampled error ``|L_rw~ f(x0) - Delta_p f(x0)|`` for one grid cell and replica."""
    setup = setup or prepare(cfg)
    case = case or cfg.cases[0]
    seed = _replica_seed(cfg, case, sigma0_sq, replica)
    return _cell_error(setup, _sample_neighborhood(setup, seed), case, sigma0_sq)


def _replica_seed(cfg, case, sigma0_sq, replica):
    if cfg.common_random_numbers:
        return derive_seed(cfg.master_seed, _TAG_REPLICA, replica)
    ci = list(CASES).index(case)
    si = cfg.sigma0_sq.index(sigma0_sq) if sigma0_sq in cfg.sigma0_sq else int(round(sigma0_sq * 1e12))
    return derive_seed(cfg.master_seed, _TAG_CELL, ci, si, replica)


def bias_reference(cfg: ConvergenceConfig, sigma0_sq, grid_m: int | None = None,
                   case: str | None = None, setup: _Setup | None = None):
    """Deterministic even-grid counterpart ``ErrBar`` of the sampled error.

    ``sigma0_sq`` may be a scalar or a sequence; the grid and its bandwidths
    are built once and shared across the values.
    """
    setup = setup or prepare(cfg)
    case = case or cfg.cases[0]
    ref = _GridReference(setup, grid_m or cfg.grid_m)
    if np.ndim(sigma0_sq) == 0:
        return ref.errbar(case, float(sigma0_sq))
    return np.array([ref.errbar(case, float(s)) for s in sigma0_sq])


class _GridReference:
    """Riemann-sum evaluation of the normalized random-walk Laplacian at ``x0``.

    Grid nodes are cell midpoints of an interval symmetric about ``x0``; each
    carries weight ``p(t_j) * h * n_effective``, the expected sample count of
    its cell. Bandwidths are weighted kNN radii on the grid itself.
    """

    def __init__(self, setup: _Setup, grid_m: int):
        if grid_m < 1000:
            raise ParameterError("grid_m must be at least 1000")
        self.setup = setup
        x0_t = setup.cfg.x0_t
        lo, hi = setup.interval
        half = max(x0_t - lo, hi - x0_t)
        h = 2.0 * half / grid_m
        t = x0_t - half + h * (np.arange(grid_m) + 0.5)
        mf = setup.mf
        self.p = mf.density(t)
        self.f = mf.test_function(t)
        self.cloud = PointCloud(mf.embed(t))
        weights = self.p * h * setup.n_effective
        k = setup.cfg.k
        self.r_hat = weighted_knn_distance(self.cloud, weights, self.cloud.points, k)
        self.r_hat0 = float(weighted_knn_distance(self.cloud, weights, setup.x0, k)[0])

    def errbar(self, case: str, sigma0_sq: float) -> float:
        setup = self.setup
        kernel, phi = setup.specs.get(case) or case_spec(case)
        code, support = _kernel_code(kernel)
        w = _backend.core.query_weights(
            self.cloud.points, np.ascontiguousarray(setup.x0), self.r_hat, self.r_hat0, code,
            support, PHI_CODES[phi.value], sigma0_sq, sigma0_sq, True,
        ) * self.p
        total = w.sum()
        ratio = kernel.moments(setup.mf.d).ratio
        val = (w @ (self.f - setup.f0) / total) / (ratio * sigma0_sq * self.r_hat0 ** 2)
        return abs(val - setup.target)


@dataclass
class ConvergenceResult:
    """Records, per-cell summary and fitted slopes of a convergence run."""

    config: ConvergenceConfig
    interval: tuple
    n_effective: float
    records: list
    summary: list
    slopes: list

    def mean_err(self, case: str) -> np.ndarray:
        return np.array([row["mean_err"] for row in self.summary if row["case"] == case])

    def errbar(self, case: str) -> np.ndarray:
        return np.array([row["errbar"] for row in self.summary if row["case"] == case])

    def slope(self, case: str, quantity: str) -> SlopeFit | None:
        for row in self.slopes:
            if row["case"] == case and row["quantity"] == quantity:
                return row["fit"]
        return None

    def write(self, out_dir) -> dict:
        """Write ``results.csv``, ``summary.csv`` and ``slopes.csv`` into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {name: out / f"{name}.csv" for name in ("results", "summary", "slopes")}
        with open(paths["results"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "sigma0_sq", "k", "N", "replica", "err", "errbar", "seed"])
            for r in self.records:
                w.writerow([r.case, _fmt(r.sigma0_sq), r.k, r.n, r.replica, _fmt(r.err),
                            _fmt(r.errbar), r.seed])
        with open(paths["summary"], "w", newline="") as fh:
            w = csv.writer(fh)
            cols = ["case", "sigma0_sq", "k", "N", "n_effective", "replicas", "mean_err", "sd_err", "errbar"]
            w.writerow(cols)
            for row in self.summary:
                w.writerow([_fmt(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
        with open(paths["slopes"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "quantity", "window_start", "window_end", "slope", "intercept", "r2"])
            for row in self.slopes:
                fit = row["fit"]
                if fit is None:
                    w.writerow([row["case"], row["quantity"], "", "", "", "", ""])
                else:
                    w.writerow([row["case"], row["quantity"], fit.window[0], fit.window[1],
                                _fmt(fit.slope), _fmt(fit.intercept), _fmt(fit.r2)])
        return paths


def _fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, (float, np.floating)) else str(x)


def run_convergence(cfg: ConvergenceConfig, interval: tuple | None = None,
                    threads: int | None = None) -> ConvergenceResult:
    """Run every ``(case, sigma0_sq, replica)`` cell and fit the error slopes.

    Windows are read off the replica-averaged error curve; a window shorter
    than 3 grid points yields no fit (reported as ``None``).
    """
    setup = prepare(cfg, interval)
    threads = threads or _backend.get_threads()
    grid = _GridReference(setup, cfg.grid_m)
    errbars = {(c, s): grid.errbar(c, s) for c in cfg.cases for s in cfg.sigma0_sq}

    def replica_task(r):
        start = time.perf_counter()
        out = {}
        if cfg.common_random_numbers:
            seed = _replica_seed(cfg, cfg.cases[0], cfg.sigma0_sq[0], r)
            sample = _sample_neighborhood(setup, seed)
            for c in cfg.cases:
                for s in cfg.sigma0_sq:
                    out[c, s] = (_cell_error(setup, sample, c, s), seed)
        else:
            for c in cfg.cases:
                for s in cfg.sigma0_sq:
                    seed = _replica_seed(cfg, c, s, r)
                    out[c, s] = (_cell_error(setup, _sample_neighborhood(setup, seed), c, s), seed)
        return out, time.perf_counter() - start

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(replica_task, range(cfg.replicas)))
    else:
        results = [replica_task(r) for r in range(cfg.replicas)]

    records = []
    errs = {key: np.empty(cfg.replicas) for key in errbars}
    for c in cfg.cases:
        for s in cfg.sigma0_sq:
            for r, (cells, wall) in enumerate(results):
                err, seed = cells[c, s]
                errs[c, s][r] = err
                records.append(ExperimentRecord(c, s, cfg.k, cfg.n_neighborhood, r, err,
                                                errbars[c, s], seed, wall))
    summary = []
    for c in cfg.cases:
        for s in cfg.sigma0_sq:
            e = errs[c, s]
            summary.append({
                "case": c, "sigma0_sq": s, "k": cfg.k, "N": cfg.n_neighborhood,
                "n_effective": setup.n_effective, "replicas": cfg.replicas,
                "mean_err": float(e.mean()),
                "sd_err": float(e.std(ddof=1)) if e.size > 1 else 0.0,
                "errbar": errbars[c, s],
            })
    log_s = np.log(np.asarray(cfg.sigma0_sq))
    slopes = []
    for c in cfg.cases:
        mean = np.array([errs[c, s].mean() for s in cfg.sigma0_sq])
        bar = np.array([errbars[c, s] for s in cfg.sigma0_sq])
        var_w, bias_w = error_windows(mean)
        _, bar_w = error_windows(bar)
        for name, values, window in (("err_variance", mean, var_w), ("err_bias", mean, bias_w),
                                     ("errbar_bias", bar, bar_w)):
            fit = _window_fit(log_s, values, window)
            if fit is None:
                warnings.warn(f"case {c}: {name} window {window} shorter than 3 points; no fit",
                              stacklevel=2)
            slopes.append({"case": c, "quantity": name, "fit": fit})
    return ConvergenceResult(cfg, setup.interval, setup.n_effective, records, summary, slopes)


# -- rate schedules and the kNN estimator rate ------------------------------


@dataclass(frozen=True)
class RateSchedule:
    """Kernel scale and neighbor count (or range) balancing bias and variance."""

    n: int
    d: int
    regime: RateClass
    eps: float
    k: int | None
    k_range: tuple | None


def rate_schedule(n: int, d: int, regime, c: float = 1.0, c_prime: float = 1.0) -> RateSchedule:
    """Optimal ``eps`` and ``k`` scalings for the fast or slow regime.

    Fast: ``eps = c N^(-2/(d+6))`` and ``k = round(c' N^(6/(d+6)))``.
    Slow: ``eps = c N^(-2/(d+4))`` and ``k`` anywhere in
    ``[N^(4/(d+4)), N^((d/3+4)/(d+4))]``. Counts are clamped to ``[1, N-1]``
    with a warning.
    """
    if n < 2 or d < 1:
        raise ParameterError("need N >= 2 and d >= 1")
    if isinstance(regime, str):
        regime = parse_regime(regime)

    def clamp(k):
        kk = int(round(k))
        if not 1 <= kk <= n - 1:
            warnings.warn(f"k = {kk} clamped into [1, {n - 1}]", stacklevel=3)
            kk = min(max(kk, 1), n - 1)
        return kk

    if regime.is_fast:
        return RateSchedule(n, d, RateClass.FAST, c * n ** (-2.0 / (d + 6)),
                            clamp(c_prime * n ** (6.0 / (d + 6))), None)
    lo = n ** (4.0 / (d + 4))
    hi = n ** ((d / 3.0 + 4.0) / (d + 4))
    return RateSchedule(n, d, regime, c * n ** (-2.0 / (d + 4)), None,
                        (clamp(c_prime * lo), clamp(c_prime * hi)))


def parse_regime(token: str) -> RateClass:
    token = token.strip().lower()
    if token == "fast":
        return RateClass.FAST
    if token == "slow":
        return RateClass.SLOW_I
    raise ParameterError(f"regime must be 'fast' or 'slow', got {token!r}")


@dataclass
class RateExperiment:
    """Uniform bandwidth error per ``(N, seed)`` and its fitted decay rate."""

    rows: list
    fit: SlopeFit | None

    def mean_by_n(self) -> dict:
        out = {}
        for row in self.rows:
            out.setdefault(row["N"], []).append(row["eps_rho_k"])
        return {n: float(np.mean(v)) for n, v in out.items()}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "k", "r_k", "seed", "eps_rho_k"])
            for row in self.rows:
                w.writerow([row["N"], row["k"], _fmt(row["r_k"]), row["seed"], _fmt(row["eps_rho_k"])])


def knn_rate_experiment(n_list, seeds=10, schedule=None, mf: CurveManifold | None = None,
                        master_seed: int = 0) -> RateExperiment:
    """Uniform relative bandwidth error against ``N`` along a ``k(N)`` schedule.

    Parameters
    ----------
    n_list : sequence of int
    seeds : int or sequence of int
        Number of seeds (derived from ``master_seed``) or explicit seeds.
    schedule : callable, optional
        ``k = schedule(N)``; defaults to ``round(N^(6/(d+6)))``.

    Notes
    -----
    Large ``k`` pushes ``r_k`` past the well-posedness threshold ``r0``; the
    corrected bandwidth is then solved without the guaranteed bracket.
    """
    mf = mf or CurveManifold()
    if schedule is None:
        def schedule(n):
            return int(round(n ** (6.0 / (mf.d + 6))))
    seed_list = ([derive_seed(master_seed, n_s) for n_s in range(seeds)]
                 if isinstance(seeds, int) else [int(s) for s in seeds])
    rows = []
    for n in n_list:
        k = int(schedule(int(n)))
        if not 1 <= k < n:
            raise ParameterError(f"schedule gives k = {k} outside [1, N) for N = {n}")
        for seed in seed_list:
            cloud = mf.sample(int(n), seed)
            profile = BandwidthProfile.from_radii(knn_all(cloud, k), k, int(n), mf.d)
            eps, _ = mf.bandwidth_sup_error(cloud, profile, strict=profile.r_k <= mf.r0)
            rows.append({"N": int(n), "k": k, "r_k": profile.r_k, "seed": seed, "eps_rho_k": eps})
    exp = RateExperiment(rows, None)
    means = exp.mean_by_n()
    if len(means) >= 3:
        ns = np.array(sorted(means))
        exp.fit = fit_slope(np.log(ns), np.log([means[n] for n in ns]))
    return exp


__all__ = [
    "CASES", "BandwidthComparison", "BandwidthExperiment", "ConvergenceConfig",
    "ConvergenceResult", "ExperimentRecord", "RateExperiment", "RateSchedule", "SlopeFit",
    "bandwidth_experiment", "bias_reference", "case_spec", "default_sigma0_sq_grid",
    "derive_seed", "error_windows", "fit_slope", "knn_rate_experiment", "parse_regime",
    "pointwise_error", "prepare", "rate_schedule", "run_convergence", "select_neighborhood",
]

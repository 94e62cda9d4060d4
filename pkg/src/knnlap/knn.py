"""k-nearest-neighbor radii and the empirical bandwidth function.

``R(x)`` is the smallest radius containing at least ``k`` cloud points. When
``x`` is itself a cloud point it counts towards ``k``, so ``k = 1`` gives zero
at every data point. Many libraries exclude the query point; this one does not.

Two exact search methods are provided, plus ``"auto"`` which picks one by
size. ``"brute"`` evaluates every distance;
``"indexed"`` gathers candidates from a kd-tree and re-evaluates them with
the same floating-point formula, so both return identical bits.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import _backend
from .errors import DomainError, FormatError, ParameterError
from .kernels import unit_ball_volume

METHODS = ("auto", "brute", "indexed")
# cap on candidate-matrix size per query block
_BLOCK_ENTRIES = 1 << 22
# relative slack between kd-tree distances and the canonical formula
_TREE_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``N`` points in ``R^m`` with optional intrinsic coordinates in ``[0, 1)``.

    Parameters
    ----------
    points : array_like, shape (N, m)
        Ambient coordinates. A 1-D input is read as ``N`` points on a line.
    intrinsic : array_like, shape (N,), optional
        Arclength parameter of each point on an analytic curve.
    """

    points: np.ndarray
    intrinsic: np.ndarray | None = None
    _tree: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise FormatError(f"points must be an (N, m) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DomainError("point coordinates must be finite")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.intrinsic is not None:
            t = np.ascontiguousarray(self.intrinsic, dtype=float).ravel()
            if t.shape[0] != pts.shape[0]:
                raise FormatError("intrinsic coordinates must have one entry per point")
            if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t >= 1):
                raise DomainError("intrinsic coordinates must lie in [0, 1)")
            t.setflags(write=False)
            object.__setattr__(self, "intrinsic", t)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    @property
    def tree(self) -> cKDTree:
        """Lazily built kd-tree over the points."""
        if not self._tree:
            self._tree.append(cKDTree(self.points))
        return self._tree[0]

    def to_csv(self, path) -> None:
        """Write ``x1..xm[,t]`` columns with 17 significant digits."""
        cols = [f"x{j + 1}" for j in range(self.dim)]
        data = self.points
        if self.intrinsic is not None:
            cols.append("t")
            data = np.column_stack([data, self.intrinsic])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(cols), comments="")

    @classmethod
    def from_csv(cls, path) -> "PointCloud":
        """Read a cloud written by :meth:`to_csv` (header row required)."""
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise FormatError(f"cannot read {path}: {exc}") from None
        header, _, body = text.partition("\n")
        cols = [c.strip() for c in header.split(",")]
        has_t = cols[-1] == "t"
        xcols = cols[:-1] if has_t else cols
        if not xcols or xcols != [f"x{j + 1}" for j in range(len(xcols))]:
            raise FormatError(f"{path}: header must be x1..xm with optional t, got {header!r}")
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
        if data.size == 0 or data.shape[1] != len(cols):
            raise FormatError(f"{path}: expected {len(cols)} columns per row")
        if has_t:
            return cls(data[:, :-1], data[:, -1])
        return cls(data)


@dataclass(frozen=True, eq=False)
class BandwidthProfile:
    """Per-point kNN radius ``r_hat`` and its rescaling ``rho_hat``.

    ``rho_hat = r_hat * (k / (alpha_d N))^(-1/d)`` and
    ``r_k = (k / (alpha_d N))^(2/d)``, so ``sqrt(r_k) * rho_hat == r_hat``.
    """

    r_hat: np.ndarray
    rho_hat: np.ndarray
    k: int
    n: int
    d: int
    r_k: float

    @classmethod
    def from_radii(cls, r_hat, k: int, n: int, d: int) -> "BandwidthProfile":
        r_hat = np.asarray(r_hat, dtype=float)
        if d < 1:
            raise DomainError(f"dimension must be >= 1, got {d}")
        _check_k(k, n, allow_n=False)
        ratio = k / (unit_ball_volume(d) * n)
        return cls(r_hat, r_hat * ratio ** (-1.0 / d), k, n, d, ratio ** (2.0 / d))


def _check_k(k, n, allow_n):
    if int(k) != k or k < 1 or k > n or (k == n and not allow_n):
        bound = "N" if allow_n else "N - 1"
        raise ParameterError(f"k must satisfy 1 <= k <= {bound} (N = {n}), got {k}")


def _as_queries(query, dim):
    q = np.ascontiguousarray(query, dtype=float)
    if q.ndim <= 1:
        q = q.reshape(-1, dim) if q.size == dim else q.reshape(-1, 1)
    if q.shape[1] != dim:
        raise FormatError(f"query dimension {q.shape[1]} does not match cloud dimension {dim}")
    if not np.all(np.isfinite(q)):
        raise DomainError("query coordinates must be finite")
    return q


def _blocks(nq, width):
    step = max(1, _BLOCK_ENTRIES // max(1, width))
    for s in range(0, nq, step):
        yield slice(s, min(nq, s + step))


def _indexed_kth_sqdist(cloud: PointCloud, Q: np.ndarray, k: int, threads: int):
    out = np.empty(Q.shape[0])
    for sl in _blocks(Q.shape[0], 2 * k):
        out[sl] = _indexed_kth_block(cloud, Q[sl], k, threads)
    return out


def _indexed_kth_block(cloud, Q, k, threads):
    X, n = cloud.points, cloud.n
    out = np.empty(Q.shape[0])
    todo = np.arange(Q.shape[0])
    kq = min(n, k + max(8, k // 8))
    while todo.size:
        dist, idx = cloud.tree.query(Q[todo], k=kq, workers=threads)
        dist = dist.reshape(todo.size, kq)
        idx = np.ascontiguousarray(idx.reshape(todo.size, kq), dtype=np.int64)
        d2 = _backend.core.candidate_sqdist(X, np.ascontiguousarray(Q[todo]), idx, threads)
        kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
        if kq == n:
            out[todo] = kth
            break
        # every point outside the candidate set is provably farther than the k-th
        ok = dist[:, -1] > np.sqrt(kth) * (1.0 + _TREE_SLACK)
        out[todo[ok]] = kth[ok]
        todo = todo[~ok]
        kq = min(n, 2 * kq)
    return out


def _auto_method(cloud, k):
    # both methods are exact; tree candidates only pay off for small k / N
    return "indexed" if cloud.n > 2000 and 20 * k < cloud.n and cloud.dim <= 8 else "brute"


def knn_query(cloud: PointCloud, queries, k: int, method: str = "auto") -> np.ndarray:
    """kNN radius at arbitrary query points (cloud points at zero distance count)."""
    _check_k(k, cloud.n, allow_n=True)
    Q = _as_queries(queries, cloud.dim)
    threads = _backend.get_threads()
    if method == "auto":
        method = _auto_method(cloud, k)
    if method == "brute":
        d2 = _backend.core.kth_sqdist(cloud.points, Q, int(k), threads)
    elif method == "indexed":
        d2 = _indexed_kth_sqdist(cloud, Q, int(k), threads)
    else:
        raise ParameterError(f"method must be one of {METHODS}, got {method!r}")
    return np.sqrt(d2)


def knn_distance(cloud: PointCloud, query, k: int, method: str = "auto") -> float:
    """Smallest radius around ``query`` that contains at least ``k`` cloud points.

    Examples
    --------
    >>> cloud = PointCloud([0.0, 1.0, 3.0, 7.0])
    >>> knn_distance(cloud, [2.0], 1)
    1.0
    """
    q = _as_queries(query, cloud.dim)
    if q.shape[0] != 1:
        raise FormatError("knn_distance takes a single query point")
    return float(knn_query(cloud, q, k, method)[0])


def knn_all(cloud: PointCloud, k: int, method: str = "auto") -> np.ndarray:
    """kNN radius at every cloud point, with the point itself counted."""
    _check_k(k, cloud.n, allow_n=False)
    return knn_query(cloud, cloud.points, k, method)


def bandwidth_profile(cloud: PointCloud, k: int, d: int, method: str = "auto") -> BandwidthProfile:
    """Empirical bandwidth profile of ``cloud`` for intrinsic dimension ``d``."""
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d}")
    return BandwidthProfile.from_radii(knn_all(cloud, k, method), k, cloud.n, d)


def weighted_knn_distance(cloud: PointCloud, weights, queries, mass: float,
                          method: str = "auto") -> np.ndarray:
    """Smallest ``r`` with ``sum_j weights_j * 1[|q - x_j| <= r] >= mass``.

    This is the kNN radius of a weighted point set, e.g. an even grid whose
    nodes carry the expected number of samples in their cell. ``"brute"``
    runs a weighted selection over all distances; ``"indexed"`` accumulates
    sorted kd-tree candidates. ``"auto"`` prefers the compiled brute force.
    The two agree up to the summation order of the weights.
    """
    w = np.ascontiguousarray(weights, dtype=float)
    if w.shape != (cloud.n,) or np.any(~(w > 0)):
        raise DomainError("weights must be positive, one per cloud point")
    if not 0 < mass <= w.sum():
        raise ParameterError(f"mass must lie in (0, {w.sum()}], got {mass}")
    Q = _as_queries(queries, cloud.dim)
    if method == "auto":
        method = "brute" if _backend.COMPILED else "indexed"
    if method == "brute":
        d2 = _backend.core.weighted_kth_sqdist(cloud.points, Q, w, float(mass), _backend.get_threads())
        return np.sqrt(d2)
    if method != "indexed":
        raise ParameterError(f"method must be one of {METHODS}, got {method!r}")
    kq = min(cloud.n, int(math.ceil(mass / w.min())) + 2)
    out = np.empty(Q.shape[0])
    for sl in _blocks(Q.shape[0], 2 * kq):
        out[sl] = _weighted_block(cloud, w, Q[sl], mass, kq)
    return out


def _weighted_block(cloud, w, Q, mass, kq):
    threads = _backend.get_threads()
    n = cloud.n
    out = np.empty(Q.shape[0])
    todo = np.arange(Q.shape[0])
    while todo.size:
        dist, idx = cloud.tree.query(Q[todo], k=kq, workers=threads)
        dist = dist.reshape(todo.size, kq)
        idx = np.ascontiguousarray(idx.reshape(todo.size, kq), dtype=np.int64)
        d2 = _backend.core.candidate_sqdist(cloud.points, np.ascontiguousarray(Q[todo]), idx, threads)
        order = np.argsort(d2, axis=1, kind="stable")
        d2s = np.take_along_axis(d2, order, 1)
        cum = np.cumsum(w[np.take_along_axis(idx, order, 1)], axis=1)
        hit = cum >= mass
        reached = hit[:, -1]
        j = np.where(reached, np.argmax(hit, axis=1), kq - 1)
        val = d2s[np.arange(todo.size), j]
        if kq == n:
            ok = np.ones(todo.size, bool)
        else:
            ok = reached & (dist[:, -1] > np.sqrt(val) * (1.0 + _TREE_SLACK))
        out[todo[ok]] = np.sqrt(val[ok])
        todo = todo[~ok]
        kq = min(n, 2 * kq)
    return out

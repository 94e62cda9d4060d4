"""Pure numpy implementation of the compiled kernels in ``_core.pyx``.

Squared distances use the same column-by-column accumulation, so selection
results match the compiled module bit for bit. Affinity values may differ in
the last ulp where the platform ``exp`` differs from numpy's.
"""

import numpy as np

PHI_CODES = {"min": 0, "max": 1, "geo": 2, "mean": 3, "sqmean": 4}
_MAX_EXPONENT = 690.0
# rows per block when materializing query-by-point distance matrices
_BLOCK_BYTES = 1 << 25


def _sqdist_block(X, Q):
    acc = np.zeros((Q.shape[0], X.shape[0]))
    for c in range(X.shape[1]):
        diff = X[:, c][None, :] - Q[:, c][:, None]
        acc += diff * diff
    return acc


def _phi(rule, u, v):
    if rule == 0:
        return np.minimum(u, v)
    if rule == 1:
        return np.maximum(u, v)
    if rule == 2:
        return np.sqrt(u * v)
    if rule == 3:
        return (u + v) * 0.5
    return np.sqrt((u * u + v * v) * 0.5)


def _k0(kernel, eta, support):
    if kernel == 1:
        return (eta <= support).astype(float)
    x = eta * 0.25
    return np.where(x >= _MAX_EXPONENT, 0.0, np.exp(-np.minimum(x, _MAX_EXPONENT)))


def kth_sqdist(X, Q, k, threads=1):
    n = X.shape[0]
    step = max(1, _BLOCK_BYTES // (8 * n))
    out = np.empty(Q.shape[0])
    for s in range(0, Q.shape[0], step):
        block = _sqdist_block(X, Q[s:s + step])
        out[s:s + step] = np.partition(block, k - 1, axis=1)[:, k - 1]
    return out


def candidate_sqdist(X, Q, idx, threads=1):
    n = X.shape[0]
    valid = (idx >= 0) & (idx < n)
    safe = np.where(valid, idx, 0)
    acc = np.zeros(idx.shape)
    for c in range(X.shape[1]):
        diff = X[safe, c] - Q[:, c][:, None]
        acc += diff * diff
    acc[~valid] = np.inf
    return acc


def dense_affinity(X, bw, kernel, support, rule, scale, prefactor, norm_scale,
                   normalized, threads=1):
    n = X.shape[0]
    W = np.empty((n, n))
    step = max(1, _BLOCK_BYTES // (8 * n))
    for s in range(0, n, step):
        rows = slice(s, min(n, s + step))
        d2 = _sqdist_block(X, X[rows])
        ph = _phi(rule, bw[rows][:, None], bw[None, :])
        ph2 = ph * ph
        val = prefactor * _k0(kernel, d2 / (scale * ph2), support)
        if normalized:
            val = val / (norm_scale * ph2)
        W[rows] = val
    # mirror the upper triangle so the result is exactly symmetric
    iu = np.triu_indices(n, 1)
    W[(iu[1], iu[0])] = W[iu]
    return W


def query_weights(X, q, bw, bw0, kernel, support, rule, scale, norm_scale,
                  normalized):
    d2 = _sqdist_block(X, q[None, :])[0]
    ph = _phi(rule, bw0, bw)
    ph2 = ph * ph
    val = _k0(kernel, d2 / (scale * ph2), support)
    if normalized:
        val = val / (norm_scale * ph2)
    return val


def weighted_kth_sqdist(X, Q, w, mass, threads=1):
    n = X.shape[0]
    step = max(1, _BLOCK_BYTES // (8 * n))
    out = np.empty(Q.shape[0])
    for s in range(0, Q.shape[0], step):
        block = _sqdist_block(X, Q[s:s + step])
        order = np.argsort(block, axis=1, kind="stable")
        cum = np.cumsum(w[order], axis=1)
        hit = cum >= mass
        # rounding can leave the full sum a hair below mass; take the farthest point
        j = np.where(hit.any(axis=1), np.argmax(hit, axis=1), n - 1)
        out[s:s + step] = block[np.arange(block.shape[0]), order[np.arange(block.shape[0]), j]]
    return out

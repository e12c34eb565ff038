"""Inner loops for the sandwich estimators and leverages.

Every kernel exists twice: a vectorised numpy version and a numba ``@njit``
version with explicit loops. The numba path is used when numba imports and
``YFWL_DISABLE_NUMBA`` is unset (or ``0``); otherwise the numpy path is used.
Both namespaces stay importable so the two can be compared directly::

    from yfwl import _kernels
    _kernels.numpy_kernels.hac_meat(scores, weights)
    _kernels.numba_kernels.hac_meat(scores, weights)   # None if numba missing

All kernels take C-contiguous float64 arrays and never modify their inputs.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

NUMBA_AVAILABLE = numba is not None
_DISABLED = os.environ.get("YFWL_DISABLE_NUMBA", "").strip().lower() not in {"", "0", "false", "no"}
USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# numpy reference path
# --------------------------------------------------------------------------


def _np_weighted_gram(x, d):
    """X' diag(d) X."""
    return (x * d[:, None]).T @ x


def _np_row_quadratic(x, m):
    """x_i' M x_i for every row i."""
    return np.einsum("ij,ij->i", x @ m, x)


def _np_block_leverage(w2, w1, w11, w12, w22):
    h = np.einsum("ij,ij->i", w2 @ w11, w2)
    h += 2.0 * np.einsum("ij,ij->i", w2 @ w12, w1)
    h += np.einsum("ij,ij->i", w1 @ w22, w1)
    return h


def _np_hac_meat(scores, weights):
    """sum_{|i-j|<=L} w_|i-j| s_i s_j' for time-ordered score rows s_i."""
    meat = weights[0] * (scores.T @ scores)
    for lag in range(1, weights.shape[0]):
        gamma = scores[lag:].T @ scores[:-lag]
        meat += weights[lag] * (gamma + gamma.T)
    return meat


def _np_cluster_meat(scores, codes, n_clusters):
    sums = np.zeros((n_clusters, scores.shape[1]))
    np.add.at(sums, codes, scores)
    return sums.T @ sums


numpy_kernels = SimpleNamespace(
    weighted_gram=_np_weighted_gram,
    row_quadratic=_np_row_quadratic,
    block_leverage=_np_block_leverage,
    hac_meat=_np_hac_meat,
    cluster_meat=_np_cluster_meat,
)


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

if NUMBA_AVAILABLE:
    _njit = numba.njit(cache=True, nogil=True)

    @_njit
    def _nb_weighted_gram(x, d):
        n, k = x.shape
        out = np.zeros((k, k))
        for i in range(n):
            di = d[i]
            for a in range(k):
                xa = x[i, a] * di
                for b in range(a + 1):
                    out[a, b] += xa * x[i, b]
        for a in range(k):
            for b in range(a):
                out[b, a] = out[a, b]
        return out

    @_njit
    def _nb_row_quadratic(x, m):
        n, k = x.shape
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for a in range(k):
                xa = x[i, a]
                row = 0.0
                for b in range(k):
                    row += m[a, b] * x[i, b]
                acc += xa * row
            out[i] = acc
        return out

    @_njit
    def _nb_block_leverage(w2, w1, w11, w12, w22):
        n, k2 = w2.shape
        k1 = w1.shape[1]
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for a in range(k2):
                t11 = 0.0
                for b in range(k2):
                    t11 += w11[a, b] * w2[i, b]
                t12 = 0.0
                for b in range(k1):
                    t12 += w12[a, b] * w1[i, b]
                acc += w2[i, a] * (t11 + 2.0 * t12)
            for a in range(k1):
                t22 = 0.0
                for b in range(k1):
                    t22 += w22[a, b] * w1[i, b]
                acc += w1[i, a] * t22
            out[i] = acc
        return out

    @_njit
    def _nb_hac_meat(scores, weights):
        n, k = scores.shape
        out = np.zeros((k, k))
        w0 = weights[0]
        for i in range(n):
            for a in range(k):
                sa = w0 * scores[i, a]
                for b in range(k):
                    out[a, b] += sa * scores[i, b]
        gamma = np.empty((k, k))
        for lag in range(1, weights.shape[0]):
            w = weights[lag]
            if w == 0.0:
                continue
            gamma[:, :] = 0.0
            for i in range(lag, n):
                j = i - lag
                for a in range(k):
                    sia = scores[i, a]
                    for b in range(k):
                        gamma[a, b] += sia * scores[j, b]
            for a in range(k):
                for b in range(k):
                    out[a, b] += w * (gamma[a, b] + gamma[b, a])
        return out

    @_njit
    def _nb_cluster_meat(scores, codes, n_clusters):
        n, k = scores.shape
        sums = np.zeros((n_clusters, k))
        for i in range(n):
            g = codes[i]
            for a in range(k):
                sums[g, a] += scores[i, a]
        out = np.zeros((k, k))
        for g in range(n_clusters):
            for a in range(k):
                sa = sums[g, a]
                for b in range(a + 1):
                    out[a, b] += sa * sums[g, b]
        for a in range(k):
            for b in range(a):
                out[b, a] = out[a, b]
        return out

    numba_kernels = SimpleNamespace(
        weighted_gram=_nb_weighted_gram,
        row_quadratic=_nb_row_quadratic,
        block_leverage=_nb_block_leverage,
        hac_meat=_nb_hac_meat,
        cluster_meat=_nb_cluster_meat,
    )
else:  # pragma: no cover
    numba_kernels = None

active = numba_kernels if USE_NUMBA else numpy_kernels


def warmup() -> None:
    """Trigger JIT compilation of every numba kernel on a tiny input."""
    if numba_kernels is None:
        return
    x = np.ones((3, 2))
    d = np.ones(3)
    m = np.eye(2)
    numba_kernels.weighted_gram(x, d)
    numba_kernels.row_quadratic(x, m)
    numba_kernels.block_leverage(x, x, m, m, m)
    numba_kernels.hac_meat(x, np.ones(2))
    numba_kernels.cluster_meat(x, np.zeros(3, dtype=np.int64), 1)

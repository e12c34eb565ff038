import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from yfwl import _kernels

needs_numba = pytest.mark.skipif(_kernels.numba_kernels is None, reason="numba not installed")


def _inputs(seed, n, k, k2, lags, g):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, k))
    w2 = rng.standard_normal((n, k2))
    a = rng.standard_normal((k, k))
    b = rng.standard_normal((k2, k2))
    return {
        "weighted_gram": (x, rng.uniform(0, 2, n)),
        "row_quadratic": (x, a + a.T),
        "block_leverage": (w2, x, b + b.T, rng.standard_normal((k2, k)), a + a.T),
        "hac_meat": (x, 1.0 - np.arange(lags + 1) / (lags + 1.0)),
        "cluster_meat": (x, rng.integers(0, g, n).astype(np.int64), g),
    }


def test_numpy_kernels_against_definitions():
    cases = _inputs(0, 12, 3, 2, 2, 4)
    x, d = cases["weighted_gram"]
    np.testing.assert_allclose(_kernels.numpy_kernels.weighted_gram(x, d), x.T @ np.diag(d) @ x, rtol=1e-13)
    x, m = cases["row_quadratic"]
    np.testing.assert_allclose(_kernels.numpy_kernels.row_quadratic(x, m), np.diag(x @ m @ x.T), rtol=1e-12)
    w2, w1, w11, w12, w22 = cases["block_leverage"]
    big = np.block([[w11, w12], [w12.T, w22]])
    z = np.hstack([w2, w1])
    np.testing.assert_allclose(
        _kernels.numpy_kernels.block_leverage(w2, w1, w11, w12, w22), np.diag(z @ big @ z.T), rtol=1e-12
    )
    x, w = cases["hac_meat"]
    n = x.shape[0]
    lag = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    kernel = np.where(lag < len(w), w[np.minimum(lag, len(w) - 1)], 0.0)
    np.testing.assert_allclose(_kernels.numpy_kernels.hac_meat(x, w), x.T @ kernel @ x, rtol=1e-12)
    x, codes, g = cases["cluster_meat"]
    same = (codes[:, None] == codes[None, :]).astype(float)
    np.testing.assert_allclose(_kernels.numpy_kernels.cluster_meat(x, codes, g), x.T @ same @ x, rtol=1e-12)


@needs_numba
@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(2, 60),
    k=st.integers(1, 6),
    k2=st.integers(1, 5),
    lags=st.integers(0, 5),
    g=st.integers(1, 8),
)
def test_backends_agree(seed, n, k, k2, lags, g):
    lags = min(lags, n - 1)
    for name, args in _inputs(seed, n, k, k2, lags, g).items():
        ref = getattr(_kernels.numpy_kernels, name)(*args)
        got = getattr(_kernels.numba_kernels, name)(*args)
        np.testing.assert_allclose(got, ref, rtol=1e-11, atol=1e-11 * (1 + np.max(np.abs(ref))), err_msg=name)


def test_active_backend_is_consistent():
    assert _kernels.BACKEND in {"numpy", "numba"}
    expected = _kernels.numba_kernels if _kernels.USE_NUMBA else _kernels.numpy_kernels
    assert _kernels.active is expected
    _kernels.warmup()


@pytest.mark.parametrize("flag, backend", [("1", "numpy"), ("0", None)])
def test_env_flag_selects_backend(flag, backend):
    env = dict(os.environ, YFWL_DISABLE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from yfwl import _kernels; print(_kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    ).stdout.strip()
    if backend is None:
        backend = "numba" if _kernels.NUMBA_AVAILABLE else "numpy"
    assert out == backend

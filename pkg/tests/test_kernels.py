import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from rssiloc import _kernels

pytestmark = pytest.mark.skipif(_kernels.NUMBA_KERNELS is None, reason="numba not installed")


def random_problem(seed, nq=200, ne=40, m=6, missing=0.15, coarse=False):
    rng = np.random.default_rng(seed)
    if coarse:
        q = rng.integers(-70, -60, size=(nq, m)).astype(float)
        e = rng.integers(-70, -60, size=(ne, m)).astype(float)
    else:
        q = rng.uniform(-100, -30, size=(nq, m))
        e = rng.uniform(-100, -30, size=(ne, m))
    q[rng.random(q.shape) < missing] = np.nan
    e[rng.random(e.shape) < missing] = np.nan
    q[: nq // 10] = e[rng.integers(0, ne, size=nq // 10)]
    pos = rng.uniform(0, 10, size=(ne, 2))
    return q, e, pos


@pytest.mark.parametrize("norm", [_kernels.CHEBYSHEV, _kernels.EUCLIDEAN])
@pytest.mark.parametrize("coarse", [False, True])
def test_distance_matrix_agrees(norm, coarse):
    q, e, _ = random_problem(1, coarse=coarse)
    d1, o1 = _kernels.NUMBA_KERNELS.distance_matrix(q, e, norm)
    d2, o2 = _kernels.NUMPY_KERNELS.distance_matrix(q, e, norm)
    np.testing.assert_array_equal(o1, o2)
    np.testing.assert_allclose(d1, d2, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("weighted", [False, True])
@pytest.mark.parametrize("k", [1, 3, 7])
@pytest.mark.parametrize("coarse", [False, True])
@pytest.mark.parametrize("min_common", [3, 6])
def test_combine_agrees(weighted, k, coarse, min_common):
    q, e, pos = random_problem(2, coarse=coarse)
    dist, overlap = _kernels.NUMPY_KERNELS.distance_matrix(q, e, _kernels.EUCLIDEAN)
    a = _kernels.NUMBA_KERNELS.combine(dist, overlap, pos, k, min_common, weighted, 1e-9)
    b = _kernels.NUMPY_KERNELS.combine(dist, overlap, pos, k, min_common, weighted, 1e-9)
    np.testing.assert_array_equal(a[4], b[4])
    ok = a[4] == 0
    if min_common == 6 and k > 1:
        assert ok.any() and (~ok).any()
    np.testing.assert_array_equal(a[1][ok], b[1][ok])
    np.testing.assert_allclose(a[0][ok], b[0][ok], rtol=0, atol=1e-12)
    np.testing.assert_allclose(a[3][ok], b[3][ok], rtol=0, atol=1e-12)


def test_env_flag_selects_numpy():
    env = dict(os.environ, RSSILOC_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "import rssiloc; print(rssiloc.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_default_backend_is_numba():
    if os.environ.get("RSSILOC_DISABLE_NUMBA"):
        pytest.skip("numba disabled in this environment")
    assert importlib.import_module("rssiloc").BACKEND == "numba"

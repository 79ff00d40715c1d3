import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from condrisk import kernels

compiled = kernels.compiled_backend
python = kernels.python_backend
needs_compiled = pytest.mark.skipif(compiled is None, reason="extension not built")


@needs_compiled
@given(st.integers(1, 60), st.integers(1, 20), st.integers(0, 10_000),
       st.floats(0.05, 1.0), st.sampled_from([kernels.TRIWEIGHT, kernels.EPANECHNIKOV, kernels.GAUSSIAN]))
@settings(max_examples=60, deadline=None)
def test_local_linear_weights_agree(n, m, seed, h, kind):
    rng = np.random.default_rng(seed)
    locs = rng.uniform(size=(n, 2))
    targets = rng.uniform(size=(m, 2))
    H = np.array([[h, 0.2 * h], [0.2 * h, 0.8 * h]])
    args = (targets, locs, np.linalg.inv(H), float(np.linalg.det(H)), kind)
    Sp, sp = python.local_linear_weights(*args)
    Sc, sc = compiled.local_linear_weights(*args)
    np.testing.assert_array_equal(sp, sc)
    ok = sp == kernels.OK
    np.testing.assert_allclose(Sc[ok], Sp[ok], rtol=1e-9, atol=1e-11)
    # ridged rows solve a nearly singular system; agreement is looser
    np.testing.assert_allclose(Sc[~ok], Sp[~ok], rtol=1e-6, atol=1e-6)


@needs_compiled
@given(st.integers(2, 200), st.integers(1, 40), st.integers(0, 10_000), st.floats(0.01, 0.8))
@settings(max_examples=60, deadline=None)
def test_lag_moments_agree(n, q, seed, h):
    rng = np.random.default_rng(seed)
    lags = np.sort(rng.uniform(0, 1, n))
    counts = rng.integers(1, 5, n).astype(float)
    sums = counts * rng.chisquare(2, n)
    queries = rng.uniform(0, 1, q)
    for kind in (kernels.TRIWEIGHT, kernels.GAUSSIAN):
        a = python.lag_moments(lags, counts, sums, queries, h, kind)
        b = compiled.lag_moments(lags, counts, sums, queries, h, kind)
        np.testing.assert_allclose(b, a, rtol=1e-9, atol=1e-9 * np.abs(a).max())


def test_backend_selection_env(monkeypatch):
    import importlib
    monkeypatch.setenv("CONDRISK_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python" and mod.backend is mod.python_backend
    finally:
        monkeypatch.delenv("CONDRISK_PURE_PYTHON")
        importlib.reload(kernels)


def test_kernel_1d_values():
    assert kernels.kernel_1d(0.0, kernels.TRIWEIGHT) == pytest.approx(35 / 32)
    assert kernels.kernel_1d(0.0, kernels.EPANECHNIKOV) == pytest.approx(0.75)
    assert kernels.kernel_1d(1.0, kernels.TRIWEIGHT) == 0.0
    with pytest.raises(ValueError):
        kernels.kernel_id("box")

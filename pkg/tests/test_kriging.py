import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from condrisk.errors import InputError, SingularSystem
from condrisk.kriging import (KrigingSystem, ordinary_kriging_predict,
                              ordinary_kriging_weights, simple_kriging_predict,
                              simple_kriging_variance)
from condrisk.spatial import cross_distances, pairwise_distances
from condrisk.variogram import MaternParams


def expo(h):
    h = np.asarray(h, dtype=float)
    return np.where(h > 0, 1 - np.exp(-h / 0.3), 0.0)


def nug_expo(h):
    h = np.asarray(h, dtype=float)
    return np.where(h > 0, 0.2 + 0.8 * (1 - np.exp(-h / 0.3)), 0.0)


def test_sk_exact_at_sample_site():
    rng = np.random.default_rng(0)
    locs = rng.uniform(size=(7, 2))
    C = 1 - expo(pairwise_distances(locs))
    delta = rng.normal(size=7)
    sys = KrigingSystem(C, delta)
    assert simple_kriging_predict(sys, locs[3], C[3]) == pytest.approx(delta[3], abs=1e-10)
    assert simple_kriging_variance(sys, locs[3], C[3], 1.0) == pytest.approx(0, abs=1e-10)


def test_sk_one_point_by_hand():
    sys = KrigingSystem([[1.0]], [2.0])
    assert simple_kriging_predict(sys, None, [0.5]) == pytest.approx(1.0)
    assert simple_kriging_variance(sys, None, [0.5], 1.0) == pytest.approx(0.75)


def test_sk_zero_cross_covariance():
    sys = KrigingSystem(np.eye(3), [1.0, 2.0, 3.0])
    assert simple_kriging_predict(sys, None, np.zeros(3)) == 0.0
    assert simple_kriging_variance(sys, None, np.zeros(3), 2.5) == 2.5


@given(st.integers(1, 8), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_sk_matches_dense_solve(n, seed):
    rng = np.random.default_rng(seed)
    locs = rng.uniform(size=(n, 2))
    x0 = rng.uniform(size=(1, 2))
    sd = rng.uniform(0.5, 2, n)
    C = (1 - nug_expo(pairwise_distances(locs))) * np.outer(sd, sd)
    c = (1 - nug_expo(cross_distances(x0, locs)))[0] * sd * 1.3
    delta = rng.normal(size=n)
    want = c @ np.linalg.solve(C, delta)
    sys = KrigingSystem(C, delta)
    assert simple_kriging_predict(sys, x0, c) == pytest.approx(want, abs=1e-10)
    var = 1.69 - c @ np.linalg.solve(C, c)
    assert simple_kriging_variance(sys, x0, c, 1.69) == pytest.approx(max(var, 0), abs=1e-10)


def test_sk_multiple_data_vectors():
    rng = np.random.default_rng(1)
    C = 1 - expo(pairwise_distances(rng.uniform(size=(5, 2))))
    data = rng.normal(size=(5, 3))
    c = rng.uniform(0, 0.5, size=(2, 5))
    out = KrigingSystem(C).predict(c, data)
    np.testing.assert_allclose(out, c @ np.linalg.solve(C, data), atol=1e-12)
    with pytest.raises(InputError):
        KrigingSystem(C).predict(c)
    with pytest.raises(InputError):
        KrigingSystem(C, np.ones(4))


def _ok_oracle(values, gamma, locs, x0):
    n = len(locs)
    A = np.ones((n + 1, n + 1))
    A[:n, :n] = gamma(pairwise_distances(locs))
    A[n, n] = 0
    b = np.append(gamma(cross_distances([x0], locs))[0], 1.0)
    return np.linalg.solve(A, b)[:n] @ values


@given(st.integers(2, 8), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_ok_matches_dense_solve(n, seed):
    rng = np.random.default_rng(seed)
    locs = rng.uniform(size=(n, 2))
    x0 = rng.uniform(size=2)
    v = rng.normal(size=n)
    assert ordinary_kriging_predict(v, nug_expo, locs, x0) == pytest.approx(
        _ok_oracle(v, nug_expo, locs, x0), abs=1e-10)


@given(st.integers(2, 8), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_ok_weights_sum_to_one(n, seed):
    rng = np.random.default_rng(seed)
    w = ordinary_kriging_weights(expo, rng.uniform(size=(n, 2)), rng.uniform(size=(3, 2)))
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-10)


def test_ok_cases():
    rng = np.random.default_rng(2)
    locs = rng.uniform(size=(6, 2))
    assert ordinary_kriging_predict(np.full(6, 4.2), expo, locs, [0.3, 0.3]) == pytest.approx(4.2)
    v = rng.normal(size=6)
    assert ordinary_kriging_predict(v, expo, locs, locs[4]) == pytest.approx(v[4], abs=1e-10)
    two = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert ordinary_kriging_predict([1.0, 3.0], expo, two, [0.5, 0.0]) == pytest.approx(2.0)
    assert ordinary_kriging_predict(v, expo, locs, locs[:2]).shape == (2,)


def test_ok_singular():
    with pytest.raises(SingularSystem):
        ordinary_kriging_weights(lambda h: np.zeros_like(h), np.eye(2), [[0.5, 0.5]])
    with pytest.raises(InputError):
        ordinary_kriging_weights(expo, [[0, 0]], [[1, 1]])


def test_matern_callable_as_variogram():
    locs = np.random.default_rng(3).uniform(size=(5, 2))
    p = MaternParams(0.0, 0.5, 1.0)
    assert ordinary_kriging_predict(np.arange(5.0), p, locs, locs[1]) == pytest.approx(1.0, abs=1e-9)

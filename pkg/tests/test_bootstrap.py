import dataclasses

import numpy as np
import pytest

from condrisk.bootstrap import (CONDITIONAL, UNCONDITIONAL, BootstrapConfig,
                                BootstrapEnsemble, bootstrap_ensemble,
                                conditional_replicate,
                                estimate_conditional_risk,
                                estimate_unconditional_risk,
                                unconditional_replicate, uncorrelated_errors)
from condrisk.errors import ConfigError, DegenerateResiduals
from condrisk.variogram import SBModel, correlation_matrix


def pure_nugget_fit(fit, residuals=None, variance=None):
    nug = SBModel(1.0, np.array([1.0]), np.array([0.0]))
    changes = dict(residual_variogram=nug, variogram=nug)
    if residuals is not None:
        changes["residuals"] = np.asarray(residuals, float)
    if variance is not None:
        changes.update(variance=np.full(fit.n, variance), pilot_variance=np.full(fit.n, variance),
                       variance_targets=np.full(len(fit.targets), variance))
    return dataclasses.replace(fit, **changes)


def test_uncorrelated_errors_hand_case(small_fit):
    f = pure_nugget_fit(small_fit, variance=1.0)
    r = np.zeros(f.n)
    r[:2] = [1.0, 2.0]
    e = uncorrelated_errors(dataclasses.replace(f, residuals=r))
    assert np.mean(e) == pytest.approx(0, abs=1e-12)
    assert np.std(e, ddof=1) == pytest.approx(1, abs=1e-12)
    # two-point version: (1, 2) -> (-1/sqrt 2, 1/sqrt 2)
    two = np.array([1.0, 2.0]) - 1.5
    np.testing.assert_allclose(two / np.std(two, ddof=1), [-0.70710678, 0.70710678], atol=1e-8)


def test_uncorrelated_errors_zero(small_fit):
    with pytest.raises(DegenerateResiduals):
        uncorrelated_errors(dataclasses.replace(small_fit, residuals=np.zeros(small_fit.n)))


def test_uncorrelated_errors_are_white(small_fit):
    e = uncorrelated_errors(small_fit)
    R0 = correlation_matrix(small_fit.sample.coords, small_fit.residual_correlogram)
    u = small_fit.residuals / np.sqrt(small_fit.pilot_variance)
    L = np.linalg.cholesky(R0)
    raw = np.linalg.solve(L, u)
    np.testing.assert_allclose(e, (raw - raw.mean()) / np.std(raw, ddof=1), atol=1e-8)


def test_unconditional_pure_nugget_is_resampling(small_fit):
    f = pure_nugget_fit(small_fit, variance=1.0)
    f = dataclasses.replace(f, trend=np.zeros(f.n), trend_targets=np.zeros(3))
    e = np.arange(10.0)
    rep = unconditional_replicate(f, f.targets, e, 0)
    assert set(rep) <= set(e)
    assert len(rep) == f.n + 3


def test_unconditional_zero_sd_returns_trend(small_fit):
    f = dataclasses.replace(small_fit, variance=np.zeros(small_fit.n),
                            variance_targets=np.zeros(3))
    rep = unconditional_replicate(f, f.targets, np.arange(5.0), 1)
    np.testing.assert_array_equal(rep, np.concatenate([f.trend, f.trend_targets]))


def test_conditional_replicate_with_observed_residuals(small_fit):
    f = small_fit
    unc = np.concatenate([f.trend + f.residuals, f.trend_targets + 0.3])
    out = conditional_replicate(f, f.targets, unc)
    # correction term vanishes: mu + delta_hat + (0.3 - W r)... reduces to mu + 0.3
    np.testing.assert_allclose(out, f.trend_targets + 0.3, atol=1e-10)


def test_conditional_replicate_honours_data(small_fit):
    f = small_fit
    rng = np.random.default_rng(0)
    unc = rng.normal(size=f.n + 2)
    tg = np.vstack([f.sample.coords[5], [0.4, 0.6]])
    out = conditional_replicate(f, tg, unc)
    assert out[0] == f.sample.values[5]


def test_ensemble_shapes_and_risk(small_fit):
    ens = bootstrap_ensemble(small_fit, config=BootstrapConfig(B=40, seed=3))
    assert ens.replicates.shape == (40, 3) and ens.B == 40
    rm = ens.risk(np.median(small_fit.sample.values))
    assert np.all(np.isin(rm.prob * 40, np.arange(41)))
    assert np.all(ens.risk(-1e9).prob == 1.0)


def test_risk_hand_case():
    ens = BootstrapEnsemble(np.zeros((1, 2)), np.array([[1.2], [3.4], [2.5], [0.9]]), CONDITIONAL)
    assert ens.risk(2.0).prob[0] == 0.5


def test_risk_list_of_thresholds(small_fit):
    cfg = BootstrapConfig(B=20, seed=1)
    maps = estimate_conditional_risk(small_fit, c=[1.0, 2.0], config=cfg)
    assert [m.c for m in maps] == [1.0, 2.0]
    assert np.all(maps[0].prob >= maps[1].prob)
    single = estimate_unconditional_risk(small_fit, c=1.5, config=cfg)
    assert single.mode == UNCONDITIONAL


def test_seed_and_thread_determinism(small_fit):
    a = bootstrap_ensemble(small_fit, config=BootstrapConfig(B=70, seed=9))
    b = bootstrap_ensemble(small_fit, config=BootstrapConfig(B=70, seed=9, threads=3))
    c = bootstrap_ensemble(small_fit, config=BootstrapConfig(B=70, seed=10))
    assert np.array_equal(a.replicates, b.replicates)
    assert not np.array_equal(a.replicates, c.replicates)


def test_prefix_stable_in_B(small_fit):
    a = bootstrap_ensemble(small_fit, config=BootstrapConfig(B=40, seed=2))
    b = bootstrap_ensemble(small_fit, config=BootstrapConfig(B=80, seed=2))
    # equal up to rounding: the last block has a different row count
    np.testing.assert_allclose(a.replicates, b.replicates[:40], rtol=0, atol=1e-12)


def test_keep_sample_reproduces_data(small_fit):
    ens = bootstrap_ensemble(small_fit, config=BootstrapConfig(B=8), keep_sample=True)
    np.testing.assert_allclose(ens.sample_values, np.broadcast_to(small_fit.sample.values, (8, small_fit.n)),
                               atol=1e-8)


def test_config_validation(small_fit):
    with pytest.raises(ConfigError):
        BootstrapConfig(B=0)
    with pytest.raises(ConfigError):
        BootstrapConfig(threads=0)
    with pytest.raises(ConfigError):
        bootstrap_ensemble(small_fit, mode="both")

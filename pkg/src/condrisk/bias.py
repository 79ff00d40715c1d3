"""Residual-bias correction and the joint trend/variance/variogram fit.

Detrending with a linear smoother ``S`` shrinks the residual variability:
``Var(r) = (I - S) Sigma (I - S)'``. The bias matrix

    B = D^{-1} (S Sigma S' - Sigma S' - S Sigma) D^{-1}

quantifies it, and the fit iterates between plugging the current variance
and variogram estimates into ``B`` and re-estimating both from debiased
squared residuals and semivariances.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import smoothing as sm
from .spatial import SpatialSample, as_locations
from .variogram import (PilotVariogram, SBModel, SemivarianceCloud,
                        correlation_matrix, fit_shapiro_botha, pilot_variogram,
                        rescale_to_unit_sill, semivariance_cloud)

log = logging.getLogger(__name__)

AUTO = "auto"


def is_auto(value) -> bool:
    return isinstance(value, str) and value == AUTO


def residual_covariance(S, Sigma) -> np.ndarray:
    """Covariance of ``r = (I - S) Y`` when ``Var(Y) = Sigma``."""
    S = np.asarray(S, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    SSig = S @ Sigma
    out = Sigma + SSig @ S.T - SSig.T - SSig
    return 0.5 * (out + out.T)


def _as_sd(D):
    D = np.asarray(D, dtype=float)
    return np.diag(D).copy() if D.ndim == 2 else D


def bias_matrix(D, S, Sigma) -> np.ndarray:
    """``D^{-1}(S Sigma S' - Sigma S' - S Sigma)D^{-1}``.

    ``D`` holds the standard deviations, as a vector or diagonal matrix.
    """
    d = _as_sd(D)
    S = np.asarray(S, dtype=float)
    SSig = S @ np.asarray(Sigma, dtype=float)
    inner = SSig @ S.T - SSig.T - SSig
    B = inner / np.outer(d, d)
    return 0.5 * (B + B.T)


def squared_residual_cov_normal(Sigma_r) -> np.ndarray:
    """Covariance of squared zero-mean Gaussian residuals: ``2 Sigma_r * Sigma_r``."""
    Sigma_r = np.asarray(Sigma_r, dtype=float)
    return 2.0 * Sigma_r * Sigma_r


def cov_to_corr(C) -> np.ndarray:
    sd = np.sqrt(np.clip(np.diag(C), 1e-300, None))
    R = C / np.outer(sd, sd)
    np.fill_diagonal(R, 1.0)
    return R


def debias_factor(B, floor=0.1) -> np.ndarray:
    """``1 + b_ii`` floored at ``floor``."""
    return np.maximum(1.0 + np.diag(B), floor)


def corrected_variance(locs, squared_residuals, B, H2, targets=None,
                       floor=0.0, b_floor=0.1, S=None, kernel="triweight") -> np.ndarray:
    """Variance smooth of ``r_i^2 / (1 + b_ii)``."""
    r2 = np.asarray(squared_residuals, dtype=float) / debias_factor(B, b_floor)
    return sm.variance_pilot(locs, r2, H2, targets, floor=floor, kernel=kernel, S=S)


def corrected_cloud(cloud: SemivarianceCloud, B) -> SemivarianceCloud:
    """Replace each squared difference by ``sqdiff - b_ii - b_jj + 2 b_ij``.

    Corrected values may be negative.
    """
    B = np.asarray(B, dtype=float)
    i, j = cloud.i, cloud.j
    diag = np.diag(B)
    return cloud.with_sqdiff(cloud.sqdiff - diag[i] - diag[j] + 2.0 * B[i, j])


# --- joint fit -------------------------------------------------------------

@dataclass(frozen=True)
class FitConfig:
    """Bandwidths and iteration controls for :func:`fit_components`.

    ``H`` and ``H2`` are 2x2 bandwidth matrices (or scalars) or ``"auto"``
    for CGCV selection; ``h3`` is a lag bandwidth or ``"auto"`` for
    leave-pair-out cross-validation.

    ``var_floor`` sets the variance floor as a fraction of the mean squared
    residual. ``relax`` is the weight of the new iterate in the geometric
    average used for the variance update (1 disables damping). Pilot and
    corrected variograms use pairs up to ``max_lag_fraction`` times the
    largest distance. With ``monotone`` the Shapiro-Botha fits use the
    nondecreasing projection of each pilot variogram.
    """

    H: object = AUTO
    H2: object = AUTO
    h3: object = AUTO
    kernel: str = "triweight"
    max_iter: int = 10
    rtol: float = 1e-3
    b_floor: float = 0.1
    sb_size: int = 50
    var_floor: float = 0.05
    relax: float = 0.5
    max_lag_fraction: float = 0.55
    monotone: bool = True


class Smoothers(NamedTuple):
    """Precomputed smoothing matrices (rows at sample sites and at targets)."""

    S: np.ndarray
    S_targets: np.ndarray
    S2: np.ndarray
    S2_targets: np.ndarray


@dataclass(frozen=True, eq=False)
class FittedComponents:
    sample: SpatialSample
    targets: np.ndarray
    H: np.ndarray
    H2: np.ndarray
    h3: float
    trend: np.ndarray
    trend_targets: np.ndarray
    variance: np.ndarray
    variance_targets: np.ndarray
    pilot_variance: np.ndarray
    residuals: np.ndarray
    std_residuals: np.ndarray
    residual_pilot: PilotVariogram
    residual_variogram: SBModel
    corrected_pilot: PilotVariogram
    variogram: SBModel
    S: np.ndarray = field(repr=False)
    S2: np.ndarray = field(repr=False)
    bias: np.ndarray = field(repr=False)
    iterations: int = 0
    converged: bool = False
    floor: float = 0.0
    b_floor: float = 0.1
    kernel: str = "triweight"

    @property
    def n(self) -> int:
        return self.sample.n

    def components_at(self, targets):
        """Trend and corrected variance at arbitrary ``targets``.

        Returns ``(trend, variance)``; reuses the stored values when
        ``targets`` are the fitted ones.
        """
        targets = as_locations(targets)
        if targets.shape == self.targets.shape and np.array_equal(targets, self.targets):
            return self.trend_targets, self.variance_targets
        if not len(targets):
            return np.empty(0), np.empty(0)
        locs, y = self.sample.coords, self.sample.values
        trend = sm.smoothing_matrix(locs, self.H, targets, self.kernel) @ y
        r2 = self.residuals ** 2 / debias_factor(self.bias, self.b_floor)
        var = sm.variance_pilot(locs, r2, self.H2, targets, floor=self.floor,
                                kernel=self.kernel)
        return trend, var

    @property
    def residual_correlogram(self) -> SBModel:
        """Unit-sill version of the uncorrected residual variogram."""
        return rescale_to_unit_sill(self.residual_variogram)

    @property
    def correlogram(self) -> SBModel:
        """Unit-sill version of the bias-corrected variogram."""
        return rescale_to_unit_sill(self.variogram)


def _select_trend_bandwidth(locs, y, Rhat, init, kernel):
    return sm.select_bandwidth(sm.cgcv_objective(locs, y, Rhat, kernel), init)


def _select_variance_bandwidth(locs, r2, S, Sigma, init, kernel):
    Sigma_r = residual_covariance(S, Sigma)
    Rr2 = cov_to_corr(squared_residual_cov_normal(Sigma_r))
    return sm.select_bandwidth(sm.cgcv_variance_objective(locs, r2, Rr2, kernel), init)


def _pilot_stage(locs, r, S2, H2, y, h3, cfg):
    floor = sm.variance_floor(y, r * r, cfg.var_floor)
    var0 = sm.variance_pilot(locs, r * r, H2, floor=floor, kernel=cfg.kernel, S=S2)
    eps = r / np.sqrt(var0)
    cloud = semivariance_cloud(eps, locs)
    cloud = cloud.within(cfg.max_lag_fraction * cloud.lag.max())
    if is_auto(h3):
        h3 = sm.select_h3_cv(cloud, kernel=cfg.kernel)
    pilot = pilot_variogram(cloud, h3, kernel=cfg.kernel)
    gamma = fit_shapiro_botha(pilot, cfg.sb_size, monotone=cfg.monotone)
    return var0, eps, cloud, float(h3), pilot, gamma


def fit_components(sample: SpatialSample, targets=None, config: FitConfig = None,
                   smoothers: Smoothers = None) -> FittedComponents:
    """Joint nonparametric fit of trend, variance and error variogram.

    Pilot stage: local linear trend, residuals, variance smooth of the
    squared residuals, standardized residuals, semivariance cloud, pilot
    variogram and its Shapiro-Botha fit. With automatic bandwidths the
    pilot stage runs twice: first with uncorrelated-error GCV, then with
    CGCV using the correlation implied by the first pilot variogram.

    Correction stage: bandwidths are held fixed while the bias matrix, the
    debiased variance and the debiased variogram are updated until the
    largest relative change drops below ``config.rtol`` or
    ``config.max_iter`` iterations have run.
    """
    cfg = FitConfig() if config is None else config
    locs = sample.coords
    y = sample.values
    targets = np.empty((0, 2)) if targets is None else as_locations(targets)
    kern = cfg.kernel

    if smoothers is not None:
        H = None if is_auto(cfg.H) else sm.as_bandwidth(cfg.H)
        H2 = None if is_auto(cfg.H2) else sm.as_bandwidth(cfg.H2)
        S, St, S2, S2t = smoothers
        r = y - S @ y
        var0, eps, cloud, h3, pilot0, gamma0 = _pilot_stage(locs, r, S2, H2, y, cfg.h3, cfg)
    else:
        init = sm.default_bandwidth(locs)
        H = (_select_trend_bandwidth(locs, y, None, init, kern)
             if is_auto(cfg.H) else sm.as_bandwidth(cfg.H))
        S = sm.smoothing_matrix(locs, H, kernel=kern)
        r = y - S @ y
        if is_auto(cfg.H2):
            H2 = _select_variance_bandwidth(locs, r * r, S, np.eye(len(y)), init, kern)
        else:
            H2 = sm.as_bandwidth(cfg.H2)
        S2 = sm.smoothing_matrix(locs, H2, kernel=kern)
        var0, eps, cloud, h3, pilot0, gamma0 = _pilot_stage(locs, r, S2, H2, y, cfg.h3, cfg)

        if any(map(is_auto, (cfg.H, cfg.H2, cfg.h3))):
            R0 = correlation_matrix(locs, rescale_to_unit_sill(gamma0))
            if is_auto(cfg.H):
                H = _select_trend_bandwidth(locs, y, R0, H, kern)
                S = sm.smoothing_matrix(locs, H, kernel=kern)
                r = y - S @ y
            if is_auto(cfg.H2):
                d0 = np.sqrt(var0)
                H2 = _select_variance_bandwidth(locs, r * r, S, R0 * np.outer(d0, d0), H2, kern)
                S2 = sm.smoothing_matrix(locs, H2, kernel=kern)
            var0, eps, cloud, h3, pilot0, gamma0 = _pilot_stage(locs, r, S2, H2, y, cfg.h3, cfg)
            log.debug("bandwidths H=%s H2=%s h3=%.4g", H.tolist(), H2.tolist(), h3)
        St = sm.smoothing_matrix(locs, H, targets, kern) if len(targets) else np.empty((0, len(y)))
        S2t = sm.smoothing_matrix(locs, H2, targets, kern) if len(targets) else np.empty((0, len(y)))

    r2 = r * r
    floor = sm.variance_floor(y, r2, cfg.var_floor)
    lag_grid = pilot0.grid
    var, gamma, pilot = var0, gamma0, pilot0
    B = np.zeros((len(y), len(y)))
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        d = np.sqrt(var)
        R = correlation_matrix(locs, rescale_to_unit_sill(gamma))
        B = bias_matrix(d, S, R * np.outer(d, d))
        var_new = corrected_variance(locs, r2, B, H2, floor=floor,
                                     b_floor=cfg.b_floor, S=S2, kernel=kern)
        if cfg.relax < 1.0:
            var_new = var ** (1.0 - cfg.relax) * var_new ** cfg.relax
        cloud_c = corrected_cloud(cloud.with_sqdiff(
            (r[cloud.i] / d[cloud.i] - r[cloud.j] / d[cloud.j]) ** 2), B)
        pilot = pilot_variogram(cloud_c, h3, kernel=kern)
        gamma_new = fit_shapiro_botha(pilot, cfg.sb_size, monotone=cfg.monotone)

        g_old, g_new = gamma(lag_grid), gamma_new(lag_grid)
        change = max(np.max(np.abs(var_new - var)) / np.max(var),
                     np.max(np.abs(g_new - g_old)) / max(np.max(np.abs(g_old)), 1e-12))
        var, gamma = var_new, gamma_new
        log.debug("iteration %d change %.4g", it, change)
        if change < cfg.rtol:
            converged = True
            break

    factor = debias_factor(B, cfg.b_floor)
    var_t = (sm.variance_pilot(locs, r2 / factor, H2, targets, floor=floor,
                               kernel=kern, S=S2t)
             if len(targets) else np.empty(0))
    return FittedComponents(
        sample=sample, targets=targets, H=H, H2=H2, h3=h3,
        trend=y - r, trend_targets=St @ y if len(targets) else np.empty(0),
        variance=var, variance_targets=var_t, pilot_variance=var0,
        residuals=r, std_residuals=eps,
        residual_pilot=pilot0, residual_variogram=gamma0,
        corrected_pilot=pilot, variogram=gamma,
        S=S, S2=S2, bias=B, iterations=it, converged=converged,
        floor=floor, b_floor=cfg.b_floor, kernel=kern)

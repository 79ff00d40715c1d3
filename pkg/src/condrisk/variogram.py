"""Semivariance clouds, pilot and parametric variograms, Shapiro-Botha fits.

All variogram objects are callables ``gamma(lag) -> array`` with
``gamma(0) == 0``; for unit-sill models the correlogram is ``1 - gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize, special

from . import kernels
from .errors import DegenerateCloud, EmptyPilot, InputError, NotPSD, ZeroSill
from .smoothing import local_linear_intercept
from .spatial import as_locations, cross_distances

# relative resolution at which two lags are treated as the same lag
LAG_RESOLUTION = 1e-9


def _group_lags(lags, scale):
    lags = np.asarray(lags, dtype=float)
    keys = np.round(lags * (1.0 / (LAG_RESOLUTION * scale))).astype(np.int64)
    ukeys, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return lags[first], np.asarray(inverse).ravel()


@dataclass(frozen=True)
class SemivarianceCloud:
    """One entry per unordered pair ``i < j``: lag and squared difference."""

    lag: np.ndarray
    sqdiff: np.ndarray
    i: np.ndarray
    j: np.ndarray

    def __len__(self):
        return len(self.lag)

    def within(self, max_lag) -> "SemivarianceCloud":
        keep = self.lag <= max_lag
        return SemivarianceCloud(self.lag[keep], self.sqdiff[keep],
                                 self.i[keep], self.j[keep])

    def with_sqdiff(self, sqdiff) -> "SemivarianceCloud":
        return SemivarianceCloud(self.lag, np.asarray(sqdiff, dtype=float),
                                 self.i, self.j)

    @cached_property
    def _groups(self):
        scale = float(self.lag.max()) if len(self.lag) and self.lag.max() > 0 else 1.0
        return _group_lags(self.lag, scale)

    def compress(self):
        """Group pairs sharing a lag.

        Returns ``(lags, counts, sums, inverse)`` with ``lags`` sorted,
        ``counts``/``sums`` the pair count and total squared difference per
        lag, and ``inverse`` mapping each pair to its group.
        """
        ulags, inverse = self._groups
        counts = np.bincount(inverse, minlength=len(ulags)).astype(float)
        sums = np.bincount(inverse, weights=self.sqdiff, minlength=len(ulags))
        return ulags, counts, sums, inverse


def semivariance_cloud(std_residuals, locs) -> SemivarianceCloud:
    locs = as_locations(locs)
    e = np.asarray(std_residuals, dtype=float)
    if len(e) != len(locs):
        raise InputError("residuals and locations differ in length")
    i, j = np.triu_indices(len(e), 1)
    d = locs[i] - locs[j]
    lag = np.hypot(d[:, 0], d[:, 1])
    return SemivarianceCloud(lag, (e[i] - e[j]) ** 2, i, j)


@dataclass(frozen=True)
class PilotVariogram:
    """Piecewise-linear curve through local linear fits on a lag grid."""

    grid: np.ndarray
    values: np.ndarray
    h3: float = np.nan
    min_lag: float = 0.0

    @property
    def max_lag(self) -> float:
        return float(self.grid[-1])

    @property
    def fit_lags(self) -> np.ndarray:
        """Positive grid lags used by the model fit.

        Below ``min_lag`` (the smallest observed distance) the pilot holds
        the value of the nearest defined window, which pins the fitted
        model's behaviour at the origin (its nugget).
        """
        return self.grid[self.grid > 0]

    def __call__(self, lag):
        lag = np.asarray(lag, dtype=float)
        return np.where(lag > 0, np.interp(lag, self.grid, self.values), 0.0)


def pilot_variogram(cloud: SemivarianceCloud, h3, n_grid=100,
                    kernel="triweight") -> PilotVariogram:
    """Half the local linear fit of squared differences against lag.

    Grid points whose kernel window holds no pairs take the nearest defined
    value; the curve is truncated below at 0.
    """
    if len(cloud) < 2:
        raise DegenerateCloud("semivariance cloud needs at least two pairs")
    ulags, counts, sums, _ = cloud.compress()
    pos = ulags[ulags > 0]
    if len(pos) < 2:
        raise DegenerateCloud("semivariance cloud needs at least two distinct lags")
    grid = np.linspace(0.0, float(ulags[-1]), n_grid)
    mom = kernels.lag_moments(ulags, counts, sums, grid, h3, kernels.kernel_id(kernel))
    fit = 0.5 * local_linear_intercept(*mom.T)
    ok = np.isfinite(fit)
    if not ok.any():
        raise DegenerateCloud(f"lag bandwidth {h3:g} leaves every grid point empty")
    if not ok.all():
        idx = np.nonzero(ok)[0]
        nearest = idx[np.abs(np.arange(n_grid)[:, None] - idx[None, :]).argmin(1)]
        fit = fit[nearest]
    return PilotVariogram(grid, np.maximum(fit, 0.0), float(h3), float(pos[0]))


# --- Matern ----------------------------------------------------------------

@dataclass(frozen=True)
class MaternParams:
    """Unit-sill Matern variogram with nugget ``c0`` and practical-range scale ``a``."""

    c0: float
    a: float
    nu: float

    def __post_init__(self):
        if not (0.0 <= self.c0 < 1.0 and self.a > 0 and self.nu > 0):
            raise InputError(f"invalid Matern parameters {self}")

    def __call__(self, lag):
        return matern_variogram(lag, self)

    def correlation(self, lag):
        return 1.0 - self(lag)


def matern_variogram(lag, p: MaternParams):
    lag = np.asarray(lag, dtype=float)
    x = 3.0 * np.abs(lag) / p.a
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        if p.nu == 0.5:
            corr = np.exp(-x)
        else:
            corr = x ** p.nu * special.kv(p.nu, x) / (2.0 ** (p.nu - 1) * special.gamma(p.nu))
    corr = np.where(x > 0, np.nan_to_num(corr, nan=0.0), 1.0)
    corr = np.clip(corr, 0.0, 1.0)
    return np.where(lag > 0, p.c0 + (1.0 - p.c0) * (1.0 - corr), 0.0)


# --- Shapiro-Botha ---------------------------------------------------------

@dataclass(frozen=True)
class SBModel:
    """``gamma(h) = b0 1{h>0} + sum_j b_j (1 - J0(t_j h))`` with ``b >= 0``."""

    nugget: float
    nodes: np.ndarray
    weights: np.ndarray = field(repr=False)

    @property
    def sill(self) -> float:
        return float(self.nugget + np.sum(self.weights))

    def __call__(self, lag):
        lag = np.asarray(lag, dtype=float)
        flat = lag.ravel()
        out = np.empty(flat.shape)
        step = max(1, 2_000_000 // max(len(self.nodes), 1))
        for s in range(0, len(flat), step):
            h = flat[s:s + step]
            out[s:s + step] = (1.0 - special.j0(np.outer(h, self.nodes))) @ self.weights
        out += self.nugget * (flat > 0)
        out[flat == 0] = 0.0
        return out.reshape(lag.shape)


def sb_nodes(max_lag, size=50) -> np.ndarray:
    """Frequencies ``q_j / max_lag`` with ``q_j`` the positive zeros of J0."""
    if not max_lag > 0:
        raise EmptyPilot(f"need a positive maximum lag, got {max_lag}")
    return special.jn_zeros(0, size) / max_lag


def fit_shapiro_botha(pilot: PilotVariogram, size=50, monotone=False) -> SBModel:
    """Nonnegative least-squares fit of a Shapiro-Botha model to ``pilot``.

    With ``monotone`` the pilot values are first replaced by their
    nondecreasing (isotonic) least-squares projection, which keeps bumps
    above the plateau from turning into a hole effect.
    """
    lags = pilot.fit_lags
    if len(lags) < 2:
        raise EmptyPilot("pilot variogram has fewer than two positive lags")
    target = pilot(lags)
    if monotone:
        target = optimize.isotonic_regression(target).x
    nodes = sb_nodes(lags[-1], size)
    design = np.column_stack([np.ones_like(lags), 1.0 - special.j0(np.outer(lags, nodes))])
    coef, _ = optimize.nnls(design, target, maxiter=10 * (size + 1))
    return SBModel(float(coef[0]), nodes, coef[1:])


def rescale_to_unit_sill(model: SBModel) -> SBModel:
    sill = model.sill
    if not sill > 0:
        raise ZeroSill("variogram model has zero sill")
    return SBModel(model.nugget / sill, model.nodes, model.weights / sill)


# --- correlation matrices --------------------------------------------------

def _eval_on_unique(gamma, d):
    scale = float(d.max()) if d.size and d.max() > 0 else 1.0
    ulags, inverse = _group_lags(d.ravel(), scale)
    return np.asarray(gamma(ulags), dtype=float)[inverse].reshape(d.shape)


def correlation_matrix(locs, gamma) -> np.ndarray:
    """``R_ij = 1 - gamma(|x_i - x_j|)`` with an exact unit diagonal."""
    locs = as_locations(locs)
    n = len(locs)
    i, j = np.triu_indices(n, 1)
    dv = locs[i] - locs[j]
    lag = np.hypot(dv[:, 0], dv[:, 1])
    R = np.eye(n)
    if len(lag):
        rho = 1.0 - _eval_on_unique(gamma, lag)
        R[i, j] = rho
        R[j, i] = rho
    return R


def cross_correlation(target, locs, gamma) -> np.ndarray:
    """Correlations ``1 - gamma`` between each row of ``target`` and ``locs``.

    A single target returns a vector; several return a matrix.
    """
    target = np.asarray(target, dtype=float)
    single = target.ndim == 1
    d = cross_distances(target.reshape(-1, 2), locs)
    rho = 1.0 - _eval_on_unique(gamma, d)
    return rho[0] if single else rho


def cholesky_psd(M, jitters=(1e-10, 1e-8, 1e-6)) -> np.ndarray:
    """Lower Cholesky factor, retrying with diagonal jitter if needed.

    Jitter is relative to the mean diagonal, i.e. absolute for
    correlation matrices.
    """
    M = np.asarray(M, dtype=float)
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(M))) if M.size else 1.0
    scale = scale if scale > 0 else 1.0
    eye = np.eye(len(M))
    for delta in jitters:
        try:
            L = np.linalg.cholesky(M + delta * scale * eye)
        except np.linalg.LinAlgError:
            continue
        if np.max(np.abs(L @ L.T - M)) <= 1e-6 * scale:
            return L
    raise NotPSD("matrix is not positive semidefinite even after jitter")

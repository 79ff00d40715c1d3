"""Multivariate local linear smoothing and bandwidth selection.

The smoother at ``x`` is ``s = e1' (X' W X)^{-1} X' W`` with rows of ``X``
equal to ``[1, (x_i - x)']`` and ``W = diag K_H(x_i - x)``, where
``K_H(u) = |H|^{-1} K(H^{-1} u)`` and ``K`` is a product kernel.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .errors import (DegenerateCloud, DegenerateDenominator, InputError,
                     NonFiniteObjective, SingularLocalFit)
from .spatial import as_locations

TRIWEIGHT_AT_ZERO = 35.0 / 32.0


def triweight_kernel_2d(u) -> np.ndarray:
    """Multiplicative triweight kernel ``prod (35/32)(1 - t^2)^3`` on the unit box."""
    u = np.asarray(u, dtype=float)
    k = kernels.kernel_1d(u, kernels.TRIWEIGHT)
    return np.prod(k, axis=-1)


def as_bandwidth(H) -> np.ndarray:
    """Validate a bandwidth: scalar ``h`` means ``h * I``."""
    H = np.asarray(H, dtype=float)
    if H.ndim == 0:
        H = float(H) * np.eye(2)
    if H.shape != (2, 2) or not np.all(np.isfinite(H)):
        raise InputError(f"bandwidth must be a finite 2x2 matrix, got {H!r}")
    if abs(H[0, 1] - H[1, 0]) > 1e-12 * max(1.0, np.abs(H).max()):
        raise InputError("bandwidth matrix must be symmetric")
    H = 0.5 * (H + H.T)
    if np.linalg.eigvalsh(H)[0] <= 0:
        raise InputError("bandwidth matrix must be positive definite")
    return H


def _weights(targets, locs, H, kernel="triweight"):
    H = as_bandwidth(H)
    S, status = kernels.local_linear_weights(
        as_locations(targets), as_locations(locs), np.linalg.inv(H),
        np.linalg.det(H), kernels.kernel_id(kernel))
    bad = np.nonzero(status == kernels.SINGULAR)[0]
    if bad.size:
        x = np.asarray(targets, dtype=float).reshape(-1, 2)[bad[0]]
        raise SingularLocalFit(
            f"no observations inside the kernel support at {tuple(x)} "
            f"({bad.size} target(s) affected); enlarge the bandwidth")
    return S


def smoother_vector(x, locs, H, kernel="triweight") -> np.ndarray:
    return _weights(np.reshape(x, (1, 2)), locs, H, kernel)[0]


def smoothing_matrix(locs, H, targets=None, kernel="triweight") -> np.ndarray:
    """Matrix whose row ``a`` is the smoother vector at ``targets[a]``.

    ``targets`` defaults to ``locs`` (the usual ``S_H``).
    """
    locs = as_locations(locs)
    return _weights(locs if targets is None else targets, locs, H, kernel)


def smooth_at(sample, H, targets, kernel="triweight") -> np.ndarray:
    return smoothing_matrix(sample.coords, H, targets, kernel) @ sample.values


def kernel_weights(targets, locs, H, kernel="triweight") -> np.ndarray:
    """Raw product-kernel weights ``K_H(x_i - x)`` for each target row."""
    H = as_bandwidth(H)
    d = as_locations(locs)[None, :, :] - as_locations(targets)[:, None, :]
    u = d @ np.linalg.inv(H).T
    k = kernels.kernel_1d(u, kernels.kernel_id(kernel))
    return np.prod(k, axis=-1) / np.linalg.det(H)


def variance_pilot(locs, squared_residuals, H2, targets=None, floor=0.0,
                   kernel="triweight", S=None) -> np.ndarray:
    """Local linear smooth of squared residuals.

    Where the local linear value falls below ``floor`` the local constant
    (kernel-weighted mean) of the squared residuals is used instead; it is
    nonnegative by construction. The result is truncated below at
    ``floor``. A precomputed smoothing matrix ``S`` (rows at ``targets``)
    may be passed instead of recomputing it; ``H2`` is still needed for the
    local constant fallback.
    """
    r2 = np.asarray(squared_residuals, dtype=float)
    if np.any(r2 < 0):
        raise InputError("squared residuals must be nonnegative")
    locs = as_locations(locs)
    tg = locs if targets is None else as_locations(targets)
    if S is None:
        S = smoothing_matrix(locs, H2, tg, kernel)
    est = S @ r2
    low = np.nonzero(est < floor)[0]
    if low.size and H2 is not None:
        w = kernel_weights(tg[low], locs, H2, kernel)
        est[low] = (w @ r2) / w.sum(axis=1)
    return np.maximum(est, floor)


def variance_floor(values, squared_residuals=None, fraction=0.05) -> float:
    """Lower bound applied to every variance estimate.

    ``1e-6 var(y)``, raised to ``fraction * mean(r^2)`` when squared
    residuals are given. Without the residual-based floor a handful of
    near-zero variance estimates blow up the standardized residuals.
    """
    v = float(np.var(values, ddof=1)) if len(values) > 1 else 0.0
    base = 1e-6 * v if v > 0 else 1e-12
    if squared_residuals is None:
        return base
    return max(base, fraction * float(np.mean(squared_residuals)))


# --- selection criteria ----------------------------------------------------

def _corrected_gcv(data, fitted, S, Rhat):
    n = len(data)
    if Rhat is None:
        tr = np.trace(S)
    else:
        tr = float(np.sum(S * np.asarray(Rhat).T))
    denom = 1.0 - tr / n
    if abs(denom) < 1e-10:
        raise DegenerateDenominator(
            f"1 - tr(S R)/n = {denom:.3g}; the smoother interpolates the data")
    return float(np.mean(((data - fitted) / denom) ** 2))


def cgcv(y, S, Rhat=None) -> float:
    """Correlation-corrected GCV of the trend smoother ``S`` for data ``y``.

    ``Rhat=None`` (or the identity) gives ordinary GCV.
    """
    y = np.asarray(y, dtype=float)
    return _corrected_gcv(y, S @ y, S, Rhat)


def cgcv_variance(squared_residuals, S2, Rhat_r2=None) -> float:
    """CGCV for the variance smoother, applied to squared residuals."""
    r2 = np.asarray(squared_residuals, dtype=float)
    return _corrected_gcv(r2, S2 @ r2, S2, Rhat_r2)


def mase(S, mu, Sigma) -> float:
    """Mean average squared error of the linear smoother ``S``.

    ``(1/n)|S mu - mu|^2 + (1/n) tr(S Sigma S')``; needs the true trend
    and covariance, so it is only usable in simulations.
    """
    mu = np.asarray(mu, dtype=float)
    n = len(mu)
    bias = S @ mu - mu
    return float(bias @ bias / n + np.sum((S @ Sigma) * S) / n)


# --- bandwidth search ------------------------------------------------------

def encode_bandwidth(H) -> np.ndarray:
    """Log-Cholesky parameters ``(log L11, L21, log L22)`` of ``H = L L'``."""
    L = np.linalg.cholesky(as_bandwidth(H))
    return np.array([np.log(L[0, 0]), L[1, 0], np.log(L[1, 1])])


def decode_bandwidth(theta) -> np.ndarray:
    a, b, c = theta
    L = np.array([[np.exp(a), 0.0], [b, np.exp(c)]])
    return L @ L.T


def select_bandwidth(objective, init, max_evals=200, rtol=1e-6,
                     max_scale=None) -> np.ndarray:
    """Minimise ``objective(H)`` over symmetric positive definite ``H``.

    Nelder-Mead on the log-Cholesky parameters, started at ``init``.
    Evaluations that raise a numerical error, or whose largest eigenvalue
    exceeds ``max_scale`` (default ``100 *`` the largest eigenvalue of
    ``init``), count as ``+inf``. The result is deterministic for a given
    objective and start.
    """
    init = as_bandwidth(init)
    theta0 = encode_bandwidth(init)
    if max_scale is None:
        max_scale = 100.0 * np.linalg.eigvalsh(init)[-1]
    f0 = objective(init)
    if not np.isfinite(f0):
        raise NonFiniteObjective(f"objective is {f0} at the initial bandwidth")

    def fun(theta):
        if not np.all(np.isfinite(theta)) or np.max(np.abs(theta[[0, 2]])) > 50:
            return np.inf
        if np.linalg.eigvalsh(decode_bandwidth(theta))[-1] > max_scale:
            return np.inf
        try:
            val = objective(decode_bandwidth(theta))
        except (SingularLocalFit, DegenerateDenominator, np.linalg.LinAlgError):
            return np.inf
        return val if np.isfinite(val) else np.inf

    step = np.diag([0.4, 0.3 * np.exp(theta0[0]), 0.4])
    simplex = np.vstack([theta0, theta0 + step])
    res = minimize(fun, theta0, method="Nelder-Mead",
                   options=dict(maxfev=max_evals, initial_simplex=simplex,
                                xatol=rtol, fatol=rtol * max(abs(f0), 1e-300)))
    if not np.isfinite(res.fun) or res.fun >= f0:
        return init
    return decode_bandwidth(res.x)


def default_bandwidth(locs, fraction=0.3) -> np.ndarray:
    """Starting bandwidth: a fraction of each coordinate's range."""
    locs = as_locations(locs)
    span = np.ptp(locs, axis=0)
    span[span <= 0] = 1.0
    return np.diag(fraction * span)


def cgcv_objective(locs, y, Rhat=None, kernel="triweight"):
    def objective(H):
        return cgcv(y, smoothing_matrix(locs, H, kernel=kernel), Rhat)
    return objective


def cgcv_variance_objective(locs, squared_residuals, Rhat_r2=None,
                            kernel="triweight"):
    def objective(H):
        return cgcv_variance(squared_residuals,
                             smoothing_matrix(locs, H, kernel=kernel), Rhat_r2)
    return objective


def mase_objective(locs, mu, Sigma, kernel="triweight"):
    def objective(H):
        return mase(smoothing_matrix(locs, H, kernel=kernel), mu, Sigma)
    return objective


# --- one-dimensional fits on lag-compressed clouds -------------------------

def local_linear_intercept(s0, s1, s2, t0, t1):
    """Intercept of the 1-D weighted line fit from its kernel moments.

    Falls back to the local constant ``t0/s0`` where the line is not
    identifiable (all lags in the window equal) and to NaN where the
    window is empty.
    """
    s0, s1, s2, t0, t1 = np.broadcast_arrays(*map(np.asarray, (s0, s1, s2, t0, t1)))
    det = s0 * s2 - s1 * s1
    line = (det > 1e-10 * s0 * s2) & (s2 > 0)
    safe_det = np.where(line, det, 1.0)
    safe_s0 = np.where(s0 > 0, s0, 1.0)
    out = np.where(line, (s2 * t0 - s1 * t1) / safe_det, t0 / safe_s0)
    return np.where(s0 > 1e-300, out, np.nan)


def h3_grid(cloud, size=30) -> np.ndarray:
    lags = np.asarray(cloud.lag, dtype=float)
    pos = lags[lags > 0]
    if pos.size < 2 or pos.min() == pos.max():
        raise DegenerateCloud("semivariance cloud needs at least two distinct lags")
    return np.geomspace(pos.min(), pos.max(), size)


def h3_cv_score(cloud, h, kernel="triweight", max_queries=1500) -> float:
    """Leave-one-pair-out relative squared error of the pilot fit at ``h``.

    Each pair's squared difference is compared against the local linear fit
    at its own lag computed without that pair. For clouds with more than
    ``max_queries`` distinct lags the sum runs over an evenly strided,
    deterministic subset of the pairs.
    """
    kind = kernels.kernel_id(kernel)
    ulags, counts, sums, inverse = cloud.compress()
    y = np.asarray(cloud.sqdiff, dtype=float)
    idx = np.arange(len(y))
    if len(ulags) > max_queries:
        order = np.argsort(cloud.lag, kind="stable")
        idx = np.sort(order[np.linspace(0, len(y) - 1, max_queries).round().astype(int)])
        qlag_index, qinv = np.unique(inverse[idx], return_inverse=True)
        mom = kernels.lag_moments(ulags, counts, sums, ulags[qlag_index], h, kind)[qinv]
    else:
        mom = kernels.lag_moments(ulags, counts, sums, ulags, h, kind)[inverse]
    y = y[idx]
    k0 = float(kernels.kernel_1d(0.0, kind)) / h
    fit = local_linear_intercept(mom[:, 0] - k0, mom[:, 1], mom[:, 2],
                                 mom[:, 3] - k0 * y, mom[:, 4])
    if not np.all(np.isfinite(fit)):
        return np.inf
    scale = max(float(np.mean(np.abs(y))), 1e-300)
    fit = np.maximum(fit, 1e-12 * scale)
    return float(np.sum((y / fit - 1.0) ** 2))


def select_h3_cv(cloud, grid=None, kernel="triweight", max_queries=1500) -> float:
    """Lag bandwidth minimising the leave-pair-out CV criterion over ``grid``.

    ``grid`` defaults to 30 log-spaced values between the smallest and
    largest positive lag.
    """
    if len(cloud.lag) < 2:
        raise DegenerateCloud("semivariance cloud needs at least two pairs")
    grid = h3_grid(cloud) if grid is None else np.atleast_1d(np.asarray(grid, float))
    if len(grid) == 1:
        return float(grid[0])
    scores = np.array([h3_cv_score(cloud, h, kernel, max_queries) for h in grid])
    if not np.any(np.isfinite(scores)):
        raise DegenerateCloud("no candidate lag bandwidth gives a defined fit")
    return float(grid[int(np.argmin(scores))])

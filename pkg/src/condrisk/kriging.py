"""Simple kriging (conditioning engine) and ordinary kriging (IK baseline).

A :class:`KrigingSystem` factors the data covariance once; predictions at
any number of targets and for any number of data vectors then cost a pair
of triangular solves.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import linalg

from .errors import InputError, SingularSystem
from .spatial import as_locations, cross_distances, pairwise_distances
from .variogram import cholesky_psd


class KrigingSystem:
    """Factored covariance of zero-mean data for simple kriging.

    Parameters
    ----------
    cov : (n, n) array
        Covariance matrix of the data.
    data : (n,) array, optional
        Default data vector used by :meth:`predict`.
    """

    def __init__(self, cov, data=None):
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise InputError("covariance must be a square matrix")
        self.cov = cov
        self.chol = cholesky_psd(cov)
        self.data = None if data is None else self._check(data)

    @property
    def n(self) -> int:
        return len(self.cov)

    def _check(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise InputError(f"expected {self.n} data values, got {v.shape[0]}")
        return v

    def solve(self, rhs) -> np.ndarray:
        """``C^{-1} rhs`` through the stored Cholesky factor."""
        return linalg.cho_solve((self.chol, True), self._check(rhs))

    def weights(self, cross_cov) -> np.ndarray:
        """Kriging weights ``C^{-1} c`` as rows, one per target."""
        c = np.atleast_2d(np.asarray(cross_cov, dtype=float))
        return self.solve(c.T).T

    def predict(self, cross_cov, data=None):
        """``c' C^{-1} data`` for each row of ``cross_cov``.

        ``data`` may be a vector or an ``(n, k)`` matrix of data vectors.
        """
        data = self.data if data is None else self._check(data)
        if data is None:
            raise InputError("no data vector")
        c = np.asarray(cross_cov, dtype=float)
        out = np.atleast_2d(c) @ self.solve(data)
        return out[0] if c.ndim == 1 else out

    def variance(self, cross_cov, prior_var):
        """``prior_var - c' C^{-1} c`` floored at 0."""
        c = np.asarray(cross_cov, dtype=float)
        c2 = np.atleast_2d(c)
        red = np.einsum("ij,ij->i", c2, self.weights(c2))
        out = np.maximum(np.asarray(prior_var, dtype=float) - red, 0.0)
        return out[0] if c.ndim == 1 else out


def simple_kriging_predict(system: KrigingSystem, target, cross_cov, data=None):
    """Simple kriging prediction ``c' C^{-1} data`` at ``target``.

    ``target`` is carried for symmetry with the other predictors; the
    covariances to the data are supplied by the caller.
    """
    return system.predict(cross_cov, data)


def simple_kriging_variance(system: KrigingSystem, target, cross_cov, prior_var):
    """Simple kriging variance ``prior_var - c' C^{-1} c``, at least 0."""
    return system.variance(cross_cov, prior_var)


def ordinary_kriging_weights(gamma, locs, targets) -> np.ndarray:
    """Ordinary kriging weights in variogram form, one row per target.

    Solves ``[[G, 1], [1', 0]] [w; m] = [g; 1]`` with ``G_ij = gamma(|x_i -
    x_j|)`` and ``g_i = gamma(|x_i - x0|)``.
    """
    locs = as_locations(locs)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n = len(locs)
    if n < 2:
        raise InputError("ordinary kriging needs at least two locations")
    A = np.ones((n + 1, n + 1))
    A[:n, :n] = gamma(pairwise_distances(locs))
    A[n, n] = 0.0
    rhs = np.ones((n + 1, len(targets)))
    rhs[:n] = gamma(cross_distances(targets, locs)).T
    try:
        with warnings.catch_warnings():
            # an exactly singular pivot is reported below
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu = linalg.lu_factor(A, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"ordinary kriging system: {exc}") from exc
    if np.min(np.abs(np.diag(lu[0]))) <= 1e-12 * np.max(np.abs(A)):
        raise SingularSystem("ordinary kriging system is singular")
    return linalg.lu_solve(lu, rhs)[:n].T


def ordinary_kriging_predict(values, gamma, locs, target):
    """Ordinary kriging prediction of ``values`` at ``target`` (one or many)."""
    values = np.asarray(values, dtype=float)
    target = np.asarray(target, dtype=float)
    w = ordinary_kriging_weights(gamma, locs, target.reshape(-1, 2))
    out = w @ values
    return float(out[0]) if target.ndim == 1 else out

"""Planar locations, samples, grids and estimation-site selection.

Locations are plain ``(n, 2)`` float arrays throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DuplicateLocation, InputError, TooFewPoints


def as_locations(locs) -> np.ndarray:
    """Coerce ``locs`` to a finite ``(n, 2)`` float array."""
    arr = np.asarray(locs, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError(f"locations must have shape (n, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("location coordinates must be finite")
    return arr


def _first_duplicate(coords: np.ndarray):
    # index of the first row that repeats an earlier one, or None
    if len(coords) < 2:
        return None
    _, first, inverse = np.unique(coords, axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    dup = np.nonzero(first[inverse] != np.arange(len(coords)))[0]
    return int(dup[0]) if dup.size else None


@dataclass(frozen=True)
class SpatialSample:
    """Observed values ``values[i]`` at planar sites ``coords[i]``."""

    coords: np.ndarray
    values: np.ndarray
    min_size: int = field(default=3, repr=False, compare=False)

    def __post_init__(self):
        coords = as_locations(self.coords)
        values = np.asarray(self.values, dtype=float).ravel()
        if len(values) != len(coords):
            raise InputError(
                f"{len(coords)} locations but {len(values)} values")
        if not np.all(np.isfinite(values)):
            raise InputError("observed values must be finite")
        if len(coords) < self.min_size:
            raise TooFewPoints(
                f"need at least {self.min_size} observations, got {len(coords)}")
        dup = _first_duplicate(coords)
        if dup is not None:
            raise DuplicateLocation(
                f"duplicate location {tuple(coords[dup])}", line=None)
        coords.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    bounds: tuple = (0.0, 1.0, 0.0, 1.0)  # (x1_min, x1_max, x2_min, x2_max)

    def __post_init__(self):
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise InputError("grid dimensions must be positive")
        x1lo, x1hi, x2lo, x2hi = map(float, self.bounds)
        if not (x1lo <= x1hi and x2lo <= x2hi):
            raise InputError("grid bounds must be ordered (lo <= hi)")


def pairwise_distances(locs) -> np.ndarray:
    """Euclidean distance matrix; exactly symmetric with a zero diagonal."""
    locs = as_locations(locs)
    d = cdist(locs, locs)
    # cdist is not guaranteed to be bitwise symmetric
    d = np.triu(d, 1)
    return d + d.T


def cross_distances(a, b) -> np.ndarray:
    return cdist(as_locations(a), as_locations(b))


def make_grid(spec: GridSpec) -> np.ndarray:
    """Regular grid including the boundary, row-major with ``x1`` fastest."""
    x1lo, x1hi, x2lo, x2hi = map(float, spec.bounds)
    g1 = np.linspace(x1lo, x1hi, int(spec.nx))
    g2 = np.linspace(x2lo, x2hi, int(spec.ny))
    xx, yy = np.meshgrid(g1, g2)
    return np.column_stack([xx.ravel(), yy.ravel()])


# --- estimation-site rules -------------------------------------------------

@dataclass(frozen=True)
class DiagonalUpper:
    """The ``k`` main-diagonal sites closest to the top-right corner.

    ``k=None`` uses ``ceil(0.55 * side)``, which gives 11 sites on a
    20 x 20 grid.
    """

    k: int | None = None


@dataclass(frozen=True)
class ExplicitTargets:
    points: tuple


@dataclass(frozen=True)
class RandomTargets:
    k: int
    seed: int = 0


def default_diagonal_count(side: int) -> int:
    # round before ceil so 0.55 * 20 == 11 exactly
    return int(math.ceil(round(0.55 * side, 9)))


def _diagonal_indices(grid: np.ndarray) -> np.ndarray:
    lo = grid.min(axis=0)
    span = grid.max(axis=0) - lo
    span[span == 0] = 1.0
    u = (grid - lo) / span
    return np.nonzero(np.abs(u[:, 0] - u[:, 1]) < 1e-9)[0]


def split_indices(grid, rule=None):
    """Return ``(observation_index, estimation_index)`` into ``grid``."""
    grid = as_locations(grid)
    if len(grid) == 0:
        raise InputError("grid is empty")
    rule = DiagonalUpper() if rule is None else rule
    n1 = len(grid)

    if isinstance(rule, DiagonalUpper):
        diag = _diagonal_indices(grid)
        k = rule.k if rule.k is not None else default_diagonal_count(len(diag))
        if k > len(diag):
            raise InputError(
                f"requested {k} diagonal sites but only {len(diag)} available")
        corner = grid.max(axis=0)
        dist = np.hypot(*(grid[diag] - corner).T)
        order = np.lexsort((diag, dist))
        est = np.sort(diag[order[:k]])
    elif isinstance(rule, ExplicitTargets):
        pts = as_locations(rule.points)
        d = cdist(pts, grid)
        est = []
        for row, p in zip(d, pts):
            j = int(np.argmin(row))
            if row[j] > 1e-12:
                raise InputError(f"target {tuple(p)} is not a grid location")
            est.append(j)
        est = np.unique(est)
    elif isinstance(rule, RandomTargets):
        if not 0 < rule.k <= n1:
            raise InputError(f"cannot draw {rule.k} targets from {n1} sites")
        rng = np.random.default_rng(rule.seed)
        est = np.sort(rng.choice(n1, size=rule.k, replace=False))
    else:
        raise InputError(f"unknown estimation rule {rule!r}")

    mask = np.ones(n1, dtype=bool)
    mask[est] = False
    return np.nonzero(mask)[0], np.asarray(est, dtype=int)


def split_design(grid, rule=None):
    """Partition ``grid`` into observation and estimation locations."""
    grid = as_locations(grid)
    obs, est = split_indices(grid, rule)
    return grid[obs], grid[est]

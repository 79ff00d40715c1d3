"""Unconditional and conditional bootstrap of the error process, risk maps.

Replicate ``j`` always draws from ``numpy.random.default_rng([seed, j])``
and replicates are generated in fixed-size blocks, so an ensemble is
bitwise reproducible whatever the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .bias import FittedComponents
from .errors import ConfigError, DegenerateResiduals, InputError
from .kriging import KrigingSystem
from .spatial import as_locations, cross_distances
from .variogram import cholesky_psd, correlation_matrix, cross_correlation

CONDITIONAL = "conditional"
UNCONDITIONAL = "unconditional"
MODES = (CONDITIONAL, UNCONDITIONAL)

# replicates generated together; fixed so results do not depend on threads
BLOCK = 32


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 200
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if int(self.B) < 1:
            raise ConfigError(f"B must be at least 1, got {self.B}")
        if int(self.threads) < 1:
            raise ConfigError(f"threads must be at least 1, got {self.threads}")


@dataclass(frozen=True)
class RiskMap:
    """Estimated exceedance probabilities ``P(Y(x) >= c)`` at ``locations``."""

    locations: np.ndarray
    c: float
    prob: np.ndarray
    mode: str = CONDITIONAL


@dataclass(frozen=True, eq=False)
class BootstrapEnsemble:
    """``B x n0`` matrix of simulated responses at the estimation locations.

    ``sample_values`` optionally holds the ``B x n`` conditional replicate
    values at the sample sites.
    """

    targets: np.ndarray
    replicates: np.ndarray = field(repr=False)
    mode: str
    sample_values: np.ndarray = field(default=None, repr=False)

    @property
    def B(self) -> int:
        return self.replicates.shape[0]

    def risk(self, c) -> RiskMap:
        prob = np.mean(self.replicates >= c, axis=0)
        return RiskMap(self.targets, float(c), prob, self.mode)


def uncorrelated_errors(fit: FittedComponents) -> np.ndarray:
    """Decorrelated, empirically standardized residuals.

    Solves ``L0 e = r / sigma0`` with ``L0`` the Cholesky factor of the
    pilot residual correlogram and ``sigma0`` the pilot standard deviation,
    then centres and scales ``e`` to unit sample standard deviation.
    """
    R0 = correlation_matrix(fit.sample.coords, fit.residual_correlogram)
    L0 = cholesky_psd(R0)
    u = fit.residuals / np.sqrt(fit.pilot_variance)
    e = linalg.solve_triangular(L0, u, lower=True)
    e = e - e.mean()
    sd = float(np.std(e, ddof=1)) if len(e) > 1 else 0.0
    if not sd > 1e-12 * max(1.0, float(np.max(np.abs(u)))):
        raise DegenerateResiduals("decorrelated residuals have zero spread")
    return e / sd


class _Design:
    """Everything shared by the replicates of one bootstrap run.

    The joint location set is the sample followed by the targets that do
    not coincide with a sample site; ``tidx`` maps each target to its row
    in the joint set and ``snap`` to its sample index (or -1). With
    ``snap`` enabled, conditional values at coincident targets are the
    observations themselves; otherwise they come out of the kriging
    algebra like any other target.
    """

    def __init__(self, fit: FittedComponents, targets, conditional: bool, snap=True):
        locs = fit.sample.coords
        targets = as_locations(targets)
        n = len(locs)
        hit = cross_distances(targets, locs) == 0.0 if len(targets) else np.zeros((0, n), bool)
        same = np.where(hit.any(1), hit.argmax(1), -1)
        fresh = np.nonzero(same < 0)[0]
        tidx = same.copy()
        tidx[fresh] = n + np.arange(len(fresh))

        trend_t, var_t = fit.components_at(targets[fresh])
        self.n = n
        self.targets = targets
        self.snap = same if snap else np.full(len(targets), -1)
        self.tidx = tidx
        self.mu = np.concatenate([fit.trend, trend_t])
        self.sd = np.sqrt(np.concatenate([fit.variance, var_t]))
        rho = fit.correlogram
        all_locs = np.vstack([locs, targets[fresh]])
        self.chol = cholesky_psd(correlation_matrix(all_locs, rho))
        self.y = fit.sample.values
        if conditional:
            sd_s = self.sd[:n]
            R = correlation_matrix(locs, rho)
            self.system = KrigingSystem(R * np.outer(sd_s, sd_s))
            cross = cross_correlation(targets, locs, rho) * np.outer(self.sd[tidx], sd_s)
            self.W = self.system.weights(cross)
            self.delta_hat = self.W @ fit.residuals

    def unconditional(self, e, seeds) -> np.ndarray:
        """Replicates over the joint location set, one row per seed."""
        size = len(self.mu)
        idx = np.stack([np.random.default_rng(s).integers(0, len(e), size) for s in seeds])
        return self.mu + (e[idx] @ self.chol.T) * self.sd

    def conditional(self, unc) -> np.ndarray:
        """Conditional replicates at the targets from unconditional ones."""
        delta = unc - self.mu
        out = (self.mu[self.tidx] + self.delta_hat
               + delta[:, self.tidx] - delta[:, :self.n] @ self.W.T)
        snapped = self.snap >= 0
        out[:, snapped] = self.y[self.snap[snapped]]
        return out


def unconditional_replicate(fit: FittedComponents, targets, e, rng) -> np.ndarray:
    """One unconditional replicate over the sample sites followed by ``targets``.

    ``rng`` is a ``numpy.random.Generator`` or a seed accepted by
    ``default_rng``.
    """
    design = _Design(fit, targets, conditional=False)
    size = len(design.mu)
    rng = np.random.default_rng(rng)
    estar = np.asarray(e, dtype=float)[rng.integers(0, len(e), size)]
    unc = design.mu + (design.chol @ estar) * design.sd
    return np.concatenate([unc[:design.n], unc[design.tidx]])


def conditional_replicate(fit: FittedComponents, targets, unconditional) -> np.ndarray:
    """Condition one unconditional replicate on the data.

    ``unconditional`` lists values at the sample sites followed by values
    at ``targets`` (the layout returned by :func:`unconditional_replicate`).
    """
    design = _Design(fit, targets, conditional=True)
    unconditional = np.asarray(unconditional, dtype=float)
    n = design.n
    if len(unconditional) != n + len(design.targets):
        raise InputError("replicate length does not match sample plus targets")
    joint = np.empty(len(design.mu))
    joint[:n] = unconditional[:n]
    fresh = design.tidx >= n
    joint[design.tidx[fresh]] = unconditional[n:][fresh]
    return design.conditional(joint[None, :])[0]


def _blocks(B):
    return [(s, min(s + BLOCK, B)) for s in range(0, B, BLOCK)]


def bootstrap_ensemble(fit: FittedComponents, targets=None, config: BootstrapConfig = None,
                       mode: str = CONDITIONAL, snap=True,
                       keep_sample=False) -> BootstrapEnsemble:
    """Generate ``config.B`` replicates at ``targets`` (default: the fitted targets).

    ``keep_sample`` stores, in conditional mode, the replicates at the
    sample sites computed through the kriging equations (no snapping);
    they reproduce the observations up to rounding.
    """
    cfg = BootstrapConfig() if config is None else config
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    targets = fit.targets if targets is None else as_locations(targets)
    conditional = mode == CONDITIONAL
    design = _Design(fit, targets, conditional, snap)
    at_sites = None
    if conditional and keep_sample:
        at_sites = _Design(fit, fit.sample.coords, True, snap=False)
    e = uncorrelated_errors(fit)
    seed = int(cfg.seed)

    def run(block):
        unc = design.unconditional(e, [[seed, j] for j in range(*block)])
        if not conditional:
            return unc[:, design.tidx], None
        extra = at_sites.conditional(unc[:, :design.n]) if at_sites else None
        return design.conditional(unc), extra

    blocks = _blocks(int(cfg.B))
    if cfg.threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=int(cfg.threads)) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    reps = np.vstack([p[0] for p in parts])
    sample_values = np.vstack([p[1] for p in parts]) if at_sites else None
    return BootstrapEnsemble(targets, reps, mode, sample_values)


def _risk(ensemble: BootstrapEnsemble, c):
    if np.ndim(c) == 0:
        return ensemble.risk(c)
    return [ensemble.risk(ci) for ci in c]


def estimate_conditional_risk(fit: FittedComponents, targets=None, c=0.0,
                              config: BootstrapConfig = None):
    """Conditional exceedance risk ``mean_j 1{Y*_CS(x) >= c}``.

    ``c`` may be a scalar (returns a :class:`RiskMap`) or a sequence
    (returns a list of maps computed from one ensemble).
    """
    return _risk(bootstrap_ensemble(fit, targets, config, CONDITIONAL), c)


def estimate_unconditional_risk(fit: FittedComponents, targets=None, c=0.0,
                                config: BootstrapConfig = None):
    """Unconditional exceedance risk from ``Y*_NC`` replicates."""
    return _risk(bootstrap_ensemble(fit, targets, config, UNCONDITIONAL), c)

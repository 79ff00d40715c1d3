"""Monte Carlo study harness: scenarios, Gaussian fields, risk oracle, IK.

A scenario combines a trend, a variance function and a unit-sill Matern
error correlogram on a sampling design. Each simulated field is fitted
with MASE-optimal bandwidths (computed from the true components), the
conditional bootstrap estimates exceedance risks at the estimation
locations, and squared errors against the exact Gaussian conditional risk
are pooled over fields and locations.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import optimize, stats

from . import smoothing as sm
from .bias import (FitConfig, Smoothers, fit_components, residual_covariance,
                   squared_residual_cov_normal)
from .bootstrap import BootstrapConfig, bootstrap_ensemble
from .errors import CondRiskError, ConfigError, InputError
from .kriging import KrigingSystem, ordinary_kriging_weights
from .spatial import (DiagonalUpper, GridSpec, SpatialSample, as_locations,
                      cross_distances, make_grid, pairwise_distances,
                      split_indices)
from .variogram import MaternParams, cholesky_psd, correlation_matrix

log = logging.getLogger(__name__)

REGULAR = "regular"
RANDOM = "uniform-random"


# --- true components -------------------------------------------------------

def trend_fn(kind, x) -> np.ndarray:
    """Trend ``mu1`` (nonlinear), ``mu2`` (polynomial) or ``mu3`` (constant)."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    if kind == "mu1":
        return 2.5 + np.sin(2 * np.pi * x1) + 4.0 * (x2 - 0.5) ** 2
    if kind == "mu2":
        return 5.8 * (x1 - x2 + x2 ** 2)
    if kind == "mu3":
        return np.full(x1.shape, 2.0)
    raise ConfigError(f"unknown trend {kind!r}")


def variance_fn(kind, x) -> np.ndarray:
    """Variance ``var1`` (nonlinear bump), ``var2`` (linear) or ``var3`` (constant)."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    if kind == "var1":
        b1 = 1.0 - (2 * x1 - 1) ** 2
        b2 = 1.0 - (2 * x2 - 1) ** 2
        return (15 / 16) ** 2 * b1 ** 2 * b2 ** 2 + 0.1
    if kind == "var2":
        return 0.5 * (1.0 + x1 + x2)
    if kind == "var3":
        return np.ones(x1.shape)
    raise ConfigError(f"unknown variance {kind!r}")


@dataclass(frozen=True)
class ScenarioSpec:
    """One cell of the simulation study."""

    name: str = "custom"
    trend: str = "mu1"
    variance: str = "var1"
    matern: MaternParams = MaternParams(0.2, 0.6, 0.5)
    grid: GridSpec = GridSpec(20, 20)
    design: str = REGULAR
    rule: object = field(default_factory=DiagonalUpper)
    thresholds: tuple = (2.0, 3.0, 4.0)
    N: int = 100
    B: int = 200
    seed: int = 0

    def __post_init__(self):
        trend_fn(self.trend, np.zeros(2))
        variance_fn(self.variance, np.zeros(2))
        if self.design not in (REGULAR, RANDOM):
            raise ConfigError(f"unknown design {self.design!r}")
        if not self.thresholds:
            raise ConfigError("at least one threshold is required")
        if int(self.N) < 1 or int(self.B) < 1:
            raise ConfigError("N and B must be at least 1")

    def mu(self, x):
        return trend_fn(self.trend, x)

    def var(self, x):
        return variance_fn(self.variance, x)

    def covariance(self, a, b=None) -> np.ndarray:
        """True covariance between locations ``a`` and ``b`` (default ``a``)."""
        a = as_locations(a)
        if b is None:
            sd = np.sqrt(self.var(a))
            return correlation_matrix(a, self.matern) * np.outer(sd, sd)
        b = as_locations(b)
        rho = 1.0 - self.matern(cross_distances(a, b))
        return rho * np.outer(np.sqrt(self.var(a)), np.sqrt(self.var(b)))


class Design(NamedTuple):
    sample: np.ndarray
    targets: np.ndarray


def make_design(spec: ScenarioSpec, rng=None) -> Design:
    """Sample sites and estimation locations for ``spec``.

    The estimation locations always come from the regular grid and its
    rule. A random design replaces the remaining ``n1 - n0`` grid sites by
    as many uniform points in the unit square.
    """
    grid = make_grid(spec.grid)
    obs, est = split_indices(grid, spec.rule)
    if spec.design == REGULAR:
        return Design(grid[obs], grid[est])
    rng = np.random.default_rng(rng)
    x0, x1, y0, y1 = spec.grid.bounds
    pts = rng.uniform(size=(len(obs), 2)) * [x1 - x0, y1 - y0] + [x0, y0]
    return Design(pts, grid[est])


def simulate_field(spec: ScenarioSpec, rng=None, design: Design = None,
                   chol=None) -> SpatialSample:
    """Draw ``Y = mu + sigma * (L z)`` over the sample sites and targets.

    The returned sample lists the sample sites first, then the targets.
    ``chol`` may carry a precomputed Cholesky factor of the Matern
    correlation over those locations.
    """
    rng = np.random.default_rng(rng)
    if design is None:
        design = make_design(spec, rng)
    locs = np.vstack([design.sample, design.targets])
    if chol is None:
        chol = cholesky_psd(correlation_matrix(locs, spec.matern))
    z = rng.standard_normal(len(locs))
    y = spec.mu(locs) + np.sqrt(spec.var(locs)) * (chol @ z)
    return SpatialSample(locs, y)


def theoretical_conditional_risk(spec: ScenarioSpec, sample: SpatialSample,
                                 targets, c) -> np.ndarray:
    """Exact ``P(Y(x) >= c | Y)`` under the true Gaussian model.

    Simple kriging with the true trend and covariance gives the
    conditional mean and standard deviation; where the latter is zero the
    risk is the indicator ``pred >= c``. Returns one row per threshold when
    ``c`` is a sequence.
    """
    targets = as_locations(targets)
    system = KrigingSystem(spec.covariance(sample.coords))
    cross = spec.covariance(targets, sample.coords)
    pred = spec.mu(targets) + system.predict(cross, sample.values - spec.mu(sample.coords))
    sd = np.sqrt(system.variance(cross, spec.var(targets)))
    cs = np.atleast_1d(np.asarray(c, dtype=float))[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (cs - pred) / sd
    risk = np.where(sd > 0, stats.norm.sf(z), (pred >= cs).astype(float))
    return risk[0] if np.ndim(c) == 0 else risk


# --- MASE bandwidths -------------------------------------------------------

def mase_smoothers(locs, spec: ScenarioSpec, targets=None, kernel="triweight"):
    """MASE-optimal ``H`` and ``H2`` from the true components.

    ``H`` minimises the MASE of the trend smooth. ``H2`` minimises the
    analogous criterion for the smooth of squared residuals, whose mean is
    ``diag(Sigma_r) + ((I - S) mu)^2`` and whose covariance is taken as
    ``2 Sigma_r * Sigma_r``. Returns ``(H, H2, Smoothers)``.
    """
    locs = as_locations(locs)
    targets = np.empty((0, 2)) if targets is None else as_locations(targets)
    mu = spec.mu(locs)
    Sigma = spec.covariance(locs)
    init = sm.default_bandwidth(locs)
    H = sm.select_bandwidth(sm.mase_objective(locs, mu, Sigma, kernel), init)
    S = sm.smoothing_matrix(locs, H, kernel=kernel)
    Sigma_r = residual_covariance(S, Sigma)
    m2 = np.diag(Sigma_r) + (mu - S @ mu) ** 2
    H2 = sm.select_bandwidth(
        sm.mase_objective(locs, m2, squared_residual_cov_normal(Sigma_r), kernel), init)
    S2 = sm.smoothing_matrix(locs, H2, kernel=kernel)
    if len(targets):
        St = sm.smoothing_matrix(locs, H, targets, kernel)
        S2t = sm.smoothing_matrix(locs, H2, targets, kernel)
    else:
        St = S2t = np.empty((0, len(locs)))
    return H, H2, Smoothers(S, St, S2, S2t)


# --- indicator kriging baseline --------------------------------------------

@dataclass(frozen=True)
class ExponentialVariogram:
    """``c0 + c1 (1 - exp(-h / phi))`` for ``h > 0``, zero at ``h = 0``."""

    c0: float
    c1: float
    phi: float

    def __call__(self, lag):
        lag = np.asarray(lag, dtype=float)
        val = self.c0 + self.c1 * -np.expm1(-lag / self.phi)
        return np.where(lag > 0, val, 0.0)


def binned_variogram(values, locs, n_bins=15, max_lag=None):
    """Matheron estimator on equal-width bins up to ``max_lag``.

    ``max_lag`` defaults to half the largest distance. Returns bin centres,
    semivariances and pair counts for non-empty bins.
    """
    values = np.asarray(values, dtype=float)
    d = pairwise_distances(locs)
    i, j = np.triu_indices(len(values), 1)
    lag = d[i, j]
    max_lag = 0.5 * lag.max() if max_lag is None else max_lag
    edges = np.linspace(0.0, max_lag, n_bins + 1)
    keep = (lag > 0) & (lag <= max_lag)
    which = np.clip(np.searchsorted(edges, lag[keep], side="left") - 1, 0, n_bins - 1)
    sq = (values[i[keep]] - values[j[keep]]) ** 2
    counts = np.bincount(which, minlength=n_bins)
    sums = np.bincount(which, weights=sq, minlength=n_bins)
    lsum = np.bincount(which, weights=lag[keep], minlength=n_bins)
    ok = counts > 0
    return lsum[ok] / counts[ok], 0.5 * sums[ok] / counts[ok], counts[ok]


def fit_exponential(lags, gammas, counts) -> ExponentialVariogram:
    """Weighted least squares fit (weights = pair counts), parameters >= 0."""
    lags, gammas, counts = map(np.asarray, (lags, gammas, counts))
    top = float(np.max(gammas)) if len(gammas) else 0.0
    if not top > 0:
        return ExponentialVariogram(0.0, 0.0, 1.0)
    span = float(lags.max())
    w = np.sqrt(counts.astype(float))

    def resid(p):
        return w * (ExponentialVariogram(*p)(lags) - gammas)

    start = [0.1 * top, 0.9 * top, span / 3.0]
    res = optimize.least_squares(resid, start, bounds=([0, 0, 1e-6 * span], [np.inf, np.inf, 1e3 * span]))
    return ExponentialVariogram(*map(float, res.x))


class IKResult(NamedTuple):
    raw: np.ndarray
    prob: np.ndarray
    variogram: ExponentialVariogram


def ik_baseline(sample: SpatialSample, targets, c) -> IKResult:
    """Indicator kriging of ``1{Y >= c}`` with an exponential variogram.

    Constant indicators return that constant; otherwise ordinary kriging
    predictions (``raw``) are clamped to [0, 1] (``prob``).
    """
    targets = as_locations(targets)
    ind = (sample.values >= c).astype(float)
    if np.all(ind == ind[0]):
        const = np.full(len(targets), ind[0])
        return IKResult(const, const, ExponentialVariogram(0.0, 0.0, 1.0))
    model = fit_exponential(*binned_variogram(ind, sample.coords))
    if not model.c0 + model.c1 > 0:
        raw = np.full(len(targets), ind.mean())
    else:
        raw = ordinary_kriging_weights(model, sample.coords, targets) @ ind
    return IKResult(raw, np.clip(raw, 0.0, 1.0), model)


# --- the study -------------------------------------------------------------

@dataclass(frozen=True)
class ErrorSummary:
    """Squared-error summary (scaled by 100) for one scenario and threshold."""

    scenario: str
    c: float
    mean: float
    median: float
    sd: float
    n_failed: int = 0

    @classmethod
    def from_errors(cls, scenario, c, errors, n_failed=0):
        e = 100.0 * np.asarray(errors, dtype=float)
        if not e.size:
            return cls(scenario, float(c), np.nan, np.nan, np.nan, n_failed)
        sd = float(np.std(e, ddof=1)) if e.size > 1 else 0.0
        return cls(scenario, float(c), float(e.mean()), float(np.median(e)), sd, n_failed)


SUMMARY_COLUMNS = ("scenario", "c", "mean", "median", "sd", "n_failed")


def write_summary(rows, path_or_file):
    """Write summaries as CSV with columns ``scenario,c,mean,median,sd,n_failed``."""
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r.scenario, f"{r.c:g}", f"{r.mean:.6f}", f"{r.median:.6f}",
                        f"{r.sd:.6f}", r.n_failed])
    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            emit(fh)


def _field_seed(seed, j, stream) -> int:
    return int(np.random.SeedSequence([int(seed), int(j), stream]).generate_state(1, np.uint64)[0])


@dataclass
class FieldResult:
    index: int
    np_errors: np.ndarray = None      # (n_thresholds, n0)
    ik_errors: np.ndarray = None
    error: str = None


def run_field(spec: ScenarioSpec, j: int, ik=False, cache=None) -> FieldResult:
    """Simulate, fit, bootstrap and score field ``j`` of ``spec``."""
    cache = {} if cache is None else cache
    rng = np.random.default_rng([int(spec.seed), int(j)])
    design = cache.get("design") or make_design(spec, rng)
    n = len(design.sample)
    try:
        smp = simulate_field(spec, rng, design, cache.get("chol"))
        sample = SpatialSample(smp.coords[:n], smp.values[:n])
        if "smoothers" in cache:
            H, H2, smoothers = cache["smoothers"]
        else:
            H, H2, smoothers = mase_smoothers(design.sample, spec, design.targets)
        fit = fit_components(sample, design.targets, FitConfig(H=H, H2=H2), smoothers)
        ens = bootstrap_ensemble(fit, design.targets,
                                 BootstrapConfig(B=spec.B, seed=_field_seed(spec.seed, j, 1)))
        truth = theoretical_conditional_risk(spec, sample, design.targets, list(spec.thresholds))
        est = np.stack([ens.risk(c).prob for c in spec.thresholds])
        out = FieldResult(j, (est - truth) ** 2)
        if ik:
            ikp = np.stack([ik_baseline(sample, design.targets, c).prob for c in spec.thresholds])
            out.ik_errors = (ikp - truth) ** 2
        return out
    except (CondRiskError, np.linalg.LinAlgError) as exc:
        log.warning("%s field %d failed: %s", spec.name, j, exc)
        return FieldResult(j, error=f"{type(exc).__name__}: {exc}")


def prepare(spec: ScenarioSpec) -> dict:
    """Per-scenario shared state: design, Matern factor and MASE smoothers.

    Only regular designs share state; random designs redraw sites (and
    hence bandwidths) for every field.
    """
    if spec.design != REGULAR:
        return {}
    design = make_design(spec)
    locs = np.vstack([design.sample, design.targets])
    return {
        "design": design,
        "chol": cholesky_psd(correlation_matrix(locs, spec.matern)),
        "smoothers": mase_smoothers(design.sample, spec, design.targets),
    }


def run_study(spec: ScenarioSpec, ik=False, threads=1, progress=None):
    """Run ``spec.N`` fields and summarise squared errors per threshold.

    Returns a list of :class:`ErrorSummary`, NP rows first, then IK rows
    named ``<scenario>+ik`` when ``ik`` is set. Fields that raise a
    numerical error are excluded and counted in ``n_failed``.
    """
    t0 = time.perf_counter()
    cache = prepare(spec)

    def job(j):
        res = run_field(spec, j, ik, cache)
        if progress is not None:
            progress(j, res, time.perf_counter() - t0)
        return res

    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            results = list(pool.map(job, range(int(spec.N))))
    else:
        results = [job(j) for j in range(int(spec.N))]
    results.sort(key=lambda r: r.index)
    good = [r for r in results if r.error is None]
    failed = len(results) - len(good)
    rows = []
    for k, c in enumerate(spec.thresholds):
        errs = np.concatenate([r.np_errors[k] for r in good]) if good else np.empty(0)
        rows.append(ErrorSummary.from_errors(spec.name, c, errs, failed))
    if ik:
        for k, c in enumerate(spec.thresholds):
            errs = np.concatenate([r.ik_errors[k] for r in good]) if good else np.empty(0)
            rows.append(ErrorSummary.from_errors(spec.name + "+ik", c, errs, failed))
    return rows


# --- named scenarios -------------------------------------------------------

def _fmt(v) -> str:
    return f"{v:g}"


def _named() -> dict:
    out = {}
    base = ScenarioSpec()
    for side in (15, 20, 30):
        g = f"{side}x{side}"
        spec = replace(base, grid=GridSpec(side, side))
        out[f"table1-{g}"] = replace(spec, name=f"table1-{g}")
        for c in (2, 3, 4):
            out[f"table1-c{c}-{g}"] = replace(spec, name=f"table1-c{c}-{g}", thresholds=(float(c),))
    for c0 in (0.0, 0.2, 0.4, 0.8):
        for a in (0.3, 0.6, 0.9):
            name = f"table2-c0{_fmt(c0)}-a{_fmt(a)}"
            out[name] = replace(base, name=name, matern=MaternParams(c0, a, 0.5), thresholds=(3.0,))
    for nu in (0.25, 0.5, 1.0):
        spec = replace(base, trend="mu3", variance="var3", matern=MaternParams(0.2, 0.6, nu))
        name = f"table3-nu{_fmt(nu)}"
        out[name] = replace(spec, name=name)
        for c in (2, 3, 4):
            out[f"{name}-c{c}"] = replace(spec, name=f"{name}-c{c}", thresholds=(float(c),))
    for mu in ("mu1", "mu2", "mu3"):
        for var in ("var1", "var2", "var3"):
            for nu in (0.25, 0.5, 1.0):
                name = f"table4-{mu}-{var}-nu{_fmt(nu)}"
                out[name] = replace(base, name=name, trend=mu, variance=var,
                                    matern=MaternParams(0.2, 0.6, nu), design=RANDOM,
                                    thresholds=(3.0,))
    return out


SCENARIOS = _named()


def scenario(name: str, **overrides) -> ScenarioSpec:
    """Look up a named scenario, optionally overriding fields (N, B, seed...)."""
    try:
        spec = SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; see --list") from None
    unknown = set(overrides) - set(ScenarioSpec.__dataclass_fields__)
    if unknown:
        raise InputError(f"unknown scenario fields {sorted(unknown)}")
    return replace(spec, **overrides)

"""Command-line interface: ``condrisk {fit,riskmap,simulate,study,ik}``.

Options can also come from a flat ``key=value`` file given with
``--config``; keys are the long option names without dashes (``B=500``,
``thresholds=1,2,3``, ``allow-small=true``). Command-line flags win.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 configuration
error. Errors are reported on standard error as ``error: <category>: ...``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time

import numpy as np

from . import __version__
from .bias import AUTO, FitConfig, fit_components
from .bootstrap import (CONDITIONAL, MODES, BootstrapConfig, RiskMap,
                        bootstrap_ensemble)
from .errors import (CondRiskError, ConfigError, DuplicateLocation, InputError,
                     ParseError, TooFewPoints)
from .simulation import (SCENARIOS, ik_baseline, make_design, run_study, scenario,
                         simulate_field, write_summary)
from .spatial import GridSpec, SpatialSample, make_grid

log = logging.getLogger("condrisk")

MIN_POINTS = 10
HEADER = ("x1", "x2", "y")
BOOL_KEYS = {"allow-small", "ik", "list", "verbose"}


# --- input -----------------------------------------------------------------

def _read_rows(path, header):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if tuple(h.strip() for h in head) != header:
            raise ParseError(f"expected header {','.join(header)}, got {','.join(head)}", line=1)
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
            try:
                vals = [float(f) for f in row]
            except ValueError:
                raise ParseError(f"non-numeric field in {','.join(row)}", line=line) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"non-finite value in {','.join(row)}", line=line)
            rows.append((line, vals))
    return rows


def ingest_csv(path, allow_small=False) -> SpatialSample:
    """Read a ``x1,x2,y`` CSV into a sample.

    Rejects malformed or non-finite fields and repeated locations, naming
    the offending line, and files with fewer than 10 observations unless
    ``allow_small`` is set.
    """
    rows = _read_rows(path, HEADER)
    seen = {}
    for line, (x1, x2, _) in rows:
        if (x1, x2) in seen:
            raise DuplicateLocation(f"location ({x1:g}, {x2:g}) repeats line {seen[(x1, x2)]}",
                                    line=line)
        seen[(x1, x2)] = line
    if len(rows) < MIN_POINTS and not allow_small:
        raise TooFewPoints(f"{path}: {len(rows)} observations, need at least {MIN_POINTS} "
                           "(use --allow-small to override)")
    data = np.array([v for _, v in rows], dtype=float).reshape(-1, 3)
    return SpatialSample(data[:, :2], data[:, 2])


def read_targets(path) -> np.ndarray:
    rows = _read_rows(path, ("x1", "x2"))
    if not rows:
        raise InputError(f"{path}: no target locations")
    return np.array([v for _, v in rows], dtype=float)


def write_sample(sample: SpatialSample, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for (x1, x2), y in zip(sample.coords, sample.values):
            w.writerow([repr(float(x1)), repr(float(x2)), repr(float(y))])


def write_riskmaps(maps, path):
    """CSV ``x1,x2,c,prob``; one block of rows per threshold."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x1", "x2", "c", "prob"))
        for m in maps:
            for (x1, x2), p in zip(m.locations, m.prob):
                w.writerow([f"{x1:.10g}", f"{x2:.10g}", f"{m.c:g}", f"{p:.6f}"])


# --- option parsing --------------------------------------------------------

def parse_floats(text, what="value"):
    try:
        vals = [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {what} {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"cannot parse {what} {text!r}")
    return vals


def parse_bandwidth(text):
    """``auto``, ``h`` or ``h11,h12,h22`` for the trend, optionally
    followed by ``:`` and the same for the variance smooth.

    Returns ``(H, H2)``, each ``"auto"`` or a 2x2 matrix.
    """
    parts = str(text).split(":")
    if len(parts) > 2:
        raise ConfigError(f"bandwidth {text!r}: at most two matrices")
    out = []
    for p in parts:
        p = p.strip()
        if p == AUTO:
            out.append(AUTO)
            continue
        v = parse_floats(p, "bandwidth")
        if len(v) == 1:
            m = np.eye(2) * v[0]
        elif len(v) == 3:
            m = np.array([[v[0], v[1]], [v[1], v[2]]])
        else:
            raise ConfigError(f"bandwidth {p!r}: give 1 or 3 numbers")
        if not (np.all(np.linalg.eigvalsh(m) > 0)):
            raise ConfigError(f"bandwidth {p!r} is not positive definite")
        out.append(m)
    return out[0], out[1] if len(out) > 1 else AUTO


def parse_grid(text, sample: SpatialSample = None) -> np.ndarray:
    """``NXxNY`` regular grid over the bounding box of the sample (or unit square)."""
    try:
        nx, ny = (int(t) for t in str(text).lower().split("x"))
    except ValueError:
        raise ConfigError(f"grid {text!r}: expected NXxNY, e.g. 40x40") from None
    if nx < 1 or ny < 1:
        raise ConfigError(f"grid {text!r}: sizes must be positive")
    bounds = (0.0, 1.0, 0.0, 1.0)
    if sample is not None:
        lo, hi = sample.coords.min(0), sample.coords.max(0)
        bounds = (lo[0], hi[0], lo[1], hi[1])
    return make_grid(GridSpec(nx, ny, bounds))


def read_config(path) -> list:
    """``key=value`` lines (``#`` comments) as an argument list."""
    argv = []
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    for k, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path} line {k}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key in BOOL_KEYS:
            if val.lower() in ("1", "true", "yes", "on"):
                argv.append(f"--{key}")
            elif val.lower() not in ("0", "false", "no", "off"):
                raise ConfigError(f"{path} line {k}: {key} expects true/false")
        else:
            argv += [f"--{key}", val]
    return argv


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="condrisk", description="Nonparametric conditional risk mapping.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="key=value file with option defaults")
        sp.add_argument("--output", help="output file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--verbose", action="store_true", help="progress on stderr")

    def data(sp):
        sp.add_argument("--input", required=True, help="CSV with header x1,x2,y")
        sp.add_argument("--allow-small", action="store_true",
                        help=f"accept fewer than {MIN_POINTS} observations")

    def fitting(sp):
        sp.add_argument("--bandwidth", default=AUTO,
                        help="auto | h | h11,h12,h22 [ :same for the variance ]")
        sp.add_argument("--h3", default=AUTO, help="lag bandwidth or auto")

    def targets(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--grid", help="NXxNY grid over the data bounding box (default 40x40)")
        g.add_argument("--targets", help="CSV with header x1,x2")
        sp.add_argument("--thresholds", required=True, help="comma-separated thresholds")

    sp = sub.add_parser("fit", help="fit trend, variance and variogram")
    common(sp), data(sp), fitting(sp)

    sp = sub.add_parser("riskmap", help="bootstrap exceedance-probability map")
    common(sp), data(sp), fitting(sp), targets(sp)
    sp.add_argument("--mode", choices=MODES, default=CONDITIONAL)
    sp.add_argument("--B", type=int, default=1000)

    sp = sub.add_parser("ik", help="indicator-kriging probability map")
    common(sp), data(sp), targets(sp)

    sp = sub.add_parser("simulate", help="simulate one field from a named scenario")
    common(sp)
    sp.add_argument("--scenario", default="table1-20x20")
    sp.add_argument("--targets", help="also write the estimation locations here")

    sp = sub.add_parser("study", help="Monte Carlo study of a named scenario")
    common(sp)
    sp.add_argument("--scenario", help="scenario name (see --list)")
    sp.add_argument("--list", action="store_true", help="list scenario names")
    sp.add_argument("--N", type=int, help="number of simulated fields")
    sp.add_argument("--B", type=int, help="bootstrap replicates per field")
    sp.add_argument("--ik", action="store_true", help="add the indicator-kriging baseline")
    return p


def parse_args(argv):
    argv = list(argv)
    parser = build_parser()
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            raise ConfigError("--config needs a path")
        extra = read_config(argv[i + 1])
        # file values go right after the subcommand so later flags override them
        cmd = next((k for k, a in enumerate(argv) if not a.startswith("-")), None)
        if cmd is None:
            raise ConfigError("missing command")
        argv = argv[:cmd + 1] + extra + argv[cmd + 1:]
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        raise ConfigError("--threads must be at least 1")
    return args


# --- commands --------------------------------------------------------------

def _fit(args, sample, targets=None):
    H, H2 = parse_bandwidth(args.bandwidth)
    h3 = AUTO if str(args.h3).strip() == AUTO else parse_floats(args.h3, "h3")[0]
    if h3 != AUTO and not h3 > 0:
        raise ConfigError("--h3 must be positive")
    t0 = time.perf_counter()
    fit = fit_components(sample, targets, FitConfig(H=H, H2=H2, h3=h3))
    log.info("fit done in %.2fs (%d iterations)", time.perf_counter() - t0, fit.iterations)
    return fit


def _matrix(m):
    return f"[[{m[0, 0]:.6g}, {m[0, 1]:.6g}], [{m[1, 0]:.6g}, {m[1, 1]:.6g}]]"


def fit_report(fit, wall, extra=()) -> str:
    g = fit.variogram
    lines = [
        f"condrisk {__version__}",
        f"observations: {fit.n}",
        f"trend bandwidth H: {_matrix(fit.H)}",
        f"variance bandwidth H2: {_matrix(fit.H2)}",
        f"lag bandwidth h3: {fit.h3:.6g}",
        f"iterations: {fit.iterations} (converged: {'yes' if fit.converged else 'no'})",
        f"variogram nugget: {g.nugget:.6g}",
        f"variogram sill: {g.sill:.6g}",
        "variogram nodes: " + " ".join(f"{t:.6g}" for t in g.nodes),
        "variogram weights: " + " ".join(f"{w:.6g}" for w in g.weights),
        *extra,
        f"wall time: {wall:.2f} s",
    ]
    return "\n".join(lines) + "\n"


def _write_text(path, text):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_fit(args):
    t0 = time.perf_counter()
    sample = ingest_csv(args.input, args.allow_small)
    fit = _fit(args, sample)
    report = fit_report(fit, time.perf_counter() - t0)
    if not args.output:
        sys.stdout.write(report)
        return 0
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x1", "x2", "y", "trend", "variance", "std_residual"))
        for k in range(fit.n):
            x1, x2 = sample.coords[k]
            w.writerow([f"{x1:.10g}", f"{x2:.10g}", f"{sample.values[k]:.10g}",
                        f"{fit.trend[k]:.10g}", f"{fit.variance[k]:.10g}",
                        f"{fit.std_residuals[k]:.10g}"])
    _write_text(args.output + ".report.txt", report)
    return 0


def _targets(args, sample):
    if args.targets:
        return read_targets(args.targets)
    return parse_grid(args.grid or "40x40", sample)


def cmd_riskmap(args):
    t0 = time.perf_counter()
    if args.B < 1:
        raise ConfigError("--B must be at least 1")
    thresholds = parse_floats(args.thresholds, "thresholds")
    sample = ingest_csv(args.input, args.allow_small)
    targets = _targets(args, sample)
    fit = _fit(args, sample, targets)
    ens = bootstrap_ensemble(fit, targets, BootstrapConfig(args.B, args.seed, args.threads),
                             mode=args.mode)
    maps = [ens.risk(c) for c in thresholds]
    out = args.output or "riskmap.csv"
    write_riskmaps(maps, out)
    extra = (f"mode: {args.mode}", f"replicates B: {args.B}", f"seed: {args.seed}",
             "thresholds: " + ",".join(f"{c:g}" for c in thresholds),
             f"targets: {len(targets)}")
    _write_text(out + ".report.txt", fit_report(fit, time.perf_counter() - t0, extra))
    log.info("riskmap written to %s in %.2fs", out, time.perf_counter() - t0)
    return 0


def cmd_ik(args):
    thresholds = parse_floats(args.thresholds, "thresholds")
    sample = ingest_csv(args.input, args.allow_small)
    targets = _targets(args, sample)
    maps = [RiskMap(targets, c, ik_baseline(sample, targets, c).prob, "ik")
            for c in thresholds]
    write_riskmaps(maps, args.output or "ikmap.csv")
    return 0


def cmd_simulate(args):
    spec = scenario(args.scenario, seed=args.seed)
    rng = np.random.default_rng([args.seed, 0])
    design = make_design(spec, rng)
    field = simulate_field(spec, rng, design)
    n = len(design.sample)
    write_sample(SpatialSample(field.coords[:n], field.values[:n]), args.output or "field.csv")
    if args.targets:
        with open(args.targets, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("x1", "x2"))
            for x1, x2 in design.targets:
                w.writerow([repr(float(x1)), repr(float(x2))])
    return 0


def cmd_study(args):
    if args.list:
        for name in SCENARIOS:
            sys.stdout.write(name + "\n")
        return 0
    if not args.scenario:
        raise ConfigError("--scenario is required (see --list)")
    over = {"seed": args.seed}
    if args.N is not None:
        over["N"] = args.N
    if args.B is not None:
        over["B"] = args.B
    spec = scenario(args.scenario, **over)

    def progress(j, res, elapsed):
        status = "failed" if res.error else "ok"
        log.info("field %d/%d %s (%.1fs)", j + 1, spec.N, status, elapsed)

    rows = run_study(spec, ik=args.ik, threads=args.threads, progress=progress)
    if args.output:
        write_summary(rows, args.output)
    else:
        write_summary(rows, sys.stdout)
    return 0


COMMANDS = {"fit": cmd_fit, "riskmap": cmd_riskmap, "ik": cmd_ik,
            "simulate": cmd_simulate, "study": cmd_study}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args)
    except CondRiskError as exc:
        sys.stderr.write(f"error: {exc.category}: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"error: input: {exc}\n")
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())

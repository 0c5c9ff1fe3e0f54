"""Command-line front end; every subcommand writes CSV.

Output starts with ``#`` comment lines holding the package version and the
effective configuration, followed by a header row and one row per point.
Rows are flushed as they are produced.

Settings can also come from a ``--config`` file of ``key=value`` lines;
flags given on the command line take precedence.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from contextlib import contextmanager

import numpy as np

from . import __version__
from .angles import internal_angle_oracle, log_external_angle
from .errors import DomainError, NoSignChangeError, RootNotBracketedError, ShapeError
from .exponents import (leading_face_geometry, optimized_external_exponent,
                        optimized_internal_exponent)
from .optimizer import BINDING, NEGATIVE, guaranteed_delta_bound, optimal_rho
from .recovery import TrialConfig, run_trials, wilson_interval, write_records
from .shapes import WEIGHT, constant, linear_probability, linear_weight, parse_shape

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_RHO_GRID = "0:0.2:3"
# settings that do not affect results and stay out of the provenance header
_UNECHOED = {"out", "workers", "config", "records", "command"}


class ConfigError(Exception):
    pass


# -- value parsing -----------------------------------------------------------

def parse_grid(text: str) -> list[float]:
    """Comma list ``a,b,c`` or inclusive range ``start:step:stop``."""
    text = str(text).strip()
    if not text:
        return []
    if ":" in text:
        try:
            start, step, stop = (float(t) for t in text.split(":"))
        except ValueError:
            raise ConfigError(f"bad range {text!r}; expected start:step:stop") from None
        if step <= 0 or stop < start:
            raise ConfigError(f"bad range {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(count)]
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad list {text!r}") from None


def _ints(values):
    out = [int(v) for v in values]
    if any(o != v for o, v in zip(out, values)):
        raise ConfigError("expected integers")
    return out


def read_config_file(path: str) -> dict:
    settings = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"{path}:{num}: expected key=value")
        settings[key.strip().replace("-", "_")] = value.strip()
    return settings


# -- argument parser -----------------------------------------------------------

_DEFAULTS = {
    "alpha": "0.5", "m": None, "n": None, "r": None, "rho": None, "c": None,
    "delta": None, "tau": None, "trials": "100", "seed": "0", "out": None,
    "workers": "1", "mode": "leading", "prob": None, "weight": None,
    "criterion": BINDING, "kind": "both", "samples": "4000", "records": None,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    add = common.add_argument
    add("--config", help="file of key=value lines; flags override it")
    add("--alpha", help="compression ratio m/n")
    add("--m", help="number of measurements")
    add("--n", help="signal length, or a list for angle-oracle")
    add("--r", help="grid resolution, or a list for bound-vs-r")
    add("--rho", help="weight slope(s); 'opt' picks the best slope per tilt")
    add("--c", help="prior tilt(s)")
    add("--delta", help="sparsity fraction(s)")
    add("--tau", help="covering-face fraction for angle-oracle")
    add("--trials", help="Monte Carlo trials per point")
    add("--seed", help="master seed")
    add("--out", help="output CSV path (default stdout)")
    add("--workers", help="worker processes for trials")
    add("--mode", choices=["leading", "typical"], help="face class")
    add("--prob", help="probability shape, e.g. linear-prob:delta=0.185,c=0.36")
    add("--weight", help="weight shape, e.g. linear-weight:rho=1")
    add("--criterion", choices=[BINDING, NEGATIVE], help="certification rule for the bound")
    add("--kind", choices=["external", "internal", "both"], help="angle-oracle angles")
    add("--samples", help="Monte Carlo samples for the internal angle")
    add("--records", help="optional CSV path for per-trial records")

    parser = argparse.ArgumentParser(prog="wl1bounds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("bound-vs-r", parents=[common], help="sparsity bound for each grid resolution")
    sub.add_parser("bound-vs-rho", parents=[common], help="sparsity bound for each weight slope")
    sub.add_parser("empirical", parents=[common], help="Monte Carlo failure rates")
    sub.add_parser("angle-oracle", parents=[common], help="finite-n angles against exponents")
    return parser


def resolve_settings(args: argparse.Namespace) -> dict:
    settings = dict(_DEFAULTS)
    if args.config:
        from_file = read_config_file(args.config)
        unknown = set(from_file) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        settings.update(from_file)
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    settings["command"] = args.command
    return settings


# -- helpers ---------------------------------------------------------------------

def _float(settings, key):
    try:
        return float(settings[key])
    except (TypeError, ValueError):
        raise ConfigError(f"--{key} must be a number") from None


def _int(settings, key):
    value = _float(settings, key)
    if value != int(value):
        raise ConfigError(f"--{key} must be an integer")
    return int(value)


def _weight_shape(settings):
    if settings["weight"]:
        return parse_shape(settings["weight"], WEIGHT)
    if settings["rho"] not in (None, "opt"):
        grid = parse_grid(settings["rho"])
        if len(grid) == 1:
            return linear_weight(grid[0])
    return constant(1.0)


@contextmanager
def _output(path):
    if path:
        with open(path, "w", newline="") as fh:
            yield fh
    else:
        yield sys.stdout


class _Table:
    """CSV writer that emits the provenance header and flushes every row."""

    def __init__(self, fh, settings, columns):
        self.fh = fh
        fh.write(f"# wl1bounds {__version__}\n")
        for key in sorted(settings):
            if key not in _UNECHOED and settings[key] is not None:
                fh.write(f"# {key}={settings[key]}\n")
        self.writer = csv.writer(fh, lineterminator="\n")
        self.writer.writerow(columns)
        fh.flush()

    def row(self, *values):
        self.writer.writerow([_fmt(v) for v in values])
        self.fh.flush()

    def comment(self, text):
        self.fh.write(f"# {text}\n")
        self.fh.flush()


def _fmt(value):
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return value


# -- subcommands -------------------------------------------------------------------

def cmd_bound_vs_r(settings, fh):
    alpha = _float(settings, "alpha")
    rs = _ints(parse_grid(settings["r"] or ""))
    if not rs:
        raise ConfigError("bound-vs-r needs a non-empty --r list")
    weight = _weight_shape(settings)
    family = _family(settings)
    table = _Table(fh, settings, ["r", "delta_bar", "psi_tot_at_bound", "wall_ms"])
    for r in rs:
        start = time.perf_counter()
        bound = guaranteed_delta_bound(alpha, weight, r, family, settings["criterion"])
        table.row(r, bound.delta_bar, bound.psi_at_bound,
                  round((time.perf_counter() - start) * 1000.0, 1))


def _family(settings):
    if settings["mode"] == "leading":
        return "leading"
    cs = parse_grid(settings["c"] or "")
    if len(cs) != 1:
        raise ConfigError("typical mode needs a single --c")
    _check_tilt(cs[0])
    return cs[0]


def _check_tilt(c):
    if not 0.0 <= c < 1.0:
        raise ConfigError(f"tilt c={c} leaves no valid prior in [0, 1]")


def cmd_bound_vs_rho(settings, fh):
    alpha = _float(settings, "alpha")
    family = _family(settings)
    r = _int(settings, "r") if settings["r"] else (30 if family == "leading" else 60)
    rhos = parse_grid(settings["rho"] or DEFAULT_RHO_GRID)
    if not rhos:
        raise ConfigError("bound-vs-rho needs a non-empty --rho grid")
    table = _Table(fh, settings, ["rho", "delta_bar", "psi_tot_at_bound"])
    curve = []
    for rho in rhos:
        try:
            bound = guaranteed_delta_bound(alpha, linear_weight(rho), r, family,
                                           settings["criterion"])
            table.row(rho, bound.delta_bar, bound.psi_at_bound)
            curve.append((bound.delta_bar, -len(curve), rho))
        except NoSignChangeError:
            table.row(rho, math.nan, math.nan)
    if family != "leading" and curve:
        delta_bar, _, rho_star = max(curve)
        table.comment(f"rho_star={rho_star!r} delta_bar={delta_bar!r}")


def cmd_empirical(settings, fh):
    m, n = _int(settings, "m"), _int(settings, "n")
    if not 1 <= m < n:
        raise ConfigError("empirical needs 1 <= m < n")
    trials, seed = _int(settings, "trials"), _int(settings, "seed")
    workers = _int(settings, "workers")
    if trials < 1:
        raise ConfigError("--trials must be at least 1")
    deltas = parse_grid(settings["delta"] or "")
    if not deltas:
        raise ConfigError("empirical needs --delta")
    r = _int(settings, "r") if settings["r"] else 30
    leading = settings["mode"] == "leading"
    cs = [None] if leading else parse_grid(settings["c"] or "0")
    for c in cs:
        if c is not None:
            _check_tilt(c)
    rho_text = settings["rho"] or "0"
    rho_specs = [t.strip() for t in rho_text.split(",")] if "opt" in rho_text else \
        [repr(v) for v in parse_grid(rho_text)]

    table = _Table(fh, settings, ["delta", "c", "rho", "k", "trials", "failures",
                                  "indeterminate", "failure_rate", "ci_low", "ci_high"])
    all_records = []
    for c in cs:
        chosen = {}
        for spec in rho_specs:
            if spec == "opt":
                family = "leading" if c is None else c
                choice = optimal_rho(family, m / n, r, parse_grid(DEFAULT_RHO_GRID),
                                     settings["criterion"])
                chosen["opt"] = choice.rho_star
            else:
                chosen[spec] = float(spec)
        for delta in deltas:
            for spec in rho_specs:
                rho = chosen[spec]
                weight = linear_weight(rho) if not settings["weight"] else _weight_shape(settings)
                if leading:
                    k = int(round(delta * n))
                    config = TrialConfig(m, n, trials, seed, weight, k=k)
                else:
                    k = ""
                    config = TrialConfig(m, n, trials, seed, weight,
                                         prob=linear_probability(delta, c))
                summary = run_trials(config, workers)
                lo, hi = wilson_interval(summary.failures, summary.determinate)
                table.row(delta, "" if c is None else c, rho, k, trials, summary.failures,
                          summary.indeterminate, summary.failure_rate, lo, hi)
                all_records.append((delta, c, rho, summary.records))
    if settings["records"]:
        with open(settings["records"], "w", newline="") as rf:
            for delta, c, rho, records in all_records:
                rf.write(f"# point delta={delta!r} c={c!r} rho={rho!r}\n")
                write_records(records, rf)


def cmd_angle_oracle(settings, fh):
    ns = _ints(parse_grid(settings["n"] or ""))
    if not ns:
        raise ConfigError("angle-oracle needs a non-empty --n list")
    delta = _float(settings, "delta") if settings["delta"] else 0.1
    tau = _float(settings, "tau") if settings["tau"] else 0.5
    if not 0.0 < delta < tau <= 1.0:
        raise ConfigError("need 0 < delta < tau <= 1")
    weight = _weight_shape(settings)
    r = _int(settings, "r") if settings["r"] else 30
    kinds = ["external", "internal"] if settings["kind"] == "both" else [settings["kind"]]
    samples = _int(settings, "samples")
    rng = np.random.default_rng(_int(settings, "seed"))

    geom = leading_face_geometry(weight, delta, r)
    edges = geom.grid.edges
    # fraction of each cell lying in [delta, tau]
    h = np.clip((np.minimum(edges[1:], tau) - edges[:-1]) / geom.cell, 0.0, 1.0)
    bounds = {}
    if "external" in kinds:
        bounds["external"] = optimized_external_exponent(geom, h)[0] if tau < 1 else 0.0
    if "internal" in kinds:
        bounds["internal"] = optimized_internal_exponent(geom, h).value

    table = _Table(fh, settings, ["n", "kind", "log_angle_over_n", "exponent_bound", "slack"])
    for n in ns:
        w = np.asarray(weight(np.arange(1, n + 1) / n), dtype=float)
        k, l = int(round(delta * n)), int(round(tau * n))
        if not 1 <= k < l <= n:
            raise ConfigError(f"n={n} too small for delta={delta}, tau={tau}")
        for kind in kinds:
            if kind == "external":
                value = log_external_angle(w, l) / n
            else:
                value = internal_angle_oracle(w[:l], k, samples, rng).log_value / n
            table.row(n, kind, value, bounds[kind], bounds[kind] - value)


_COMMANDS = {
    "bound-vs-r": cmd_bound_vs_r,
    "bound-vs-rho": cmd_bound_vs_rho,
    "empirical": cmd_empirical,
    "angle-oracle": cmd_angle_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        settings = resolve_settings(args)
        with _output(settings["out"]) as fh:
            _COMMANDS[args.command](settings, fh)
    except (ConfigError, DomainError, ShapeError) as exc:
        print(f"wl1bounds: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoSignChangeError, RootNotBracketedError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"wl1bounds: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0

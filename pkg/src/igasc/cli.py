"""
Command-line interface.

Data and tables go to ``--out`` (a directory) or to standard output; logs go
to standard error.  Failures print one JSON line to standard error and exit
with a nonzero status.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from igasc.diagnostics import ks_uniform_test, pit_series
from igasc.errors import DomainError, IgascError, StationarityError, StudyError, UsageError
from igasc.estimation import fit, fit_mv
from igasc.forecasting import forecast_table
from igasc.mv_model import CorrMatrix, MvTheta
from igasc.obs_models import DEFAULT_OFFSET, Family, Theta, innovation_from_eps, validate_theta
from igasc.recursion import filter as run_filter
from igasc.recursion import filter_mv
from igasc.simulation import MC_COLUMNS, SimConfig, mc_study, simulate, simulate_mv

__all__ = ["Dataset", "ingest", "ingest_many", "main", "read_theta", "write_theta"]

log = logging.getLogger("igasc")

MV_FAMILY = "mv-gauss-vol"
FAMILIES = [f.value for f in Family] + [MV_FAMILY]
KINDS = ("prices", "returns", "durations")
_MISSING = {"", "na", "nan", "null", "none", "."}

EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_STATIONARITY = 4
EXIT_STUDY = 5
EXIT_IO = 6

DEFAULT_THETA = {
    Family.GaussVol: Theta(0.3, 0.2, 0.7),
    Family.TVol: Theta(0.3, 0.2, 0.7, 10.0),
    Family.ExpDur: Theta(0.3, 0.2, 0.7),
    Family.WeibullDur: Theta(0.3, 0.2, 0.3, 2.0),
}


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    observations: np.ndarray
    label: str = ""
    frequency: str = ""
    kind: str = "returns"
    dates: list = field(default_factory=list)


def _read_series(path: str):
    """Dates and values from a two-column CSV; missing values are dropped."""
    dates, values = [], []
    skipped = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UsageError(f"{path}: empty file") from None
        cols = [h.strip().lower() for h in header]
        if len(cols) < 2:
            raise UsageError(f"{path}:1: need a date column and a value column")
        di = cols.index("date") if "date" in cols else 0
        others = [i for i in range(len(cols)) if i != di]
        vi = cols.index("value") if "value" in cols else others[0]
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) <= max(di, vi):
                raise DomainError(f"{path}:{line}: expected at least {max(di, vi) + 1} fields")
            try:
                d = date.fromisoformat(row[di].strip())
            except ValueError:
                raise DomainError(f"{path}:{line}: unparseable date {row[di]!r}") from None
            raw = row[vi].strip()
            if raw.lower() in _MISSING:
                skipped += 1
                continue
            try:
                v = float(raw)
            except ValueError:
                raise DomainError(f"{path}:{line}: unparseable value {raw!r}") from None
            if not math.isfinite(v):
                skipped += 1
                continue
            if dates and d <= dates[-1]:
                raise DomainError(f"{path}:{line}: dates must be strictly ascending")
            dates.append(d)
            values.append(v)
    if skipped:
        log.info("%s: skipped %d rows with missing values", path, skipped)
    return dates, np.asarray(values, dtype=float)


def _finish(dates, values, kind: str, label: str, frequency: str) -> Dataset:
    if kind not in KINDS:
        raise UsageError(f"kind must be one of {KINDS}, got {kind!r}")
    if kind == "prices":
        if values.shape[0] < 2:
            raise UsageError(f"{label}: need at least 2 prices")
        if (values <= 0).any():
            raise DomainError(f"{label}: prices must be positive")
        values = 100.0 * np.diff(np.log(values), axis=0)
        dates = dates[1:]
    elif kind == "durations" and (values <= 0).any():
        raise DomainError(f"{label}: durations must be strictly positive")
    if values.shape[0] == 0:
        raise UsageError(f"{label}: no observations")
    return Dataset(values, label, frequency, "returns" if kind == "prices" else kind, dates)


def ingest(path: str, kind: str = "returns", frequency: str = "") -> Dataset:
    """
    Read a dated CSV.  Prices become percentage log returns
    ``100 * diff(log S)``.
    """
    dates, values = _read_series(path)
    return _finish(dates, values, kind, os.path.basename(path), frequency)


def ingest_many(paths, kind: str = "returns", frequency: str = "") -> Dataset:
    """Several series inner-joined on date; observations have shape (T, N)."""
    series = [_read_series(p) for p in paths]
    common = set(series[0][0])
    for d, _ in series[1:]:
        common &= set(d)
    common = sorted(common)
    cols = []
    for d, v in series:
        index = {day: i for i, day in enumerate(d)}
        cols.append(v[[index[day] for day in common]])
    values = np.column_stack(cols) if common else np.empty((0, len(paths)))
    label = "+".join(os.path.basename(p) for p in paths)
    return _finish(common, values, kind, label, frequency)


# ---------------------------------------------------------------------------
# parameter files
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.17g" % x


def theta_items(family: str, theta) -> list[tuple[str, str]]:
    items = [("family", family)]
    if isinstance(theta, MvTheta):
        for name, arr in (("mu", theta.mu), ("phi", theta.phi), ("psi", theta.psi)):
            items += [(f"{name}{i + 1}", _fmt(v)) for i, v in enumerate(arr)]
        n = theta.dim
        items += [(f"rho{i + 1}{j + 1}", _fmt(theta.corr.values[i, j]))
                  for i in range(1, n) for j in range(i)]
    else:
        items.append(("mu", _fmt(theta.mu)))
        if theta.is_ar1:
            items += [("phi", _fmt(theta.phi)), ("psi", _fmt(theta.psi))]
        else:
            items += [(f"phi{i + 1}", _fmt(v)) for i, v in enumerate(theta.phi)]
            items += [(f"psi{j}", _fmt(v)) for j, v in enumerate(theta.psi)]
        if theta.shape is not None:
            items.append((Family.parse(family).shape_name, _fmt(theta.shape)))
    items.append(("offset", _fmt(theta.offset)))
    return items


def write_theta(path: str, family: str, theta) -> None:
    with open(path, "w") as fh:
        for k, v in theta_items(family, theta):
            fh.write(f"{k}={v}\n")


def _parse_pairs(text: str, source: str) -> dict[str, str]:
    out = {}
    for n, part in enumerate(re.split(r"[\n,]", text), start=1):
        part = part.strip()
        if not part or part.startswith("#"):
            continue
        if "=" not in part:
            raise UsageError(f"{source}:{n}: expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _indexed(values: dict[str, float], prefix: str, start: int) -> list[float]:
    out = []
    i = start
    while f"{prefix}{i}" in values:
        out.append(values[f"{prefix}{i}"])
        i += 1
    return out


def theta_from_pairs(pairs: dict[str, str], family: str | None = None):
    """Build a parameter object from key=value pairs."""
    family = pairs.get("family", family)
    if family is None:
        raise UsageError("parameter set does not name a family")
    try:
        values = {k: float(v) for k, v in pairs.items() if k != "family"}
    except ValueError as exc:
        raise UsageError(f"non-numeric parameter value: {exc}") from None
    offset = values.get("offset", DEFAULT_OFFSET)
    try:
        if family == MV_FAMILY:
            mu = _indexed(values, "mu", 1)
            n = len(mu)
            corr = np.eye(n)
            for i in range(1, n):
                for j in range(i):
                    corr[i, j] = corr[j, i] = values.get(f"rho{i + 1}{j + 1}", 0.0)
            return family, MvTheta(mu, _indexed(values, "phi", 1), _indexed(values, "psi", 1),
                                   CorrMatrix(corr), offset)
        fam = Family.parse(family)
        shape = values.get(fam.shape_name) if fam.shape_name else None
        if "phi" in values or "psi" in values:
            theta = Theta(values["mu"], values.get("phi", 0.0), values["psi"], shape, offset)
        else:
            theta = Theta(values["mu"], tuple(_indexed(values, "phi", 1)),
                          tuple(_indexed(values, "psi", 0)), shape, offset)
    except KeyError as exc:
        raise UsageError(f"missing parameter {exc.args[0]}") from None
    validate_theta(fam, theta)
    return fam.value, theta


def read_theta(spec: str, family: str | None = None):
    """``spec`` is a key=value file or an inline comma-separated list."""
    if os.path.isfile(spec):
        with open(spec) as fh:
            return theta_from_pairs(_parse_pairs(fh.read(), spec), family)
    return theta_from_pairs(_parse_pairs(spec, "--theta"), family)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _write_rows(args, name: str, rows: list[dict], columns: list[str]) -> None:
    def dump(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns])

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, name)
        with open(path, "w", newline="") as fh:
            dump(fh)
        log.info("wrote %s", path)
    else:
        dump(sys.stdout)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    out = []
    for x in text.split(","):
        if x.strip():
            try:
                out.append(int(x))
            except ValueError:
                raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _load(args) -> Dataset:
    if not args.data:
        raise UsageError("--data is required")
    for p in args.data:
        if not os.path.exists(p):
            raise UsageError(f"data file not found: {p}")
    kind = args.kind or ("durations" if args.family in ("exp-dur", "weibull-dur") else "returns")
    if args.family == MV_FAMILY:
        if len(args.data) < 2:
            raise UsageError("mv-gauss-vol needs at least two --data files")
        return ingest_many(args.data, kind, args.frequency)
    if len(args.data) != 1:
        raise UsageError(f"{args.family} takes exactly one --data file")
    return ingest(args.data[0], kind, args.frequency)


def _theta(args):
    if args.theta:
        family, theta = read_theta(args.theta, args.family)
        if args.family and family != args.family:
            raise UsageError(f"parameter family {family} does not match --family {args.family}")
    else:
        if args.family == MV_FAMILY:
            raise UsageError("mv-gauss-vol needs --theta")
        family, theta = args.family, DEFAULT_THETA[Family.parse(args.family)]
    if family != MV_FAMILY:
        fam = Family.parse(family)
        if args.nu is not None and fam is Family.TVol:
            theta = theta.replace(shape=_float_list(args.nu)[0])
        if args.k is not None and fam is Family.WeibullDur:
            theta = theta.replace(shape=_float_list(args.k)[0])
        if args.offset is not None:
            theta = theta.replace(offset=args.offset)
        validate_theta(fam, theta)
    return family, theta


def cmd_fit(args) -> None:
    data = _load(args)
    offset = DEFAULT_OFFSET if args.offset is None else args.offset
    if args.family == MV_FAMILY:
        res = fit_mv(data.observations, offset=offset)
    else:
        res = fit(args.family, data.observations, p=args.p, q=args.q, offset=offset)
    rows = res.table()
    for row in rows:
        row["converged"] = int(res.converged)
    _write_rows(args, "fit.csv", rows,
                ["parameter", "estimate", "se", "ci_lo", "ci_hi", "loglik", "converged"])
    if args.out:
        write_theta(os.path.join(args.out, "theta.txt"), args.family, res.theta_hat)


def cmd_simulate(args) -> None:
    family, theta = _theta(args)
    T = _int_list(args.T)[0] if args.T else 1000
    if family == MV_FAMILY:
        path = simulate_mv(theta, T, args.seed, args.burn_in)
        n = theta.dim
        cols = ["t"] + [f"y{i + 1}" for i in range(n)] + [f"alpha{i + 1}" for i in range(n)]
        rows = [dict(t=t + 1, **{f"y{i + 1}": path.y[t, i] for i in range(n)},
                     **{f"alpha{i + 1}": path.alpha[t, i] for i in range(n)}) for t in range(T)]
    else:
        path = simulate(SimConfig(family, theta, T, args.burn_in, args.seed))
        cols = ["t", "y", "alpha", "eta"]
        rows = [{"t": t + 1, "y": path.y[t], "alpha": path.alpha[t], "eta": path.eta[t]}
                for t in range(T)]
    _write_rows(args, "simulated.csv", rows, cols)


def cmd_forecast(args) -> None:
    family, theta = _theta(args)
    if family == MV_FAMILY:
        raise UsageError("forecast supports univariate families; use the library for mv_forecast")
    data = _load(args)
    out = run_filter(family, data.observations, theta)
    horizons = _int_list(args.horizon) if args.horizon else [1]
    rows = forecast_table(family, theta, out, horizons)
    _write_rows(args, "forecast.csv", rows, ["horizon", "mean", "sd", "q05", "q50", "q95"])


def cmd_diagnose(args) -> None:
    family, theta = _theta(args)
    data = _load(args)
    if family == MV_FAMILY:
        out = filter_mv(data.observations, theta)
        from igasc.specfun import std_normal_cdf

        pits = std_normal_cdf(out.eps)
        rows = []
        for i in range(theta.dim):
            ks = ks_uniform_test(pits[:, i])
            rows.append({"series": f"{data.label}#{i + 1}", "family": family,
                         "frequency": data.frequency, "statistic": ks.statistic_d,
                         "p_value": ks.p_value, "n": ks.n, "loglik": out.loglik})
    else:
        out = run_filter(family, data.observations, theta)
        ks = ks_uniform_test(pit_series(family, data.observations, theta))
        rows = [{"series": data.label, "family": family, "frequency": data.frequency,
                 "statistic": ks.statistic_d, "p_value": ks.p_value, "n": ks.n,
                 "loglik": out.loglik}]
    _write_rows(args, "diagnose.csv", rows,
                ["series", "family", "frequency", "statistic", "p_value", "n", "loglik"])


def cmd_mc_study(args) -> None:
    family, theta = _theta(args)
    if family == MV_FAMILY:
        raise UsageError("mc-study supports univariate families")
    T_grid = _int_list(args.T) if args.T else [1000, 5000, 10000]
    study = mc_study(family, theta, T_grid, args.reps, seed=args.seed)
    _write_rows(args, "mc_study.csv", study.rows(), MC_COLUMNS)


def cmd_innovation_curve(args) -> None:
    fam = Family.parse(args.family)
    if fam.is_duration:
        grid = np.linspace(0.01, 5.0, args.points)
    else:
        grid = np.linspace(-5.0, 5.0, args.points)
    if fam is Family.WeibullDur:
        shapes = _float_list(args.k) if args.k else [2.0, 3.0, 4.0]
    elif fam is Family.TVol:
        shapes = _float_list(args.nu) if args.nu else [5.0, 10.0]
    else:
        shapes = [None]
    offset = DEFAULT_OFFSET if args.offset is None else args.offset
    rows = []
    for s in shapes:
        theta = Theta(0.0, 0.0, 0.0, s, offset)
        u, eta = innovation_from_eps(fam, grid, theta)
        label = "" if s is None else s
        rows += [{"family": fam.value, "shape": label, "eps": e, "u": uu, "eta": h}
                 for e, uu, h in zip(grid, u, eta)]
    _write_rows(args, "innovation_curve.csv", rows, ["family", "shape", "eps", "u", "eta"])


def cmd_volatility_path(args) -> None:
    family, theta = _theta(args)
    data = _load(args)
    dates = [d.isoformat() for d in data.dates]
    if family == MV_FAMILY:
        out = filter_mv(data.observations, theta)
        n = theta.dim
        rows = [dict(date=dates[t], **{f"sigma{i + 1}": out.sigma[t, i] for i in range(n)})
                for t in range(len(dates))]
        cols = ["date"] + [f"sigma{i + 1}" for i in range(n)]
    else:
        out = run_filter(family, data.observations, theta)
        scale = np.exp(out.alpha) if Family.parse(family).is_duration else out.sigma
        rows = [{"date": dates[t], "y": data.observations[t], "alpha": out.alpha[t],
                 "scale": scale[t]} for t in range(len(dates))]
        cols = ["date", "y", "alpha", "scale"]
    _write_rows(args, "volatility_path.csv", rows, cols)


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "forecast": cmd_forecast,
    "diagnose": cmd_diagnose,
    "mc-study": cmd_mc_study,
    "innovation-curve": cmd_innovation_curve,
    "volatility-path": cmd_volatility_path,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="igasc", description="Innovation GAS copula models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--family", required=True, choices=FAMILIES)
        p.add_argument("--data", nargs="+", default=[])
        p.add_argument("--kind", choices=KINDS)
        p.add_argument("--frequency", default="")
        p.add_argument("--theta", help="key=value file or inline 'mu=..,phi=..,psi=..'")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--horizon", help="comma-separated horizons")
        p.add_argument("--reps", type=int, default=50)
        p.add_argument("--T", help="comma-separated sample sizes")
        p.add_argument("--burn-in", type=int, default=0)
        p.add_argument("--offset", type=float)
        p.add_argument("--nu", help="t degrees of freedom (list for innovation-curve)")
        p.add_argument("--k", help="Weibull shape (list for innovation-curve)")
        p.add_argument("--p", type=int, default=1)
        p.add_argument("--q", type=int, default=0)
        p.add_argument("--points", type=int, default=201)
        p.add_argument("--out", help="output directory (default: standard output)")
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StationarityError):
        return EXIT_STATIONARITY
    if isinstance(exc, StudyError):
        return EXIT_STUDY
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, DomainError):
        return EXIT_DOMAIN
    if isinstance(exc, OSError):
        return EXIT_IO
    return 1


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        if args.seed < 0 or args.seed >= 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        COMMANDS[args.command](args)
    except (IgascError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        sys.stderr.write(json.dumps(err) + "\n")
        return _exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Every command writes CSV outputs plus ``manifest.json`` into ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import (
    CalibrationProblem,
    OptimizerConfig,
    bootstrap_se,
    calibrate,
    read_key_values,
)
from .data_io import build_grid, default_grid, load_hourly, parse_curves, write_curves
from .decomposition import PARAM_NAMES, DecompositionParams, decompose, decompose_arrays, volume_gap
from .elasticity import AGGREGATE_KEYS, ElasticityConfig, elasticity_report
from .errors import (
    ConfigError,
    DataIntegrityError,
    DegenerateRegressorError,
    DomainError,
    EmptyAggregateError,
    LookupFailure,
    NoEquilibriumError,
    ObjectiveUndefinedError,
    ParseError,
)
from .step_curve import Direction, PriceGrid, StepCurve
from .synthetic import clear_asd, generating_params, random_book, wm_snapshot, write_orders

EXIT_OK = 0
EXIT_PARSE = 10
EXIT_LOOKUP = 11
EXIT_INTEGRITY = 12
EXIT_INPUT_MISSING = 13
EXIT_CONFIG = 20
EXIT_NUMERICAL = 30
EXIT_INTERNAL = 70

EXIT_CODES_HELP = """\
exit codes:
  0   success
  2   bad command line
  10  input parse error (malformed CSV row or params file)
  11  lookup error (timestamp not in the curve file)
  12  input integrity error (non-monotone curve, load gap, bad values)
  13  input file missing or unreadable
  20  configuration error
  30  numerical failure (no equilibrium, undefined loss, failed round-trip)
  70  internal error
"""

GRID_KEYS = ("grid_band_lo", "grid_band_hi", "grid_fine_step", "grid_coarse_step",
             "grid_hard_lo", "grid_hard_hi")
OPTIMIZER_KEYS = ("max_iters", "n_starts", "tolerance", "rng_seed", "n_resamples")
ELASTICITY_KEYS = ("h", "points")
SIM_START = datetime(2017, 1, 1, tzinfo=timezone.utc)


class VerificationFailed(Exception):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    values = read_key_values(path)
    unknown = set(values) - set(GRID_KEYS + OPTIMIZER_KEYS + ELASTICITY_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return values


def _grid(cfg: dict) -> PriceGrid:
    given = [k for k in GRID_KEYS if k in cfg]
    if not given:
        return default_grid()
    if len(given) != len(GRID_KEYS):
        raise ConfigError(f"grid settings need all of {GRID_KEYS}")
    try:
        vals = {k[len("grid_"):]: float(cfg[k]) for k in GRID_KEYS}
    except ValueError as exc:
        raise ConfigError(f"bad grid setting: {exc}") from None
    return build_grid(**vals)


def _grid_config_lines(grid: PriceGrid) -> list[str]:
    step = float(np.round(grid.prices[1] - grid.prices[0], 10))
    lo, hi = grid.p_min, grid.p_max
    return [f"grid_band_lo = {lo!r}", f"grid_band_hi = {hi!r}", f"grid_fine_step = {step!r}",
            f"grid_coarse_step = {step!r}", f"grid_hard_lo = {lo!r}", f"grid_hard_hi = {hi!r}"]


def _require(path, what):
    if path is None:
        raise ConfigError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return p


def read_params(path) -> DecompositionParams:
    """First data row of a CSV whose header names the six parameters."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [n for n in PARAM_NAMES if n not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"params file lacks columns {missing}", 1)
        row = next(reader, None)
        if row is None:
            raise ParseError("params file has no data row", 2)
        try:
            values = [float(row[n]) for n in PARAM_NAMES]
        except (TypeError, ValueError):
            raise ParseError(f"non-numeric parameter in {row}", 2) from None
    try:
        return DecompositionParams.from_sequence(values)
    except DomainError as exc:
        raise ParseError(str(exc), 2) from None


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    x = float(x)
    return "nan" if np.isnan(x) else repr(round(x, 10))


def _utc(ts):
    return ts.astimezone(timezone.utc)


# --------------------------------------------------------------------------
# commands

def cmd_calibrate(args, out: Path, info: dict) -> int:
    cfg = _load_config(args.config)
    opt = OptimizerConfig.from_mapping(cfg)
    snapshots = parse_curves(_require(args.curves, "curves"), _grid(cfg))
    loads = {_utc(r.timestamp): r.load for r in load_hourly(_require(args.load, "load"))}
    paired = [(s, loads[_utc(s.timestamp)]) for s in snapshots if _utc(s.timestamp) in loads]
    info["hours_without_load"] = len(snapshots) - len(paired)
    if not paired:
        raise DataIntegrityError("no curve hour has a matching load value")
    problem = CalibrationProblem([s for s, _ in paired], [l for _, l in paired])
    res = calibrate(problem, opt)
    p = res.params
    _write_rows(out / "params.csv", PARAM_NAMES + ("theta0", "theta1", "sse"),
                [[_fmt(v) for v in (*p.as_array(), res.theta0, res.theta1, res.sse)]])
    _write_rows(out / "series.csv", ("timestamp", "v_W", "v_C", "v_F", "load"),
                [[s.timestamp.isoformat(), _fmt(w), _fmt(c), _fmt(f), _fmt(l)]
                 for s, w, c, f, l in zip(problem.snapshots, res.v_W_series, res.v_C_series,
                                          res.v_F_series, problem.loads)])
    cw, cc, cf = res.correlations
    _write_rows(out / "correlations.csv", ("series", "correlation"),
                [["v_W", _fmt(cw)], ["v_C", _fmt(cc)], ["v_F", _fmt(cf)],
                 ["ordering_W_lt_C_lt_F", str(bool(cw < cc < cf))]])
    if "n_resamples" in cfg and opt.n_resamples > 0:
        se = bootstrap_se(problem, p, opt.n_resamples, opt)
        _write_rows(out / "standard_errors.csv", ("parameter", "se"),
                    [[k, _fmt(v)] for k, v in se.items()])
    info.update(converged=res.converged, failed_hours=res.n_failed, evaluations=res.n_evaluations)
    return EXIT_OK


def _find_snapshot(snapshots, stamp: str):
    try:
        target = datetime.fromisoformat(stamp)
    except ValueError:
        raise LookupFailure(f"bad timestamp {stamp!r}") from None
    if target.tzinfo is None:
        raise LookupFailure(f"timestamp {stamp!r} needs a UTC offset")
    for s in snapshots:
        if _utc(s.timestamp) == _utc(target):
            return s
    raise LookupFailure(f"timestamp {stamp} not found in the curve file")


def cmd_decompose(args, out: Path, info: dict) -> int:
    cfg = _load_config(args.config)
    params = read_params(_require(args.params, "params"))
    snapshots = parse_curves(_require(args.curves, "curves"), _grid(cfg))
    if args.timestamp is None:
        raise ConfigError("--timestamp is required")
    snap = _find_snapshot(snapshots, args.timestamp)
    r = decompose(snap, params)
    names = ("wsup", "wdem", "sup0", "dem0", "wsup1", "wdem1", "fsup1", "fdem1", "fsup", "fdem")
    curves = [snap.wsup, snap.wdem] + [getattr(r, n) for n in names[2:]]
    _write_rows(out / "curves.csv", ("price",) + names,
                [[_fmt(p)] + [f"{c.volumes[i]:.1f}" for c in curves]
                 for i, p in enumerate(snap.grid.prices)])
    summary = [("timestamp", snap.timestamp.isoformat()), ("p_U", _fmt(r.p_U)),
               ("tau1", f"{r.tau1:.1f}"), ("p_W", _fmt(r.wm_eq.price)),
               ("v_W", f"{r.wm_eq.volume:.1f}"), ("p_F", _fmt(r.fm_eq.price)),
               ("v_F", f"{r.fm_eq.volume:.1f}"), ("v_C", f"{r.v_C:.1f}"),
               ("volume_gap", f"{volume_gap(r):.1f}"),
               ("p_U_below_p_W", str(r.diagnostics["p_U_below_p_W"]))]
    _write_rows(out / "equilibrium.csv", ("quantity", "value"), summary)
    return EXIT_OK


def cmd_elasticity(args, out: Path, info: dict) -> int:
    cfg = _load_config(args.config)
    ecfg = ElasticityConfig.from_mapping(cfg)
    params = read_params(_require(args.params, "params"))
    snapshots = parse_curves(_require(args.curves, "curves"), _grid(cfg))
    if not snapshots:
        raise DataIntegrityError("curve file holds no hours")
    grid = snapshots[0].grid
    wsup = np.stack([s.wsup.units for s in snapshots])
    wdem = np.stack([s.wdem.units for s in snapshots])
    r = decompose_arrays(grid, wsup, wdem, *params.as_array(), keep_curves=True)
    curves = [(s.timestamp, StepCurve(grid, r["fdem"][i], Direction.DEMAND))
              for i, s in enumerate(snapshots) if r["ok"][i]]
    info["failed_hours"] = int((~r["ok"]).sum())
    report = elasticity_report(curves, ecfg)
    report.to_csv(out / "elasticity.csv")
    info["sentinel_rows"] = report.n_sentinel
    info["positive_price_elasticity_max"] = _fmt(
        report.rows.loc[(report.rows.probe_price > 0) & (report.rows.sentinel_flag == 0),
                        "elasticity"].max())
    for key in AGGREGATE_KEYS:
        report.aggregate(key).to_csv(out / f"elasticity_by_{key}.csv", index=False,
                                     lineterminator="\n", float_format="%.10g")
    return EXIT_OK


def cmd_simulate(args, out: Path, info: dict) -> int:
    if args.n_books is None or args.n_books < 1:
        raise ConfigError(f"--n-books must be at least 1, got {args.n_books}")
    seed = 0 if args.seed is None else args.seed
    (out / "orders").mkdir(exist_ok=True)
    snapshots, rows, failures = [], [], 0
    width = len(str(args.n_books - 1))
    for i in range(args.n_books):
        book = random_book(seed + i)
        ts = SIM_START + timedelta(hours=i)
        snap = wm_snapshot(book, ts)
        _, _, asd = clear_asd(book)
        gp = generating_params(book)
        r = decompose(snap, gp)
        ok = r.fm_eq.volume == asd.volume
        failures += not ok
        snapshots.append(snap)
        write_orders(book, out / "orders" / f"book_{i:0{width}d}.csv")
        rows.append([i, ts.isoformat(), _fmt(asd.price), f"{asd.volume:.1f}",
                     _fmt(r.wm_eq.price), f"{r.wm_eq.volume:.1f}", f"{r.fm_eq.volume:.1f}",
                     *[_fmt(v) for v in gp.as_array()], str(ok)])
    write_curves(snapshots, out / "curves.csv")
    _write_rows(out / "clearings.csv",
                ("book", "timestamp", "p_ASD", "v_ASD", "p_WM", "v_WM", "v_F") + PARAM_NAMES
                + ("roundtrip_ok",), rows)
    (out / "grid.cfg").write_text("\n".join(_grid_config_lines(snapshots[0].grid)) + "\n")
    info["roundtrip_failures"] = failures
    if failures:
        raise VerificationFailed(f"{failures} of {args.n_books} books failed the round-trip")
    return EXIT_OK


COMMANDS = {"calibrate": cmd_calibrate, "decompose": cmd_decompose,
            "elasticity": cmd_elasticity, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fundcurve", description="Fundamental-model decomposition of auction curves.",
        epilog=EXIT_CODES_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, *flags):
        p = sub.add_parser(name, help=help_text, epilog=EXIT_CODES_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="key = value configuration file")
        for flag, kw in flags:
            p.add_argument(flag, **kw)
        return p

    curves = ("--curves", dict(help="curve CSV (timestamp,side,price,cumulative_volume)"))
    params = ("--params", dict(help="CSV with columns a0,a1,gamma1,phi1,alpha1,beta1"))
    add("calibrate", "fit decomposition parameters to hourly load", curves,
        ("--load", dict(help="quarter-hourly load CSV (timestamp,load_mw)")))
    add("decompose", "dump all curves of one hour", curves, params,
        ("--timestamp", dict(help="delivery hour, ISO-8601 with offset")))
    add("elasticity", "slopes and elasticities of the FM demand", curves, params)
    add("simulate", "random order books, clearings and round-trip checks",
        ("--seed", dict(type=int, default=0, help="first book seed")),
        ("--n-books", dict(type=int, default=100, help="number of books")))
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ParseError):
        return EXIT_PARSE
    if isinstance(exc, LookupFailure):
        return EXIT_LOOKUP
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (DataIntegrityError, DomainError)):
        return EXIT_INTEGRITY
    if isinstance(exc, OSError):
        return EXIT_INPUT_MISSING
    if isinstance(exc, (NoEquilibriumError, ObjectiveUndefinedError, DegenerateRegressorError,
                        EmptyAggregateError, VerificationFailed)):
        return EXIT_NUMERICAL
    return EXIT_INTERNAL


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    start = time.perf_counter()
    info: dict = {}
    try:
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](args, out, info)
        error = None
    except Exception as exc:  # mapped to an exit code below
        code, error = _exit_code(exc), f"{type(exc).__name__}: {exc}"
        print(f"fundcurve {args.command}: {error}", file=sys.stderr)
    manifest = {
        "command": args.command,
        "argv": argv,
        "inputs": {k: getattr(args, k, None) for k in ("curves", "load", "params", "timestamp")
                   if getattr(args, k, None) is not None},
        "config": args.config,
        "out": str(out),
        "seed": getattr(args, "seed", None),
        "n_books": getattr(args, "n_books", None),
        "version": __version__,
        "exit_code": code,
        "error": error,
        "details": info,
        "duration_s": round(time.perf_counter() - start, 3),
    }
    try:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    except OSError:
        pass
    return code


if __name__ == "__main__":
    sys.exit(main())

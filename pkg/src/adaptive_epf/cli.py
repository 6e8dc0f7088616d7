"""Command line front-end: ``adaptive-epf {validate,backtest,metrics,ensemble,dm}``.

Exit codes: 0 success, 1 I/O problem, 2 invalid input or misaligned files,
3 statistical degeneracy (zero-variance DM differential, zero denominator).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .backtest import BacktestConfig, ForecastTable, read_forecast_table, run_backtest
from .dataio import MARKETS, load_dataset, registry_windows
from .errors import DateMismatch, EPFError
from .lear import write_model_dump
from .evaluate import (COMBINED_PRESETS, PRESETS, compute_metrics, dm_report,
                       dm_test_multivariate, ensemble_mean, format_ratio_table, format_table,
                       metrics_table, performance_ratio, preset_ensemble, window_of_label)

DATA_DIR_ENV = "ADAPTIVE_EPF_DATA_DIR"
EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_DEGENERATE = 0, 1, 2, 3

# backtest presets: scheme, filter flag, family of windows
BACKTEST_PRESETS = {
    "lear": ("median_arcsinh", False),
    "aslear": ("adaptive", True),
    "aslear-nofilter": ("adaptive", False),  # outlier-filter ablation
    "lear-filtered": ("median_arcsinh", True),  # arcsinh on filtered prices
}


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on", "y"):
        return True
    if t in ("0", "false", "no", "off", "n"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _csv_list(text: str) -> List[str]:
    return [p for p in (s.strip() for s in text.split(",")) if p]


def resolve_data_path(path: str) -> Path:
    """``path`` as given, or relative to ``$ADAPTIVE_EPF_DATA_DIR`` if not found."""
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(DATA_DIR_ENV):
        alt = Path(os.environ[DATA_DIR_ENV]) / p
        if alt.exists():
            return alt
    return p


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def write_run_manifest(out: Path, command: str, config: dict, inputs: Sequence[Path],
                       wall_clock: float, timings: Optional[np.ndarray] = None) -> Path:
    """JSON sidecar recording how ``out`` was produced."""
    doc = {
        "command": command,
        "engine_version": __version__,
        "python": platform.python_version(),
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "output": str(out),
        "output_sha256": sha256_file(out),
        "wall_clock_seconds": round(wall_clock, 3),
    }
    if timings is not None and len(timings):
        doc["per_day_seconds"] = {"n": int(len(timings)), "total": float(timings.sum()),
                                  "mean": float(timings.mean()), "min": float(timings.min()),
                                  "max": float(timings.max())}
    mpath = manifest_path(out)
    mpath.write_text(json.dumps(doc, indent=2, default=str) + "\n", encoding="utf-8")
    return mpath


def _write_table(table: ForecastTable, out: Path) -> None:
    """Write through a temporary file so a failure leaves nothing behind."""
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(out.name + ".partial")
    try:
        table.to_csv(tmp)
        os.replace(tmp, out)
    finally:
        if tmp.exists():
            tmp.unlink()


def _jsonable(cfg: dict) -> dict:
    return {k: (str(v) if v is not None and not isinstance(v, (int, float, bool, str)) else v)
            for k, v in cfg.items()}


# -- subcommands --------------------------------------------------------------

def cmd_validate(args) -> int:
    path = resolve_data_path(args.data)
    ds = load_dataset(path, market_id=args.market)
    rep = ds.report
    print(f"file            {path}")
    print(f"market          {ds.market_id}")
    print(f"rows            {rep.n_rows}")
    print(f"days            {ds.n_days} ({ds.span()})")
    print(f"test period     {ds.test_start}..{ds.test_end} ({len(ds.test_days())} days)")
    print(f"short DST days  {len(rep.short_days)}")
    print(f"long DST days   {len(rep.long_days)}")
    print(f"cells interpolated  {rep.interpolated_cells}")
    print(f"cells averaged      {rep.averaged_cells}")
    return EXIT_OK


def _backtest_configs(args, market_id: str) -> List[BacktestConfig]:
    common = dict(market_id=market_id, v=args.v, kappa=args.kappa, cv_folds=args.cv_folds,
                  lambda_grid=args.lambda_grid, test_start=args.test_start,
                  test_end=args.test_end)
    if args.preset:
        scheme, filt = BACKTEST_PRESETS[args.preset]
        if args.window:
            windows = _csv_list(args.window)
        else:
            windows = list(registry_windows(market_id))
        return [BacktestConfig(scheme=scheme, window=w, filter_outliers=filt, **common)
                for w in windows]
    if not args.window:
        raise ValueError("--window is required without --preset")
    return [BacktestConfig(scheme=args.scheme, window=w, filter_outliers=args.filter_outliers,
                           label=args.label or "", **common) for w in _csv_list(args.window)]


def cmd_backtest(args) -> int:
    data_path = resolve_data_path(args.data)
    ds = load_dataset(data_path, market_id=args.market)
    configs = _backtest_configs(args, ds.market_id)
    out = Path(args.out)
    several = len(configs) > 1
    if several:
        out.mkdir(parents=True, exist_ok=True)

    def progress(day, i, n, secs):
        if not args.quiet:
            print(f"[{i}/{n}] {day} {secs:.2f}s", file=sys.stderr, flush=True)

    for cfg in configs:
        target = out / f"{cfg.label}.csv" if several else out
        tic = time.perf_counter()
        dump = [] if args.dump_models else None
        table = run_backtest(ds, cfg, jobs=args.jobs, progress=progress, model_dump=dump)
        _write_table(table, target)
        if dump is not None:
            write_model_dump(dump, target.with_suffix(".models.csv"))
        write_run_manifest(target, "backtest", _jsonable(cfg.to_dict()), [data_path],
                           time.perf_counter() - tic, table.metadata["timings"])
        print(f"{cfg.label}: {len(table)} days -> {target}")
    return EXIT_OK


def _ratio_window(label: str) -> str:
    return window_of_label(label)[1] or label


def cmd_metrics(args) -> int:
    ds = load_dataset(resolve_data_path(args.data), market_id=args.market)
    tables = [read_forecast_table(p) for p in _csv_list(args.forecasts)]
    reports = [compute_metrics(t, ds, monthly=args.monthly) for t in tables]
    if args.format == "jsonl":
        for r in reports:
            print(r.to_json())
    else:
        print(metrics_table(reports))
        if args.monthly:
            for r in reports:
                print()
                print(format_table([r.label, "MAE"], r.monthly))
    if args.ratio_against:
        baselines = [read_forecast_table(p) for p in _csv_list(args.ratio_against)]
        if len(baselines) not in (1, len(tables)):
            raise ValueError("--ratio-against needs one file or one per forecast file")
        if len(baselines) == 1:
            baselines = baselines * len(tables)
        by_window = {}
        for t, r, b in zip(tables, reports, baselines):
            if not t.same_coverage(b):
                raise DateMismatch(f"{t.label} and {b.label} cover different dates")
            ratio = performance_ratio(r, compute_metrics(b, ds))
            by_window[_ratio_window(t.label)] = ratio
            if args.format == "jsonl":
                print(json.dumps({"type": "ratio", "label": t.label, "against": b.label,
                                  **ratio}))
        if args.format != "jsonl":
            print()
            print(format_ratio_table({ds.market_id: by_window}, list(by_window)))
    return EXIT_OK


def cmd_ensemble(args) -> int:
    inputs = [Path(p) for p in _csv_list(args.inputs)]
    tables = [read_forecast_table(p) for p in inputs]
    tic = time.perf_counter()
    if args.preset:
        if args.market is None:
            raise ValueError("--preset needs --market to know the calibration windows")
        ens = preset_ensemble(args.preset, tables, args.market)
    else:
        ens = ensemble_mean(tables, args.label)
    out = Path(args.out)
    _write_table(ens, out)
    write_run_manifest(out, "ensemble", {"preset": args.preset, "label": ens.label,
                                         "members": ens.metadata.get("members")},
                       inputs, time.perf_counter() - tic)
    print(f"{ens.label}: {len(ens)} days -> {out}")
    return EXIT_OK


def cmd_dm(args) -> int:
    ds = load_dataset(resolve_data_path(args.data), market_id=args.market)
    outcome = dm_test_multivariate(read_forecast_table(args.a), read_forecast_table(args.b), ds)
    print(outcome.to_json() if args.format == "jsonl" else dm_report(outcome))
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptive-epf",
        description="Day-ahead price forecasting with LEAR and adaptive standardisation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress details")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p, required=True):
        p.add_argument("--data", required=required,
                       help=f"market CSV (relative paths also tried under ${DATA_DIR_ENV})")
        p.add_argument("--market", choices=MARKETS, default=None,
                       help="market id; default from the manifest or 'custom'")

    p = sub.add_parser("validate", help="load a dataset and report repairs")
    data_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("backtest", help="daily-recalibrated forecasts over the test period")
    data_args(p)
    p.add_argument("--scheme", default="adaptive", choices=["adaptive", "arcsinh"])
    p.add_argument("--window", help="calibration window in days or 'all'; comma list allowed")
    p.add_argument("--preset", choices=sorted(BACKTEST_PRESETS),
                   help="run every registry window of a model family")
    p.add_argument("--v", type=int, default=7, help="days in the rolling window (default 7)")
    p.add_argument("--kappa", type=float, default=10.0, help="outlier band width (default 10)")
    p.add_argument("--filter-outliers", type=_bool, default=None,
                   help="true/false; default on for adaptive, off for arcsinh")
    p.add_argument("--cv-folds", type=int, default=5)
    p.add_argument("--lambda-grid", type=int, default=100)
    p.add_argument("--test-start")
    p.add_argument("--test-end")
    p.add_argument("--label", help="model label (single configuration only)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for test days")
    p.add_argument("--dump-models", action="store_true",
                   help="also write lambda and non-zero coefficients per day and hour")
    p.add_argument("--quiet", action="store_true", help="no per-day progress")
    p.add_argument("--out", required=True,
                   help="forecast CSV, or a directory when several configurations run")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("metrics", help="MAE, RMSE, sMAPE and rMAE of forecast files")
    data_args(p)
    p.add_argument("--forecasts", required=True, help="forecast CSV(s), comma separated")
    p.add_argument("--monthly", action="store_true", help="add MAE per calendar month")
    p.add_argument("--ratio-against", help="baseline CSV(s) for performance ratios")
    p.add_argument("--format", choices=["table", "jsonl"], default="table")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("ensemble", help="cell-wise mean of forecast files")
    p.add_argument("--inputs", required=True, help="forecast CSVs, comma separated")
    p.add_argument("--preset", choices=sorted(PRESETS) + sorted(COMBINED_PRESETS))
    p.add_argument("--market", choices=MARKETS, default=None,
                   help="market whose windows the preset refers to")
    p.add_argument("--label")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("dm", help="multivariate Diebold-Mariano test of A against B")
    data_args(p)
    p.add_argument("--a", required=True, help="forecast CSV of model A")
    p.add_argument("--b", required=True, help="forecast CSV of model B")
    p.add_argument("--format", choices=["table", "jsonl"], default="table")
    p.set_defaults(func=cmd_dm)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EPFError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

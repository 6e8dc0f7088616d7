"""Daily-recalibrated LEAR backtests.

For every test day the engine slices the calibration window, optionally
filters price outliers, standardises price and exogenous series, fits 24
cross-validated LASSO models, predicts the day and maps the predictions
back to prices. Each day reads only the immutable dataset, so days and
configurations can run in any order or in parallel.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from . import lear
from .dataio import (ALL, HOURS, MarketDataset, as_day, day_of_week, parse_window,
                     slice_training)
from .errors import DateMismatch, EPFError, InsufficientHistory, ParseError
from .transform import (ADAPTIVE, MEDIAN_ARCSINH, SIGMA_FLOOR, apply_adaptive,
                        apply_median_arcsinh, estimate_adaptive_params, filter_outliers,
                        fit_median_arcsinh, invert_adaptive, invert_median_arcsinh,
                        standardise_exogenous)

logger = logging.getLogger(__name__)

SCHEMES = (ADAPTIVE, MEDIAN_ARCSINH)
_SCHEME_ALIASES = {"adaptive": ADAPTIVE, "as": ADAPTIVE, "arcsinh": MEDIAN_ARCSINH,
                   "median_arcsinh": MEDIAN_ARCSINH, "median-arcsinh": MEDIAN_ARCSINH}


def parse_scheme(value: str) -> str:
    try:
        return _SCHEME_ALIASES[value.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown scheme {value!r}; use adaptive or arcsinh") from None


@dataclass(frozen=True)
class BacktestConfig:
    """One model configuration.

    ``filter_outliers=None`` means the default of the scheme: on for the
    adaptive scheme, off for median-arcsinh. Turning it off for the adaptive
    scheme, or on for median-arcsinh, gives the two ablation runs.
    """

    market_id: str = "custom"
    scheme: str = ADAPTIVE
    window: Union[int, str] = ALL
    v: int = 7
    kappa: float = 10.0
    filter_outliers: Optional[bool] = None
    cv_folds: int = lear.CV_FOLDS
    lambda_grid: int = lear.GRID_SIZE
    label: str = ""
    reuse_price_params: bool = False
    sigma_floor: float = SIGMA_FLOOR
    test_start: Optional[str] = None
    test_end: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", parse_scheme(self.scheme))
        object.__setattr__(self, "window", parse_window(self.window))
        if self.filter_outliers is None:
            object.__setattr__(self, "filter_outliers", self.scheme == ADAPTIVE)
        if self.v < 1:
            raise ValueError(f"v must be >= 1, got {self.v}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.cv_folds < 2 or self.lambda_grid < 2:
            raise ValueError("cv_folds and lambda_grid must both be >= 2")
        if not self.label:
            object.__setattr__(self, "label", default_label(self))

    @property
    def first_row(self) -> int:
        """Index (within a training slice) of the first usable training day."""
        warmup = self.v if self.scheme == ADAPTIVE else 0
        return warmup + max(lear.LAGS)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def default_label(cfg: BacktestConfig) -> str:
    name = ("AS" if cfg.scheme == ADAPTIVE else "") + f"LEAR-{cfg.window}"
    if cfg.scheme == ADAPTIVE and not cfg.filter_outliers:
        name += "-nofilter"
    elif cfg.scheme == MEDIAN_ARCSINH and cfg.filter_outliers:
        name += "-filtered"
    return name


@dataclass
class ForecastTable:
    """Hourly forecasts per test day, in price units."""

    dates: np.ndarray
    values: np.ndarray
    label: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.dates), HOURS):
            raise ValueError(f"values shape {self.values.shape} does not match "
                             f"{len(self.dates)} dates")

    def __len__(self):
        return len(self.dates)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "label"] + [f"h{h}" for h in range(1, HOURS + 1)])
            for day, row in zip(self.dates, self.values):
                w.writerow([str(day), self.label] + [repr(float(x)) for x in row])
        return path

    def same_coverage(self, other: "ForecastTable") -> bool:
        return np.array_equal(self.dates, other.dates)


def read_forecast_table(path) -> ForecastTable:
    """Read a CSV written by :meth:`ForecastTable.to_csv`."""
    dates, values, labels = [], [], set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["date", "label"] + [f"h{h}" for h in range(1, HOURS + 1)]
        if header != expected:
            raise ParseError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                dates.append(as_day(row[0]))
                values.append([float(x) for x in row[2:]])
            except (ValueError, EPFError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            labels.add(row[1])
    if len(labels) > 1:
        raise ParseError(f"{path}: holds several labels {sorted(labels)}")
    return ForecastTable(np.array(dates, dtype="datetime64[D]"),
                         np.array(values).reshape(-1, HOURS), labels.pop() if labels else "")


@dataclass
class DayForecast:
    prediction: np.ndarray
    model: lear.LearModelSet
    inversion: tuple  # (location, scale) used to map back to prices
    n_train: int


def forecast_day(ds: MarketDataset, cfg: BacktestConfig, target_day) -> DayForecast:
    """Run the six steps for a single target day."""
    target_day = as_day(target_day)
    train = slice_training(ds, target_day, cfg.window)
    t = ds.index_of(target_day)
    n = train.n_days
    n_rows = n - cfg.first_row
    if n_rows < cfg.cv_folds:
        raise InsufficientHistory(
            f"{n} training days leave {max(n_rows, 0)} usable rows; need {cfg.cv_folds}",
            date=target_day)

    price = np.asarray(train.price)
    if cfg.filter_outliers:
        price = filter_outliers(price, cfg.v, cfg.kappa)
    # the target day's exogenous values are known before gate closure
    exog1 = np.vstack([train.exog1, ds.exog1[t:t + 1]])
    exog2 = np.vstack([train.exog2, ds.exog2[t:t + 1]])
    dow = day_of_week(np.append(train.days, target_day))

    u = np.full((n + 1, HOURS), np.nan)
    if cfg.scheme == ADAPTIVE:
        params = estimate_adaptive_params(price, cfg.v, extend=True)
        u[:n] = apply_adaptive(price, params, cfg.sigma_floor).values
        reuse = params if cfg.reuse_price_params else None
        x1 = standardise_exogenous(exog1, cfg.v, reuse, cfg.sigma_floor, "exog1").values
        x2 = standardise_exogenous(exog2, cfg.v, reuse, cfg.sigma_floor, "exog2").values
        inversion = params.day(n)
    else:
        params = fit_median_arcsinh(price)
        u[:n] = apply_median_arcsinh(price, params=params, sigma_floor=cfg.sigma_floor).values
        x1 = apply_median_arcsinh(exog1, train.exog1, sigma_floor=cfg.sigma_floor).values
        x2 = apply_median_arcsinh(exog2, train.exog2, sigma_floor=cfg.sigma_floor).values
        inversion = (params.median, params.mad_scale)

    rows = np.arange(cfg.first_row, n)
    fm = lear.build_features(u, x1, x2, dow, rows)
    model = lear.fit_hour_models(fm.X, fm.targets, cfg.cv_folds, cfg.lambda_grid,
                                 label=f"{cfg.label} {target_day}")
    features = lear.build_features(u, x1, x2, dow, [n]).X[0]
    u_hat = lear.predict(model, features)
    if cfg.scheme == ADAPTIVE:
        pred = invert_adaptive(u_hat, inversion, cfg.sigma_floor)
    else:
        pred = invert_median_arcsinh(u_hat, params, cfg.sigma_floor)
    return DayForecast(pred, model, inversion, n_rows)


def _test_days(ds: MarketDataset, cfg: BacktestConfig) -> np.ndarray:
    start = as_day(cfg.test_start) if cfg.test_start else ds.test_start
    end = as_day(cfg.test_end) if cfg.test_end else ds.test_end
    if start is None or end is None:
        raise DateMismatch("no test period given by the dataset or the config")
    if start > end or start < ds.days[0] or end > ds.days[-1]:
        raise DateMismatch(f"test period {start}..{end} is not inside {ds.span()}")
    return np.arange(start, end + 1)


def _run_days(ds, cfg, days):
    """Worker: forecasts for a chunk of days (module-level so it pickles)."""
    out = []
    for day in days:
        tic = time.perf_counter()
        try:
            res = forecast_day(ds, cfg, day)
        except EPFError as exc:
            raise type(exc)(f"{day}: {exc}", date=day) from exc
        out.append((res, time.perf_counter() - tic))
    return out


def run_backtest(ds: MarketDataset, cfg: BacktestConfig, jobs: int = 1,
                 progress: Optional[Callable] = None,
                 model_dump: Optional[list] = None) -> ForecastTable:
    """Forecast every day of the test period with daily recalibration.

    ``progress(day, i, n, seconds)`` is called after each day when given.
    ``model_dump``, when a list, receives one record per (day, hour) with the
    selected lambda and the non-zero coefficients.
    """
    days = _test_days(ds, cfg)
    results = []
    if jobs <= 1 or len(days) < 2:
        for i, day in enumerate(days):
            [(res, secs)] = _run_days(ds, cfg, [day])
            results.append((res, secs))
            if progress:
                progress(day, i + 1, len(days), secs)
    else:
        chunks = [c for c in np.array_split(days, min(jobs, len(days))) if len(c)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for chunk_result in pool.map(_run_days, [ds] * len(chunks), [cfg] * len(chunks),
                                         chunks):
                for res, secs in chunk_result:
                    results.append((res, secs))
                    if progress:
                        progress(days[len(results) - 1], len(results), len(days), secs)

    preds = np.vstack([r.prediction for r, _ in results])
    if not np.all(np.isfinite(preds)):
        bad = days[~np.isfinite(preds).all(axis=1)][0]
        raise EPFError(f"{bad}: non-finite forecast", date=bad)
    timings = np.array([s for _, s in results])
    fallbacks = int(sum(r.model.fallback.sum() for r, _ in results))
    if model_dump is not None:
        for day, (r, _) in zip(days, results):
            model_dump.extend(lear.model_dump_rows(r.model, day))
    meta = {
        "config": cfg.to_dict(),
        "inversion": np.array([r.inversion for r, _ in results]),
        "n_train_rows": np.array([r.n_train for r, _ in results]),
        "lambdas": np.vstack([r.model.lambdas for r, _ in results]),
        "timings": timings,
        "fallback_hours": fallbacks,
    }
    return ForecastTable(days, preds, cfg.label, meta)


@dataclass
class SuiteResult:
    tables: List[ForecastTable]
    errors: List[dict]

    @property
    def labels(self):
        return [t.label for t in self.tables]


def _run_one(ds, cfg):
    return run_backtest(ds, cfg)


def run_suite(ds: MarketDataset, configs: Sequence[BacktestConfig],
              jobs: int = 1) -> SuiteResult:
    """Run several configurations. A failing configuration is recorded in
    ``errors`` and does not stop the others; table order follows ``configs``."""
    tables, errors = [], []
    if jobs <= 1:
        outcomes = []
        for cfg in configs:
            try:
                outcomes.append(run_backtest(ds, cfg))
            except (EPFError, ValueError) as exc:
                outcomes.append(exc)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, ds, cfg) for cfg in configs]
            outcomes = []
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except (EPFError, ValueError) as exc:
                    outcomes.append(exc)
    for i, (cfg, out) in enumerate(zip(configs, outcomes)):
        if isinstance(out, Exception):
            logger.error("%s failed: %s", cfg.label, out)
            errors.append({"index": i, "label": cfg.label, "error": type(out).__name__,
                           "message": str(out)})
        else:
            tables.append(out)
    return SuiteResult(tables, errors)


def market_configs(market_id: str, scheme: str = ADAPTIVE, **overrides) -> List[BacktestConfig]:
    """The five calibration-window configurations of a registry market."""
    from .dataio import registry_windows
    return [BacktestConfig(market_id=market_id, scheme=scheme, window=w, **overrides)
            for w in registry_windows(market_id)]

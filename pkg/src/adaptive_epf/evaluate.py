"""Point-forecast metrics, ensembles, performance ratios and the
multivariate Diebold-Mariano test."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .backtest import ForecastTable
from .dataio import MarketDataset, registry_windows
from .errors import (DateMismatch, DegenerateVariance, DivisionByZero,
                     MissingNaiveHistory)

METRICS = ("MAE", "RMSE", "sMAPE", "rMAE")
NAIVE_LAG = 7
DM_ALPHAS = (0.01, 0.05, 0.10)

# named groups of model labels, by calibration-window position
PRESETS = {
    "ens-lear": ("Ens.LEAR", "lear", ("56", "84", "long1", "long2")),
    "ens1-aslear": ("Ens1-ASLEAR", "aslear", ("long1", "long2", "ALL")),
    "ens2-aslear": ("Ens2-ASLEAR", "aslear", ("56", "84", "long1", "long2", "ALL")),
}
COMBINED_PRESETS = {"lear-aslear": ("LEAR-ASLEAR", ("ens-lear", "ens1-aslear"))}


@dataclass
class MetricsReport:
    label: str
    MAE: float
    RMSE: float
    sMAPE: float
    rMAE: float
    n_days: int
    monthly: Optional[List[Tuple[str, float]]] = None

    def metrics(self) -> Dict[str, float]:
        return {m: getattr(self, m) for m in METRICS}

    def to_json(self) -> str:
        d = asdict(self)
        if self.monthly is not None:
            d["monthly"] = [[m, v] for m, v in self.monthly]
        return json.dumps({"type": "metrics", **d})


@dataclass
class DmOutcome:
    model_a_label: str
    model_b_label: str
    dm_statistic: float
    p_value: float
    n: int

    def b_better(self, alpha: float) -> bool:
        """Rejection: forecasts of model B are significantly more accurate."""
        return self.p_value < alpha

    def to_json(self) -> str:
        return json.dumps({"type": "dm", **asdict(self)})


def _aligned(forecasts: ForecastTable, ds: MarketDataset, naive: bool = False):
    """Actuals (and weekly-naive forecasts) for the rows of ``forecasts``."""
    if len(forecasts) == 0:
        raise DateMismatch(f"{forecasts.label}: forecast table is empty")
    offsets = (forecasts.dates - ds.days[0]).astype(np.int64)
    inside = (offsets >= 0) & (offsets < ds.n_days)
    if not inside.all():
        bad = forecasts.dates[~inside][0]
        raise DateMismatch(f"{forecasts.label}: no actual price for {bad}", date=bad)
    actual = np.asarray(ds.price)[offsets]
    if not naive:
        return actual, None
    if offsets.min() < NAIVE_LAG:
        bad = forecasts.dates[offsets < NAIVE_LAG][0]
        raise MissingNaiveHistory(f"{forecasts.label}: no price {NAIVE_LAG} days before {bad}",
                                  date=bad)
    return actual, np.asarray(ds.price)[offsets - NAIVE_LAG]


def _smape(actual, pred) -> float:
    den = np.abs(actual) + np.abs(pred)
    num = 2.0 * np.abs(actual - pred)
    terms = np.divide(num, den, out=np.zeros_like(num), where=den != 0)
    return float(terms.mean())


def compute_metrics(forecasts: ForecastTable, ds: MarketDataset,
                    monthly: bool = False) -> MetricsReport:
    """MAE, RMSE, sMAPE and rMAE against the price a week earlier."""
    actual, naive = _aligned(forecasts, ds, naive=True)
    err = actual - forecasts.values
    mae = float(np.abs(err).mean())
    naive_mae = float(np.abs(actual - naive).mean())
    if naive_mae == 0.0:
        rmae = 0.0 if mae == 0.0 else float("inf")
    else:
        rmae = mae / naive_mae
    return MetricsReport(forecasts.label, mae, float(np.sqrt((err ** 2).mean())),
                         _smape(actual, forecasts.values), rmae, len(forecasts),
                         monthly_mae(forecasts, ds) if monthly else None)


def monthly_mae(forecasts: ForecastTable, ds: MarketDataset) -> List[Tuple[str, float]]:
    """MAE per calendar month of the forecast date, months ascending."""
    actual, _ = _aligned(forecasts, ds)
    daily = np.abs(actual - forecasts.values).mean(axis=1)
    months = forecasts.dates.astype("datetime64[M]")
    out = []
    for m in np.unique(months):
        out.append((str(m), float(daily[months == m].mean())))
    return out


def ensemble_mean(tables: Sequence[ForecastTable], label: Optional[str] = None) -> ForecastTable:
    """Cell-wise mean of at least two tables with identical dates."""
    if len(tables) < 2:
        raise ValueError(f"an ensemble needs at least 2 tables, got {len(tables)}")
    first = tables[0]
    for t in tables[1:]:
        if not first.same_coverage(t):
            raise DateMismatch(f"{t.label} and {first.label} cover different dates")
    # sorting each cell's members makes the sum independent of input order
    values = np.mean(np.sort(np.stack([t.values for t in tables]), axis=0), axis=0)
    name = label or "+".join(t.label for t in tables)
    return ForecastTable(first.dates.copy(), values, name,
                         {"members": [t.label for t in tables]})


def daily_loss_differential(a: ForecastTable, b: ForecastTable, ds: MarketDataset) -> np.ndarray:
    """Per day, mean absolute error of ``a`` minus that of ``b``."""
    if not a.same_coverage(b):
        raise DateMismatch(f"{a.label} and {b.label} cover different dates")
    actual, _ = _aligned(a, ds)
    return np.abs(actual - a.values).mean(axis=1) - np.abs(actual - b.values).mean(axis=1)


def dm_statistic(delta) -> Tuple[float, float]:
    """``(DM, p)`` for a loss-differential series; p is one-sided, ``1 - Phi(DM)``."""
    delta = np.asarray(delta, dtype=np.float64)
    n = len(delta)
    if n < 2:
        raise DegenerateVariance(f"need at least 2 days, got {n}")
    sd = float(np.std(delta, ddof=1))
    if sd == 0.0 or not np.isfinite(sd):
        raise DegenerateVariance("loss differential has zero variance; forecasts tie every day")
    stat = float(np.sqrt(n) * np.mean(delta) / sd)
    return stat, float(norm.sf(stat))


def dm_test_multivariate(a: ForecastTable, b: ForecastTable, ds: MarketDataset) -> DmOutcome:
    """One-sided test of H0 "B is not more accurate than A" on daily loss vectors.

    Swapping ``a`` and ``b`` negates the statistic exactly: the differential
    is negated elementwise and mean and standard deviation follow.
    """
    stat, p = dm_statistic(daily_loss_differential(a, b, ds))
    return DmOutcome(a.label, b.label, stat, p, len(a))


def performance_ratio(report_x: MetricsReport, report_y: MetricsReport) -> Dict[str, float]:
    """``metric_x / metric_y`` for each of the four metrics."""
    if report_x.n_days != report_y.n_days:
        raise DateMismatch(f"{report_x.label} covers {report_x.n_days} days, "
                           f"{report_y.label} {report_y.n_days}")
    out = {}
    for m in METRICS:
        den = getattr(report_y, m)
        if den == 0.0:
            raise DivisionByZero(f"{m} of {report_y.label} is zero")
        out[m] = getattr(report_x, m) / den
    return out


def window_of_label(label: str) -> Tuple[str, str]:
    """``("aslear"|"lear", window)`` from labels such as ``ASLEAR-364``."""
    base = label.split("-nofilter")[0].split("-filtered")[0]
    family, _, window = base.partition("-")
    return family.lower(), window


def preset_members(preset: str, labels: Sequence[str], market_id: str) -> List[int]:
    """Indices into ``labels`` of the members of a named ensemble."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    _, family, slots = PRESETS[preset]
    windows = [str(w) for w in registry_windows(market_id)]
    named = {"56": windows[0], "84": windows[1], "long1": windows[2], "long2": windows[3],
             "ALL": windows[4]}
    wanted = {named[s] for s in slots}
    idx = [i for i, lab in enumerate(labels)
           if window_of_label(lab)[0] == family and window_of_label(lab)[1] in wanted]
    if len(idx) != len(wanted):
        raise ValueError(f"preset {preset} needs {family.upper()} windows {sorted(wanted)}; "
                         f"got labels {list(labels)}")
    return idx


def preset_ensemble(preset: str, tables: Sequence[ForecastTable], market_id: str) -> ForecastTable:
    """Build a named ensemble from a pool of single-window tables."""
    labels = [t.label for t in tables]
    if preset in COMBINED_PRESETS:
        name, parts = COMBINED_PRESETS[preset]
        groups = [preset_ensemble(p, tables, market_id) for p in parts]
        return ensemble_mean(groups, name)
    name = PRESETS[preset][0] if preset in PRESETS else preset
    members = [tables[i] for i in preset_members(preset, labels, market_id)]
    return ensemble_mean(members, name)


def format_ratio_table(ratios: Mapping[str, Mapping[str, Mapping[str, float]]],
                       windows: Sequence[str], digits: int = 4) -> str:
    """Performance ratios laid out with markets and metrics down, windows across.

    ``ratios[market][window][metric]``; missing cells print as ``-``.
    """
    header = ["Market", "Metric"] + [str(w) for w in windows]
    rows = []
    for market, by_window in ratios.items():
        for i, m in enumerate(METRICS):
            cells = []
            for w in windows:
                v = by_window.get(str(w), {}).get(m)
                cells.append("-" if v is None else f"{v:.{digits}f}")
            rows.append([market if i == 0 else "", m] + cells)
    return format_table(header, rows)


def format_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Plain aligned text table; numbers right-aligned."""
    text = [[str(c) for c in header]] + [[_cell(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in text) for i in range(len(header))]
    lines = []
    for k, r in enumerate(text):
        parts = [c.ljust(w) if k == 0 or j < 2 else c.rjust(w)
                 for j, (c, w) in enumerate(zip(r, widths))]
        lines.append("  ".join(parts).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _cell(c) -> str:
    if isinstance(c, float):
        return f"{c:.4f}"
    return str(c)


def metrics_table(reports: Sequence[MetricsReport]) -> str:
    return format_table(["Model", "Days"] + list(METRICS),
                        [[r.label, r.n_days] + [getattr(r, m) for m in METRICS] for r in reports])


def dm_report(outcome: DmOutcome, alphas: Sequence[float] = DM_ALPHAS) -> str:
    lines = [f"A = {outcome.model_a_label}", f"B = {outcome.model_b_label}",
             f"days = {outcome.n}", f"DM statistic = {outcome.dm_statistic:.6f}",
             f"p-value = {outcome.p_value:.6g}"]
    for a in alphas:
        verdict = "B better than A" if outcome.b_better(a) else "no significant difference"
        lines.append(f"alpha = {a:.2f}: {verdict}")
    return "\n".join(lines)

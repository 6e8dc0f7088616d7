"""Synthetic day-ahead markets for tests, demos and desk-scale runs.

The generator follows the location/scale structure the adaptive scheme
assumes: a slowly drifting daily level and spread (with an optional regime
break) multiplied onto a stationary hourly process driven by its own lags,
a load-like and a renewables-like exogenous series and weekday effects.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .dataio import HOURS, MarketDataset, REGISTRY, as_day, day_of_week

_HOUR = np.arange(HOURS)
_LOAD_SHAPE = 0.75 + 0.25 * np.sin((_HOUR - 6) / 24 * 2 * np.pi) ** 2 + 0.1 * (_HOUR >= 8) * (_HOUR <= 21)
_SOLAR_SHAPE = np.clip(np.sin((_HOUR - 6) / 13 * np.pi), 0, None)


def make_market(start="2019-01-01", end="2023-05-31", market_id: str = "OMIE-SP",
                seed: int = 0, regime_break: Optional[str] = "2021-07-01",
                level: float = 50.0, break_level: float = 180.0, noise: float = 0.35,
                test_start=None, test_end=None) -> MarketDataset:
    """Draw a market with price, load (``exog1``) and renewables (``exog2``).

    Prices sit around ``level`` with a spread of about a quarter of it; after
    ``regime_break`` the level ramps over ~120 days towards ``break_level``
    and the spread grows with it. The test period defaults to the registry
    entry of ``market_id`` when it fits inside the generated span, else the
    final 60 days.
    """
    rng = np.random.default_rng(seed)
    days = np.arange(as_day(start), as_day(end) + 1)
    n = len(days)
    dow = day_of_week(days)
    t = np.arange(n)
    annual = np.cos(2 * np.pi * (t + (days[0].astype(object).timetuple().tm_yday)) / 365.25)

    weekend = np.where(dow >= 6, 0.85, 1.0)
    load = (27000 * (1 + 0.08 * annual)[:, None] * weekend[:, None] * _LOAD_SHAPE
            + 600 * rng.standard_normal((n, HOURS)))
    wind = np.empty(n)
    wind[0] = 0.0
    shocks = rng.standard_normal(n)
    for d in range(1, n):
        wind[d] = 0.8 * wind[d - 1] + 0.6 * shocks[d]
    solar_season = 1 - 0.4 * annual
    renew = (6000 + 2500 * wind[:, None] + 5000 * solar_season[:, None] * _SOLAR_SHAPE
             + 400 * rng.standard_normal((n, HOURS)))
    renew = np.maximum(renew, 200.0)

    mu = np.full(n, level)
    if regime_break is not None:
        b = int((as_day(regime_break) - days[0]).astype(np.int64))
        if 0 <= b < n:
            ramp = np.clip((t - b) / 120.0, 0, 1)
            mu = level + (break_level - level) * ramp
    mu = mu * (1 + 0.05 * np.sin(2 * np.pi * t / 91)) + np.cumsum(rng.normal(0, 0.3, n))
    sigma = 0.25 * np.abs(mu) + 2.0

    z_load = (load - load.mean()) / load.std()
    z_renew = (renew - renew.mean()) / renew.std()
    weekday_effect = np.array([0.1, 0.15, 0.15, 0.15, 0.1, -0.3, -0.5])[dow - 1]
    u = np.zeros((n, HOURS))
    eps = rng.standard_normal((n, HOURS))
    for d in range(n):
        lag1 = u[d - 1] if d >= 1 else 0.0
        lag7 = u[d - 7] if d >= 7 else 0.0
        u[d] = (0.55 * lag1 + 0.2 * lag7 + 0.5 * z_load[d] - 0.6 * z_renew[d]
                + weekday_effect[d] + 0.3 * np.sin((_HOUR - 4) / 24 * 2 * np.pi)
                + noise * eps[d])
    price = mu[:, None] + sigma[:, None] * u
    price = np.round(price, 2)

    ds = MarketDataset(market_id, days, price, np.round(load, 1), np.round(renew, 1))
    if test_start is None or test_end is None:
        entry = REGISTRY.get(market_id)
        if entry is not None and entry.test_start >= days[0] + 14 and entry.test_end <= days[-1]:
            test_start, test_end = entry.test_start, entry.test_end
        else:
            test_start, test_end = days[-60], days[-1]
    return ds.with_test_period(test_start, test_end)


def inject_outliers(ds: MarketDataset, dates: Sequence, hours: Sequence[int],
                    magnitude: float) -> MarketDataset:
    """Copy of ``ds`` with ``price`` at each ``(date, hour)`` shifted by ``magnitude``."""
    price = np.array(ds.price, copy=True)
    for day, h in zip(dates, hours):
        price[ds.index_of(day), h] += magnitude
    out = MarketDataset(ds.market_id, ds.days, price, ds.exog1, ds.exog2)
    return out.with_test_period(ds.test_start, ds.test_end)


def perturb_after(ds: MarketDataset, day, scale: float = 3.0, seed: int = 1) -> MarketDataset:
    """Copy of ``ds`` with every value on or after ``day`` scrambled."""
    rng = np.random.default_rng(seed)
    i = ds.index_of(day)
    arrays = []
    for name in ("price", "exog1", "exog2"):
        a = np.array(getattr(ds, name), copy=True)
        a[i:] = a[i:] * scale + rng.normal(0, np.abs(a[i:]).mean() + 1, a[i:].shape)
        arrays.append(a)
    out = MarketDataset(ds.market_id, ds.days, *arrays)
    return out.with_test_period(ds.test_start, ds.test_end)

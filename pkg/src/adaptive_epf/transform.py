"""Adaptive standardisation, outlier filtering and the median-arcsinh baseline.

All functions take daily matrices of shape ``(n_days, 24)``. The adaptive
scheme estimates, for every day ``d``, a location and a scale from the
``24 * v`` hourly values of days ``d-v .. d-1`` only, so a day's parameters
never look at the day itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyTraining, MissingParams, WindowTooLarge

SIGMA_FLOOR = 1e-8
MAD_TO_STD = 1.4826

ADAPTIVE = "adaptive"
MEDIAN_ARCSINH = "median_arcsinh"
IDENTITY = "identity"


@dataclass(frozen=True)
class AdaptiveParams:
    """Rolling location/scale per day. Entries are NaN where fewer than ``v``
    prior days exist (``available`` is False there)."""

    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    window_v: int

    @property
    def available(self) -> np.ndarray:
        return ~np.isnan(self.mu_hat)

    def __len__(self):
        return len(self.mu_hat)

    def day(self, d: int) -> Tuple[float, float]:
        if not (0 <= d < len(self)) or np.isnan(self.mu_hat[d]):
            raise MissingParams(f"no adaptive parameters for day index {d}")
        return float(self.mu_hat[d]), float(self.sigma_hat[d])


@dataclass(frozen=True)
class ArcsinhParams:
    median: float
    mad_scale: float


@dataclass(frozen=True)
class TransformedSeries:
    values: np.ndarray
    scheme: str
    params: Union[AdaptiveParams, ArcsinhParams, None]
    source_role: str = "price"
    sigma_floor: float = SIGMA_FLOOR


def _as_matrix(series) -> np.ndarray:
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a (n_days, 24) matrix, got shape {arr.shape}")
    return arr


def _windows(series: np.ndarray, v: int) -> np.ndarray:
    """``out[k]`` holds the ``24*v`` values of days ``k .. k+v-1`` (shape (n-v+1, 24*v))."""
    w = sliding_window_view(series, v, axis=0)  # (n-v+1, 24, v)
    return w.reshape(w.shape[0], -1)


def estimate_adaptive_params(series, v: int, extend: bool = False) -> AdaptiveParams:
    """Rolling mean and population standard deviation over the previous ``v`` days.

    With ``extend=True`` the result has one extra entry: the parameters of the
    day right after the last row of ``series``.
    """
    series = _as_matrix(series)
    n = series.shape[0]
    if v < 1:
        raise ValueError(f"v must be >= 1, got {v}")
    if v >= n + int(extend):
        raise WindowTooLarge(f"window v={v} needs more than {n} days of data")
    win = _windows(series, v)
    if not extend:
        win = win[:-1]
    size = n + int(extend)
    mu = np.full(size, np.nan)
    sigma = np.full(size, np.nan)
    mu[v:] = win.mean(axis=1)
    sigma[v:] = win.std(axis=1)  # ddof=0: divisor 24v
    return AdaptiveParams(mu, sigma, v)


def next_day_params(series, v: int) -> Tuple[float, float]:
    """``(mu_hat, sigma_hat)`` for the day following the last row of ``series``."""
    series = _as_matrix(series)
    if series.shape[0] < v:
        raise MissingParams(f"need {v} days of history, got {series.shape[0]}")
    last = series[-v:].ravel()
    return float(last.mean()), float(last.std())


def filter_outliers(series, v: int, kappa: float = 10.0, return_mask: bool = False):
    """Replace cells outside ``mu_hat +/- kappa * sigma_hat`` by the median of
    the previous ``v`` days. The first ``v`` days pass through unchanged."""
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    series = _as_matrix(series)
    params = estimate_adaptive_params(series, v)
    mu = params.mu_hat[:, None]
    half = kappa * params.sigma_hat[:, None]
    with np.errstate(invalid="ignore"):
        outside = (series < mu - half) | (series > mu + half)
    outside[:v] = False
    out = series.copy()
    if outside.any():
        rows = np.flatnonzero(outside.any(axis=1))
        medians = np.median(_windows(series, v)[rows - v], axis=1)
        for r, med in zip(rows, medians):
            out[r, outside[r]] = med
    return (out, outside) if return_mask else out


def apply_adaptive(series, params: AdaptiveParams, sigma_floor: float = SIGMA_FLOOR,
                   source_role: str = "price") -> TransformedSeries:
    """``u = (p - mu_hat) / max(sigma_hat, sigma_floor)``; NaN during warm-up."""
    series = _as_matrix(series)
    n = series.shape[0]
    if len(params) < n or np.isnan(params.mu_hat[params.window_v:n]).any():
        raise MissingParams(f"parameters cover {len(params)} days, series has {n}")
    mu = params.mu_hat[:n, None]
    scale = np.maximum(params.sigma_hat[:n], sigma_floor)[:, None]
    return TransformedSeries((series - mu) / scale, ADAPTIVE, params, source_role, sigma_floor)


def invert_adaptive(u, target_day_params: Optional[Tuple[float, float]],
                    sigma_floor: float = SIGMA_FLOOR) -> np.ndarray:
    """Map standardised values back to prices with the given ``(mu_hat, sigma_hat)``."""
    if isinstance(u, TransformedSeries):
        u = u.values
    if target_day_params is None:
        raise MissingParams("target day has no adaptive parameters")
    mu, sigma = target_day_params
    if not (np.isfinite(mu) and np.isfinite(sigma)):
        raise MissingParams("target day parameters are not finite")
    return mu + max(sigma, sigma_floor) * np.asarray(u, dtype=np.float64)


def invert_series(ts: TransformedSeries) -> np.ndarray:
    """Inverse of a whole transformed matrix, whatever its scheme."""
    if ts.scheme == ADAPTIVE:
        n = ts.values.shape[0]
        mu = ts.params.mu_hat[:n, None]
        scale = np.maximum(ts.params.sigma_hat[:n], ts.sigma_floor)[:, None]
        return mu + scale * ts.values
    if ts.scheme == MEDIAN_ARCSINH:
        return invert_median_arcsinh(ts.values, ts.params, ts.sigma_floor)
    return np.array(ts.values, copy=True)


def fit_median_arcsinh(train_slice) -> ArcsinhParams:
    train = np.asarray(train_slice, dtype=np.float64).ravel()
    if train.size == 0:
        raise EmptyTraining("median-arcsinh needs a non-empty training slice")
    median = float(np.median(train))
    mad = float(np.median(np.abs(train - median)))
    return ArcsinhParams(median, MAD_TO_STD * mad)


def apply_median_arcsinh(series, train_slice=None, params: Optional[ArcsinhParams] = None,
                         sigma_floor: float = SIGMA_FLOOR,
                         source_role: str = "price") -> TransformedSeries:
    """``asinh((p - median) / max(1.4826 * MAD, floor))`` with training-slice statistics."""
    if params is None:
        if train_slice is None:
            raise EmptyTraining("either train_slice or params is required")
        params = fit_median_arcsinh(train_slice)
    series = np.asarray(series, dtype=np.float64)
    scale = max(params.mad_scale, sigma_floor)
    return TransformedSeries(np.arcsinh((series - params.median) / scale), MEDIAN_ARCSINH,
                             params, source_role, sigma_floor)


def invert_median_arcsinh(values, params: ArcsinhParams,
                          sigma_floor: float = SIGMA_FLOOR) -> np.ndarray:
    if isinstance(values, TransformedSeries):
        values = values.values
    scale = max(params.mad_scale, sigma_floor)
    return params.median + scale * np.sinh(np.asarray(values, dtype=np.float64))


def standardise_exogenous(exog, v: int, price_params: Optional[AdaptiveParams] = None,
                          sigma_floor: float = SIGMA_FLOOR,
                          source_role: str = "exog") -> TransformedSeries:
    """Rolling standardisation of an exogenous variable.

    By default the variable gets its own rolling parameters. Passing
    ``price_params`` reuses the price's location and scale instead.
    """
    params = price_params if price_params is not None else estimate_adaptive_params(exog, v)
    return apply_adaptive(exog, params, sigma_floor, source_role)

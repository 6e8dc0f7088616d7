"""LEAR: per-hour LASSO autoregression over 247 lagged/exogenous/dummy regressors.

Column layout of a feature row for day ``d`` (0-based column offsets)::

      0  u[d-1, 0:24]      96  x1[d]      144  x1[d-1]     192  x1[d-7]
     24  u[d-2, 0:24]     120  x2[d]      168  x2[d-1]     216  x2[d-7]
     48  u[d-3, 0:24]                                      240  weekday one-hot
     72  u[d-7, 0:24]                                           (Monday first)

The rows do not depend on the hour being modelled, only the target does, so
one Gram matrix per training set serves all 24 hourly fits.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._cd import cd_gram, cd_path
from .errors import LagUnavailable, NonFinite, TooFewRows
from .transform import TransformedSeries

logger = logging.getLogger(__name__)

HOURS = 24
N_FEATURES = 247
LAGS = (1, 2, 3, 7)
EXOG_LAGS = (1, 7)
DUMMY_OFFSET = 240

TOL = 1e-7
#: extra stopping condition on the optimality residual |2 X'r| vs lambda
KKT_TOL = 1e-8
MAX_SWEEPS = 10_000
#: sweeps after which coordinate descent restarts from the exact homotopy solution
STALL_SWEEPS = 100
CV_FOLDS = 5
GRID_SIZE = 100
GRID_RATIO = 1e-4


@dataclass(frozen=True)
class FeatureMatrix:
    X: np.ndarray
    targets: np.ndarray  # (n_rows, 24); NaN where the target is not known yet
    rows: np.ndarray  # day indices the rows were built for
    hour: Optional[int] = None

    def y(self, hour: Optional[int] = None) -> np.ndarray:
        hour = self.hour if hour is None else hour
        if hour is None:
            raise ValueError("no hour selected")
        return self.targets[:, hour - 1]


@dataclass
class CVResult:
    lambda_: float
    grid: np.ndarray
    cv_curve: np.ndarray
    lambda_max: float


@dataclass
class LearModelSet:
    theta: np.ndarray  # (24, 247)
    lambdas: np.ndarray  # (24,)
    training_loss: np.ndarray  # in-sample mean squared error per hour
    fallback: np.ndarray = field(default_factory=lambda: np.zeros(HOURS, dtype=bool))

    def nonzero(self, hour: int):
        coef = self.theta[hour - 1]
        idx = np.flatnonzero(coef)
        return list(zip(idx.tolist(), coef[idx].tolist()))


def _values(series) -> np.ndarray:
    if isinstance(series, TransformedSeries):
        series = series.values
    return np.asarray(series, dtype=np.float64)


def build_features(u_price, u_exog1, u_exog2, day_of_week, days,
                   hour: Optional[int] = None) -> FeatureMatrix:
    """Stack the regressors for the day indices ``days``.

    All series are aligned ``(n_days, 24)`` matrices; ``day_of_week`` uses
    Monday = 1. The price value of a row's own day is only read as target.
    """
    u = _values(u_price)
    x1 = _values(u_exog1)
    x2 = _values(u_exog2)
    dow = np.asarray(day_of_week, dtype=np.int64)
    rows = np.atleast_1d(np.asarray(days, dtype=np.int64))
    n = u.shape[0]
    if x1.shape != u.shape or x2.shape != u.shape or dow.shape != (n,):
        raise ValueError("price, exogenous and day-of-week inputs are not aligned")
    if len(rows) and (rows.min() < max(LAGS) or rows.max() >= n):
        bad = rows[(rows < max(LAGS)) | (rows >= n)][0]
        raise LagUnavailable(f"day index {bad} lacks lag {max(LAGS)} or is out of range")

    X = np.empty((len(rows), N_FEATURES))
    col = 0
    for lag in LAGS:
        X[:, col:col + HOURS] = u[rows - lag]
        col += HOURS
    X[:, col:col + HOURS] = x1[rows]
    X[:, col + HOURS:col + 2 * HOURS] = x2[rows]
    col += 2 * HOURS
    for lag in EXOG_LAGS:
        X[:, col:col + HOURS] = x1[rows - lag]
        X[:, col + HOURS:col + 2 * HOURS] = x2[rows - lag]
        col += 2 * HOURS
    X[:, DUMMY_OFFSET:] = 0.0
    if len(rows):
        if dow[rows].min() < 1 or dow[rows].max() > 7:
            raise ValueError("day_of_week must lie in 1..7")
        X[np.arange(len(rows)), DUMMY_OFFSET + dow[rows] - 1] = 1.0

    bad = ~np.isfinite(X).all(axis=1)
    if bad.any():
        raise LagUnavailable(f"day index {rows[bad][0]} has unavailable regressors")
    return FeatureMatrix(X, u[rows].copy(), rows, hour)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFinite("input contains NaN or infinite values")


def lambda_max(X, y) -> float:
    """Smallest penalty for which the zero vector is optimal: ``max |2 X'y|``."""
    return float(np.max(np.abs(2.0 * (np.asarray(X).T @ np.asarray(y))), initial=0.0))


def objective(X, y, theta, lam) -> float:
    r = np.asarray(y) - np.asarray(X) @ theta
    return float(r @ r + lam * np.abs(theta).sum())


def fit_lasso(X, y, lam: float, tol: float = TOL, max_sweeps: int = MAX_SWEEPS,
              theta0=None) -> np.ndarray:
    """Coordinate-descent minimiser of ``||y - X theta||^2 + lam * ||theta||_1``.

    Stops once a full sweep moves no coefficient by ``tol`` or more, or after
    ``max_sweeps`` sweeps.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or y.shape != (X.shape[0],):
        raise ValueError(f"bad shapes X{X.shape}, y{y.shape}")
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    _check_finite(X, y)
    theta = np.zeros(X.shape[1]) if theta0 is None else np.array(theta0, dtype=np.float64)
    cd_gram(X.T @ X, X.T @ y, float(lam), theta, tol, max_sweeps, KKT_TOL, STALL_SWEEPS)
    return theta


def lambda_grid(lam_max: float, grid_size: int = GRID_SIZE, ratio: float = GRID_RATIO):
    """Log-spaced, strictly increasing grid on ``[ratio * lam_max, lam_max]``."""
    top = lam_max if lam_max > 0 else 1.0
    return np.geomspace(ratio * top, top, grid_size)


def fold_slices(n_rows: int, n_folds: int):
    """Contiguous chronological folds of near-equal size."""
    return [slice(int(b[0]), int(b[-1]) + 1) for b in np.array_split(np.arange(n_rows), n_folds)]


class _GramCV:
    """Gram matrices of the full data and of each fold's training part."""

    def __init__(self, X, n_folds):
        n = X.shape[0]
        if n_folds < 2 or n < n_folds:
            raise TooFewRows(f"{n} rows cannot be split into {n_folds} folds")
        self.X = X
        self.G = X.T @ X
        self.folds = fold_slices(n, n_folds)
        self.fold_G = [self.G - X[f].T @ X[f] for f in self.folds]

    def select(self, y, c, grid_size, tol, max_sweeps) -> CVResult:
        lam_max = float(np.max(np.abs(2.0 * c), initial=0.0))
        grid = lambda_grid(lam_max, grid_size)
        descending = np.ascontiguousarray(grid[::-1])
        sse = np.zeros(grid_size)
        for f, G_train in zip(self.folds, self.fold_G):
            Xf, yf = self.X[f], y[f]
            c_train = c - Xf.T @ yf
            path = cd_path(G_train, c_train, descending, tol, max_sweeps, KKT_TOL, STALL_SWEEPS)
            resid = yf[:, None] - Xf @ path.T
            sse += np.einsum("ij,ij->j", resid, resid)
        cv = (sse / len(y))[::-1]
        if lam_max == 0.0:
            return CVResult(0.0, grid, cv, 0.0)
        best = cv.min()
        ties = np.flatnonzero(cv <= best + 1e-12 * max(abs(best), 1e-300))
        return CVResult(float(grid[ties[-1]]), grid, cv, lam_max)


def select_lambda_cv(X, y, n_folds: int = CV_FOLDS, grid_size: int = GRID_SIZE,
                     tol: float = TOL, max_sweeps: int = MAX_SWEEPS) -> CVResult:
    """Pick lambda by k-fold chronological cross-validation.

    The grid has ``grid_size`` log-spaced points on ``[1e-4 lam_max, lam_max]``.
    The winner minimises pooled out-of-fold squared error; ties go to the
    larger lambda.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    _check_finite(X, y)
    cv = _GramCV(X, n_folds)
    return cv.select(y, X.T @ y, grid_size, tol, max_sweeps)


def fit_hour_models(X, Y, n_folds: int = CV_FOLDS, grid_size: int = GRID_SIZE,
                    tol: float = TOL, max_sweeps: int = MAX_SWEEPS,
                    hours: Sequence[int] = range(1, HOURS + 1),
                    fallback: bool = True, label: str = "") -> LearModelSet:
    """Fit one cross-validated LASSO per hour on a shared design matrix.

    With ``fallback=True`` an hour whose cross-validation fails is given the
    all-zero model at ``lam_max`` and a warning is logged.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    _check_finite(X, Y)
    C = X.T @ Y
    G = X.T @ X
    try:
        cv = _GramCV(X, n_folds)
    except TooFewRows:
        if not fallback:
            raise
        cv = None
    theta = np.zeros((HOURS, X.shape[1]))
    lambdas = np.zeros(HOURS)
    loss = np.zeros(HOURS)
    used_fallback = np.zeros(HOURS, dtype=bool)
    for h in hours:
        y = np.ascontiguousarray(Y[:, h - 1])
        c = np.ascontiguousarray(C[:, h - 1])
        try:
            if cv is None:
                raise TooFewRows(f"{X.shape[0]} rows cannot be split into {n_folds} folds")
            lam = cv.select(y, c, grid_size, tol, max_sweeps).lambda_
            coef = np.zeros(X.shape[1])
            cd_gram(G, c, lam, coef, tol, max_sweeps, KKT_TOL, STALL_SWEEPS)
        except (TooFewRows, FloatingPointError, ValueError) as exc:
            if not fallback:
                raise
            logger.warning("%s hour %d: cross-validation failed (%s); using lambda_max", label,
                           h, exc)
            lam = float(np.max(np.abs(2.0 * c), initial=0.0))
            coef = np.zeros(X.shape[1])
            used_fallback[h - 1] = True
        theta[h - 1] = coef
        lambdas[h - 1] = lam
        r = y - X @ coef
        loss[h - 1] = r @ r / len(y)
    return LearModelSet(theta, lambdas, loss, used_fallback)


def predict(model: LearModelSet, features) -> np.ndarray:
    """Hourly predictions ``theta_h . features_h``.

    ``features`` is either one 247-vector shared by all hours or a (24, 247) matrix.
    """
    f = np.asarray(features, dtype=np.float64)
    _check_finite(f)
    if f.ndim == 1:
        return model.theta @ f
    if f.shape != model.theta.shape:
        raise ValueError(f"features of shape {f.shape} do not match model {model.theta.shape}")
    return np.einsum("hj,hj->h", model.theta, f)


DUMP_HEADER = ("date", "hour", "lambda", "nonzero")


def model_dump_rows(model: LearModelSet, date) -> list:
    """One record per hour: lambda and ``index:value`` pairs of the support."""
    rows = []
    for h in range(1, HOURS + 1):
        pairs = ";".join(f"{i}:{v!r}" for i, v in model.nonzero(h))
        rows.append((str(date), h, repr(float(model.lambdas[h - 1])), pairs))
    return rows


def write_model_dump(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(DUMP_HEADER)
        w.writerows(rows)
    return path


def read_model_dump(path) -> list:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            pairs = []
            if rec["nonzero"]:
                for item in rec["nonzero"].split(";"):
                    i, v = item.split(":")
                    pairs.append((int(i), float(v)))
            out.append((rec["date"], int(rec["hour"]), float(rec["lambda"]), pairs))
    return out

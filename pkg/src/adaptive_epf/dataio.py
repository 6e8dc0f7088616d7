"""Loading, validating and slicing hourly day-ahead market datasets.

A dataset is a CSV with one row per delivery hour::

    timestamp,price,exog1,exog2
    2019-01-01T00:00,66.88,24052.0,5123.2
    ...

Timestamps are local wall-clock times of the market. A UTC offset suffix is
accepted and ignored, so a 25-hour day shows up as a repeated hour and a
23-hour day as a missing one. Both are folded back onto a 24-column grid.

An optional manifest (``<csv>.manifest`` or ``<stem>.manifest``) holds
``key = value`` lines for ``market_id``, ``test_start`` and ``test_end``.
"""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DatasetError, GapError, InsufficientHistory, ParseError, SchemaError

logger = logging.getLogger(__name__)

HOURS = 24
MAX_LAG = 7
#: smallest number of days that must precede any forecast day (lag d-7 plus v=7)
MIN_HISTORY = 14
#: longest run of consecutive missing hourly cells that is still interpolated
MAX_INTERP_RUN = 2

COLUMNS = ("timestamp", "price", "exog1", "exog2")
MARKETS = ("OMIE-SP", "EPEX-DE", "EPEX-BE", "EPEX-FR", "NP", "custom")
ALL = "ALL"

DateLike = Union[str, dt.date, np.datetime64]


@dataclass(frozen=True)
class DatasetRegistryEntry:
    market_id: str
    test_start: np.datetime64
    test_end: np.datetime64
    short_windows: tuple
    long_windows: tuple

    @property
    def windows(self):
        return self.short_windows + self.long_windows


def _entry(market, start, end, long_windows):
    return DatasetRegistryEntry(market, np.datetime64(start, "D"), np.datetime64(end, "D"),
                                (56, 84), long_windows)


REGISTRY = {
    "OMIE-SP": _entry("OMIE-SP", "2022-01-01", "2023-05-31", (364, 728)),
    "EPEX-DE": _entry("EPEX-DE", "2022-01-01", "2023-05-31", (364, 728)),
    "EPEX-BE": _entry("EPEX-BE", "2015-01-04", "2016-12-31", (1092, 1456)),
    "EPEX-FR": _entry("EPEX-FR", "2015-01-04", "2016-12-31", (1092, 1456)),
    "NP": _entry("NP", "2016-12-27", "2018-12-24", (1092, 1456)),
}


def as_day(value: DateLike) -> np.datetime64:
    """Coerce a date, ISO string or datetime64 to ``datetime64[D]``."""
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]")
    if isinstance(value, dt.datetime):
        value = value.date()
    if isinstance(value, dt.date):
        return np.datetime64(value.isoformat(), "D")
    try:
        return np.datetime64(str(value).strip(), "D")
    except ValueError as exc:
        raise ParseError(f"not a calendar date: {value!r}") from exc


def day_of_week(days: np.ndarray) -> np.ndarray:
    """ISO day of week, Monday = 1 ... Sunday = 7."""
    ordinal = np.asarray(days, dtype="datetime64[D]").astype(np.int64)
    # 1970-01-01 was a Thursday
    return ((ordinal + 3) % 7 + 1).astype(np.int64)


@dataclass(frozen=True)
class LoadReport:
    """What load_dataset had to repair to reach a complete 24-hour grid."""

    n_rows: int = 0
    short_days: tuple = ()
    long_days: tuple = ()
    interpolated_cells: int = 0
    averaged_cells: int = 0


@dataclass(frozen=True, eq=False)
class MarketDataset:
    """Aligned daily 24-hour matrices of price and two exogenous series.

    Arrays are read-only. ``test_start``/``test_end`` are ``None`` on
    training views returned by :func:`slice_training`.
    """

    market_id: str
    days: np.ndarray
    price: np.ndarray
    exog1: np.ndarray
    exog2: np.ndarray
    test_start: Optional[np.datetime64] = None
    test_end: Optional[np.datetime64] = None
    report: LoadReport = field(default_factory=LoadReport, repr=False)

    def __post_init__(self):
        days = np.asarray(self.days, dtype="datetime64[D]").view()
        object.__setattr__(self, "days", days)
        n = len(days)
        for name in ("price", "exog1", "exog2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n, HOURS):
                raise SchemaError(f"{name} has shape {arr.shape}, expected ({n}, {HOURS})")
            arr = arr.view()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        days.flags.writeable = False
        if n > 1 and np.any(np.diff(days).astype(np.int64) != 1):
            raise GapError("days are not consecutive calendar dates")
        for name in ("test_start", "test_end"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, as_day(value))

    @property
    def n_days(self) -> int:
        return len(self.days)

    @property
    def day_of_week(self) -> np.ndarray:
        return day_of_week(self.days)

    def index_of(self, day: DateLike) -> int:
        day = as_day(day)
        if self.n_days == 0 or day < self.days[0] or day > self.days[-1]:
            raise KeyError(f"{day} is outside {self.span()}")
        return int((day - self.days[0]).astype(np.int64))

    def span(self) -> str:
        if self.n_days == 0:
            return "<empty>"
        return f"{self.days[0]}..{self.days[-1]}"

    def test_days(self) -> np.ndarray:
        if self.test_start is None or self.test_end is None:
            raise DatasetError("dataset has no test period")
        return self.days[self.index_of(self.test_start): self.index_of(self.test_end) + 1]

    def with_test_period(self, test_start: DateLike, test_end: DateLike) -> "MarketDataset":
        ds = dataclasses.replace(self, test_start=as_day(test_start), test_end=as_day(test_end))
        validate_test_period(ds)
        return ds

    def equals(self, other: "MarketDataset", rtol: float = 0.0) -> bool:
        if self.market_id != other.market_id or not np.array_equal(self.days, other.days):
            return False
        return all(np.allclose(getattr(self, k), getattr(other, k), rtol=rtol, atol=0.0)
                   for k in ("price", "exog1", "exog2"))


def validate_test_period(ds: MarketDataset) -> None:
    if ds.test_start is None or ds.test_end is None:
        raise DatasetError("test_start and test_end are required")
    if ds.test_start > ds.test_end:
        raise DatasetError(f"test_start {ds.test_start} is after test_end {ds.test_end}")
    for name in ("test_start", "test_end"):
        day = getattr(ds, name)
        if day < ds.days[0] or day > ds.days[-1]:
            raise DatasetError(f"{name} {day} lies outside the data ({ds.span()})")
    before = ds.index_of(ds.test_start)
    if before < MIN_HISTORY:
        raise InsufficientHistory(
            f"only {before} days precede test_start {ds.test_start}; need {MIN_HISTORY}",
            date=ds.test_start)


# -- CSV parsing --------------------------------------------------------------

_TS = re.compile(
    r"^(\d{4}-\d{2}-\d{2})[T ](\d{2})(?::(\d{2})(?::(\d{2})(?:\.\d+)?)?)?"
    r"(?:Z|[+-]\d{2}(?::?\d{2})?)?$")
_MISSING = {"", "nan", "NaN", "NA", "null"}


def _parse_timestamp(text: str, lineno: int):
    m = _TS.match(text.strip())
    if not m:
        raise ParseError(f"line {lineno}: malformed timestamp {text!r}")
    day, hour, minute, second = m.groups()
    if (minute and int(minute)) or (second and int(second)):
        raise ParseError(f"line {lineno}: timestamp {text!r} is not on the hour")
    hour = int(hour)
    if hour >= HOURS:
        raise ParseError(f"line {lineno}: hour out of range in {text!r}")
    try:
        return dt.date.fromisoformat(day), hour
    except ValueError as exc:
        raise ParseError(f"line {lineno}: invalid date in {text!r}") from exc


def _parse_number(text: str, lineno: int, column: str) -> float:
    text = text.strip()
    if text in _MISSING:
        return math.nan
    try:
        value = float(text)
    except ValueError as exc:
        raise ParseError(f"line {lineno}: malformed {column} value {text!r}") from exc
    if math.isinf(value):
        raise ParseError(f"line {lineno}: infinite {column} value")
    return value


def read_manifest(path: Union[str, Path]) -> dict:
    """Parse a ``key = value`` (or ``key: value``) manifest file."""
    out = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            key, sep, value = line.partition(":")
        if not sep:
            raise ParseError(f"{path}: cannot parse manifest line {raw!r}")
        out[key.strip()] = value.strip()
    return out


def find_manifest(path: Union[str, Path]) -> Optional[Path]:
    path = Path(path)
    for cand in (Path(str(path) + ".manifest"), path.with_suffix(".manifest")):
        if cand.is_file():
            return cand
    return None


def _fill_short_gaps(values: np.ndarray, column: str, days: np.ndarray) -> int:
    """Linear interpolation of NaN runs up to MAX_INTERP_RUN cells, in place."""
    flat = values.reshape(-1)
    missing = np.isnan(flat)
    if not missing.any():
        return 0
    idx = np.flatnonzero(missing)
    # split into runs of consecutive indices
    breaks = np.flatnonzero(np.diff(idx) != 1) + 1
    for run in np.split(idx, breaks):
        if len(run) > MAX_INTERP_RUN:
            day = days[run[0] // HOURS]
            raise GapError(f"{len(run)} consecutive missing {column} hours starting {day} "
                           f"hour {run[0] % HOURS}", date=day)
    known = np.flatnonzero(~missing)
    if len(known) == 0:
        raise GapError(f"column {column} has no values")
    flat[idx] = np.interp(idx, known, flat[known])
    return len(idx)


def load_dataset(path: Union[str, Path], market_id: Optional[str] = None,
                 test_start: Optional[DateLike] = None, test_end: Optional[DateLike] = None,
                 manifest: Union[str, Path, None] = None) -> MarketDataset:
    """Read a market CSV into a validated :class:`MarketDataset`.

    Parameters
    ----------
    path : str or Path
        CSV file with columns ``timestamp, price, exog1, exog2``.
    market_id : str, optional
        One of :data:`MARKETS`. Falls back to the manifest, then ``custom``.
    test_start, test_end : date-like, optional
        Override the test period. Otherwise the manifest is used, then the
        registry. Custom markets without a declared period get the last
        ``min(364, n_days - 14)`` days.
    manifest : path, optional
        Explicit manifest; by default ``<path>.manifest`` is picked up if present.

    Raises
    ------
    SchemaError
        Header does not hold exactly the four expected columns.
    GapError
        A calendar day is absent, or too many consecutive hours are missing.
    ParseError
        Malformed timestamp or number, or rows out of order.
    """
    path = Path(path)
    meta = {}
    manifest = Path(manifest) if manifest is not None else find_manifest(path)
    if manifest is not None:
        meta = read_manifest(manifest)
    market_id = market_id or meta.get("market_id") or "custom"
    if market_id not in MARKETS:
        raise SchemaError(f"unknown market_id {market_id!r}; expected one of {MARKETS}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if sorted(header) != sorted(COLUMNS) or len(header) != len(COLUMNS):
            raise SchemaError(f"{path}: header {header} does not match {list(COLUMNS)}")
        col = {name: header.index(name) for name in COLUMNS}
        cells = {}  # (date, hour) -> list of rows
        order = []
        last = None
        n_rows = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(COLUMNS):
                raise ParseError(f"line {lineno}: expected {len(COLUMNS)} fields, got {len(row)}")
            key = _parse_timestamp(row[col["timestamp"]], lineno)
            if last is not None and key < last:
                raise ParseError(f"line {lineno}: timestamps are not sorted ascending")
            last = key
            vals = tuple(_parse_number(row[col[c]], lineno, c) for c in COLUMNS[1:])
            if key not in cells:
                cells[key] = []
                order.append(key)
            cells[key].append(vals)
            n_rows += 1
    if not cells:
        raise SchemaError(f"{path}: no data rows")

    first, last_day = order[0][0], order[-1][0]
    n_days = (last_day - first).days + 1
    days = np.arange(np.datetime64(first.isoformat(), "D"),
                     np.datetime64(last_day.isoformat(), "D") + 1)
    grid = np.full((3, n_days, HOURS), np.nan)
    hours_seen = np.zeros(n_days, dtype=np.int64)
    averaged = 0
    for (day, hour), rows in cells.items():
        i = (day - first).days
        hours_seen[i] += 1
        arr = np.asarray(rows, dtype=np.float64)
        if len(rows) > 1:
            averaged += 1
            with np.errstate(invalid="ignore"):
                vals = np.nanmean(arr, axis=0) if not np.isnan(arr).all() else arr[0]
        else:
            vals = arr[0]
        grid[:, i, hour] = vals

    absent = np.flatnonzero(hours_seen == 0)
    if len(absent):
        raise GapError(f"missing calendar day {days[absent[0]]}", date=days[absent[0]])

    long_days = tuple(str(d) for d in sorted({d for (d, _), r in cells.items() if len(r) > 1}))
    short_days = tuple(str(days[i]) for i in np.flatnonzero(hours_seen < HOURS))
    interpolated = 0
    for k, name in enumerate(COLUMNS[1:]):
        interpolated += _fill_short_gaps(grid[k], name, days)

    report = LoadReport(n_rows=n_rows, short_days=short_days, long_days=long_days,
                        interpolated_cells=interpolated, averaged_cells=averaged)
    if short_days or long_days or interpolated:
        logger.info("%s: %d short days, %d long days, %d cells interpolated", path,
                    len(short_days), len(long_days), interpolated)

    ds = MarketDataset(market_id, days, grid[0], grid[1], grid[2], report=report)

    start = test_start if test_start is not None else meta.get("test_start")
    end = test_end if test_end is not None else meta.get("test_end")
    if start is None or end is None:
        if market_id in REGISTRY:
            entry = REGISTRY[market_id]
            start = entry.test_start if start is None else start
            end = entry.test_end if end is None else end
        else:
            n_test = min(364, n_days - MIN_HISTORY)
            if n_test < 1:
                raise InsufficientHistory(f"{path}: {n_days} days is too short for any test period")
            start = days[-n_test] if start is None else start
            end = days[-1] if end is None else end
    return ds.with_test_period(start, end)


def save_dataset(ds: MarketDataset, path: Union[str, Path], manifest: bool = True) -> Path:
    """Write ``ds`` as a CSV readable by :func:`load_dataset` (values at full precision)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for i, day in enumerate(ds.days):
            for h in range(HOURS):
                w.writerow((f"{day}T{h:02d}:00", repr(float(ds.price[i, h])),
                            repr(float(ds.exog1[i, h])), repr(float(ds.exog2[i, h]))))
    if manifest:
        lines = [f"market_id = {ds.market_id}"]
        if ds.test_start is not None:
            lines += [f"test_start = {ds.test_start}", f"test_end = {ds.test_end}"]
        Path(str(path) + ".manifest").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def slice_training(ds: MarketDataset, target_day: DateLike,
                   window: Union[int, str, None]) -> MarketDataset:
    """Calibration window: the last ``window`` days strictly before ``target_day``.

    ``window`` may be ``"ALL"`` (or ``None``) for every prior day. The returned
    dataset shares memory with ``ds`` and carries no test period.
    """
    target_day = as_day(target_day)
    try:
        t = ds.index_of(target_day)
    except KeyError:
        raise InsufficientHistory(f"{target_day} is not within {ds.span()}",
                                  date=target_day) from None
    if window is None or (isinstance(window, str) and window.upper() == ALL):
        if t < MIN_HISTORY:
            raise InsufficientHistory(
                f"{t} days precede {target_day}; need at least {MIN_HISTORY}", date=target_day)
        lo = 0
    else:
        window = int(window)
        if window < 1:
            raise ValueError(f"window must be positive, got {window}")
        if t < window:
            raise InsufficientHistory(
                f"window of {window} days requested but only {t} days precede {target_day}",
                date=target_day)
        lo = t - window
    return MarketDataset(ds.market_id, ds.days[lo:t], ds.price[lo:t], ds.exog1[lo:t],
                         ds.exog2[lo:t])


def parse_window(value: Union[int, str, None]) -> Union[int, str]:
    """Normalise a calibration-window value to an ``int`` or ``"ALL"``."""
    if value is None:
        return ALL
    if isinstance(value, str):
        if value.strip().upper() == ALL:
            return ALL
        value = int(value)
    if value < 1:
        raise ValueError(f"window must be positive, got {value}")
    return int(value)


def registry_windows(market_id: str) -> Sequence:
    """All LEAR calibration windows for a named market, ALL included."""
    return tuple(REGISTRY[market_id].windows) + (ALL,)

"""Daily time series: representation, CSV ingestion, unit conversion, the
Oct-Sep water-year calendar, stratified train/eval splitting and spin-up."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Mapping

import numpy as np

from jkge._io import atomic_open
from jkge.errors import ArgumentError, IngestionError

UNITS = ("cfs", "mm_per_day", "log_mm_per_day", "dimensionless")

# 1 ft3 = 0.028316846592 m3 exactly; 86400 s/day; mm per (m3 / km2) = 1e-3.
CFS_TO_MM_KM2 = 86400.0 * 0.028316846592 / 1.0e6 * 1000.0

DEFAULT_LOG_FLOOR = 1e-6


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Daily-stepped series; index ``t`` is ``start_date + t`` days.

    Missing positions carry NaN in ``values``. Any NaN passed in ``values`` is
    folded into the ``missing`` mask.
    """

    start_date: date
    values: np.ndarray
    unit: str = "mm_per_day"
    missing: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if self.missing is None:
            missing = ~np.isfinite(values)
        else:
            missing = np.array(self.missing, dtype=bool).reshape(-1)
            if missing.shape != values.shape:
                raise ArgumentError(
                    f"missing mask length {missing.size} != values length {values.size}"
                )
        if not np.all(np.isfinite(values[~missing])):
            raise ArgumentError("non-missing values must be finite")
        if self.unit not in UNITS:
            raise ArgumentError(f"unknown unit {self.unit!r}; expected one of {UNITS}")
        values[missing] = np.nan
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "missing", _readonly(missing))
        if not isinstance(self.start_date, date):
            object.__setattr__(self, "start_date", date.fromisoformat(str(self.start_date)))

    def __len__(self):
        return self.values.size

    @property
    def usable(self) -> np.ndarray:
        return ~self.missing

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=len(self) - 1)

    def dates(self) -> np.ndarray:
        start = np.datetime64(self.start_date, "D")
        return start + np.arange(len(self))

    def replace(self, values=None, unit=None, missing=None) -> "TimeSeries":
        return TimeSeries(
            self.start_date,
            self.values if values is None else values,
            self.unit if unit is None else unit,
            self.missing if missing is None and values is None else missing,
        )

    def slice(self, start: int, stop: int | None = None) -> "TimeSeries":
        stop = len(self) if stop is None else stop
        return TimeSeries(
            self.start_date + timedelta(days=start),
            self.values[start:stop],
            self.unit,
            self.missing[start:stop],
        )

    def filled(self, fill=0.0) -> np.ndarray:
        return np.where(self.missing, fill, self.values)

    def mask(self, keep: np.ndarray) -> "TimeSeries":
        """Flag every position where ``keep`` is False as missing."""
        return TimeSeries(self.start_date, self.values, self.unit, self.missing | ~keep)


@dataclass(frozen=True, eq=False)
class PairedSeries:
    obs: TimeSeries
    sim: TimeSeries

    def __post_init__(self):
        if self.obs.start_date != self.sim.start_date:
            raise ArgumentError("obs and sim start dates differ")
        if len(self.obs) != len(self.sim):
            raise ArgumentError(f"obs length {len(self.obs)} != sim length {len(self.sim)}")
        if self.obs.unit != self.sim.unit:
            raise ArgumentError(f"obs unit {self.obs.unit} != sim unit {self.sim.unit}")

    @classmethod
    def from_arrays(cls, obs, sim, start_date=date(2003, 10, 1), unit="mm_per_day"):
        return cls(TimeSeries(start_date, obs, unit), TimeSeries(start_date, sim, unit))

    def __len__(self):
        return len(self.obs)

    @property
    def usable(self) -> np.ndarray:
        return ~(self.obs.missing | self.sim.missing)

    @property
    def start_date(self) -> date:
        return self.obs.start_date

    def map(self, fn) -> "PairedSeries":
        return PairedSeries(fn(self.obs), fn(self.sim))

    def mask(self, keep: np.ndarray) -> "PairedSeries":
        return PairedSeries(self.obs.mask(keep), self.sim.mask(keep))


def water_year_of(d: date) -> int:
    """Water year label: Oct 1 of Y-1 through Sep 30 of Y is water year Y."""
    return d.year + 1 if d.month >= 10 else d.year


@dataclass(frozen=True, eq=False)
class WaterYearIndex:
    start_date: date
    year_of: np.ndarray
    _ranges: dict = field(repr=False, default_factory=dict)

    @classmethod
    def for_range(cls, start_date: date, length: int) -> "WaterYearIndex":
        dates = np.datetime64(start_date, "D") + np.arange(length)
        years = dates.astype("datetime64[Y]").astype(int) + 1970
        months = dates.astype("datetime64[M]").astype(int) % 12 + 1
        labels = years + (months >= 10)
        ranges = {}
        if length:
            edges = np.flatnonzero(np.diff(labels)) + 1
            starts = np.concatenate(([0], edges))
            stops = np.concatenate((edges, [length]))
            for a, b in zip(starts, stops):
                ranges[int(labels[a])] = (int(a), int(b))
        return cls(start_date, _readonly(labels), ranges)

    @classmethod
    def of(cls, series: TimeSeries) -> "WaterYearIndex":
        return cls.for_range(series.start_date, len(series))

    @property
    def years(self) -> list[int]:
        return list(self._ranges)

    def range(self, year: int) -> tuple[int, int]:
        return self._ranges[year]

    def is_complete(self, year: int) -> bool:
        a, b = self._ranges[year]
        first = self.start_date + timedelta(days=a)
        last = self.start_date + timedelta(days=b - 1)
        return (first.month, first.day) == (10, 1) and (last.month, last.day) == (9, 30)

    def complete_years(self) -> list[int]:
        return [y for y in self._ranges if self.is_complete(y)]

    def mask_for(self, years) -> np.ndarray:
        keep = np.zeros(self.year_of.size, dtype=bool)
        for y in years:
            a, b = self._ranges[y]
            keep[a:b] = True
        return keep


def load_daily_csv(path, date_column="date", value_column="value", unit="mm_per_day"):
    """Read a ``date,value`` CSV into a gap-free daily series.

    Dates absent from the file and empty value fields are flagged missing.
    Row numbers in error messages count the header as row 1.
    """
    if unit not in UNITS:
        raise ArgumentError(f"unknown unit {unit!r}")
    records = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or date_column not in reader.fieldnames \
                or value_column not in reader.fieldnames:
            raise IngestionError(
                f"expected columns {date_column!r} and {value_column!r}, got {reader.fieldnames}", 1
            )
        for row_no, row in enumerate(reader, start=2):
            raw_date = (row[date_column] or "").strip()
            raw_value = (row[value_column] or "").strip()
            try:
                d = date.fromisoformat(raw_date)
            except ValueError:
                raise IngestionError(f"unparseable date {raw_date!r}", row_no) from None
            if d in records:
                raise IngestionError(f"duplicate date {d.isoformat()}", row_no)
            if raw_value == "":
                records[d] = math.nan
                continue
            try:
                v = float(raw_value)
            except ValueError:
                raise IngestionError(f"unparseable number {raw_value!r}", row_no) from None
            if not math.isfinite(v):
                raise IngestionError(f"non-finite number {raw_value!r}", row_no)
            records[d] = v
    if not records:
        raise IngestionError("no data rows")
    first, last = min(records), max(records)
    n = (last - first).days + 1
    values = np.full(n, np.nan)
    for d, v in records.items():
        values[(d - first).days] = v
    return TimeSeries(first, values, unit)


def write_csv(series: TimeSeries, path, extra: Mapping[str, np.ndarray] | None = None):
    """Write ``date,value[,extra...]``; missing values become empty fields."""
    extra = dict(extra or {})
    with atomic_open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["date", "value", *extra])
        for i, d in enumerate(series.dates()):
            v = "" if series.missing[i] else repr(float(series.values[i]))
            w.writerow([str(d), v, *(_fmt(col[i]) for col in extra.values())])


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return "" if not np.isfinite(x) else repr(float(x))
    return str(x)


def convert_discharge_to_depth(q: TimeSeries, area_km2: float) -> TimeSeries:
    """Convert daily mean discharge (ft3/s) to area-normalized depth (mm/day)."""
    if q.unit != "cfs":
        raise ArgumentError(f"expected unit cfs, got {q.unit}")
    if not area_km2 > 0:
        raise ArgumentError(f"catchment area must be positive, got {area_km2}")
    return TimeSeries(q.start_date, q.values * (CFS_TO_MM_KM2 / area_km2), "mm_per_day", q.missing)


def log_transform(s: TimeSeries, floor: float = DEFAULT_LOG_FLOOR) -> TimeSeries:
    if not floor > 0:
        raise ArgumentError("log floor must be positive")
    with np.errstate(invalid="ignore"):
        out = np.log(np.maximum(s.values, floor))
    unit = "log_mm_per_day" if s.unit in ("mm_per_day", "log_mm_per_day") else "dimensionless"
    return TimeSeries(s.start_date, out, unit, s.missing)


def split_train_eval(series: TimeSeries, wy: WaterYearIndex | None = None,
                     train_fraction: float = 0.6):
    """Year-stratified split by accumulated annual flow.

    Complete water years are ranked wettest first (ties: earlier year first).
    The outermost remaining (wettest, driest) pair is allocated in rotation
    train, eval, train, ... until the eval set holds
    ``ceil((1 - train_fraction) * n_pairs)`` pairs; leftover pairs go to train.

    Returns:
        (train_years, eval_years), each a sorted tuple of water-year labels.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ArgumentError("train_fraction must lie in (0, 1)")
    wy = WaterYearIndex.of(series) if wy is None else wy
    years = wy.complete_years()
    if len(years) % 2:
        raise ArgumentError(f"need an even number of complete water years, got {len(years)}")
    if len(years) < 4:
        raise ArgumentError(f"need at least 4 complete water years, got {len(years)}")
    filled = series.filled(0.0)
    totals = {y: float(np.sum(filled[slice(*wy.range(y))])) for y in years}
    ranked = sorted(years, key=lambda y: (-totals[y], y))
    n_pairs = len(ranked) // 2
    eval_quota = math.ceil(round((1.0 - train_fraction) * n_pairs, 9))
    train, evaluation = [], []
    for i in range(n_pairs):
        pair = (ranked[i], ranked[-1 - i])
        if len(evaluation) // 2 < eval_quota and i % 2 == 1:
            evaluation.extend(pair)
        else:
            train.extend(pair)
    return tuple(sorted(train)), tuple(sorted(evaluation))


def spinup_prepend(forcings: Mapping[str, TimeSeries], n_repeats: int):
    """Prepend ``n_repeats`` copies of the first complete water year.

    Returns:
        (extended forcings, scoring offset). Steps before the offset are
        spin-up and must be excluded from scoring.
    """
    if n_repeats < 0:
        raise ArgumentError("n_repeats must be >= 0")
    forcings = dict(forcings)
    if not forcings:
        raise ArgumentError("no forcings given")
    ref = next(iter(forcings.values()))
    for name, ts in forcings.items():
        if ts.start_date != ref.start_date or len(ts) != len(ref):
            raise ArgumentError(f"forcing {name!r} is not aligned with the others")
    wy = WaterYearIndex.of(ref)
    complete = wy.complete_years()
    if not complete:
        raise ArgumentError("forcings do not cover a complete water year")
    a, b = wy.range(complete[0])
    offset = n_repeats * (b - a)
    if offset == 0:
        return forcings, 0
    out = {}
    for name, ts in forcings.items():
        block_v, block_m = ts.values[a:b], ts.missing[a:b]
        values = np.concatenate([block_v] * n_repeats + [ts.values])
        missing = np.concatenate([block_m] * n_repeats + [ts.missing])
        out[name] = TimeSeries(ts.start_date - timedelta(days=offset), values, ts.unit, missing)
    return out, offset

"""Diagnostics: flow-duration curves, flow-group anomalies, monthly bias,
QQ data, moving quantiles and the yearly-block bootstrap."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from jkge.benchmark import LTM, BenchmarkMethod, MovingMean
from jkge.errors import ArgumentError, DegenerateInputError
from jkge.metrics import DEFAULT_EPS_B, DEFAULT_EPS_SIGMA, REPORT_KEYS, full_report
from jkge.series import DEFAULT_LOG_FLOOR, PairedSeries, TimeSeries, WaterYearIndex

GROUP_NAMES = ("FG1", "FG2", "FG3", "FG4", "FG5")
GROUP_QUANTILES = (0.2, 0.4, 0.6, 0.8)


def flow_duration_curve(s: TimeSeries) -> list[tuple[float, float]]:
    """Flows ranked high to low with Weibull exceedance probabilities."""
    x = s.values[s.usable]
    if x.size == 0:
        raise DegenerateInputError("no usable values for a flow-duration curve")
    flows = np.sort(x)[::-1]
    p = np.arange(1, x.size + 1) / (x.size + 1)
    return list(zip(p.tolist(), flows.tolist()))


@dataclass(frozen=True, eq=False)
class FlowGroupAssignment:
    boundaries: np.ndarray
    group_of: np.ndarray  # 0..4 for FG1..FG5, -1 where not usable

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.group_of == k)


def assign_flow_groups(obs: TimeSeries) -> FlowGroupAssignment:
    """Quintile groups of the observed flows. A value equal to a boundary
    belongs to the lower group, so heavy ties can leave a group empty."""
    usable = obs.usable
    if not usable.any():
        raise DegenerateInputError("no usable observations")
    bounds = np.quantile(obs.values[usable], GROUP_QUANTILES)
    groups = np.full(len(obs), -1)
    groups[usable] = np.searchsorted(bounds, obs.values[usable], side="left")
    return FlowGroupAssignment(bounds, groups)


@dataclass(frozen=True)
class GroupStats:
    count: int
    min: float
    q25: float
    median: float
    q75: float
    max: float

    @classmethod
    def of(cls, x: np.ndarray) -> "GroupStats":
        q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0])
        return cls(int(x.size), *map(float, q))


def flow_group_anomalies(pair: PairedSeries, floor: float = DEFAULT_LOG_FLOOR,
                         absolute: bool = False):
    """Summary of ``log(sim) - log(obs)`` in each observed-flow quintile.

    Returns ``(assignment, {group name: GroupStats or None})``; a group
    emptied by ties maps to None. ``absolute=True`` summarizes the
    magnitudes instead.
    """
    assign = assign_flow_groups(pair.obs.mask(pair.usable))
    with np.errstate(divide="ignore", invalid="ignore"):
        anomaly = (np.log(np.maximum(pair.sim.values, floor))
                   - np.log(np.maximum(pair.obs.values, floor)))
    if absolute:
        anomaly = np.abs(anomaly)
    stats = {}
    for k, name in enumerate(GROUP_NAMES):
        idx = assign.members(k)
        stats[name] = GroupStats.of(anomaly[idx]) if idx.size else None
    return assign, stats


@dataclass(frozen=True)
class MonthlyBias:
    month: str  # YYYY-MM
    bias_percent: float  # nan when the observed monthly total is zero
    mean_obs: float
    n_days: int


def monthly_percent_bias(pair: PairedSeries) -> list[MonthlyBias]:
    months = pair.obs.dates().astype("datetime64[M]")
    usable = pair.usable
    labels, inverse = np.unique(months, return_inverse=True)
    w = usable.astype(np.float64)
    so = np.bincount(inverse, weights=np.where(usable, pair.obs.values, 0.0), minlength=labels.size)
    ss = np.bincount(inverse, weights=np.where(usable, pair.sim.values, 0.0), minlength=labels.size)
    nd = np.bincount(inverse, weights=w, minlength=labels.size)
    out = []
    for lab, o, s, n in zip(labels, so, ss, nd):
        if n == 0:
            continue
        bias = 100.0 * (s - o) / o if o != 0 else math.nan
        out.append(MonthlyBias(str(lab), float(bias), float(o / n), int(n)))
    return out


def qq_data(pair: PairedSeries) -> np.ndarray:
    """Rank-paired quantiles: column 0 sorted obs, column 1 sorted sim."""
    u = pair.usable
    return np.column_stack([np.sort(pair.obs.values[u]), np.sort(pair.sim.values[u])])


def moving_quantiles(s: TimeSeries, n_w: int, q: float) -> TimeSeries:
    """Centered moving empirical quantile; edges are missing."""
    if not 0.0 < q < 1.0:
        raise ArgumentError("q must lie in (0, 1)")
    mm = MovingMean(n_w)
    mm._check(len(s))
    k = mm.half
    win = sliding_window_view(np.where(s.usable, s.values, np.nan), n_w)
    out = np.full(len(s), np.nan)
    ok = ~np.all(np.isnan(win), axis=1)
    out[k:len(s) - k][ok] = np.nanquantile(win[ok], q, axis=1)
    return TimeSeries(s.start_date, out, s.unit, np.isnan(out))


# -- bootstrap -----------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapEntry:
    median: float | None
    q05: float | None
    q95: float | None
    skipped: int


@dataclass
class BootstrapSummary:
    entries: dict[str, BootstrapEntry]
    n_samples: int
    seed: int
    point: dict = field(default_factory=dict)
    block: str = "water-year"

    def rows(self):
        for key, e in self.entries.items():
            yield {"metric": key, "median": e.median, "q05": e.q05, "q95": e.q95,
                   "skipped": e.skipped}


def draw_blocks(seed: int, index: int, n_years: int) -> np.ndarray:
    """Year indices drawn (with replacement) for replicate ``index``."""
    return np.random.default_rng([seed, index]).integers(0, n_years, n_years)


def _year_blocks(pair: PairedSeries):
    wy = WaterYearIndex.of(pair.obs)
    years = wy.complete_years()
    if len(years) < 2:
        raise ArgumentError(f"bootstrap needs >= 2 complete water years, found {len(years)}")
    return [slice(*wy.range(y)) for y in years], wy.range(years[0])[0]


def resample(pair: PairedSeries, draw, blocks=None) -> PairedSeries:
    """Concatenate the drawn water-year blocks of sim and obs, in draw order."""
    blocks, first = _year_blocks(pair) if blocks is None else blocks
    start = pair.obs.dates()[first].astype(object)
    parts = [blocks[i] for i in draw]

    def cat(ts):
        return TimeSeries(start, np.concatenate([ts.values[b] for b in parts]), ts.unit,
                          np.concatenate([ts.missing[b] for b in parts]))

    return PairedSeries(cat(pair.obs), cat(pair.sim))


def _report_values(pair, method, eps_b, log_space, floor, eps_sigma):
    rep = full_report(pair, method, eps_b, log_space, floor, eps_sigma)
    return {k: rep.get(k) for k in REPORT_KEYS}


def bootstrap_metrics(pair: PairedSeries, method: BenchmarkMethod = LTM(), n: int = 1000,
                      seed: int = 0, eps_b: float = DEFAULT_EPS_B, log_space: bool = False,
                      floor: float = DEFAULT_LOG_FLOOR,
                      eps_sigma: float = DEFAULT_EPS_SIGMA) -> BootstrapSummary:
    """Yearly-block bootstrap of every reported metric and component.

    Replicate ``i`` draws its years from an RNG seeded by ``(seed, i)`` and
    the benchmarks are rebuilt on the concatenated series. A replicate whose
    entry is degenerate is skipped for that entry only.
    """
    if n < 1:
        raise ArgumentError("n must be >= 1")
    blocks = _year_blocks(pair)
    k = len(blocks[0])
    args = (method, eps_b, log_space, floor, eps_sigma)
    point = _report_values(resample(pair, range(k), blocks), *args)
    samples = {key: [] for key in REPORT_KEYS}
    for i in range(n):
        vals = _report_values(resample(pair, draw_blocks(seed, i, k), blocks), *args)
        for key, v in vals.items():
            if v is not None and math.isfinite(v):
                samples[key].append(v)
    entries = {}
    for key, xs in samples.items():
        if xs:
            q05, med, q95 = np.quantile(np.array(xs), [0.05, 0.5, 0.95])
            entries[key] = BootstrapEntry(float(med), float(q05), float(q95), n - len(xs))
        else:
            entries[key] = BootstrapEntry(None, None, None, n)
    return BootstrapSummary(entries, n, seed, point)

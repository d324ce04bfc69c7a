"""Seeded synthetic catchments: storm-driven forcings plus a reference
three-store model that produces the "observed" discharge.

The reference model deliberately differs from ``hydromodel``: runoff
generation is a nonlinear function of soil wetness, runoff is routed through
a nonlinear quick store, ET saturates above a wetness threshold, and
groundwater recharge is a power of soil wetness.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from datetime import date

import numpy as np
from numba import njit

from jkge.errors import ArgumentError
from jkge.hydromodel import Forcing
from jkge.series import TimeSeries

DAYS_PER_YEAR = 365.25


@dataclass(frozen=True)
class SynthConfig:
    n_years: int = 20
    start_year: int = 2000  # first water year begins Oct 1 of start_year - 1
    # storms: expected arrivals per day, modulated seasonally
    storm_rate: float = 1.2
    precip_amplitude: float = 1.0
    precip_phase_doy: float = 15.0  # day of year with the highest storm rate
    storm_log_mean: float = 0.9
    storm_log_sd: float = 0.5
    year_rate_sd: float = 0.05  # lognormal year-to-year rate multiplier
    pet_mean: float = 2.0
    pet_amplitude: float = 1.8
    pet_phase_doy: float = 196.0
    # reference model
    soil_capacity: float = 120.0
    runoff_shape: float = 1.0
    et_threshold: float = 0.6
    quick_rate: float = 0.05
    quick_exponent: float = 1.0
    percolation: float = 0.5  # recharge (mm/day) at field capacity
    slow_rate: float = 0.01
    noise_sd: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if int(self.n_years) != self.n_years or self.n_years < 2:
            raise ArgumentError("n_years must be an integer >= 2")
        positive = ("soil_capacity", "runoff_shape", "et_threshold", "quick_rate",
                    "quick_exponent", "slow_rate", "storm_log_sd")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ArgumentError(f"{name} must be positive")
        nonneg = ("storm_rate", "year_rate_sd", "pet_mean", "percolation", "noise_sd")
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ArgumentError(f"{name} must be non-negative")
        if not 0 <= self.precip_amplitude <= 1:
            raise ArgumentError("precip_amplitude must lie in [0, 1]")
        if not 0 <= self.pet_amplitude <= self.pet_mean:
            raise ArgumentError("pet_amplitude must lie in [0, pet_mean] so pet stays >= 0")

    @property
    def start_date(self) -> date:
        return date(self.start_year - 1, 10, 1)

    @property
    def n_days(self) -> int:
        return (date(self.start_year - 1 + self.n_years, 10, 1) - self.start_date).days

    @classmethod
    def from_text(cls, text: str) -> "SynthConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (p.strip() for p in line.partition("="))
            if not sep or key not in types:
                raise ArgumentError(f"config line {lineno}: cannot parse {raw.strip()!r}")
            try:
                kw[key] = int(value) if types[key] in ("int", int) else float(value)
            except ValueError:
                raise ArgumentError(f"config line {lineno}: bad value for {key}") from None
        return cls(**kw)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())


def _day_of_year(start: date, n: int) -> np.ndarray:
    offset = start.timetuple().tm_yday - 1
    return (offset + np.arange(n)) % DAYS_PER_YEAR


def seasonal_rate(cfg: SynthConfig, n: int | None = None) -> np.ndarray:
    """Deterministic seasonal storm-arrival rate (storms/day)."""
    n = cfg.n_days if n is None else n
    doy = _day_of_year(cfg.start_date, n)
    return cfg.storm_rate * (1 + cfg.precip_amplitude
                             * np.cos(2 * np.pi * (doy - cfg.precip_phase_doy) / DAYS_PER_YEAR))


def _pet(cfg: SynthConfig, n: int) -> np.ndarray:
    doy = _day_of_year(cfg.start_date, n)
    pet = cfg.pet_mean + cfg.pet_amplitude * np.cos(2 * np.pi * (doy - cfg.pet_phase_doy) / DAYS_PER_YEAR)
    return np.maximum(pet, 0.0)


@njit(cache=True)
def _reference_run(precip, pet, cap, shape, et_thr, kq, eq, perc, ks):
    n = precip.size
    q = np.empty(n)
    soil, quick, slow = 0.3 * cap, 0.0, 0.0
    for t in range(n):
        p = precip[t]
        w = soil / cap
        runoff = p * w ** shape
        soil += p - runoff
        if soil > cap:
            runoff += soil - cap
            soil = cap
        et = pet[t] * min(1.0, soil / (et_thr * cap))
        if et > soil:
            et = soil
        soil -= et
        rech = min(perc * (soil / cap) ** 2, soil)
        soil -= rech
        slow += rech
        quick += runoff
        qq = min(kq * quick ** eq, quick)
        quick -= qq
        qs = ks * slow
        slow -= qs
        q[t] = qq + qs
    return q


def reference_discharge(cfg: SynthConfig, precip, pet, warmup_years: int = 3) -> np.ndarray:
    """Reference-model discharge; the first 365 days are replayed
    ``warmup_years`` times beforehand so the stores start near equilibrium."""
    precip = np.asarray(precip, float)
    pet = np.asarray(pet, float)
    k = min(365, precip.size) * warmup_years
    p = np.concatenate([np.tile(precip[:365], warmup_years), precip])
    e = np.concatenate([np.tile(pet[:365], warmup_years), pet])
    q = _reference_run(p, e, cfg.soil_capacity, cfg.runoff_shape, cfg.et_threshold,
                       cfg.quick_rate, cfg.quick_exponent, cfg.percolation, cfg.slow_rate)
    return q[k:]


def generate_catchment(cfg: SynthConfig):
    """Return ``(Forcing, obs)`` for the configured synthetic catchment."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_days
    rate = seasonal_rate(cfg, n)
    year_of_day = np.arange(n) // 365
    year_mult = np.exp(cfg.year_rate_sd * rng.standard_normal(year_of_day.max() + 1)
                       - 0.5 * cfg.year_rate_sd ** 2)
    counts = rng.poisson(rate * year_mult[year_of_day])
    total = int(counts.sum())
    depths = rng.lognormal(cfg.storm_log_mean, cfg.storm_log_sd, total)
    day = np.repeat(np.arange(n), counts)
    precip = np.bincount(day, weights=depths, minlength=n)
    pet = _pet(cfg, n)
    q = reference_discharge(cfg, precip, pet)
    noise = np.exp(cfg.noise_sd * rng.standard_normal(n))
    obs = q * noise
    start = cfg.start_date
    forcing = Forcing(TimeSeries(start, precip), TimeSeries(start, pet))
    return forcing, TimeSeries(start, obs)


def arid_record(n_years: int = 6, zero_fraction: float = 0.4, seed: int = 0) -> TimeSeries:
    """Intermittent-flow record: a seasonal flow signal with roughly
    ``zero_fraction`` of days set exactly to zero during the dry season."""
    rng = np.random.default_rng(seed)
    cfg = SynthConfig(n_years=n_years, seed=seed)
    n = cfg.n_days
    doy = _day_of_year(cfg.start_date, n)
    wet = 0.5 + 0.5 * np.cos(2 * np.pi * (doy - 30) / DAYS_PER_YEAR)
    flow = wet ** 2 * rng.lognormal(0.0, 0.8, n)
    cutoff = np.quantile(wet, zero_fraction)
    flow[wet <= cutoff] = 0.0
    if math.isclose(zero_fraction, 0.0):
        flow = np.maximum(flow, 1e-3)
    return TimeSeries(cfg.start_date, flow)

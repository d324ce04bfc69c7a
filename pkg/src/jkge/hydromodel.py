"""Two-bucket conceptual rainfall-runoff model (soil + baseflow storage).

Per step: precipitation fills the soil store, saturation excess above
``smax`` leaves immediately, evapotranspiration draws on the soil in
proportion to its relative wetness, and linear drainage ``ks * soil`` is
split between a seepage flux to the baseflow store and direct quickflow.
The baseflow store releases ``kb * base``. Mass is conserved exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from numba import njit

from jkge._io import atomic_open
from jkge.errors import ArgumentError
from jkge.series import TimeSeries

PARAM_NAMES = ("smax", "ks", "kb", "fseep", "etc_scale")
# unconstrained theta = 0 maps to smax = 100 mm
SMAX_SCALE = 100.0


def _logistic(x):
    return 1.0 / (1.0 + math.exp(-x))


def _logit(p):
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class BucketParams:
    smax: float
    ks: float
    kb: float
    fseep: float
    etc_scale: float

    def __post_init__(self):
        if not self.smax > 0:
            raise ArgumentError("smax must be positive")
        for name in ("ks", "kb", "fseep", "etc_scale"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ArgumentError(f"{name} must lie in [0, 1], got {v}")

    @classmethod
    def from_unconstrained(cls, theta) -> "BucketParams":
        t = [float(x) for x in theta]
        if len(t) != len(PARAM_NAMES):
            raise ArgumentError(f"expected {len(PARAM_NAMES)} parameters, got {len(t)}")
        return cls(SMAX_SCALE * math.exp(t[0]), *(_logistic(x) for x in t[1:]))

    def to_unconstrained(self) -> np.ndarray:
        edge = [n for n in PARAM_NAMES[1:] if getattr(self, n) in (0.0, 1.0)]
        if edge:
            raise ArgumentError(f"{edge} on the boundary of [0, 1] have no unconstrained value")
        return np.array([math.log(self.smax / SMAX_SCALE)]
                        + [_logit(getattr(self, n)) for n in PARAM_NAMES[1:]])

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)


@dataclass(frozen=True)
class BucketState:
    soil: float = 0.0
    base: float = 0.0


@dataclass(frozen=True)
class Forcing:
    precip: TimeSeries
    pet: TimeSeries

    def __post_init__(self):
        if self.precip.start_date != self.pet.start_date or len(self.precip) != len(self.pet):
            raise ArgumentError("precip and pet are not aligned")
        for f in fields(self):
            ts = getattr(self, f.name)
            if ts.missing.any():
                raise ArgumentError(f"{f.name} has missing values")
            if (ts.values < 0).any():
                raise ArgumentError(f"{f.name} has negative values")

    def __len__(self):
        return len(self.precip)


@njit(cache=True)
def _step(soil, base, precip, pet, smax, ks, kb, fseep, etc_scale):
    soil = soil + precip
    qx = soil - smax if soil > smax else 0.0
    soil -= qx
    et = etc_scale * pet * (soil / smax)
    if et > soil:
        et = soil
    soil -= et
    drain = ks * soil
    soil -= drain
    seep = fseep * drain
    base += seep
    qb = kb * base
    base -= qb
    q = qx + (drain - seep) + qb
    return soil, base, q, et


@njit(cache=True)
def _run(precip, pet, p, soil, base):
    n = precip.size
    q = np.empty(n)
    et = np.empty(n)
    for t in range(n):
        soil, base, q[t], et[t] = _step(soil, base, precip[t], pet[t], p[0], p[1], p[2], p[3], p[4])
    return q, et, soil, base


@njit(cache=True)
def _run_batch(precip, pet, P, soil0, base0):
    out = np.empty((P.shape[0], precip.size))
    for i in range(P.shape[0]):
        q, _, _, _ = _run(precip, pet, P[i], soil0, base0)
        out[i] = q
    return out


def step(state: BucketState, precip: float, pet: float, params: BucketParams):
    """Advance one day. Returns ``(new_state, q, et)`` in mm/day."""
    soil, base, q, et = _step(state.soil, state.base, float(precip), float(pet),
                              *astuple(params))
    return BucketState(soil, base), q, et


def run_arrays(precip, pet, params: BucketParams, state: BucketState = BucketState()):
    """Raw run on arrays; returns ``(q, et, final_state)``."""
    q, et, soil, base = _run(np.ascontiguousarray(precip, dtype=np.float64),
                             np.ascontiguousarray(pet, dtype=np.float64),
                             params.as_array(), state.soil, state.base)
    return q, et, BucketState(soil, base)


def run_batch(precip, pet, theta_rows, state: BucketState = BucketState()) -> np.ndarray:
    """Discharge for each row of unconstrained parameters (one row per run)."""
    T = np.atleast_2d(np.asarray(theta_rows, dtype=np.float64))
    if T.shape[1] != len(PARAM_NAMES):
        raise ArgumentError(f"expected {len(PARAM_NAMES)} parameters per row")
    P = np.empty_like(T)
    P[:, 0] = SMAX_SCALE * np.exp(T[:, 0])
    P[:, 1:] = 1.0 / (1.0 + np.exp(-T[:, 1:]))
    return _run_batch(np.ascontiguousarray(precip, dtype=np.float64),
                      np.ascontiguousarray(pet, dtype=np.float64), P, state.soil, state.base)


def simulate(forcing: Forcing, params: BucketParams, state: BucketState = BucketState(),
             scoring_offset: int = 0) -> TimeSeries:
    """Simulated discharge; steps before ``scoring_offset`` are flagged missing."""
    q, _, _ = run_arrays(forcing.precip.values, forcing.pet.values, params, state)
    missing = np.zeros(q.size, dtype=bool)
    missing[:scoring_offset] = True
    return TimeSeries(forcing.precip.start_date, q, "mm_per_day", missing)


def save_params(params: BucketParams, path):
    theta = params.to_unconstrained()
    with atomic_open(path) as fh:
        json.dump(dict(zip(PARAM_NAMES, map(float, theta))), fh, indent=2)
        fh.write("\n")


def load_params(path) -> BucketParams:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    missing = [k for k in PARAM_NAMES if k not in d]
    if missing:
        raise ArgumentError(f"parameter file lacks {missing}")
    return BucketParams.from_unconstrained([d[k] for k in PARAM_NAMES])

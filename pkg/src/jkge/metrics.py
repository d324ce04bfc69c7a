"""Efficiency metrics and their decomposition components.

Stationary metrics (MSE, NSE, KGE, KGE_SS) compare the simulation with the
observations about their long-term means. The non-stationary family
(JKGE_SS and its augmented, ablated and mu&sigma variants) replaces the
long-term mean by a time-varying benchmark built identically from the
simulated and the observed series.

All means are population means (1/N) over the usable positions. For the
non-stationary terms N counts the positions where both benchmarks are valid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from jkge.benchmark import LTM, BenchmarkMethod, parse_method
from jkge.errors import ArgumentError, DegenerateInputError
from jkge.series import DEFAULT_LOG_FLOOR, PairedSeries, log_transform

DEFAULT_EPS_B = 1e-8
DEFAULT_EPS_SIGMA = 1e-6

EFFICIENCY_KEYS = (
    "nse", "kge", "kge_ss", "jkge_ss", "jkge_aug", "jkge_abl1", "jkge_abl2", "jkge_musigma",
)
COMPONENT_KEYS = (
    "beta", "alpha", "rho", "M", "V", "C",
    "Mstar", "alpha_star", "rho_star", "Vstar", "Cstar", "psi_s", "psi_o",
)
REPORT_KEYS = ("mse",) + EFFICIENCY_KEYS + COMPONENT_KEYS


@dataclass(frozen=True)
class StationaryComponents:
    mu_s: float
    mu_o: float
    sigma_s: float
    sigma_o: float
    beta: float
    alpha: float
    rho: float
    M: float
    V: float
    C: float


@dataclass(frozen=True)
class NonstationaryComponents:
    psi_s: float
    psi_o: float
    alpha_star: float
    rho_star: float
    Mstar: float
    Vstar: float
    Cstar: float
    n_valid: int = 0
    guard_activations: int = 0
    perfect_benchmark: bool = False


def _split(pair: PairedSeries):
    return pair.sim.values, pair.obs.values, pair.usable


def _skill(total):
    return 1.0 - math.sqrt(total / 2.0)


# -- stationary ---------------------------------------------------------------

def _mse(s, o, usable):
    if not usable.any():
        raise DegenerateInputError("no usable positions")
    d = s[usable] - o[usable]
    return float(np.mean(d * d))


def _sigma_o(o, usable):
    oo = o[usable]
    if oo.size == 0:
        raise DegenerateInputError("no usable positions")
    do = oo - np.mean(oo)
    return math.sqrt(float(np.mean(do * do)))


def _stationary_batch(s, o, usable):
    """Stationary components for every row of ``s`` (leading axes allowed)."""
    ss, oo = s[..., usable], o[usable]
    if oo.size == 0:
        raise DegenerateInputError("no usable positions")
    # a constant simulation must give sigma_s == 0 exactly, not ulp noise
    const = ss.min(axis=-1) == ss.max(axis=-1)
    mu_s = np.where(const, ss[..., 0], ss.mean(axis=-1))
    mu_o = float(np.mean(oo))
    ds, do = ss - mu_s[..., None], oo - mu_o
    var_s = np.mean(ds * ds, axis=-1)
    var_o = float(np.mean(do * do))
    sigma_s, sigma_o = np.sqrt(var_s), math.sqrt(var_o)
    if mu_o == 0.0:
        raise DegenerateInputError("observed mean is zero; beta undefined")
    if sigma_o == 0.0:
        raise DegenerateInputError("observed standard deviation is zero")
    pos = sigma_s > 0.0
    # sqrt(var_s * var_o) rather than sigma_s * sigma_o: for s == o the
    # product is exactly var_o, so rho comes out as exactly 1
    denom = np.where(pos, np.sqrt(var_s * var_o), 1.0)
    alpha = np.where(pos, sigma_s / sigma_o, 0.0)
    rho = np.where(pos, np.mean(ds * do, axis=-1) / denom, 0.0)
    beta = mu_s / mu_o
    return SimpleNamespace(mu_s=mu_s, mu_o=mu_o, sigma_s=sigma_s, sigma_o=sigma_o,
                           beta=beta, alpha=alpha, rho=rho, M=(1.0 - beta) ** 2,
                           V=(1.0 - alpha) ** 2, C=(1.0 - rho) ** 2)


def _stationary(s, o, usable) -> StationaryComponents:
    c = _stationary_batch(s, o, usable)
    return StationaryComponents(*(float(getattr(c, f)) for f in StationaryComponents.__dataclass_fields__))


def mse(pair: PairedSeries) -> float:
    return _mse(*_split(pair))


def nse(pair: PairedSeries) -> float:
    s, o, usable = _split(pair)
    sigma_o = _sigma_o(o, usable)
    if sigma_o == 0.0:
        raise DegenerateInputError("observed standard deviation is zero")
    return 1.0 - _mse(s, o, usable) / sigma_o ** 2


def kge_with_components(pair: PairedSeries):
    """Return ``(kge, StationaryComponents)``."""
    c = _stationary(*_split(pair))
    return 1.0 - math.sqrt(c.M + c.V + c.C), c


def kge_ss(pair: PairedSeries) -> float:
    c = _stationary(*_split(pair))
    return _skill(c.M + c.V + c.C)


# -- non-stationary -----------------------------------------------------------

def guarded(b, eps_b):
    """Sign-preserving floor on ``|b|``; zero maps to ``+eps_b``."""
    sign = np.where(b < 0.0, -1.0, 1.0)
    return sign * np.maximum(np.abs(b), eps_b)


def _ns_batch(s, o, usable, method: BenchmarkMethod, eps_b, obs_bench=None, sim_bench=None):
    """Benchmarks, anomalies and components for every row of ``s``.

    ``obs_bench`` and ``sim_bench`` may carry precomputed ``method.apply``
    results for ``o`` and ``s``.
    """
    if not eps_b > 0:
        raise ArgumentError("eps_b must be positive")
    bo, valid_o = method.apply(o, usable) if obs_bench is None else obs_bench
    bs, valid_s = method.apply(s, usable) if sim_bench is None else sim_bench
    valid = usable & valid_o & valid_s
    n = int(valid.sum())
    if n == 0:
        raise DegenerateInputError(f"no positions valid under benchmark {method}")
    go = guarded(bo[valid], eps_b)
    ratio = bs[..., valid] / go
    mstar = np.mean((1.0 - ratio) ** 2, axis=-1)
    a_s = s[..., valid] - bs[..., valid]
    a_o = o[valid] - bo[valid]
    var_s = np.mean(a_s * a_s, axis=-1)
    var_o = float(np.mean(a_o * a_o))
    psi_s, psi_o = np.sqrt(var_s), math.sqrt(var_o)
    ok = (psi_s > 0.0) & (psi_o > 0.0)
    po = psi_o if psi_o > 0.0 else 1.0
    alpha_star = np.where(ok, psi_s / po, 0.0)
    denom = np.where(ok, np.sqrt(var_s * var_o), 1.0)
    rho_star = np.where(ok, np.mean(a_s * a_o, axis=-1) / denom, 0.0)
    perfect = (psi_s == 0.0) & (psi_o == 0.0) & np.all(bs[..., valid] == bo[valid], axis=-1)
    return SimpleNamespace(
        bo=bo, bs=bs, valid=valid, n=n, go=go, ratio=ratio, a_s=a_s, a_o=a_o,
        psi_s=psi_s, psi_o=psi_o, alpha_star=alpha_star, rho_star=rho_star, Mstar=mstar,
        Vstar=(1.0 - alpha_star) ** 2, Cstar=(1.0 - rho_star) ** 2, perfect=perfect,
        guard_hits=int(np.count_nonzero(np.abs(bo[valid]) < eps_b)),
    )


def _ns_state(s, o, usable, method: BenchmarkMethod, eps_b, obs_bench=None):
    """Single-series form of :func:`_ns_batch` with a components record."""
    st = _ns_batch(s, o, usable, method, eps_b, obs_bench)
    st.comps = NonstationaryComponents(
        float(st.psi_s), st.psi_o, float(st.alpha_star), float(st.rho_star), float(st.Mstar),
        float(st.Vstar), float(st.Cstar), st.n, st.guard_hits, bool(st.perfect),
    )
    return st


def _water_balance_on(s, o, mask):
    """Long-term water-balance term M restricted to ``mask``."""
    mu_o = float(np.mean(o[mask]))
    if mu_o == 0.0:
        raise DegenerateInputError("observed mean is zero; beta undefined")
    beta = np.mean(s[..., mask], axis=-1) / mu_o
    return (1.0 - beta) ** 2


def nonstationary_components(pair: PairedSeries, method: BenchmarkMethod = LTM(),
                             eps_b: float = DEFAULT_EPS_B) -> NonstationaryComponents:
    s, o, usable = _split(pair)
    return _ns_state(s, o, usable, method, eps_b).comps


def jkge_ss(pair, method=LTM(), eps_b=DEFAULT_EPS_B) -> float:
    c = nonstationary_components(pair, method, eps_b)
    return _skill(c.Mstar + c.Vstar + c.Cstar)


def jkge_aug(pair, method=LTM(), eps_b=DEFAULT_EPS_B) -> float:
    s, o, usable = _split(pair)
    st = _ns_state(s, o, usable, method, eps_b)
    c = st.comps
    return _skill(float(_water_balance_on(s, o, st.valid)) + c.Mstar + c.Vstar + c.Cstar)


def jkge_ablated(pair, method=LTM(), eps_b=DEFAULT_EPS_B, variant="abl1") -> float:
    """Ablated variants, without the skill-score /2 normalization.

    ``abl1`` drops the anomaly correlation term, ``abl2`` drops both the
    anomaly variability and correlation terms.
    """
    variant = variant.lower()
    if variant not in ("abl1", "abl2"):
        raise ArgumentError(f"unknown ablation {variant!r}")
    s, o, usable = _split(pair)
    st = _ns_state(s, o, usable, method, eps_b)
    total = float(_water_balance_on(s, o, st.valid)) + st.comps.Mstar
    if variant == "abl1":
        total += st.comps.Vstar
    return 1.0 - math.sqrt(total)


def _musigma(s, o, usable, method, eps_b, eps_sigma, st=None):
    if not eps_sigma > 0:
        raise ArgumentError("eps_sigma must be positive")
    st = _ns_state(s, o, usable, method, eps_b) if st is None else st
    psi_s_t = method.spread(s, st.bs, usable)[st.valid]
    psi_o_t = method.spread(o, st.bo, usable)[st.valid]
    low = psi_o_t < eps_sigma
    alpha_t = psi_s_t / np.maximum(psi_o_t, eps_sigma)
    vstar_t = float(np.mean((1.0 - alpha_t) ** 2))
    value = _skill(st.comps.Mstar + vstar_t + st.comps.Cstar)
    return value, vstar_t, int(np.count_nonzero(low))


def jkge_musigma(pair, method=LTM(), eps_b=DEFAULT_EPS_B, eps_sigma=DEFAULT_EPS_SIGMA,
                 return_flags=False):
    """JKGE_SS with a time-varying anomaly variability ratio.

    The per-segment ratio's denominator is floored at ``eps_sigma``; with
    ``return_flags`` the number of floored positions is returned as well.
    """
    s, o, usable = _split(pair)
    value, _, hits = _musigma(s, o, usable, method, eps_b, eps_sigma)
    return (value, hits) if return_flags else value


BATCH_METRICS = ("mse", "nse", "kge_ss", "jkge_ss", "jkge_aug")


def batch_metric(metric: str, sims, o, usable, method: BenchmarkMethod = LTM(),
                 eps_b: float = DEFAULT_EPS_B, obs_bench=None, sim_bench=None) -> np.ndarray:
    """Evaluate one metric for many simulations against one observed series.

    ``sims`` has shape ``(..., N)``; ``o`` and ``usable`` have shape ``(N,)``.
    Returns an array of shape ``sims.shape[:-1]``. ``obs_bench`` and
    ``sim_bench`` are optional cached ``method.apply(x, usable)`` results,
    useful when the same series is scored many times.
    """
    sims = np.asarray(sims, dtype=np.float64)
    o = np.asarray(o, dtype=np.float64)
    usable = np.asarray(usable, dtype=bool)
    if metric in ("mse", "nse"):
        if not usable.any():
            raise DegenerateInputError("no usable positions")
        d = sims[..., usable] - o[usable]
        err = np.mean(d * d, axis=-1)
        if metric == "mse":
            return err
        sigma_o = _sigma_o(o, usable)
        if sigma_o == 0.0:
            raise DegenerateInputError("observed standard deviation is zero")
        return 1.0 - err / sigma_o ** 2
    if metric == "kge_ss":
        c = _stationary_batch(sims, o, usable)
        return 1.0 - np.sqrt((c.M + c.V + c.C) / 2.0)
    if metric in ("jkge_ss", "jkge_aug"):
        st = _ns_batch(sims, o, usable, method, eps_b, obs_bench, sim_bench)
        total = st.Mstar + st.Vstar + st.Cstar
        if metric == "jkge_aug":
            total = total + _water_balance_on(sims, o, st.valid)
        return 1.0 - np.sqrt(total / 2.0)
    raise ArgumentError(f"unknown metric {metric!r}; expected one of {BATCH_METRICS}")


# -- report -------------------------------------------------------------------

@dataclass
class MetricReport:
    mse: float | None = None
    nse: float | None = None
    kge: float | None = None
    kge_ss: float | None = None
    jkge_ss: float | None = None
    jkge_aug: float | None = None
    jkge_abl1: float | None = None
    jkge_abl2: float | None = None
    jkge_musigma: float | None = None
    stationary: StationaryComponents | None = None
    nonstationary: NonstationaryComponents | None = None
    method: BenchmarkMethod = field(default_factory=LTM)
    log_space: bool = False
    vstar_musigma: float | None = None
    sigma_guard_activations: int = 0
    reasons: dict = field(default_factory=dict)

    def get(self, key):
        """Look up a metric or component by its serialized name."""
        if key in EFFICIENCY_KEYS or key == "mse":
            return getattr(self, key)
        if key in ("beta", "alpha", "rho", "M", "V", "C"):
            return None if self.stationary is None else getattr(self.stationary, key)
        if key in ("Mstar", "alpha_star", "rho_star", "Vstar", "Cstar", "psi_s", "psi_o"):
            return None if self.nonstationary is None else getattr(self.nonstationary, key)
        raise KeyError(key)

    def to_dict(self) -> dict:
        out = {k: self.get(k) for k in REPORT_KEYS}
        out["method"] = self.method.label
        out["log_space"] = self.log_space
        ns = self.nonstationary
        out["n_valid"] = None if ns is None else ns.n_valid
        out["guard_activations"] = None if ns is None else ns.guard_activations
        out["perfect_benchmark"] = None if ns is None else ns.perfect_benchmark
        out["sigma_guard_activations"] = self.sigma_guard_activations
        for k, why in self.reasons.items():
            out[f"reason_{k}"] = why
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        st = ns = None
        if d.get("beta") is not None:
            st = StationaryComponents(
                math.nan, math.nan, math.nan, math.nan,
                *(d[k] for k in ("beta", "alpha", "rho", "M", "V", "C")),
            )
        if d.get("Mstar") is not None:
            ns = NonstationaryComponents(
                d["psi_s"], d["psi_o"], d["alpha_star"], d["rho_star"],
                d["Mstar"], d["Vstar"], d["Cstar"], d.get("n_valid") or 0,
                d.get("guard_activations") or 0, bool(d.get("perfect_benchmark")),
            )
        reasons = {k[len("reason_"):]: v for k, v in d.items() if k.startswith("reason_")}
        return cls(
            **{k: d.get(k) for k in ("mse",) + EFFICIENCY_KEYS},
            stationary=st, nonstationary=ns, method=parse_method(d.get("method", "ltm")),
            log_space=bool(d.get("log_space")),
            sigma_guard_activations=d.get("sigma_guard_activations") or 0, reasons=reasons,
        )


def full_report(pair: PairedSeries, method: BenchmarkMethod = LTM(),
                eps_b: float = DEFAULT_EPS_B, log_space: bool = False,
                floor: float = DEFAULT_LOG_FLOOR,
                eps_sigma: float = DEFAULT_EPS_SIGMA) -> MetricReport:
    """Every metric and component for one pair.

    A metric whose inputs are degenerate is left as None and the cause is
    recorded in ``reasons``.
    """
    if log_space:
        pair = pair.map(lambda ts: log_transform(ts, floor))
    s, o, usable = _split(pair)
    rep = MetricReport(method=method, log_space=log_space)

    def attempt(key, fn):
        try:
            return fn()
        except DegenerateInputError as exc:
            rep.reasons[key] = str(exc)
            return None

    rep.mse = attempt("mse", lambda: _mse(s, o, usable))
    rep.nse = attempt("nse", lambda: nse(pair))
    rep.stationary = attempt("stationary", lambda: _stationary(s, o, usable))
    if rep.stationary is not None:
        c = rep.stationary
        rep.kge = 1.0 - math.sqrt(c.M + c.V + c.C)
        rep.kge_ss = _skill(c.M + c.V + c.C)
    else:
        rep.reasons.setdefault("kge", rep.reasons["stationary"])
        rep.reasons.setdefault("kge_ss", rep.reasons["stationary"])
    st = attempt("nonstationary", lambda: _ns_state(s, o, usable, method, eps_b))
    if st is None:
        for k in ("jkge_ss", "jkge_aug", "jkge_abl1", "jkge_abl2", "jkge_musigma"):
            rep.reasons[k] = rep.reasons["nonstationary"]
        return rep
    c = rep.nonstationary = st.comps
    rep.jkge_ss = _skill(c.Mstar + c.Vstar + c.Cstar)
    m_valid = attempt("jkge_aug", lambda: float(_water_balance_on(s, o, st.valid)))
    if m_valid is not None:
        rep.jkge_aug = _skill(m_valid + c.Mstar + c.Vstar + c.Cstar)
        rep.jkge_abl1 = 1.0 - math.sqrt(m_valid + c.Mstar + c.Vstar)
        rep.jkge_abl2 = 1.0 - math.sqrt(m_valid + c.Mstar)
    else:
        rep.reasons["jkge_abl1"] = rep.reasons["jkge_abl2"] = rep.reasons["jkge_aug"]
    ms = attempt("jkge_musigma", lambda: _musigma(s, o, usable, method, eps_b, eps_sigma, st))
    if ms is not None:
        rep.jkge_musigma, rep.vstar_musigma, rep.sigma_guard_activations = ms
    return rep


def report_row(rep: MetricReport) -> dict:
    """One-row variant of the JSON report for batch CSV output."""
    return rep.to_dict()


METRICS = {
    "mse": mse,
    "nse": nse,
    "kge_ss": kge_ss,
    "jkge_ss": jkge_ss,
    "jkge_aug": jkge_aug,
}


"""Analytic gradients of the efficiency metrics with respect to the
simulated series, and a central-difference checker.

The benchmark operators are linear in the simulation, so the chain rule
through b^s only needs the operator's adjoint (a section sum or a window
sum), never a dense Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from jkge._dd import DD
from jkge.benchmark import LTM, BenchmarkMethod, MovingMean, SectionMean
from jkge.errors import ArgumentError, GradientUndefinedError
from jkge.metrics import (
    DEFAULT_EPS_B,
    _ns_state,
    _sigma_o,
    _stationary,
    _water_balance_on,
    batch_metric,
)
from jkge.series import PairedSeries

GRADIENT_METRICS = ("mse", "nse", "kge_ss", "jkge_ss", "jkge_aug")


@dataclass(frozen=True, eq=False)
class GradientVector:
    values: np.ndarray
    metric: str
    valid: np.ndarray


def _d_skill(total):
    # d/dQ of 1 - sqrt(Q/2)
    return -1.0 / (4.0 * math.sqrt(total / 2.0))


def metric_value(metric, s, o, usable, method=LTM(), eps_b=DEFAULT_EPS_B, obs_bench=None):
    """Array-level metric evaluation (no PairedSeries construction).

    ``obs_bench`` optionally caches ``method.apply(o, usable)`` across calls.
    """
    if metric not in GRADIENT_METRICS:
        raise ArgumentError(f"unknown metric {metric!r}; expected one of {GRADIENT_METRICS}")
    return float(batch_metric(metric, s, o, usable, method, eps_b, obs_bench))


def _grad_stationary(s, o, usable):
    c = _stationary(s, o, usable)
    if c.sigma_s == 0.0:
        raise GradientUndefinedError("simulated standard deviation is zero")
    n = int(usable.sum())
    ds = s[usable] - c.mu_s
    do = o[usable] - c.mu_o
    total = c.M + c.V + c.C
    g = np.zeros(s.size)
    if total == 0.0:
        return g
    d_sigma = ds / (n * c.sigma_s)
    d_m = 2.0 * (c.beta - 1.0) / (c.mu_o * n)
    d_v = 2.0 * (c.alpha - 1.0) / c.sigma_o * d_sigma
    d_rho = do / (n * c.sigma_s * c.sigma_o) - c.rho * d_sigma / c.sigma_s
    d_c = -2.0 * (1.0 - c.rho) * d_rho
    g[usable] = _d_skill(total) * (d_m + d_v + d_c)
    return g


def _grad_nonstationary(s, o, usable, method, eps_b, augmented):
    st = _ns_state(s, o, usable, method, eps_b)
    c, valid, n = st.comps, st.valid, st.n
    if c.psi_s == 0.0:
        raise GradientUndefinedError("simulated anomalies are identically zero")
    total = c.Mstar + c.Vstar + c.Cstar
    if augmented:
        m_lt = float(_water_balance_on(s, o, valid))
        total += m_lt
    if total == 0.0:
        return np.zeros(s.size)

    h_b = np.zeros(s.size)
    h_b[valid] = -2.0 * (1.0 - st.ratio) / (st.go * n)

    h_a = np.zeros(s.size)
    if c.psi_o > 0.0:
        d_psi = st.a_s / (n * c.psi_s)
        d_v = 2.0 * (c.alpha_star - 1.0) / c.psi_o * d_psi
        d_rho = st.a_o / (n * c.psi_s * c.psi_o) - c.rho_star * d_psi / c.psi_s
        h_a[valid] = d_v - 2.0 * (1.0 - c.rho_star) * d_rho

    # a^s = s - B s  and  b^s = B s
    g = h_a + method.adjoint(h_b - h_a, usable)
    if augmented:
        mu_o = float(np.mean(o[valid]))
        beta = float(np.mean(s[valid])) / mu_o
        g[valid] += 2.0 * (beta - 1.0) / (mu_o * n)
    g *= _d_skill(total)
    g[~usable] = 0.0
    return g


def grad_array(metric, s, o, usable, method=LTM(), eps_b=DEFAULT_EPS_B):
    if metric == "mse":
        n = int(usable.sum())
        return np.where(usable, 2.0 * (s - o) / n, 0.0)
    if metric == "nse":
        n = int(usable.sum())
        var_o = _sigma_o(o, usable) ** 2
        if var_o == 0.0:
            raise GradientUndefinedError("observed standard deviation is zero")
        return np.where(usable, -2.0 * (s - o) / (n * var_o), 0.0)
    if metric == "kge_ss":
        return _grad_stationary(s, o, usable)
    if metric == "jkge_ss":
        return _grad_nonstationary(s, o, usable, method, eps_b, augmented=False)
    if metric == "jkge_aug":
        return _grad_nonstationary(s, o, usable, method, eps_b, augmented=True)
    raise ArgumentError(f"no gradient for metric {metric!r}; expected one of {GRADIENT_METRICS}")


def grad_metric(metric: str, pair: PairedSeries, method: BenchmarkMethod = LTM(),
                eps_b: float = DEFAULT_EPS_B) -> GradientVector:
    """Exact d(metric)/d(sim_t); zero at positions that are not usable."""
    usable = pair.usable
    g = grad_array(metric, pair.sim.values, pair.obs.values, usable, method, eps_b)
    return GradientVector(g, metric, usable)


def _dd_benchmark(X, usable, method):
    """Benchmark of each row of ``X`` in double-double; returns (b, valid)."""
    n_rows, size = X.shape
    w = usable.astype(np.float64)
    Xm = X.where(usable, 0.0)  # not X * w: missing entries hold NaN
    if isinstance(method, SectionMean):
        length = max(method._length(size), 1)
        k = -(-size // length)
        pad = k * length - size
        hi = np.pad(Xm.hi, ((0, 0), (0, pad))).reshape(n_rows, k, length)
        lo = np.pad(Xm.lo, ((0, 0), (0, pad))).reshape(n_rows, k, length)
        counts = np.pad(w, (0, pad)).reshape(k, length).sum(axis=1)
        safe = np.where(counts > 0, counts, 1.0)
        means = DD(hi, lo).sum(-1) / safe
        b = DD(np.repeat(means.hi, length, axis=1)[:, :size],
               np.repeat(means.lo, length, axis=1)[:, :size])
        valid = np.repeat(counts > 0, length)[:size]
        return b, valid
    if isinstance(method, MovingMean):
        half, width = method.half, method.n
        if width > size:
            raise ArgumentError(f"window {width} longer than series ({size})")
        win = DD(sliding_window_view(Xm.hi, width, axis=1),
                 sliding_window_view(Xm.lo, width, axis=1))
        counts = np.convolve(w, np.ones(width), "valid")
        safe = np.where(counts > 0, counts, 1.0)
        means = win.sum(-1) / safe
        b = DD(np.zeros((n_rows, size)))
        b.hi[:, half:size - half] = means.hi
        b.lo[:, half:size - half] = means.lo
        valid = np.zeros(size, dtype=bool)
        valid[half:size - half] = counts > 0
        return b, valid
    raise ArgumentError(f"unsupported benchmark method {method!r}")


def _dd_metric(metric, S, o, usable, method, eps_b, bench=None):
    """Metric of every row of ``S`` (a DD array, rows = candidate simulations),
    transcribed directly from the defining formulas in double-double.

    ``bench`` may supply ``(bs, bo, valid)`` already computed in DD.
    """
    O = DD(np.where(usable, o, 0.0)[None, :])
    if metric in ("mse", "nse", "kge_ss"):
        idx = np.flatnonzero(usable)
        n = float(idx.size)
        Su, Ou = S[:, idx], O[:, idx]
        mu_o = Ou.sum() / n
        do = Ou - mu_o[:, None]
        var_o = (do * do).sum() / n
        if metric in ("mse", "nse"):
            d = Su - Ou
            err = (d * d).sum() / n
            return err if metric == "mse" else 1.0 - err / var_o
        mu_s = Su.sum() / n
        ds = Su - mu_s[:, None]
        sigma_s = ((ds * ds).sum() / n).sqrt()
        sigma_o = var_o.sqrt()
        rho = (ds * do).sum() / n / (sigma_s * sigma_o)
        beta = mu_s / mu_o
        alpha = sigma_s / sigma_o
        total = (1.0 - beta) * (1.0 - beta) + (1.0 - alpha) * (1.0 - alpha) \
            + (1.0 - rho) * (1.0 - rho)
        return 1.0 - (total / 2.0).sqrt()
    if bench is None:
        bs, valid_s = _dd_benchmark(S, usable, method)
        bo, valid_o = _dd_benchmark(O, usable, method)
        valid = usable & valid_s & valid_o
    else:
        bs, bo, valid = bench
    idx = np.flatnonzero(valid)
    n = float(idx.size)
    bs, bo, Sv, Ov = bs[:, idx], bo[:, idx], S[:, idx], O[:, idx]
    small = np.abs(bo.hi) < eps_b
    guard = bo.where(~small, np.where(bo.hi < 0, -eps_b, eps_b))
    r = 1.0 - bs / guard
    mstar = (r * r).sum() / n
    a_s, a_o = Sv - bs, Ov - bo
    psi_s = ((a_s * a_s).sum() / n).sqrt()
    psi_o = ((a_o * a_o).sum() / n).sqrt()
    rho = (a_s * a_o).sum() / n / (psi_s * psi_o)
    alpha = psi_s / psi_o
    total = mstar + (1.0 - alpha) * (1.0 - alpha) + (1.0 - rho) * (1.0 - rho)
    if metric == "jkge_aug":
        beta = Sv.sum() / Ov.sum()
        total = total + (1.0 - beta) * (1.0 - beta)
    return 1.0 - (total / 2.0).sqrt()


def fd_gradient(metric, s, o, usable, method=LTM(), eps_b=DEFAULT_EPS_B, h=None,
                chunk_cells=400_000):
    """Central-difference gradient, one coordinate at a time.

    Each perturbed metric value is evaluated in double-double arithmetic and
    the perturbation ``s_u +/- h`` is represented exactly, so the result is
    limited only by the truncation error of the central difference.

    The benchmark is linear, so the perturbed benchmark is the unperturbed
    one plus ``+/-h / count_t`` wherever the window or section of ``t``
    contains ``u``; only that sparse update is recomputed per coordinate.
    """
    if metric not in GRADIENT_METRICS:
        raise ArgumentError(f"no gradient for metric {metric!r}")
    if h is None:
        h = 1e-6 * fd_scale(s, usable)
    s = np.asarray(s, dtype=np.float64)
    o = np.asarray(o, dtype=np.float64)
    positions = np.flatnonzero(usable)
    base = None
    if metric in ("jkge_ss", "jkge_aug"):
        bs0, valid_s = _dd_benchmark(DD(np.where(usable, s, 0.0)[None, :]), usable, method)
        bo, valid_o = _dd_benchmark(DD(np.where(usable, o, 0.0)[None, :]), usable, method)
        counts = method.counts(usable)
        base = (bs0, bo, usable & valid_s & valid_o, DD(np.where(counts > 0, counts, 1.0)))
    per_chunk = max(1, chunk_cells // s.size)
    g = np.zeros(s.size)
    for start in range(0, positions.size, per_chunk):
        cols = positions[start:start + per_chunk]
        rows = np.arange(cols.size)
        touched = None
        if base is not None:
            onehot = np.zeros((cols.size, s.size))
            onehot[rows, cols] = 1.0
            col_b, col_valid = method.apply(onehot, usable)
            touched = col_valid & (np.nan_to_num(col_b) != 0.0)
        values = []
        for step in (h, -h):
            hi = np.tile(s, (cols.size, 1))
            lo = np.zeros_like(hi)
            bumped = DD.exact_sum(s[cols], step)
            hi[rows, cols], lo[rows, cols] = bumped.hi, bumped.lo
            bench = None
            if base is not None:
                bs0, bo, valid, counts = base
                delta = (DD.lift(step) / counts).where(touched, 0.0)
                bench = (bs0 + delta, bo, valid)
            values.append(_dd_metric(metric, DD(hi, lo), o, usable, method, eps_b, bench))
        g[cols] = ((values[0] - values[1]) / (2.0 * h)).to_float()
    return g


def fd_scale(s, usable):
    scale = float(np.mean(np.abs(s[usable]))) if usable.any() else 1.0
    return scale if scale > 0 else 1.0


def relative_error(analytic, numeric, floor=1e-12):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def fd_check(metric: str, pair: PairedSeries, method: BenchmarkMethod = LTM(),
             h: float | None = None, eps_b: float = DEFAULT_EPS_B) -> float:
    """Max elementwise relative error between analytic and central-difference
    gradients, with denominator ``max(|analytic|, |numeric|, 1e-12)``."""
    s, o, usable = pair.sim.values, pair.obs.values, pair.usable
    analytic = grad_array(metric, s, o, usable, method, eps_b)
    numeric = fd_gradient(metric, s, o, usable, method, eps_b, h)
    return relative_error(analytic[usable], numeric[usable])

"""Time-varying benchmark series b_t built from a single input series.

Three constructors are provided: the long-term mean (LTM), the section-wise
mean over consecutive non-overlapping sections (SA), and the centered moving
average (MA). All three are linear operators on the usable values of the
series, so each method also exposes its adjoint, which the gradient code uses
to back-propagate through b_t without forming a dense Jacobian.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from jkge.errors import ArgumentError, DegenerateInputError
from jkge.series import DEFAULT_LOG_FLOOR, TimeSeries


class BenchmarkMethod:
    """Base class. Subclasses implement the linear operator on raw arrays."""

    label = "?"

    def apply(self, x: np.ndarray, usable: np.ndarray):
        """Return ``(b, valid)`` for values ``x`` restricted to ``usable``.

        ``x`` may carry leading batch axes; ``usable`` is a 1-D mask shared
        by every row, so ``valid`` is 1-D as well.
        """
        raise NotImplementedError

    def adjoint(self, g: np.ndarray, usable: np.ndarray) -> np.ndarray:
        """Transpose of ``apply``: maps d(.)/db to d(.)/dx.

        ``g`` must be zero wherever the benchmark is invalid.
        """
        raise NotImplementedError

    def spread(self, x, b, usable):
        """Root-mean-square of ``x - b`` per section/window, broadcast."""
        raise NotImplementedError

    def __str__(self):
        return self.label


def _snap_constant(means, windows):
    """Replace a mean by the common value when every entry of its window is
    identical, so a constant stretch reproduces itself exactly (a float mean
    of N equal values can be off by an ulp, which would fake a non-zero
    anomaly)."""
    # fmin/fmax skip NaN; an all-NaN window yields NaN and is left alone
    lo = np.fmin.reduce(windows, axis=-1)
    hi = np.fmax.reduce(windows, axis=-1)
    return np.where(lo == hi, lo, means)


@dataclass(frozen=True)
class SectionMean(BenchmarkMethod):
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ArgumentError(f"section length must be a positive integer, got {self.n}")

    @property
    def label(self):
        return f"sa:{self.n}"

    def _length(self, size):
        return self.n

    def _sections(self, size):
        return np.arange(size) // max(min(self._length(size), size), 1)

    def apply(self, x, usable):
        x = np.asarray(x, dtype=np.float64)
        size = x.shape[-1]
        # clamping keeps N_s >= N bit-identical to the long-term mean
        length = max(min(self._length(size), size), 1)
        k = -(-size // length)
        lead = x.shape[:-1]
        windows = np.full(lead + (k * length,), np.nan)
        windows[..., :size] = np.where(usable, x, np.nan)
        windows = windows.reshape(lead + (k, length))
        labels = self._sections(size)
        counts = np.bincount(labels, weights=usable.astype(np.float64), minlength=k)
        sums = np.where(np.isnan(windows), 0.0, windows).sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            means = sums / counts
        means = _snap_constant(means, windows)
        return means[..., labels], (counts > 0)[labels]

    def counts(self, usable):
        labels = self._sections(usable.size)
        return np.bincount(labels, weights=usable.astype(np.float64))[labels]

    def adjoint(self, g, usable):
        labels = self._sections(g.size)
        counts = np.bincount(labels, weights=usable.astype(np.float64))
        with np.errstate(invalid="ignore", divide="ignore"):
            h = np.where(counts[labels] > 0, g / counts[labels], 0.0)
        return np.bincount(labels, weights=h)[labels] * usable

    def spread(self, x, b, usable):
        labels = self._sections(x.size)
        d2 = np.where(usable, (x - b) ** 2, 0.0)
        ss = np.bincount(labels, weights=d2)
        counts = np.bincount(labels, weights=usable.astype(np.float64))
        with np.errstate(invalid="ignore", divide="ignore"):
            psi = np.sqrt(ss / counts)
        return psi[labels]


@dataclass(frozen=True)
class LTM(SectionMean):
    """Long-term mean: a single section spanning the whole record."""

    n: int = 0

    def __post_init__(self):
        pass

    @property
    def label(self):
        return "ltm"

    def _length(self, size):
        return size


@dataclass(frozen=True)
class MovingMean(BenchmarkMethod):
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1 or self.n % 2 == 0:
            raise ArgumentError(
                f"moving-average window must be an odd positive integer, got {self.n}"
            )

    @property
    def label(self):
        return f"ma:{self.n}"

    @property
    def half(self):
        return (self.n - 1) // 2

    def _check(self, size):
        if self.n > size:
            raise ArgumentError(f"window {self.n} longer than series ({size})")

    def apply(self, x, usable):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim > 1:
            rows = [self.apply(r, usable) for r in x.reshape(-1, x.shape[-1])]
            b = np.stack([r[0] for r in rows]).reshape(x.shape)
            return b, rows[0][1] if rows else np.zeros(x.shape[-1], dtype=bool)
        self._check(x.size)
        k, ones = self.half, np.ones(self.n)
        sums = np.convolve(np.where(usable, x, 0.0), ones, "valid")
        counts = np.convolve(usable.astype(np.float64), ones, "valid")
        b = np.full(x.size, np.nan)
        valid = np.zeros(x.size, dtype=bool)
        with np.errstate(invalid="ignore", divide="ignore"):
            means = sums / counts
        win = sliding_window_view(np.where(usable, x, np.nan), self.n)
        b[k:x.size - k] = _snap_constant(means, win)
        valid[k:x.size - k] = counts > 0
        return b, valid

    def counts(self, usable):
        k = self.half
        c = np.zeros(usable.size)
        c[k:usable.size - k] = np.convolve(usable.astype(np.float64), np.ones(self.n), "valid")
        return c

    def adjoint(self, g, usable):
        counts = self.counts(usable)
        with np.errstate(invalid="ignore", divide="ignore"):
            h = np.where(counts > 0, g / counts, 0.0)
        return np.convolve(h, np.ones(self.n), "same") * usable

    def spread(self, x, b, usable):
        self._check(x.size)
        k = self.half
        win = sliding_window_view(np.where(usable, x, np.nan), self.n)
        centre = b[k:x.size - k, None]
        d2 = (win - centre) ** 2
        psi = np.full(x.size, np.nan)
        with np.errstate(invalid="ignore", divide="ignore"):
            psi[k:x.size - k] = np.sqrt(np.nansum(d2, axis=1) / np.sum(~np.isnan(win), axis=1))
        return psi


_METHOD_RE = re.compile(r"^(sa|ma):(\d+)$")


def parse_method(text: str) -> BenchmarkMethod:
    """Parse ``"ltm"``, ``"sa:N"`` or ``"ma:N"`` (``N`` odd for ``ma``)."""
    text = text.strip().lower()
    if text == "ltm":
        return LTM()
    m = _METHOD_RE.match(text)
    if not m:
        raise ArgumentError(f"bad benchmark method {text!r}; expected ltm, sa:N or ma:N")
    n = int(m.group(2))
    if m.group(1) == "sa":
        return SectionMean(n)
    if n % 2 == 0:
        raise ArgumentError(f"ma:{n}: the moving-average window must be odd so it can be centered")
    return MovingMean(n)


@dataclass(frozen=True, eq=False)
class BenchmarkSeries:
    values: np.ndarray
    valid: np.ndarray
    method: BenchmarkMethod


@dataclass(frozen=True, eq=False)
class SigmaSeries:
    values: np.ndarray
    valid: np.ndarray
    method: BenchmarkMethod


def build(s: TimeSeries, method: BenchmarkMethod) -> BenchmarkSeries:
    if len(s) == 0:
        raise ArgumentError("empty series")
    b, valid = method.apply(s.values, s.usable)
    return BenchmarkSeries(b, valid, method)


def ltm_benchmark(s: TimeSeries) -> BenchmarkSeries:
    if not s.usable.any():
        raise ArgumentError("series has no usable values")
    return build(s, LTM())


def section_mean(s: TimeSeries, n_s: int) -> BenchmarkSeries:
    return build(s, SectionMean(n_s))


def moving_mean(s: TimeSeries, n_w: int) -> BenchmarkSeries:
    return build(s, MovingMean(n_w))


def segment_sigma(s: TimeSeries, b: BenchmarkSeries) -> SigmaSeries:
    """Per-section (or per-window) RMS anomaly of ``s`` about ``b``."""
    psi = b.method.spread(s.values, b.values, s.usable)
    valid = b.valid & np.isfinite(psi)
    return SigmaSeries(np.where(valid, psi, np.nan), valid, b.method)


def standardized_log_anomalies(o: TimeSeries, b: BenchmarkSeries,
                               floor: float = DEFAULT_LOG_FLOOR) -> TimeSeries:
    """Log anomalies ``ln o - ln b`` scaled to unit root-mean-square."""
    ok = o.usable & b.valid
    if not ok.any():
        raise DegenerateInputError("no positions valid for both series and benchmark")
    with np.errstate(invalid="ignore"):
        a = np.log(np.maximum(o.values, floor)) - np.log(np.maximum(b.values, floor))
    a = np.where(ok, a, np.nan)
    psi = np.sqrt(np.mean(a[ok] ** 2))
    if psi == 0.0:
        raise DegenerateInputError("log anomalies are identically zero")
    return TimeSeries(o.start_date, a / psi, "dimensionless", ~ok)

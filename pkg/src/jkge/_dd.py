"""Vectorized double-double arithmetic (~32 significant digits).

Used by the finite-difference checker: a central difference with
h = 1e-6 * scale evaluated in float64 carries ~1e-10 rounding noise, which
swamps gradient entries near zero. Evaluating the metric in double-double
pushes that noise far below the truncation error of the difference itself.

Algorithms follow the classic error-free transformations (Knuth two-sum,
Dekker split/product); division and square root use one Newton correction.
"""

from __future__ import annotations

import numpy as np

_SPLIT = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


class DD:
    """Array of double-double numbers ``hi + lo``."""

    __slots__ = ("hi", "lo")
    __array_priority__ = 1000

    def __init__(self, hi, lo=None):
        self.hi = np.asarray(hi, dtype=np.float64)
        self.lo = np.zeros_like(self.hi) if lo is None else np.asarray(lo, dtype=np.float64)

    @staticmethod
    def exact_sum(a, b):
        """``a + b`` for float arrays, represented without rounding."""
        return DD(*_two_sum(np.asarray(a, float), np.asarray(b, float)))

    @staticmethod
    def lift(x):
        return x if isinstance(x, DD) else DD(x)

    def __neg__(self):
        return DD(-self.hi, -self.lo)

    def __add__(self, other):
        o = DD.lift(other)
        s, e = _two_sum(self.hi, o.hi)
        t, f = _two_sum(self.lo, o.lo)
        e = e + t
        s, e = _quick_two_sum(s, e)
        e = e + f
        return DD(*_quick_two_sum(s, e))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-DD.lift(other))

    def __rsub__(self, other):
        return DD.lift(other) + (-self)

    def __mul__(self, other):
        o = DD.lift(other)
        p, e = _two_prod(self.hi, o.hi)
        e = e + (self.hi * o.lo + self.lo * o.hi)
        return DD(*_quick_two_sum(p, e))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = DD.lift(other)
        q1 = self.hi / o.hi
        r = self - o * q1
        q2 = r.hi / o.hi
        r = r - o * q2
        q3 = r.hi / o.hi
        q1, q2 = _quick_two_sum(q1, q2)
        return DD(q1, q2) + q3

    def __rtruediv__(self, other):
        return DD.lift(other) / self

    def sqrt(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            x = np.sqrt(self.hi)
            p, e = _two_prod(x, x)
            r = (self - DD(p, e)).hi
            corr = np.where(x > 0, r / (2.0 * x), 0.0)
        return DD(*_two_sum(x, corr))

    def __getitem__(self, idx):
        return DD(self.hi[idx], self.lo[idx])

    @property
    def shape(self):
        return self.hi.shape

    def to_float(self):
        return self.hi + self.lo

    def where(self, cond, other):
        o = DD.lift(other)
        return DD(np.where(cond, self.hi, o.hi), np.where(cond, self.lo, o.lo))

    def sum(self, axis=-1):
        """Pairwise reduction along ``axis``."""
        hi = np.moveaxis(self.hi, axis, -1)
        lo = np.moveaxis(self.lo, axis, -1)
        x = DD(hi, lo)
        while x.shape[-1] > 1:
            n = x.shape[-1]
            if n % 2:
                pad = [(0, 0)] * (x.hi.ndim - 1) + [(0, 1)]
                x = DD(np.pad(x.hi, pad), np.pad(x.lo, pad))
                n += 1
            x = x[..., : n // 2] + x[..., n // 2:]
        if x.shape[-1] == 0:
            return DD(np.zeros(x.shape[:-1]))
        return x[..., 0]

import math
from datetime import date

import numpy as np
import pytest
from conftest import make_pair
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jkge.benchmark import LTM, SectionMean
from jkge.errors import ArgumentError, DegenerateInputError
from jkge.evaluate import (
    GROUP_NAMES,
    assign_flow_groups,
    bootstrap_metrics,
    draw_blocks,
    flow_duration_curve,
    flow_group_anomalies,
    monthly_percent_bias,
    moving_quantiles,
    qq_data,
    resample,
)
from jkge.metrics import full_report
from jkge.series import PairedSeries, TimeSeries

D0 = date(2003, 10, 1)
flows = arrays(np.float64, st.integers(1, 80), elements=st.floats(0, 1e4))


def ts(values, start=D0):
    return TimeSeries(start, values)


# -- FDC -------------------------------------------------------------------------

def test_fdc_example():
    assert flow_duration_curve(ts([3, 1, 2])) == [(0.25, 3), (0.5, 2), (0.75, 1)]


def test_fdc_constant_and_empty():
    fdc = flow_duration_curve(ts([2.0] * 4))
    assert [f for _, f in fdc] == [2.0] * 4
    assert [p for p, _ in fdc] == pytest.approx([0.2, 0.4, 0.6, 0.8])
    with pytest.raises(DegenerateInputError):
        flow_duration_curve(ts([np.nan]))


@given(flows, st.randoms())
def test_fdc_monotone_and_permutation_invariant(x, rnd):
    fdc = flow_duration_curve(ts(x))
    f = [v for _, v in fdc]
    assert all(a >= b for a, b in zip(f, f[1:]))
    perm = list(x)
    rnd.shuffle(perm)
    assert flow_duration_curve(ts(perm)) == fdc


# -- flow groups -------------------------------------------------------------------

def test_groups_ten_distinct_values():
    a = assign_flow_groups(ts(np.arange(1.0, 11.0)[::-1]))
    assert [a.members(k).size for k in range(5)] == [2] * 5
    assert a.group_of[-1] == 0 and a.group_of[0] == 4


def test_anomalies_identity_and_doubling():
    o = np.random.default_rng(1).lognormal(0, 1, 100)
    _, stats = flow_group_anomalies(make_pair(o, o))
    for g in GROUP_NAMES:
        s = stats[g]
        assert (s.min, s.q25, s.median, s.q75, s.max) == (0, 0, 0, 0, 0)
    _, stats = flow_group_anomalies(make_pair(o, 2 * o))
    for g in GROUP_NAMES:
        assert stats[g].median == pytest.approx(math.log(2), abs=1e-12)
        assert stats[g].max == pytest.approx(0.6931, abs=1e-4)
    _, stats = flow_group_anomalies(make_pair(o, 0.5 * o), absolute=True)
    assert stats["FG1"].min == pytest.approx(math.log(2), abs=1e-12)


def test_tied_groups_reported_empty():
    o = np.array([0.0] * 9 + [1.0])
    assign, stats = flow_group_anomalies(make_pair(o, o + 0.1))
    assert stats["FG2"] is None
    assert sum(s.count for s in stats.values() if s is not None) == 10


def test_missing_excluded_from_groups():
    o = np.array([1.0, np.nan, 3.0, 4.0, 5.0, 6.0])
    a = assign_flow_groups(ts(o))
    assert a.group_of[1] == -1
    with pytest.raises(DegenerateInputError):
        assign_flow_groups(ts([np.nan]))


@given(arrays(np.float64, st.integers(5, 200), elements=st.floats(0, 100)))
def test_groups_partition_usable(x):
    a = assign_flow_groups(ts(x))
    assert np.all(np.diff(a.boundaries) >= 0)
    np.testing.assert_array_equal(a.boundaries, np.quantile(x, [0.2, 0.4, 0.6, 0.8]))
    members = np.concatenate([a.members(k) for k in range(5)])
    assert sorted(members.tolist()) == list(range(x.size))


# -- monthly bias, QQ, moving quantiles ----------------------------------------------

def test_monthly_bias_examples():
    o = np.random.default_rng(2).uniform(1, 3, 90)
    rows = monthly_percent_bias(make_pair(o, o))
    assert [r.month for r in rows] == ["2003-10", "2003-11", "2003-12"]
    assert all(r.bias_percent == 0 for r in rows)
    rows = monthly_percent_bias(make_pair(o, 1.1 * o))
    assert all(r.bias_percent == pytest.approx(10.0, abs=1e-10) for r in rows)


def test_monthly_bias_hand_example():
    o = np.ones(30)
    s = np.ones(30)
    s[5] = 31.0
    rows = monthly_percent_bias(make_pair(o, s, start=date(2004, 4, 1)))
    assert len(rows) == 1 and rows[0].month == "2004-04"
    assert rows[0].bias_percent == pytest.approx(100.0, abs=1e-12)
    assert rows[0].mean_obs == 1.0 and rows[0].n_days == 30


def test_monthly_bias_zero_obs_month():
    o = np.zeros(31)
    rows = monthly_percent_bias(make_pair(o, o + 1))
    assert math.isnan(rows[0].bias_percent)


def test_qq_examples():
    o = np.array([3.0, 1.0, 2.0, 5.0])
    q = qq_data(make_pair(o, o))
    assert np.array_equal(q[:, 0], q[:, 1])
    q = qq_data(make_pair(o, o[[2, 0, 3, 1]]))
    assert np.array_equal(q[:, 0], q[:, 1])
    q = qq_data(make_pair(o, o + 1))
    assert np.array_equal(q[:, 1] - q[:, 0], np.ones(4))


def test_moving_quantiles_examples():
    out = moving_quantiles(ts([1, 2, 3, 4, 5]), 3, 0.5)
    assert out.missing.tolist() == [True, False, False, False, True]
    assert out.values[1:4].tolist() == [2, 3, 4]
    const = moving_quantiles(ts([7.0] * 9), 5, 0.3)
    assert np.all(const.values[2:7] == 7.0)
    with pytest.raises(ArgumentError):
        moving_quantiles(ts([1.0, 2.0, 3.0]), 2, 0.5)
    with pytest.raises(ArgumentError):
        moving_quantiles(ts([1.0, 2.0, 3.0]), 3, 1.0)


@given(arrays(np.float64, st.integers(7, 60), elements=st.floats(-100, 100)),
       st.sampled_from([1, 3, 7]))
def test_upper_quantile_above_median(x, n_w):
    hi = moving_quantiles(ts(x), n_w, 0.95)
    med = moving_quantiles(ts(x), n_w, 0.5)
    ok = hi.usable
    assert np.all(hi.values[ok] >= med.values[ok] - 1e-12)


# -- bootstrap ----------------------------------------------------------------------

def _years_pair(n_years=4, seed=0, identical=False):
    n = (date(2003 + n_years, 10, 1) - D0).days
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    o = 2 + np.sin(2 * np.pi * t / 365.25) + rng.lognormal(-1, 0.5, n)
    s = o if identical else o * rng.lognormal(0, 0.3, n)
    return PairedSeries(ts(o), ts(s))


def _identity_seed(k, limit=100000):
    for seed in range(limit):
        if np.array_equal(draw_blocks(seed, 0, k), np.arange(k)):
            return seed
    raise AssertionError("no identity draw found")


def test_identity_resample_reproduces_point():
    pair = _years_pair(3)
    seed = _identity_seed(3)
    res = bootstrap_metrics(pair, SectionMean(30), n=1, seed=seed)
    rep = full_report(pair, SectionMean(30))
    for key, e in res.entries.items():
        want = rep.get(key)
        if want is None:
            continue
        assert e.median == want and e.q05 == want and e.q95 == want
        assert res.point[key] == want


def test_bootstrap_perfect_sim():
    res = bootstrap_metrics(_years_pair(3, identical=True), SectionMean(30), n=20, seed=4)
    for key in ("nse", "kge_ss", "jkge_ss", "jkge_aug"):
        e = res.entries[key]
        assert e.median == e.q05 == e.q95 == 1.0


def test_bootstrap_deterministic_and_ordered():
    pair = _years_pair(4, seed=5)
    a = bootstrap_metrics(pair, SectionMean(30), n=40, seed=9)
    b = bootstrap_metrics(pair, SectionMean(30), n=40, seed=9)
    assert list(a.rows()) == list(b.rows())
    for e in a.entries.values():
        if e.median is not None:
            assert e.q05 <= e.median <= e.q95
    assert a.block == "water-year" and a.n_samples == 40


def test_bootstrap_counts_skips():
    o = np.ones((date(2006, 10, 1) - D0).days)
    o[400:] += np.random.default_rng(0).uniform(0, 1, o.size - 400)
    pair = PairedSeries(ts(o), ts(o * 1.1))
    res = bootstrap_metrics(pair, LTM(), n=30, seed=1)
    # a replicate made only of the constant first year has zero obs spread
    assert res.entries["nse"].skipped > 0
    assert res.entries["mse"].skipped == 0


def test_bootstrap_needs_two_years():
    with pytest.raises(ArgumentError):
        bootstrap_metrics(_years_pair(1), n=2)
    with pytest.raises(ArgumentError):
        bootstrap_metrics(_years_pair(2), n=0)


def test_resample_concatenates_in_draw_order():
    pair = _years_pair(3)
    out = resample(pair, [2, 0, 0])
    y2004 = pair.obs.values[:366]
    y2006 = pair.obs.values[366 + 365:]
    np.testing.assert_array_equal(out.obs.values, np.concatenate([y2006, y2004, y2004]))
    assert out.start_date == D0

import math
from datetime import date

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jkge.benchmark import (
    LTM,
    MovingMean,
    SectionMean,
    ltm_benchmark,
    moving_mean,
    parse_method,
    section_mean,
    segment_sigma,
    standardized_log_anomalies,
)
from jkge.errors import ArgumentError, DegenerateInputError
from jkge.series import TimeSeries

D0 = date(2003, 10, 1)


def ts(values):
    return TimeSeries(D0, values)


finite = st.floats(-1e3, 1e3, allow_nan=False)
series_values = arrays(np.float64, st.integers(1, 60), elements=finite)


# -- examples ------------------------------------------------------------------

@pytest.mark.parametrize("values, expected", [
    ([1, 2, 3], [2, 2, 2]),
    ([5], [5]),
    ([1, np.nan, 3], [2, 2, 2]),
])
def test_ltm_examples(values, expected):
    b = ltm_benchmark(ts(values))
    np.testing.assert_array_equal(b.values, expected)
    assert b.valid.all()


def test_ltm_all_missing():
    with pytest.raises(ArgumentError):
        ltm_benchmark(ts([np.nan, np.nan]))


def test_section_mean_examples():
    b = section_mean(ts([1, 2, 3, 4, 5, 6]), 3)
    np.testing.assert_array_equal(b.values, [2, 2, 2, 5, 5, 5])
    x = ts([3.0, 1.0, 4.0, 1.0, 5.0])
    np.testing.assert_array_equal(section_mean(x, 5).values, ltm_benchmark(x).values)
    np.testing.assert_array_equal(section_mean(x, 50).values, ltm_benchmark(x).values)
    np.testing.assert_array_equal(section_mean(x, 1).values, x.values)


def test_section_partial_tail_and_missing():
    b = section_mean(ts([1, 2, 3, 4, 10]), 2)
    np.testing.assert_array_equal(b.values, [1.5, 1.5, 3.5, 3.5, 10])
    b = section_mean(ts([1, np.nan, np.nan, np.nan, 5, 7]), 2)
    assert b.valid.tolist() == [True, True, False, False, True, True]
    assert b.values[0] == 1.0 and b.values[5] == 6.0


def test_section_length_must_be_positive():
    for bad in (0, -3, 2.5):
        with pytest.raises(ArgumentError):
            SectionMean(bad)


def test_moving_mean_examples():
    b = moving_mean(ts([1, 2, 3, 4, 5]), 3)
    assert b.valid.tolist() == [False, True, True, True, False]
    np.testing.assert_array_equal(b.values[1:4], [2, 3, 4])
    x = ts(np.arange(10.0))
    b = moving_mean(x, 1)
    assert b.valid.all() and np.array_equal(b.values, x.values)
    b = moving_mean(x, 7)
    assert b.valid.tolist() == [False] * 3 + [True] * 4 + [False] * 3


def test_moving_mean_errors():
    with pytest.raises(ArgumentError):
        MovingMean(4)
    with pytest.raises(ArgumentError):
        moving_mean(ts([1.0, 2.0]), 3)


def test_moving_mean_skips_missing_in_window():
    b = moving_mean(ts([1.0, np.nan, 3.0, 5.0]), 3)
    assert b.values[1] == 2.0 and b.values[2] == 4.0


def test_parse_method():
    assert parse_method("ltm") == LTM()
    assert parse_method(" SA:30 ") == SectionMean(30)
    assert parse_method("ma:31") == MovingMean(31)
    with pytest.raises(ArgumentError, match="odd"):
        parse_method("ma:30")
    for bad in ("sa", "sa:-1", "foo:3", "ma:x"):
        with pytest.raises(ArgumentError):
            parse_method(bad)
    assert {m.label for m in (LTM(), SectionMean(7), MovingMean(9))} == {"ltm", "sa:7", "ma:9"}


def test_segment_sigma_examples():
    const = ts([4.0] * 6)
    assert np.all(segment_sigma(const, section_mean(const, 3)).values == 0)
    x = ts([0.0, 2.0])
    sig = segment_sigma(x, section_mean(x, 2))
    np.testing.assert_allclose(sig.values, [1.0, 1.0], rtol=0, atol=1e-15)
    sig = segment_sigma(x, section_mean(x, 1))
    assert np.all(sig.values == 0)


def test_segment_sigma_moving():
    x = ts([1.0, 2.0, 3.0, 4.0, 5.0])
    sig = segment_sigma(x, moving_mean(x, 3))
    assert sig.valid.tolist() == [False, True, True, True, False]
    np.testing.assert_allclose(sig.values[1:4], math.sqrt(2 / 3), rtol=1e-15)


def test_standardized_log_anomalies_example():
    o = ts([math.e, 1.0])
    z = standardized_log_anomalies(o, section_mean(ts([1.0, 1.0]), 2))
    np.testing.assert_allclose(z.values, [math.sqrt(2), 0.0], atol=1e-15)


def test_standardized_log_anomalies_degenerate():
    o = ts([2.0, 3.0, 4.0])
    with pytest.raises(DegenerateInputError):
        standardized_log_anomalies(o, section_mean(o, 1))


# -- properties ------------------------------------------------------------------

@given(series_values, st.integers(1, 80))
def test_section_mean_constant_within_sections(x, n_s):
    b = section_mean(ts(x), n_s)
    for start in range(0, x.size, n_s):
        sec = b.values[start:start + n_s]
        assert np.all(sec == sec[0])


@given(series_values)
def test_long_section_equals_ltm(x):
    s = ts(x)
    np.testing.assert_array_equal(section_mean(s, x.size + 3).values, ltm_benchmark(s).values)


@given(series_values, st.integers(1, 20))
def test_section_anomalies_sum_to_zero(x, n_s):
    b = section_mean(ts(x), n_s)
    d = x - b.values
    for start in range(0, x.size, n_s):
        scale = max(1.0, np.max(np.abs(x[start:start + n_s])))
        assert abs(np.mean(d[start:start + n_s])) <= 1e-12 * scale


@given(arrays(np.float64, st.integers(1, 12), elements=finite), st.integers(1, 8))
def test_section_mean_idempotent_on_image(means, n_s):
    x = np.repeat(means, n_s)
    b = section_mean(ts(x), n_s)
    np.testing.assert_array_equal(b.values, x)


@given(arrays(np.float64, st.integers(8, 60), elements=finite), st.sampled_from([1, 3, 5, 7]))
def test_moving_mean_shift_equivariant(x, n_w):
    b0 = moving_mean(ts(x[:-1]), n_w)
    b1 = moving_mean(ts(x[1:]), n_w)
    k = (n_w - 1) // 2
    inner = slice(k + 1, x.size - 1 - k)
    np.testing.assert_allclose(b1.values[k:x.size - 1 - k - 1], b0.values[inner],
                               rtol=1e-12, atol=1e-9)


@given(series_values, st.floats(0.01, 100), st.floats(-100, 100),
       st.sampled_from([SectionMean(1), SectionMean(4), SectionMean(9), LTM(),
                        MovingMean(1), MovingMean(3), MovingMean(5)]))
def test_benchmarks_are_linear(x, a, c, method):
    assume(not isinstance(method, MovingMean) or method.n <= x.size)
    b, valid = method.apply(x, np.ones(x.size, bool))
    b2, valid2 = method.apply(a * x + c, np.ones(x.size, bool))
    assert np.array_equal(valid, valid2)
    scale = max(1.0, np.max(np.abs(a * x + c)))
    np.testing.assert_allclose(b2[valid], a * b[valid] + c, rtol=0, atol=1e-11 * scale)


@given(arrays(np.float64, st.integers(1, 40), elements=finite), st.data())
def test_adjoint_is_transpose(x, data):
    n = x.size
    method = data.draw(st.sampled_from([SectionMean(1), SectionMean(3), SectionMean(7), LTM(),
                                        MovingMean(1), MovingMean(3)]))
    assume(not isinstance(method, MovingMean) or method.n <= n)
    usable = np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    assume(usable.any())
    g = data.draw(arrays(np.float64, n, elements=finite))
    b, valid = method.apply(x, usable)
    g = np.where(valid, g, 0.0)
    lhs = float(np.dot(g[valid], b[valid]))
    rhs = float(np.dot(method.adjoint(g, usable), np.where(usable, x, 0.0)))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-6)


@given(arrays(np.float64, (3, 20), elements=finite),
       st.sampled_from([SectionMean(1), SectionMean(6), LTM(), MovingMean(5)]),
       st.lists(st.booleans(), min_size=20, max_size=20))
def test_batch_apply_matches_rows(x, method, usable):
    usable = np.array(usable)
    b, valid = method.apply(x, usable)
    for row in range(3):
        br, vr = method.apply(x[row], usable)
        assert np.array_equal(valid, vr)
        np.testing.assert_array_equal(b[row][vr], br[vr])


@given(st.floats(-1e6, 1e6), st.integers(1, 50), st.sampled_from([1, 3, 7, 30]))
def test_constant_series_reproduces_itself(c, n, n_s):
    x = np.full(n, c)
    b = section_mean(ts(x), n_s)
    assert np.all(b.values == c)


@given(arrays(np.float64, st.integers(2, 50), elements=st.floats(1e-3, 1e3)),
       st.integers(1, 10))
def test_standardized_anomalies_unit_rms(x, n_s):
    o = ts(x)
    try:
        z = standardized_log_anomalies(o, section_mean(o, n_s))
    except DegenerateInputError:
        return
    v = z.values[z.usable]
    assert math.sqrt(np.mean(v * v)) == pytest.approx(1.0, abs=1e-12)

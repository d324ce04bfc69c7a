import numpy as np
import pytest
from conftest import make_pair, random_pair
from hypothesis import assume, given
from hypothesis import strategies as st

from jkge.benchmark import LTM, MovingMean, SectionMean
from jkge.errors import ArgumentError, GradientUndefinedError
from jkge.gradients import (
    GRADIENT_METRICS,
    fd_check,
    fd_gradient,
    grad_array,
    grad_metric,
    metric_value,
    relative_error,
)


def test_mse_gradient_examples(rng):
    pair = random_pair(rng, 40)
    o = pair.obs.values
    g = grad_metric("mse", make_pair(o, o))
    assert np.all(g.values == 0) and g.metric == "mse"
    g = grad_metric("mse", make_pair(o, o + 0.7)).values
    np.testing.assert_allclose(g, 2 * 0.7 / o.size, rtol=1e-12)


def test_mse_fd_check_is_tight(rng):
    pair = random_pair(rng, 50)
    assert fd_check("mse", pair, h=1e-6) <= 1e-8


def test_jkge_aug_length_50(rng):
    pair = random_pair(rng, 50)
    assert fd_check("jkge_aug", pair, SectionMean(10)) <= 1e-6


def test_jkge_ss_length_100_sa10(rng):
    pair = random_pair(rng, 100)
    assert fd_check("jkge_ss", pair, SectionMean(10)) <= 1e-6


def test_obs_only_dependence_gives_zero():
    # with every position unusable in sim there is nothing to differentiate
    o = np.array([1.0, 2.0, 3.0, 4.0])
    s = np.array([np.nan, np.nan, 2.0, 5.0])
    g = grad_metric("mse", make_pair(o, s))
    assert g.values[0] == 0 and g.values[1] == 0
    assert not g.valid[:2].any()


@pytest.mark.parametrize("metric", GRADIENT_METRICS)
@pytest.mark.parametrize("method", [LTM(), SectionMean(7), SectionMean(30), MovingMean(9)])
def test_fd_agreement(metric, method, rng):
    for _ in range(3):
        pair = random_pair(rng, int(rng.integers(30, 200)))
        assert fd_check(metric, pair, method) <= 1e-6


@pytest.mark.parametrize("metric", GRADIENT_METRICS)
def test_zero_at_missing_and_invalid(metric, rng):
    pair = random_pair(rng, 80)
    o = pair.obs.values.copy()
    o[[3, 40, 41]] = np.nan
    pair = make_pair(o, pair.sim.values)
    g = grad_metric(metric, pair, MovingMean(5)).values
    assert np.all(g[[3, 40, 41]] == 0.0)
    assert np.all(np.isfinite(g))
    if metric.startswith("jkge"):
        # edges are invalid, and the edge values only reach the metric
        # through the benchmark windows of valid neighbours
        g0 = grad_metric(metric, pair, SectionMean(1000)).values
        assert np.all(g0[[3, 40, 41]] == 0.0)


@given(st.integers(30, 300), st.integers(0, 2**32 - 1))
def test_reduction_gradient(n, seed):
    pair = random_pair(np.random.default_rng(seed), n)
    g_kge = grad_metric("kge_ss", pair).values
    for m in (SectionMean(n), SectionMean(n + 5), LTM()):
        g = grad_metric("jkge_ss", pair, m).values
        np.testing.assert_allclose(g, g_kge, rtol=0, atol=1e-10)


def test_guarded_positions_use_clamped_derivative():
    rng = np.random.default_rng(5)
    o = np.concatenate([np.zeros(10), rng.uniform(1, 3, 30)])
    s = np.concatenate([rng.uniform(0, 0.1, 10), rng.uniform(1, 3, 30)])
    pair = make_pair(o, s)
    assert fd_check("jkge_ss", pair, SectionMean(10)) <= 1e-6


def test_undefined_gradients():
    o = np.array([1.0, 2.0, 3.0, 4.0])
    with pytest.raises(GradientUndefinedError):
        grad_metric("kge_ss", make_pair(o, np.full(4, 2.0)))
    with pytest.raises(GradientUndefinedError):
        grad_metric("jkge_ss", make_pair(o, np.array([1.0, 1.0, 2.0, 2.0])), SectionMean(2))
    with pytest.raises(ArgumentError):
        grad_metric("kge", make_pair(o, o))
    with pytest.raises(ArgumentError):
        fd_gradient("kge", o, o, np.ones(4, bool))


def test_gradient_at_optimum_is_zero():
    o = np.array([1.0, 3.0, 2.0, 5.0, 4.0, 2.5])
    for m in GRADIENT_METRICS:
        g = grad_metric(m, make_pair(o, o), SectionMean(3)).values
        assert np.all(g == 0.0)


def test_metric_value_matches_batch(rng):
    pair = random_pair(rng, 60)
    s, o, u = pair.sim.values, pair.obs.values, pair.usable
    for m in GRADIENT_METRICS:
        v = metric_value(m, s, o, u, SectionMean(12))
        assert isinstance(v, float)
    with pytest.raises(ArgumentError):
        metric_value("jkge_musigma", s, o, u)


def test_relative_error_floor():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)
    assert relative_error(np.array([]), np.array([])) == 0.0


@given(st.integers(0, 2**32 - 1), st.sampled_from(GRADIENT_METRICS))
def test_gradient_descent_direction(seed, metric):
    """A small step along the gradient changes the value to first order."""
    rng = np.random.default_rng(seed)
    pair = random_pair(rng, 60)
    s, o, u = pair.sim.values, pair.obs.values, pair.usable
    m = SectionMean(15)
    g = grad_array(metric, s, o, u, m)
    assume(np.linalg.norm(g) > 1e-8)
    eps = 1e-6 / np.linalg.norm(g)
    dv = metric_value(metric, s + eps * g, o, u, m) - metric_value(metric, s - eps * g, o, u, m)
    assert dv / (2 * eps) == pytest.approx(np.dot(g, g), rel=1e-4)


@pytest.mark.parametrize("method", [LTM(), SectionMean(10), MovingMean(7)])
def test_fd_check_with_missing_values(method, rng):
    pair = random_pair(rng, 150)
    o, s = pair.obs.values.copy(), pair.sim.values.copy()
    o[[5, 6, 70]] = np.nan
    s[[20, 100]] = np.nan
    gapped = make_pair(o, s)
    for metric in GRADIENT_METRICS:
        err = fd_check(metric, gapped, method)
        assert np.isfinite(err) and err <= 1e-6

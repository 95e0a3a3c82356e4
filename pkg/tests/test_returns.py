import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowdown import returns as R
from slowdown.bounds import InsufficientDataError
from slowdown.rng import stream


@pytest.fixture(scope="module")
def base(model):
    return R.BaseRect.build(model)


def test_default_base(model, base):
    assert base.Q == 1
    assert base.area == pytest.approx(0.0016)
    xs, ys = base.sample(np.random.default_rng(0), 1000)
    assert base.contains(xs, ys).all()
    assert not base.contains(np.array([0.25 + 0.05]), np.array([0.25])).any()


@pytest.mark.parametrize("half, Q", [(0.02, 1), (0.005, 2), (0.001, 3)])
def test_avoidance_horizon(model, half, Q):
    assert R.avoidance_horizon(model, (0.25, 0.25), half, half) == Q


def test_avoidance_horizon_is_certified(model):
    # sampled images of a Q = 3 base never come near the slow disks
    base = R.BaseRect.build(model, half_u=0.001, half_s=0.001)
    xs, ys = base.sample(np.random.default_rng(1), 20000)
    r0 = model.params.r0
    for _ in range(base.Q):
        xs, ys = model.map_array(xs, ys)
        _, s1, s2 = model.local_coords(xs, ys)
        assert (s1 * s1 + s2 * s2).min() > r0


def test_base_meeting_chart_rejected(model):
    with pytest.raises(ValueError):
        R.BaseRect.build(model, center=(0.05, 0.05))
    with pytest.raises(ValueError):
        R.BaseRect.build(model, half_u=0.0)


def test_linear_model_never_blocked(linear_model):
    assert R.BaseRect.build(linear_model, q_max=7).Q == 7


@pytest.mark.parametrize("mode", ["approx", "exact"])
def test_kac_mean_return_time(model, base, mode):
    # Kac: E[tau | base] = 1 / nu(base) with nu the normalized invariant measure
    s = R.sample_first_returns(model, base, 6000, seed=7, mode=mode)
    assert s.censored == 0 and s.errors == 0
    assert s.gcd() == 1 and s.tau.min() >= 1
    want = model.rho_normalizer / base.area
    se = s.tau.std() / math.sqrt(len(s.tau))
    assert abs(s.tau.mean() - want) < 4 * se


def test_returns_deterministic_and_mode_keyed(model, base):
    a = R.sample_first_returns(model, base, 500, seed=3)
    b = R.sample_first_returns(model, base, 500, seed=3)
    c = R.sample_first_returns(model, base, 500, seed=3, mode="exact")
    assert np.array_equal(a.tau, b.tau)
    assert not np.array_equal(a.tau, c.tau)


def test_censoring_warns(model, base):
    with pytest.warns(R.StatisticalWarning):
        s = R.sample_first_returns(model, base, 300, seed=1, n_cap=50)
    assert s.censored > 0
    assert len(s.tau) + s.censored + s.errors == 300


def test_return_argument_checks(model, base):
    with pytest.raises(ValueError):
        R.sample_first_returns(model, base, 0, seed=1)
    with pytest.raises(ValueError):
        R.sample_first_returns(model, base, 10, seed=1, mode="fast")


def test_binomial_interval_coverage():
    rng = stream(5, 201)
    n, p = 200, 0.1
    k = rng.binomial(n, p, size=200)
    lo, hi = R.binomial_interval(k, n)
    assert np.mean((lo <= p) & (p <= hi)) >= 0.9
    lo0, hi0 = R.binomial_interval(0, n)
    assert lo0 == 0.0 and 0 < hi0 < 0.03


def test_pareto_tail_slope():
    rng = stream(2, 202)
    # ceil(U^-1/2) has P(tau > n) = n^-2 at integer n
    tau = np.ceil(rng.random(1_000_000) ** -0.5).astype(np.int64)
    tail = R.TailCurve.from_times(tau, R.default_grid(10, 100, 15))
    fit = R.tail_exponent_fit(tail, 10)
    assert fit.fit.slope == pytest.approx(-2.0, abs=0.05)
    assert fit.power_law_consistent


def test_bootstrap_stderr_matches_replicate_spread():
    slopes, ses = [], []
    for rep in range(24):
        rng = stream(rep, 203)
        tau = np.ceil(rng.random(200_000) ** -0.5).astype(np.int64)
        fit = R.tail_exponent_fit(R.TailCurve.from_times(tau, R.default_grid(5, 40, 12)), 5)
        slopes.append(fit.fit.slope)
        ses.append(fit.slope_stderr)
    ratio = np.std(slopes, ddof=1) / np.mean(ses)
    assert 0.6 < ratio < 1.6


def test_exponential_tail_shows_drift(linear_model):
    base = R.BaseRect.build(linear_model)
    s = R.sample_first_returns(linear_model, base, 10000, seed=4)
    tail = R.TailCurve.from_sample(s, R.default_grid(100, 1e4, 21))
    fit = R.tail_exponent_fit(tail, 100)
    assert fit.drift < 0 and not fit.power_law_consistent


def test_unit_return_times():
    tail = R.TailCurve.from_times(np.ones(50, dtype=int), [1, 2, 5])
    assert np.array_equal(tail.survival, [0.0, 0.0, 0.0])
    tail = R.TailCurve.from_times(np.ones(50, dtype=int), [1, 2], censored=50)
    assert np.array_equal(tail.survival, [0.5, 0.5])


def test_tail_rows_and_insufficient_data():
    tail = R.TailCurve.from_times(np.arange(1, 201), R.default_grid(1, 100, 7))
    rows = tail.rows()
    assert rows[0]["n"] == 1 and rows[0]["survival"] == pytest.approx(199 / 200)
    with pytest.raises(InsufficientDataError):
        R.tail_exponent_fit(tail, 1, min_exceed=1000)
    with pytest.raises(ValueError):
        R.TailCurve.from_times([], [1, 2])


def test_tail_band():
    assert R.tail_band(3.404089, 2.630583) == pytest.approx((-2.904089, -1.130583))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 14), st.integers(1, 14))
def test_composition_count_matches_enumeration(k, p):
    if p > k:
        with pytest.raises(ValueError):
            R.composition_count(k, p)
        return
    comps = list(R.compositions(k, p))
    assert len(comps) == R.composition_count(k, p) == R.composition_census(k)[p]
    assert all(sum(c) == k and min(c) >= 1 and len(c) == p for c in comps)
    assert len(set(comps)) == len(comps)


def test_census_totals():
    for k in range(1, 16):
        census = R.composition_census(k)
        assert census[0] == 0 and census.sum() == 2 ** (k - 1)


def test_word_count_bound_values():
    assert R.word_count_bound(10, 4, 2) == 4 * 16 * 3 * math.comb(5, 2)
    assert R.word_count_bound(5, 4, 1) == 0


def test_counting_bound_small_grid():
    rep = R.counting_bound_check(60, 20, 0.7)
    assert rep.ok and rep.checked == 190
    assert rep.worst_log_margin < 0
    # a weak eps0 breaks the bound
    assert not R.counting_bound_check(60, 2, 0.1).ok

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowdown.bounds import exponent_values, exponents_compute
from slowdown.params import LAMBDA, LOG_LAMBDA, ParameterError, SlowdownParams
from slowdown.psi import PsiProfile, audit_monotone, q0_compute, quintic_blend

# Frozen oracles.  The exponents were evaluated by hand from their closed
# forms; I(r0), c and q0 come from adaptive scipy quadrature of 1/psi
# (epsrel 1e-13), independent of the Gauss-Legendre rule in the package.
EXPONENTS = dict(gamma=3.404089, gamma_prime=2.630583, beta=0.904089, beta_prime=0.130583,
                 beta1=6.647581, C1=6.719381, kappa=0.25)
I_R0_OVER_R0 = 1.2444520845094722
CHART_C = 0.9992429740869411
Q0 = 1.0004607813237099


@pytest.fixture(scope="module")
def profile():
    return PsiProfile.build(SlowdownParams())


def test_lambda_is_the_unstable_eigenvalue():
    assert LAMBDA == pytest.approx(max(np.linalg.eigvalsh([[5, 8], [8, 13]])), rel=1e-15)
    assert LOG_LAMBDA == pytest.approx(2.8872709503576206, rel=1e-15)


def test_exponent_oracle():
    e = exponent_values(0.2, 0.4, 1.5e-4)
    for key, want in EXPONENTS.items():
        assert getattr(e, key) == pytest.approx(want, abs=2e-6), key


def test_exponent_ordering_enforced_in_range():
    e = exponents_compute(SlowdownParams())
    assert e.gamma > e.gamma_prime > 2


@pytest.mark.parametrize("alpha, mu", [(0.1, 0.4), (0.3, 0.4), (0.2, 0.6)])
def test_out_of_range_parameters_raise(alpha, mu):
    with pytest.raises(ParameterError):
        SlowdownParams(alpha=alpha, mu=mu)


def test_exploratory_parameters_warn():
    with pytest.warns(UserWarning):
        p = SlowdownParams(alpha=0.3, exploratory=True)
    assert p.alpha == 0.3


def test_chart_radius_must_contain_slow_reach():
    reach = math.sqrt(1.5e-4 * (LAMBDA ** 2 + LAMBDA ** -2))
    SlowdownParams(chart_radius=reach * 1.0001)
    with pytest.raises(ParameterError):
        SlowdownParams(chart_radius=reach * 0.9999)
    with pytest.raises(ParameterError):
        SlowdownParams(chart_radius=0.3)
    with pytest.raises(ParameterError):
        SlowdownParams(r0=-1e-6)


def test_replace_round_trip():
    p = SlowdownParams()
    assert p.replace(mu=0.3).mu == 0.3
    assert SlowdownParams(**p.to_dict()) == p


def test_blend_matches_power_law_and_one(profile):
    r0 = profile.params.r0
    h = 1e-7 * r0
    for u in (0.5 * r0, r0):
        assert profile(u - h) == pytest.approx(profile(u + h), abs=1e-6)
        d_lo = (profile(u - h) - profile(u - 2 * h)) / h
        d_hi = (profile(u + 2 * h) - profile(u + h)) / h
        assert d_lo == pytest.approx(d_hi, rel=1e-3, abs=1e-3 / r0)
    assert profile.derivative(r0 * (1 - 1e-12)) == pytest.approx(0.0, abs=1e-6 / r0)


def test_blend_is_monotone_over_parameter_range():
    # the double zero of P' at t = 1 must not be mistaken for an interior one
    for alpha in np.linspace(0.112, 0.249, 200):
        assert audit_monotone(quintic_blend(alpha))


def test_audit_rejects_interior_sign_change():
    P = np.polynomial.polynomial
    # P'(t) = (1 - t)^2 (t - 1/2) changes sign at 1/2
    dcoef = P.polymul([1.0, -2.0, 1.0], [-0.5, 1.0])
    assert not audit_monotone(P.polyint(dcoef))
    assert audit_monotone(P.polyint(P.polymul([1.0, -2.0, 1.0], [0.5, 1.0])))


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-12, 0.5))
def test_power_law_below_half_threshold(frac):
    p = SlowdownParams()
    prof = PsiProfile.build(p)
    u = frac * p.r0
    assert prof(u) == pytest.approx(frac ** p.alpha, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 3e-4), st.floats(0.0, 3e-4))
def test_psi_monotone_and_bounded(a, b):
    prof = PsiProfile.build(SlowdownParams())
    lo, hi = sorted((a, b))
    assert 0.0 <= prof(lo) <= prof(hi) + 1e-15 <= 1.0 + 1e-15


def test_integral_oracle(profile):
    r0 = profile.params.r0
    assert profile.i_r0 / r0 == pytest.approx(I_R0_OVER_R0, rel=1e-12)
    assert profile.chart_c == pytest.approx(CHART_C, rel=1e-13)
    assert q0_compute(profile.params) == pytest.approx(Q0, rel=1e-13)


def test_integral_derivative_is_reciprocal_psi(profile):
    r0 = profile.params.r0
    u = np.linspace(0.05, 1.5, 41) * r0
    h = 1e-6 * r0
    fd = (profile.integral(u + h) - profile.integral(u - h)) / (2 * h)
    assert np.allclose(fd, 1.0 / profile(u), rtol=1e-6)


def test_w_matches_identity_at_chart_boundary(profile):
    ub = profile.params.chart_radius ** 2
    assert profile.w(np.array([ub]))[0] == pytest.approx(ub, rel=1e-14)


def test_linear_profile_is_trivial():
    prof = PsiProfile.build(SlowdownParams(r0=0.0))
    u = np.linspace(0, 0.04, 9)
    assert np.all(prof(u) == 1.0)
    assert np.array_equal(prof.integral(u), u)
    assert prof.chart_c == 1.0


def test_negative_u_rejected(profile):
    with pytest.raises(ValueError):
        profile(-1e-9)


def test_warning_free_defaults():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        SlowdownParams()

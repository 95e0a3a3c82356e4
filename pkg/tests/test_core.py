import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowdown import _kernels as K
from slowdown.core import FIXED_POINTS, LocalPoint, TorusPoint, apply_A, hamiltonian_H2
from slowdown.params import LAMBDA, LOG_LAMBDA
from slowdown.torus import EigenData, apply_A_array

coord = st.floats(0.0, 1.0, exclude_max=True)


def torus_dist(a, b):
    d = np.asarray(a) - np.asarray(b)
    d = d - np.floor(d + 0.5)
    return float(np.hypot(*d))


def test_eigen_data_residuals():
    res = EigenData.build().residuals()
    assert max(res.values()) < 1e-12


def test_apply_A_scalar_and_array_agree():
    x = TorusPoint(0.3, 0.7)
    ax, ay = apply_A_array(np.array([0.3]), np.array([0.7]))
    assert torus_dist(apply_A(x).as_array(), [ax[0], ay[0]]) < 1e-15


def test_fixed_points_are_fixed(model):
    for p in FIXED_POINTS:
        for mode in ("f", "G", "f_inv", "G_inv"):
            out = model._map(TorusPoint(*p), mode)
            assert torus_dist(out.as_array(), p) <= 1e-12


def test_linear_model_is_A(linear_model):
    rng = np.random.default_rng(3)
    xs, ys = rng.random(5000), rng.random(5000)
    fx, fy = linear_model.map_array(xs, ys)
    ax, ay = apply_A_array(xs, ys)
    d = np.hypot(*(np.array([fx - ax, fy - ay]) - np.floor(np.array([fx - ax, fy - ay]) + 0.5)))
    assert d.max() < 1e-12


@settings(max_examples=150, deadline=None)
@given(coord, coord)
def test_inverse_round_trips(x, y):
    model = _shared_model()
    p = TorusPoint(x, y)
    assert torus_dist(model.map_f_inverse(model.map_f(p)).as_array(), p.as_array()) < 1e-9
    assert torus_dist(model.map_G_inverse(model.map_G(p)).as_array(), p.as_array()) < 1e-9


_MODEL = []


def _shared_model():
    if not _MODEL:
        from slowdown.core import SlowdownModel
        _MODEL.append(SlowdownModel())
    return _MODEL[0]


def _chart_points(model, n, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    k = rng.integers(0, 4, n)
    r = scale * model.params.chart_radius * np.sqrt(rng.random(n))
    t = rng.uniform(0, 2 * math.pi, n)
    return (np.mod(FIXED_POINTS[k, 0] + r * np.cos(t), 1.0),
            np.mod(FIXED_POINTS[k, 1] + r * np.sin(t), 1.0))


@pytest.mark.parametrize("mode", ["f", "G"])
def test_jacobian_matches_finite_differences(model, mode):
    xs, ys = _chart_points(model, 40, 5, scale=0.5)
    h = 1e-7
    _, _, J = model.map_array_jac(xs, ys, mode)
    for i in range(len(xs)):
        fd = np.empty((2, 2))
        for j, (dx, dy) in enumerate(((h, 0), (0, h))):
            plus = model.map_array(np.array([xs[i] + dx]), np.array([ys[i] + dy]), mode)
            minus = model.map_array(np.array([xs[i] - dx]), np.array([ys[i] - dy]), mode)
            diff = np.array([plus[0] - minus[0], plus[1] - minus[1]]).ravel()
            fd[:, j] = (diff - np.floor(diff + 0.5)) / (2 * h)
        assert np.allclose(J[i], fd, rtol=1e-4, atol=1e-4 * np.abs(J[i]).max())


def test_G_preserves_q_density(model):
    # det DG(x) = q(x) / q(G x) for the density q = 1/psi of the G-invariant measure
    xs, ys = _chart_points(model, 2000, 6, scale=0.1)
    gx, gy, J = model.map_array_jac(xs, ys, "G")
    det = np.linalg.det(J)
    want = model.q_density_array(xs, ys) / model.q_density_array(gx, gy)
    assert np.abs(det / want - 1).max() < 1e-6


def test_local_round_trip(model):
    for p in FIXED_POINTS:
        x = TorusPoint(p[0] + 0.013, p[1] - 0.021)
        loc = model.to_local(x)
        assert loc.u < 0.001
        assert torus_dist(model.to_torus(loc).as_array(), x.as_array()) < 1e-15


@settings(max_examples=200, deadline=None)
@given(st.floats(-0.15, 0.15), st.floats(-0.15, 0.15), st.integers(1, 4))
def test_phi_round_trip(s1, s2, chart):
    model = _shared_model()
    p = LocalPoint(chart, s1, s2)
    back = model.phi_inverse(model.phi_forward(p))
    assert abs(back.s1 - s1) <= 1e-12 and abs(back.s2 - s2) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-8, 0.2), st.floats(0, 2 * math.pi))
def test_phi_is_radial_with_profile_w(r, theta):
    model = _shared_model()
    p = LocalPoint(1, r * math.cos(theta), r * math.sin(theta))
    q = model.phi_forward(p)
    assert q.s1 * p.s2 - q.s2 * p.s1 == pytest.approx(0.0, abs=1e-15)
    assert q.u == pytest.approx(float(model.profile.w(np.array([p.u]))[0]), rel=1e-10)


def test_phi_jacobian_determinant(model):
    # phi pushes q dm to rho dm: det Dphi(s) = q(s) / rho(phi s) = c / psi(|s|^2)
    rng = np.random.default_rng(8)
    r0 = model.params.r0
    for scale in (0.1, 1.5 * math.sqrt(r0)):
        for _ in range(100):
            s = rng.uniform(-scale, scale, 2)
            det = np.linalg.det(model.phi_jacobian_local(*s))
            assert det == pytest.approx(model.chart_c / model.profile(s @ s), rel=1e-8)


def test_f_is_phi_G_phi_inverse(model):
    xs, ys = _chart_points(model, 500, 12, scale=0.1)
    fx, fy = model.map_array(xs, ys, "f")
    gx, gy = K.phi_points(*model.map_array(*K.phi_points(xs, ys, model.P, True), "G"),
                          model.P, False)
    for a, b in ((fx, gx), (fy, gy)):
        d = a - b
        assert np.abs(d - np.floor(d + 0.5)).max() < 1e-12


def test_phi_outside_chart_raises(model):
    with pytest.raises(ValueError):
        model.phi_forward(LocalPoint(1, 0.3, 0.0))


def test_flow_conserves_product(model):
    out = model.flow_samples(0.004, 0.003, np.linspace(0, 1, 11))
    prod = out[:, 0] * out[:, 1]
    assert np.abs(prod / prod[0] - 1).max() < 1e-10


def test_linear_flow_is_exact(linear_model):
    st_ = linear_model.integrate_flow(LocalPoint(1, 0.01, 0.02), 1.0)
    assert st_.point.s1 == pytest.approx(0.01 * LAMBDA, rel=1e-11)
    assert st_.point.s2 == pytest.approx(0.02 / LAMBDA, rel=1e-11)
    assert np.allclose(st_.tangent, np.diag([LAMBDA, 1 / LAMBDA]), rtol=1e-10)


def test_slowed_flow_is_slower(model, linear_model):
    start = LocalPoint(1, 0.002, 0.002)
    slow = model.integrate_flow(start, 1.0).point
    fast = linear_model.integrate_flow(start, 1.0).point
    assert slow.s1 < fast.s1


def test_flow_rejects_outside_start(model):
    with pytest.raises(ValueError):
        model.integrate_flow(LocalPoint(1, 0.3, 0.0), 1.0)


@pytest.mark.parametrize("s", [(1e-3, 2e-3), (2e-3, 1e-3), (5e-4, 4e-3), (-1e-3, 3e-3)])
def test_H2_conserved_by_f_in_power_law_zone(model, s):
    alpha = model.params.alpha
    q = model.to_local(model.map_f(model.to_torus(LocalPoint(1, *s))))
    assert q.u < 0.5 * model.params.r0
    assert hamiltonian_H2(q.s1, q.s2, alpha) == pytest.approx(hamiltonian_H2(*s, alpha),
                                                              rel=1e-10)


def test_rho_density_two_values(model):
    xs, ys = _chart_points(model, 100, 9)
    assert np.allclose(model.rho_array(xs, ys), 1 / model.chart_c)
    assert model.rho(TorusPoint(0.25, 0.25)) == 1.0
    assert model.rho_normalizer == pytest.approx(model.q0, rel=1e-14)


def test_step_status_codes_are_distinct():
    assert len({K.OK, K.UNDERFLOW, K.ESCAPE}) == 3

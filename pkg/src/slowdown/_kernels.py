"""Compiled hot paths.  Everything takes a packed float64 parameter vector.

Status codes returned by the integrator and the maps:
0 ok, 1 step-size underflow (singularity), 2 chart exit during integration.
"""

import math

import numpy as np
from numba import njit

from .psi import GL_NODES, GL_WEIGHTS

# indices into the packed parameter vector
ALPHA, R0, UB, LAM, LOGLAM, CC, IHALF, IR0, RTOL, ATOL, HMIN, SLOW = range(12)
EU0, EU1, ES0, ES1 = 12, 13, 14, 15
B0 = 16  # six blend coefficients follow
NPAR = 22

OK, UNDERFLOW, ESCAPE = 0, 1, 2

_GLN = np.ascontiguousarray(GL_NODES)
_GLW = np.ascontiguousarray(GL_WEIGHTS)

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176,
                                -5103 / 18656)
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                                -17253 / 339200, 22 / 525, -1 / 40)


# ---------------------------------------------------------------------------
# psi and its integral
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def psi(u, P):
    if P[SLOW] == 0.0:
        return 1.0
    r0 = P[R0]
    if u >= r0:
        return 1.0
    half = 0.5 * r0
    if u <= half:
        return (u / r0) ** P[ALPHA]
    t = (u - half) / half
    return P[B0] + t * (P[B0 + 1] + t * (P[B0 + 2] + t * (P[B0 + 3] + t * (
        P[B0 + 4] + t * P[B0 + 5]))))


@njit(cache=True, nogil=True)
def dpsi(u, P):
    """d psi / du, with 0 returned at the origin (only used multiplied by u)."""
    if P[SLOW] == 0.0:
        return 0.0
    r0 = P[R0]
    if u >= r0 or u <= 0.0:
        return 0.0
    half = 0.5 * r0
    if u <= half:
        return P[ALPHA] * (u / r0) ** P[ALPHA] / u
    t = (u - half) / half
    d = P[B0 + 1] + t * (2 * P[B0 + 2] + t * (3 * P[B0 + 3] + t * (
        4 * P[B0 + 4] + t * 5 * P[B0 + 5])))
    return d / half


@njit(cache=True, nogil=True)
def inv_psi_integral(u, P):
    """int_0^u d xi / psi(xi)."""
    if P[SLOW] == 0.0:
        return u
    r0, a = P[R0], P[ALPHA]
    half = 0.5 * r0
    if u <= half:
        return r0 ** a * u ** (1.0 - a) / (1.0 - a)
    if u >= r0:
        return P[IR0] + (u - r0)
    ts = (u - half) / half
    acc = 0.0
    for k in range(_GLN.shape[0]):
        t = 0.5 * ts * (_GLN[k] + 1.0)
        b = P[B0] + t * (P[B0 + 1] + t * (P[B0 + 2] + t * (P[B0 + 3] + t * (
            P[B0 + 4] + t * P[B0 + 5]))))
        acc += _GLW[k] / b
    return P[IHALF] + 0.5 * ts * half * acc


@njit(cache=True, nogil=True)
def w_of(u, P):
    return P[CC] * inv_psi_integral(u, P)


@njit(cache=True, nogil=True)
def w_inverse(v, P):
    """Solve c * I(u) = v for u."""
    c, r0, a = P[CC], P[R0], P[ALPHA]
    half = 0.5 * r0
    wh = c * P[IHALF]
    wr = c * P[IR0]
    if v <= wh:
        return ((1.0 - a) * v / (c * r0 ** a)) ** (1.0 / (1.0 - a))
    if v >= wr:
        return v / c - P[IR0] + r0
    lo, hi = half, r0
    u = half + (v - wh) / (wr - wh) * half
    for _ in range(60):
        g = c * inv_psi_integral(u, P) - v
        if g > 0.0:
            hi = u
        else:
            lo = u
        un = u - g * psi(u, P) / c
        if not (lo < un < hi):
            un = 0.5 * (lo + hi)
        if abs(un - u) <= 1e-16 * r0:
            return un
        u = un
    return u


# ---------------------------------------------------------------------------
# radial transport phi in chart coordinates
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def phi_local(s1, s2, P):
    u = s1 * s1 + s2 * s2
    if u == 0.0 or u >= P[UB] or P[SLOW] == 0.0:
        return s1, s2
    g = math.sqrt(w_of(u, P) / u)
    return g * s1, g * s2


@njit(cache=True, nogil=True)
def phi_local_jac(s1, s2, P):
    """phi and its derivative ``g I + 2 g' s s^T`` with g = sqrt(w/u)."""
    u = s1 * s1 + s2 * s2
    if u == 0.0 or u >= P[UB] or P[SLOW] == 0.0:
        # at the origin the derivative is singular; report the identity
        return s1, s2, 1.0, 0.0, 0.0, 1.0
    w = w_of(u, P)
    g = math.sqrt(w / u)
    wp = P[CC] / psi(u, P)
    k = (wp - w / u) / (u * g)
    return (g * s1, g * s2, g + k * s1 * s1, k * s1 * s2, k * s1 * s2,
            g + k * s2 * s2)


@njit(cache=True, nogil=True)
def phi_inv_local(p1, p2, P):
    v = p1 * p1 + p2 * p2
    if v == 0.0 or v >= P[UB] or P[SLOW] == 0.0:
        return p1, p2
    u = w_inverse(v, P)
    g = math.sqrt(u / v)
    return g * p1, g * p2


@njit(cache=True, nogil=True)
def phi_inv_local_jac(p1, p2, P):
    s1, s2 = phi_inv_local(p1, p2, P)
    _, _, a, b, c, d = phi_local_jac(s1, s2, P)
    det = a * d - b * c
    return s1, s2, d / det, -b / det, -c / det, a / det


# ---------------------------------------------------------------------------
# slowed flow: ds1/dt = L s1 psi(u), ds2/dt = -L s2 psi(u)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _rhs(y, out, P, jac):
    s1, s2 = y[0], y[1]
    u = s1 * s1 + s2 * s2
    L = P[LOGLAM]
    ps = psi(u, P)
    out[0] = L * s1 * ps
    out[1] = -L * s2 * ps
    if jac:
        dp = dpsi(u, P)
        j11 = L * (ps + 2.0 * s1 * s1 * dp)
        j12 = 2.0 * L * s1 * s2 * dp
        j21 = -j12
        j22 = -L * (ps + 2.0 * s2 * s2 * dp)
        # Phi stored row-major in y[2:6]
        out[2] = j11 * y[2] + j12 * y[4]
        out[3] = j11 * y[3] + j12 * y[5]
        out[4] = j21 * y[2] + j22 * y[4]
        out[5] = j21 * y[3] + j22 * y[5]


@njit(cache=True, nogil=True)
def integrate(y, t_end, P, jac, rtol, atol, h_init, check_chart):
    """Advance ``y`` in place from time 0 to ``t_end`` (either sign).

    Returns (status, last accepted step size, time reached).  Error control
    uses the base point only so that orbits do not depend on ``jac``.
    """
    n = 6 if jac else 2
    if t_end == 0.0:
        return OK, h_init, 0.0
    direction = 1.0 if t_end > 0 else -1.0
    T = abs(t_end)
    h = abs(h_init) if h_init != 0.0 else min(T, 0.02)
    hmin = P[HMIN]
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    k5 = np.empty(6)
    k6 = np.empty(6)
    k7 = np.empty(6)
    yt = np.empty(6)
    yn = np.empty(6)
    t = 0.0
    _rhs(y, k1, P, jac)
    for i in range(n):
        k1[i] *= direction
    ub = P[UB]
    while t < T:
        last = False
        if t + h >= T:
            h = T - t
            last = True
        for i in range(n):
            yt[i] = y[i] + h * _A21 * k1[i]
        _rhs(yt, k2, P, jac)
        for i in range(n):
            k2[i] *= direction
            yt[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
        _rhs(yt, k3, P, jac)
        for i in range(n):
            k3[i] *= direction
            yt[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _rhs(yt, k4, P, jac)
        for i in range(n):
            k4[i] *= direction
            yt[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i]
                                + _A54 * k4[i])
        _rhs(yt, k5, P, jac)
        for i in range(n):
            k5[i] *= direction
            yt[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i]
                                + _A64 * k4[i] + _A65 * k5[i])
        _rhs(yt, k6, P, jac)
        for i in range(n):
            k6[i] *= direction
            yn[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i]
                                + _B5 * k5[i] + _B6 * k6[i])
        _rhs(yn, k7, P, jac)
        for i in range(n):
            k7[i] *= direction
        err = 0.0
        for i in range(2):
            e = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i]
                     + _E6 * k6[i] + _E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(yn[i]))
            if sc == 0.0:
                r = 0.0 if e == 0.0 else 1e300
            else:
                r = abs(e) / sc
            if r > err:
                err = r
        if err <= 1.0:
            t = T if last else t + h
            for i in range(n):
                y[i] = yn[i]
                k1[i] = k7[i]
            if check_chart and y[0] * y[0] + y[1] * y[1] > ub:
                return ESCAPE, h, direction * t
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * err ** -0.2))
            if not last:
                h = h * fac
        else:
            fac = max(0.2, 0.9 * err ** -0.2)
            h = h * fac
            if h < hmin:
                return UNDERFLOW, h, direction * t
    return OK, h, direction * t


@njit(cache=True, nogil=True)
def flow_local(s1, s2, t, P, jac):
    """Time-t map of the slowed flow; returns (s1, s2, Phi row-major, status)."""
    y = np.zeros(6)
    y[0] = s1
    y[1] = s2
    y[2] = 1.0
    y[5] = 1.0
    status, _, _ = integrate(y, t, P, jac, P[RTOL], P[ATOL], 0.0, False)
    return y[0], y[1], y[2], y[3], y[4], y[5], status


@njit(cache=True, nogil=True)
def flow_path(s1, s2, times, P, rtol, atol, check_chart):
    """Sample the slowed flow at increasing (or decreasing) ``times``.

    Returns an (len(times), 6) array of states with variational matrices and a
    status code.  ``times[0]`` may be 0.
    """
    m = times.shape[0]
    out = np.full((m, 6), np.nan)
    y = np.zeros(6)
    y[0] = s1
    y[1] = s2
    y[2] = 1.0
    y[5] = 1.0
    tprev = 0.0
    h = 0.0
    for j in range(m):
        dt = times[j] - tprev
        if dt != 0.0:
            status, h, reached = integrate(y, dt, P, True, rtol, atol, h, check_chart)
            if status != OK:
                return out, status, tprev + reached
        out[j, :] = y
        tprev = times[j]
    return out, OK, tprev


# ---------------------------------------------------------------------------
# torus bookkeeping
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def wrap(x):
    r = x - math.floor(x)
    if r >= 1.0:
        r = 0.0
    return r


@njit(cache=True, nogil=True)
def chart_of(x, y, P):
    """Nearest fixed point (chart index 0..3), its location and chart coords."""
    kx = math.floor(2.0 * x + 0.5)
    ky = math.floor(2.0 * y + 0.5)
    px = 0.5 * kx
    py = 0.5 * ky
    dx = x - px
    dy = y - py
    s1 = P[EU0] * dx + P[EU1] * dy
    s2 = P[ES0] * dx + P[ES1] * dy
    idx = int(kx) % 2 + 2 * (int(ky) % 2)
    return idx, px, py, s1, s2


@njit(cache=True, nogil=True)
def to_torus(px, py, s1, s2, P):
    return (wrap(px + P[EU0] * s1 + P[ES0] * s2),
            wrap(py + P[EU1] * s1 + P[ES1] * s2))


@njit(cache=True, nogil=True)
def meets_slow_forward(s1, s2, P):
    """Does the unit-time linear trajectory from (s1, s2) meet u <= r0?"""
    u0 = s1 * s1 + s2 * s2
    r0 = P[R0]
    if u0 > P[UB]:
        return False
    if u0 <= r0:
        return True
    lam = P[LAM]
    a1 = abs(s1)
    a2 = abs(s2)
    if a1 == 0.0:
        umin = a2 * a2 / (lam * lam)
    else:
        tstar = math.log(a2 / a1) / (2.0 * P[LOGLAM]) if a2 > 0.0 else -1.0
        if tstar <= 0.0:
            umin = u0
        elif tstar >= 1.0:
            umin = a1 * a1 * lam * lam + a2 * a2 / (lam * lam)
        else:
            umin = 2.0 * a1 * a2
    return umin <= r0


@njit(cache=True, nogil=True)
def _chart_to_torus_jac(a, b, c, d, P):
    """E M E^T for the orthonormal eigenbasis E = [e_u e_s]."""
    eu0, eu1, es0, es1 = P[EU0], P[EU1], P[ES0], P[ES1]
    # M E^T
    m00 = a * eu0 + b * es0
    m01 = a * eu1 + b * es1
    m10 = c * eu0 + d * es0
    m11 = c * eu1 + d * es1
    return (eu0 * m00 + es0 * m10, eu0 * m01 + es0 * m11,
            eu1 * m00 + es1 * m10, eu1 * m01 + es1 * m11)


@njit(cache=True, nogil=True)
def _mul(a, b, c, d, e, f, g, h):
    return a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h


@njit(cache=True, nogil=True)
def _core_step(x, y, P, jac, forward, conjugate):
    """One step of G (conjugate=False) or f = phi G phi^-1 (conjugate=True).

    ``forward=False`` gives the inverse maps.  Returns
    (x', y', J00, J01, J10, J11, status); J is in torus coordinates.
    """
    slow = P[SLOW] != 0.0
    lam = P[LAM]
    idx, px, py, s1, s2 = chart_of(x, y, P)
    u = s1 * s1 + s2 * s2
    inchart = slow and u < P[UB]
    # chart-coordinate Jacobian pieces, identity by default
    ia, ib, ic, id_ = 1.0, 0.0, 0.0, 1.0
    if inchart and conjugate:
        if jac:
            s1, s2, ia, ib, ic, id_ = phi_inv_local_jac(s1, s2, P)
        else:
            s1, s2 = phi_inv_local(s1, s2, P)
    if forward:
        flows = inchart and meets_slow_forward(s1, s2, P)
    else:
        flows = inchart and meets_slow_forward(s2, s1, P)
    status = OK
    if flows:
        t = 1.0 if forward else -1.0
        n1, n2, ga, gb, gc, gd, status = flow_local(s1, s2, t, P, jac)
        gx, gy = to_torus(px, py, n1, n2, P)
    else:
        if inchart and conjugate:
            x, y = to_torus(px, py, s1, s2, P)
        if forward:
            gx = wrap(5.0 * x + 8.0 * y)
            gy = wrap(8.0 * x + 13.0 * y)
            ga, gb, gc, gd = lam, 0.0, 0.0, 1.0 / lam
        else:
            gx = wrap(13.0 * x - 8.0 * y)
            gy = wrap(-8.0 * x + 5.0 * y)
            ga, gb, gc, gd = 1.0 / lam, 0.0, 0.0, lam
    oa, ob, oc, od = 1.0, 0.0, 0.0, 1.0
    outchart = False
    if conjugate and slow:
        jdx, qx, qy, t1, t2 = chart_of(gx, gy, P)
        if t1 * t1 + t2 * t2 < P[UB]:
            outchart = True
            if jac:
                p1, p2, oa, ob, oc, od = phi_local_jac(t1, t2, P)
            else:
                p1, p2 = phi_local(t1, t2, P)
            gx, gy = to_torus(qx, qy, p1, p2, P)
    if not jac:
        return gx, gy, 0.0, 0.0, 0.0, 0.0, status
    if not flows and not (conjugate and (inchart or outchart)):
        if forward:
            return gx, gy, 5.0, 8.0, 8.0, 13.0, status
        return gx, gy, 13.0, -8.0, -8.0, 5.0, status
    a, b, c, d = _mul(ga, gb, gc, gd, ia, ib, ic, id_)
    a, b, c, d = _mul(oa, ob, oc, od, a, b, c, d)
    a, b, c, d = _chart_to_torus_jac(a, b, c, d, P)
    return gx, gy, a, b, c, d, status


@njit(cache=True, nogil=True)
def step(x, y, P, mode):
    """mode: 0 f, 1 G, 2 f^-1, 3 G^-1."""
    gx, gy, _, _, _, _, status = _core_step(x, y, P, False, mode < 2, mode % 2 == 0)
    return gx, gy, status


@njit(cache=True, nogil=True)
def step_jac(x, y, P, mode):
    return _core_step(x, y, P, True, mode < 2, mode % 2 == 0)


@njit(cache=True, nogil=True)
def map_points(xs, ys, P, mode):
    n = xs.shape[0]
    ox = np.empty(n)
    oy = np.empty(n)
    worst = OK
    for i in range(n):
        ox[i], oy[i], st = step(xs[i], ys[i], P, mode)
        if st != OK:
            worst = st
    return ox, oy, worst


@njit(cache=True, nogil=True)
def map_points_jac(xs, ys, P, mode):
    n = xs.shape[0]
    ox = np.empty(n)
    oy = np.empty(n)
    J = np.empty((n, 2, 2))
    worst = OK
    for i in range(n):
        ox[i], oy[i], J[i, 0, 0], J[i, 0, 1], J[i, 1, 0], J[i, 1, 1], st = \
            step_jac(xs[i], ys[i], P, mode)
        if st != OK:
            worst = st
    return ox, oy, J, worst


@njit(cache=True, nogil=True)
def trajectory(x, y, n, P, mode):
    xs = np.empty(n + 1)
    ys = np.empty(n + 1)
    xs[0] = x
    ys[0] = y
    for k in range(n):
        x, y, st = step(x, y, P, mode)
        if st != OK:
            return xs[:k + 1], ys[:k + 1], st
        xs[k + 1] = x
        ys[k + 1] = y
    return xs, ys, OK


@njit(cache=True, nogil=True)
def trajectories(x0, y0, n, P, mode):
    m = x0.shape[0]
    X = np.empty((m, n + 1))
    Y = np.empty((m, n + 1))
    for i in range(m):
        x, y = x0[i], y0[i]
        X[i, 0] = x
        Y[i, 0] = y
        for k in range(n):
            x, y, st = step(x, y, P, mode)
            if st != OK:
                return X, Y, st
            X[i, k + 1] = x
            Y[i, k + 1] = y
    return X, Y, OK


@njit(cache=True, nogil=True)
def lyapunov_run(x, y, v0, v1, n, burn, block, P, mode):
    """Renormalized tangent growth along an orbit.

    Returns (compensated sum of log growth, per-block sums, final x, y,
    status).  ``burn`` initial steps are iterated but not recorded.
    """
    nb = n // block
    blocks = np.zeros(nb)
    nv = math.hypot(v0, v1)
    v0 /= nv
    v1 /= nv
    for _ in range(burn):
        x, y, a, b, c, d, st = step_jac(x, y, P, mode)
        if st != OK:
            return 0.0, blocks, x, y, st
        w0 = a * v0 + b * v1
        w1 = c * v0 + d * v1
        nv = math.hypot(w0, w1)
        v0 = w0 / nv
        v1 = w1 / nv
    total = 0.0
    comp = 0.0
    for k in range(nb * block):
        x, y, a, b, c, d, st = step_jac(x, y, P, mode)
        if st != OK:
            return total, blocks, x, y, st
        w0 = a * v0 + b * v1
        w1 = c * v0 + d * v1
        nv = math.hypot(w0, w1)
        v0 = w0 / nv
        v1 = w1 / nv
        g = math.log(nv)
        blocks[k // block] += g
        # Kahan summation
        yk = g - comp
        tk = total + yk
        comp = (tk - total) - yk
        total = tk
    return total, blocks, x, y, OK


@njit(cache=True, nogil=True)
def in_rect(x, y, cx, cy, hu, hs, P):
    dx = x - cx
    dy = y - cy
    dx -= math.floor(dx + 0.5)
    dy -= math.floor(dy + 0.5)
    a = P[EU0] * dx + P[EU1] * dy
    b = P[ES0] * dx + P[ES1] * dy
    return abs(a) <= hu and abs(b) <= hs


@njit(cache=True, nogil=True)
def first_returns(x0, y0, cx, cy, hu, hs, n_cap, P, mode):
    """First return time to the rectangle, -1 when censored at n_cap."""
    m = x0.shape[0]
    tau = np.empty(m, dtype=np.int64)
    for i in range(m):
        x, y = x0[i], y0[i]
        tau[i] = -1
        for k in range(1, n_cap + 1):
            x, y, st = step(x, y, P, mode)
            if st != OK:
                tau[i] = -2
                break
            if in_rect(x, y, cx, cy, hu, hs, P):
                tau[i] = k
                break
    return tau


@njit(cache=True, nogil=True)
def local_step(s1, s2, P, forward, conjugate):
    """G (or f when ``conjugate``) in chart coordinates, without torus wrap.

    Valid while the point stays inside its chart; returns (s1', s2', status).
    """
    ub = P[UB]
    if conjugate and s1 * s1 + s2 * s2 < ub:
        s1, s2 = phi_inv_local(s1, s2, P)
    status = OK
    if forward:
        flows = meets_slow_forward(s1, s2, P)
    else:
        flows = meets_slow_forward(s2, s1, P)
    if flows:
        t = 1.0 if forward else -1.0
        s1, s2, _, _, _, _, status = flow_local(s1, s2, t, P, False)
    elif forward:
        s1, s2 = s1 * P[LAM], s2 / P[LAM]
    else:
        s1, s2 = s1 / P[LAM], s2 * P[LAM]
    if conjugate and s1 * s1 + s2 * s2 < ub:
        s1, s2 = phi_local(s1, s2, P)
    return s1, s2, status


@njit(cache=True, nogil=True)
def local_steps(s1, s2, P, forward, conjugate):
    n = s1.shape[0]
    o1 = np.empty(n)
    o2 = np.empty(n)
    worst = OK
    for i in range(n):
        o1[i], o2[i], st = local_step(s1[i], s2[i], P, forward, conjugate)
        if st != OK:
            worst = st
    return o1, o2, worst


@njit(cache=True, nogil=True)
def phi_points(xs, ys, P, inverse):
    """phi (or phi^-1) on torus points; the identity outside the charts."""
    n = xs.shape[0]
    ox = np.empty(n)
    oy = np.empty(n)
    ub = P[UB]
    for i in range(n):
        _, px, py, s1, s2 = chart_of(xs[i], ys[i], P)
        if P[SLOW] > 0.0 and s1 * s1 + s2 * s2 < ub:
            if inverse:
                s1, s2 = phi_inv_local(s1, s2, P)
            else:
                s1, s2 = phi_local(s1, s2, P)
            ox[i], oy[i] = to_torus(px, py, s1, s2, P)
        else:
            ox[i], oy[i] = xs[i], ys[i]
    return ox, oy

"""Local formulas for carrying the slow-down map to the sphere and the disk.

The sphere is modelled as the quotient of the torus by the involution
I(t) = -t mod 1 (canonical representatives); the branched cover and the
sphere-to-disk unfolding are available through their explicit local charts.
Hamiltonians of the local models and a Hoelder-exponent probe for their
second partial derivatives complete the module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import InsufficientDataError, PowerLawFit, fit_power_law
from .core import SlowdownModel, TorusPoint
from .params import LOG_LAMBDA
from .rng import stream


# ---------------------------------------------------------------------------
# involution and quotient
# ---------------------------------------------------------------------------

def involution(xs, ys):
    """I(t1, t2) = (1 - t1, 1 - t2) reduced to [0, 1)."""
    def neg(t):
        r = np.mod(-np.asarray(t, dtype=float), 1.0)
        # -t mod 1 rounds to 1.0 for tiny t > 0
        return np.where(r >= 1.0, 0.0, r)
    return neg(xs), neg(ys)


@dataclass(frozen=True)
class QuotientPoint:
    """Point of T^2 / I stored as the lexicographically smaller of {x, I(x)}."""

    rep: TorusPoint

    @classmethod
    def of(cls, x: TorusPoint) -> "QuotientPoint":
        ix, iy = involution(x.x, x.y)
        other = TorusPoint(float(ix), float(iy))
        return cls(min(x, other, key=lambda p: (p.x, p.y)))

    @property
    def is_branch_point(self) -> bool:
        ix, iy = involution(self.rep.x, self.rep.y)
        return float(ix) == self.rep.x and float(iy) == self.rep.y


def quotient_map_f(model: SlowdownModel, q: QuotientPoint) -> QuotientPoint:
    """Induced map on the quotient: f on the representative, re-canonicalized."""
    return QuotientPoint.of(model.map_f(q.rep))


def _torus_dist(ax, ay, bx, by):
    dx = ax - bx
    dy = ay - by
    return np.hypot(dx - np.floor(dx + 0.5), dy - np.floor(dy + 0.5))


def equivariance_error(model: SlowdownModel, n: int = 1000, seed: int = 0,
                       mode: str = "f") -> float:
    """max |T(I x) - I(T x)| over n random points (torus distance)."""
    rng = stream(seed, "carrier", 0)
    xs, ys = rng.random(n), rng.random(n)
    ix, iy = involution(xs, ys)
    a = model.map_array(ix, iy, mode)
    b = involution(*model.map_array(xs, ys, mode))
    return float(_torus_dist(a[0], a[1], b[0], b[1]).max())


# ---------------------------------------------------------------------------
# local charts
# ---------------------------------------------------------------------------

def phi1_local(s1, s2):
    """Branched double cover in a chart: ((s1^2 - s2^2)/r, 2 s1 s2 / r), r = |s|.

    Preserves the radius and identifies s with -s; the origin maps to itself.
    """
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    r = np.hypot(s1, s2)
    safe = np.where(r > 0, r, 1.0)
    a = np.where(r > 0, (s1 * s1 - s2 * s2) / safe, 0.0)
    b = np.where(r > 0, 2.0 * s1 * s2 / safe, 0.0)
    return (a, b) if a.ndim else (float(a), float(b))


@dataclass(frozen=True)
class DiskPoint:
    x1: float
    x2: float

    def __post_init__(self):
        if not self.x1 * self.x1 + self.x2 * self.x2 < 1.0:
            raise ValueError("disk point must lie in the open unit disk")


def _radial_checked(t1, t2):
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    r2 = t1 * t1 + t2 * t2
    if np.any(r2 <= 0.0) or np.any(r2 >= 1.0):
        raise ValueError("point on the boundary of the chart (radius 0 or >= 1)")
    return t1, t2, r2


def phi2(t1, t2):
    """Sphere-to-disk unfolding near the removed point: tau sqrt(1 - rho^2) / rho."""
    t1, t2, r2 = _radial_checked(t1, t2)
    g = np.sqrt(1.0 - r2) / np.sqrt(r2)
    out = (t1 * g, t2 * g)
    return out if out[0].ndim else (float(out[0]), float(out[1]))


def phi2_inverse(w1, w2):
    """Closed-form inverse tau = w sqrt(1 - R^2) / R; the unfolding is an involution."""
    return phi2(w1, w2)


def phi2_jacobian(t1, t2):
    """D phi2 = g I + (g'/rho) tau tau^T with g(rho) = sqrt(1 - rho^2)/rho.

    Its determinant is -1: the unfolding preserves area and reverses
    orientation (rho -> sqrt(1 - rho^2) is decreasing).
    """
    t1, t2, r2 = _radial_checked(t1, t2)
    rho = np.sqrt(r2)
    g = np.sqrt(1.0 - r2) / rho
    k = -1.0 / (r2 * np.sqrt(1.0 - r2)) / rho  # g'(rho) / rho
    J = np.empty(np.shape(t1) + (2, 2))
    J[..., 0, 0] = g + k * t1 * t1
    J[..., 0, 1] = k * t1 * t2
    J[..., 1, 0] = k * t1 * t2
    J[..., 1, 1] = g + k * t2 * t2
    return J


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------

def _power_parts(s, e):
    """F(s) = s^e and its first two derivatives, zero-extended at s = 0."""
    safe = np.where(s > 0, s, 1.0)
    F = np.where(s > 0, safe ** e, 0.0)
    F1 = np.where(s > 0, e * safe ** (e - 1), 0.0)
    F2 = np.where(s > 0, e * (e - 1) * safe ** (e - 2), 0.0)
    return F, F1, F2


def _y_radial_partials(x, y, F1, F2):
    """Second partials of y F(x^2 + y^2) given F', F'' at s = x^2 + y^2."""
    fxx = 2 * y * F1 + 4 * x * x * y * F2
    fxy = 2 * x * F1 + 4 * x * y * y * F2
    fyy = 6 * y * F1 + 4 * y ** 3 * F2
    return fxx, fxy, fyy


def h2_second_partials(s1, s2, alpha):
    """(H_xx, H_xy, H_yy) of H2 = x y (x^2+y^2)^kappa log(lambda); 0 at the origin."""
    x = np.asarray(s1, dtype=float)
    y = np.asarray(s2, dtype=float)
    kappa = alpha / (1.0 - alpha)
    s = x * x + y * y
    G, G1, G2 = _power_parts(s, kappa)
    hxx = 6 * x * y * G1 + 4 * x ** 3 * y * G2
    hxy = G + 2 * s * G1 + 4 * x * x * y * y * G2
    hyy = 6 * x * y * G1 + 4 * x * y ** 3 * G2
    return tuple(LOG_LAMBDA * v for v in (hxx, hxy, hyy))


def hamiltonian_H3(t1, t2, alpha):
    """tau2 h(rho) / rho log(lambda) with h(u) = u^(2/(1-alpha)), rho = |tau|."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    delta = 1.0 / (1.0 - alpha) - 0.5
    F, _, _ = _power_parts(t1 * t1 + t2 * t2, delta)
    return LOG_LAMBDA * t2 * F


def h3_second_partials(t1, t2, alpha):
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    delta = 1.0 / (1.0 - alpha) - 0.5
    _, F1, F2 = _power_parts(t1 * t1 + t2 * t2, delta)
    return tuple(LOG_LAMBDA * v for v in _y_radial_partials(t1, t2, F1, F2))


def hamiltonian_H4(x1, x2, alpha):
    """x2 h(sqrt(1 - R^2)) / R log(lambda), R = |x| in the open unit disk."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    a = 1.0 / (1.0 - alpha)
    s = x1 * x1 + x2 * x2
    return LOG_LAMBDA * x2 * (1.0 - s) ** a / np.sqrt(s)


def h4_second_partials(x1, x2, alpha):
    """Second partials of H4 = x2 F(s) log(lambda), F(s) = (1-s)^a s^(-1/2)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    a = 1.0 / (1.0 - alpha)
    s = x1 * x1 + x2 * x2
    q = 1.0 - s
    F1 = -a * q ** (a - 1) * s ** -0.5 - 0.5 * q ** a * s ** -1.5
    F2 = (a * (a - 1) * q ** (a - 2) * s ** -0.5 + a * q ** (a - 1) * s ** -1.5
          + 0.75 * q ** a * s ** -2.5)
    return tuple(LOG_LAMBDA * v for v in _y_radial_partials(x1, x2, F1, F2))


# ---------------------------------------------------------------------------
# Hoelder probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HolderProbe:
    exponent: float
    stderr: float
    fit: PowerLawFit
    radii: np.ndarray
    increments: np.ndarray


def holder_probe(fn, center=(0.0, 0.0), radii=None, directions: int = 32,
                 inward: tuple | None = None, center_value: float | None = None) -> HolderProbe:
    """Fit log max|fn(c + r e) - fn(c)| against log r over a radius grid.

    The maximum is over ``directions`` unit vectors e (offset from the axes).
    ``inward`` restricts them to a half-plane {e . inward > 0}, for probes at
    the boundary of a domain.  ``center_value`` replaces fn(center), e.g. 0
    to measure the blow-up rate (a negative exponent) of a function that is
    unbounded at the center.
    """
    if radii is None:
        radii = np.geomspace(1e-6, 1e-2, 17)
    radii = np.asarray(radii, dtype=float)
    th = (np.arange(directions) + 0.37) * 2.0 * math.pi / directions
    e = np.column_stack([np.cos(th), np.sin(th)])
    if inward is not None:
        e = e[e @ np.asarray(inward, dtype=float) > 0]
    cx, cy = center
    f0 = float(np.asarray(fn(np.array([cx]), np.array([cy])))[0]) if center_value is None \
        else float(center_value)
    inc = np.array([np.max(np.abs(np.asarray(fn(cx + r * e[:, 0], cy + r * e[:, 1])) - f0))
                    for r in radii])
    good = np.isfinite(inc) & (inc > 0)
    if good.sum() < 5:
        raise InsufficientDataError("degenerate Hoelder probe: too few nonzero increments")
    fit = fit_power_law(np.column_stack([radii[good], inc[good]]))
    return HolderProbe(fit.slope, fit.stderr, fit, radii, inc)


__all__ = [
    "DiskPoint", "HolderProbe", "QuotientPoint", "equivariance_error", "h2_second_partials",
    "h3_second_partials", "h4_second_partials", "hamiltonian_H3", "hamiltonian_H4",
    "holder_probe", "involution", "phi1_local", "phi2", "phi2_inverse", "phi2_jacobian",
    "quotient_map_f",
]

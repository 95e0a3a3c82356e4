"""The slow-down profile psi and the integrals that depend on it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import ParameterError, SlowdownParams

# 16-point Gauss-Legendre rule on [-1, 1]; the blend integrand is a
# reciprocal of a positive quintic, so this is accurate to rounding.
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def quintic_blend(alpha: float) -> np.ndarray:
    """Monomial coefficients b0..b5 of the blend P(t), t in [0, 1].

    With ``u = r0/2 + t*r0/2`` the blend matches value, first and second
    derivatives of ``(u/r0)**alpha`` at ``t = 0`` and of the constant 1 at
    ``t = 1``.  In the variable ``t`` these data are independent of ``r0``.
    """
    p0 = 2.0 ** -alpha
    m0 = alpha * p0
    k0 = alpha * (alpha - 1.0) * p0
    rows = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, 1, 1, 1, 1, 1],
        [0, 1, 2, 3, 4, 5],
        [0, 0, 2, 6, 12, 20],
    ], dtype=float)
    rhs = np.array([p0, m0, k0, 1.0, 0.0, 0.0])
    return np.linalg.solve(rows, rhs)


def audit_monotone(coeffs: np.ndarray) -> bool:
    """True when the blend derivative is positive on [0, 1).

    P' has a double zero at t = 1 by construction (P'(1) = P''(1) = 0), which
    root finders split into a pair near 1; dividing out (1 - t)^2 leaves a
    quadratic whose minimum on [0, 1] is checked directly.
    """
    poly = np.polynomial.polynomial
    dcoef = poly.polyder(coeffs)
    quad, rem = poly.polydiv(dcoef, [1.0, -2.0, 1.0])
    if np.abs(rem).max() > 1e-9 * np.abs(dcoef).max():
        return False
    quad = np.pad(quad, (0, 3 - len(quad)))
    cand = [0.0, 1.0]
    if quad[2] != 0.0:
        v = -quad[1] / (2.0 * quad[2])
        if 0.0 < v < 1.0:
            cand.append(v)
    return bool(min(poly.polyval(t, quad) for t in cand) > 0.0)


@dataclass(frozen=True)
class PsiProfile:
    """psi(u) together with the integral ``I(u) = int_0^u d xi / psi(xi)``.

    Attributes
    ----------
    coeffs : ndarray
        Blend coefficients on ``(r0/2, r0)`` in the normalized variable.
    i_half, i_r0 : float
        ``I(r0/2)`` and ``I(r0)``.
    chart_c : float
        Chart normalization ``c = u_b / I(u_b)`` with ``u_b = chart_radius**2``.
    """

    params: SlowdownParams
    coeffs: np.ndarray
    i_half: float
    i_r0: float
    chart_c: float

    @classmethod
    def build(cls, params: SlowdownParams) -> "PsiProfile":
        coeffs = quintic_blend(params.alpha)
        if not audit_monotone(coeffs):
            raise ParameterError(f"quintic blend not monotone for alpha={params.alpha}")
        r0, a = params.r0, params.alpha
        if r0 == 0.0:
            return cls(params, coeffs, 0.0, 0.0, 1.0)
        half = 0.5 * r0
        i_half = r0 ** a * half ** (1.0 - a) / (1.0 - a)
        t = 0.5 * (GL_NODES + 1.0)
        blend = np.polynomial.polynomial.polyval(t, coeffs)
        i_r0 = i_half + 0.5 * half * float(np.dot(GL_WEIGHTS, 1.0 / blend))
        ub = params.chart_radius ** 2
        chart_c = ub / (i_r0 + ub - r0)
        return cls(params, coeffs, i_half, i_r0, chart_c)

    # -- scalar/array evaluation ------------------------------------------
    def __call__(self, u):
        return psi_eval(u, self)

    def derivative(self, u):
        return psi_derivative(u, self)

    def integral(self, u):
        """``I(u) = int_0^u d xi / psi(xi)`` (array friendly)."""
        u = np.asarray(u, dtype=float)
        p = self.params
        if p.r0 == 0.0:
            return u.copy() if u.ndim else float(u)
        r0, a = p.r0, p.alpha
        half = 0.5 * r0
        out = np.empty_like(u)
        lo = u <= half
        hi = u >= r0
        mid = ~(lo | hi)
        out[lo] = r0 ** a * u[lo] ** (1.0 - a) / (1.0 - a)
        out[hi] = self.i_r0 + (u[hi] - r0)
        if np.any(mid):
            um = u[mid]
            ts = (um - half) / half
            # nodes on [0, ts] per point
            nodes = 0.5 * ts[:, None] * (GL_NODES[None, :] + 1.0)
            vals = 1.0 / np.polynomial.polynomial.polyval(nodes, self.coeffs)
            out[mid] = self.i_half + 0.5 * ts * half * (vals @ GL_WEIGHTS)
        return out if out.ndim else float(out)

    @property
    def excess(self) -> float:
        """``I(r0) - r0``, the extra q-mass of one slow disk divided by pi."""
        return self.i_r0 - self.params.r0

    def w(self, u):
        """Radial transport profile ``w(u) = c * I(u)`` inside a chart."""
        return self.chart_c * self.integral(u)


def psi_eval(u, profile: PsiProfile):
    """Evaluate psi at squared radius ``u`` (scalar or array)."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("psi is defined for u >= 0 only")
    p = profile.params
    if p.r0 == 0.0:
        out = np.ones_like(u)
        return out if out.ndim else float(out)
    r0, a = p.r0, p.alpha
    half = 0.5 * r0
    out = np.ones_like(u)
    lo = u <= half
    mid = (u > half) & (u < r0)
    out[lo] = (u[lo] / r0) ** a
    out[mid] = np.polynomial.polynomial.polyval((u[mid] - half) / half, profile.coeffs)
    return out if out.ndim else float(out)


def psi_derivative(u, profile: PsiProfile):
    """d psi / du; infinite at the origin where the power law is singular."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("psi is defined for u >= 0 only")
    p = profile.params
    out = np.zeros_like(u)
    if p.r0 == 0.0:
        return out if out.ndim else float(out)
    r0, a = p.r0, p.alpha
    half = 0.5 * r0
    lo = u <= half
    mid = (u > half) & (u < r0)
    with np.errstate(divide="ignore"):
        out[lo] = a * (u[lo] / r0) ** a / u[lo]
    dcoef = np.polynomial.polynomial.polyder(profile.coeffs)
    out[mid] = np.polynomial.polynomial.polyval((u[mid] - half) / half, dcoef) / half
    return out if out.ndim else float(out)


def q0_compute(params: SlowdownParams, profile: PsiProfile | None = None) -> float:
    """Total q-mass of the torus, ``1 + 4*pi*(I(r0) - r0)``."""
    if profile is None:
        profile = PsiProfile.build(params)
    return 1.0 + 4.0 * math.pi * profile.excess

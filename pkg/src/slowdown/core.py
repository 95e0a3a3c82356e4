"""Python-facing slow-down model: the flow, G, phi, f and their Jacobians."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels as K
from .params import A_MATRIX, LAMBDA, LOG_LAMBDA, SlowdownParams
from .psi import PsiProfile, q0_compute

SQRT5 = math.sqrt(5.0)
_EU = np.array([2.0, 1.0 + SQRT5]) / math.hypot(2.0, 1.0 + SQRT5)
_ES = np.array([-_EU[1], _EU[0]])
FIXED_POINTS = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]])

MODES = {"f": 0, "G": 1, "f_inv": 2, "G_inv": 3}


class SingularityError(ArithmeticError):
    """Integrator step size fell below the minimum step guard."""


class EscapeError(ArithmeticError):
    """A flow trajectory left its chart before the requested time."""

    def __init__(self, message, exit_time):
        super().__init__(message)
        self.exit_time = exit_time


def _raise_status(status, where="", exit_time=float("nan")):
    if status == K.UNDERFLOW:
        raise SingularityError(f"step-size underflow {where}".strip())
    if status == K.ESCAPE:
        raise EscapeError(f"chart exit {where} at t={exit_time:.6g}".strip(), exit_time)


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", K.wrap(float(self.x)))
        object.__setattr__(self, "y", K.wrap(float(self.y)))

    def as_array(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class LocalPoint:
    """Eigen-chart coordinates around fixed point ``chart_index`` (1..4)."""

    chart_index: int
    s1: float
    s2: float

    @property
    def u(self) -> float:
        return self.s1 * self.s1 + self.s2 * self.s2


@dataclass(frozen=True)
class FlowState:
    point: LocalPoint
    tangent: np.ndarray


class SlowdownModel:
    """Bundle of parameters, the psi profile and the packed kernel vector.

    All methods are pure; instances are safe to share between threads.
    """

    def __init__(self, params: SlowdownParams | None = None):
        self.params = params if params is not None else SlowdownParams()
        self.profile = PsiProfile.build(self.params)
        self.P = self._pack()

    def _pack(self) -> np.ndarray:
        p, prof = self.params, self.profile
        P = np.zeros(K.NPAR)
        P[K.ALPHA] = p.alpha
        P[K.R0] = p.r0
        P[K.UB] = p.chart_radius ** 2
        P[K.LAM] = LAMBDA
        P[K.LOGLAM] = LOG_LAMBDA
        P[K.CC] = prof.chart_c
        P[K.IHALF] = prof.i_half
        P[K.IR0] = prof.i_r0
        P[K.RTOL] = p.rtol
        P[K.ATOL] = p.atol
        P[K.HMIN] = p.h_min
        P[K.SLOW] = 1.0 if p.slowed else 0.0
        P[K.EU0], P[K.EU1] = _EU
        P[K.ES0], P[K.ES1] = _ES
        P[K.B0:K.B0 + 6] = prof.coeffs
        return P

    # -- constants ----------------------------------------------------------
    @cached_property
    def q0(self) -> float:
        return q0_compute(self.params, self.profile)

    @property
    def chart_c(self) -> float:
        return self.profile.chart_c

    @cached_property
    def rho_normalizer(self) -> float:
        """Lebesgue integral of the unnormalized piecewise density rho."""
        if not self.params.slowed:
            return 1.0
        rb2 = self.params.chart_radius ** 2
        return 1.0 + 4.0 * math.pi * rb2 * (1.0 / self.chart_c - 1.0)

    # -- charts -------------------------------------------------------------
    def to_local(self, x: TorusPoint) -> LocalPoint:
        idx, _, _, s1, s2 = K.chart_of(x.x, x.y, self.P)
        return LocalPoint(idx + 1, s1, s2)

    def to_torus(self, p: LocalPoint) -> TorusPoint:
        fx, fy = FIXED_POINTS[p.chart_index - 1]
        return TorusPoint(*K.to_torus(fx, fy, p.s1, p.s2, self.P))

    def local_coords(self, xs, ys):
        """Vectorized chart lookup: (chart index 1..4, s1, s2)."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        kx = np.floor(2.0 * xs + 0.5)
        ky = np.floor(2.0 * ys + 0.5)
        dx = xs - 0.5 * kx
        dy = ys - 0.5 * ky
        s1 = _EU[0] * dx + _EU[1] * dy
        s2 = _ES[0] * dx + _ES[1] * dy
        idx = (kx.astype(int) % 2) + 2 * (ky.astype(int) % 2) + 1
        return idx, s1, s2

    # -- psi, flow ----------------------------------------------------------
    def psi(self, u):
        return self.profile(u)

    def integrate_flow(self, start: LocalPoint, t: float, rtol=None, atol=None) -> FlowState:
        """Time-t map of the slowed flow with its variational matrix."""
        if start.u > self.params.chart_radius ** 2:
            raise ValueError("start point lies outside the chart")
        rtol = self.params.rtol if rtol is None else rtol
        atol = self.params.atol if atol is None else atol
        out, status, reached = K.flow_path(start.s1, start.s2, np.array([float(t)]),
                                           self.P, rtol, atol, True)
        _raise_status(status, "in integrate_flow", reached)
        y = out[-1]
        return FlowState(LocalPoint(start.chart_index, y[0], y[1]),
                         np.array([[y[2], y[3]], [y[4], y[5]]]))

    def flow_samples(self, s1, s2, times, rtol=None, atol=None):
        """States (s1, s2, Phi row-major) of the flow at the given times."""
        rtol = self.params.rtol if rtol is None else rtol
        atol = self.params.atol if atol is None else atol
        out, status, reached = K.flow_path(float(s1), float(s2),
                                           np.ascontiguousarray(times, dtype=float),
                                           self.P, rtol, atol, False)
        _raise_status(status, "in flow_samples", reached)
        return out

    # -- maps ---------------------------------------------------------------
    def _map(self, x: TorusPoint, mode: str) -> TorusPoint:
        gx, gy, status = K.step(x.x, x.y, self.P, MODES[mode])
        _raise_status(status, f"in map {mode}")
        return TorusPoint(gx, gy)

    def map_G(self, x: TorusPoint) -> TorusPoint:
        return self._map(x, "G")

    def map_G_inverse(self, x: TorusPoint) -> TorusPoint:
        return self._map(x, "G_inv")

    def map_f(self, x: TorusPoint) -> TorusPoint:
        return self._map(x, "f")

    def map_f_inverse(self, x: TorusPoint) -> TorusPoint:
        return self._map(x, "f_inv")

    def jacobian(self, x: TorusPoint, mode: str = "f") -> np.ndarray:
        gx, gy, a, b, c, d, status = K.step_jac(x.x, x.y, self.P, MODES[mode])
        _raise_status(status, f"in jacobian {mode}")
        return np.array([[a, b], [c, d]])

    def jacobian_f(self, x: TorusPoint) -> np.ndarray:
        return self.jacobian(x, "f")

    def map_array(self, xs, ys, mode: str = "f"):
        ox, oy, status = K.map_points(np.ascontiguousarray(xs, dtype=float),
                                      np.ascontiguousarray(ys, dtype=float),
                                      self.P, MODES[mode])
        _raise_status(status, f"in map {mode}")
        return ox, oy

    def map_array_jac(self, xs, ys, mode: str = "f"):
        ox, oy, J, status = K.map_points_jac(np.ascontiguousarray(xs, dtype=float),
                                             np.ascontiguousarray(ys, dtype=float),
                                             self.P, MODES[mode])
        _raise_status(status, f"in jacobian {mode}")
        return ox, oy, J

    # -- phi ----------------------------------------------------------------
    def phi_forward(self, p: LocalPoint) -> LocalPoint:
        self._check_in_chart(p)
        return LocalPoint(p.chart_index, *K.phi_local(p.s1, p.s2, self.P))

    def phi_inverse(self, p: LocalPoint) -> LocalPoint:
        self._check_in_chart(p)
        return LocalPoint(p.chart_index, *K.phi_inv_local(p.s1, p.s2, self.P))

    def phi_jacobian(self, p: LocalPoint) -> np.ndarray:
        _, _, a, b, c, d = K.phi_local_jac(p.s1, p.s2, self.P)
        return np.array([[a, b], [c, d]])

    def phi_jacobian_local(self, s1: float, s2: float) -> np.ndarray:
        _, _, a, b, c, d = K.phi_local_jac(s1, s2, self.P)
        return np.array([[a, b], [c, d]])

    def _check_in_chart(self, p: LocalPoint):
        if p.u > self.params.chart_radius ** 2 * (1 + 1e-12):
            raise ValueError("point lies outside the chart")

    # -- densities ----------------------------------------------------------
    def q_density(self, x: TorusPoint) -> float:
        """Density of the G-invariant measure (unnormalized): 1/psi(u) or 1."""
        u = self.to_local(x).u
        if not self.params.slowed or u > self.params.r0:
            return 1.0
        return 1.0 / self.profile(u)

    def q_density_array(self, xs, ys):
        _, s1, s2 = self.local_coords(xs, ys)
        u = s1 * s1 + s2 * s2
        out = np.ones_like(u)
        if self.params.slowed:
            inside = u < self.params.r0
            out[inside] = 1.0 / self.profile(u[inside])
        return out

    def rho_array(self, xs, ys):
        """Unnormalized f-invariant density: 1/c inside charts, 1 outside."""
        _, s1, s2 = self.local_coords(xs, ys)
        u = s1 * s1 + s2 * s2
        out = np.ones_like(u)
        if self.params.slowed:
            out[u < self.params.chart_radius ** 2] = 1.0 / self.chart_c
        return out

    def rho(self, x: TorusPoint) -> float:
        return float(self.rho_array(np.array([x.x]), np.array([x.y]))[0])

    # -- Hamiltonian ----------------------------------------------------------
    def hamiltonian_H2(self, p: LocalPoint) -> float:
        return hamiltonian_H2(p.s1, p.s2, self.params.alpha)


def hamiltonian_H2(s1, s2, alpha):
    """``s1 s2 (s1^2 + s2^2)^kappa log(lambda)`` with kappa = alpha/(1-alpha).

    Conserved by f where the power-law profile applies; it is the pullback of
    the flow's first integral through phi up to a constant factor.
    """
    kappa = alpha / (1.0 - alpha)
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    u = s1 * s1 + s2 * s2
    out = s1 * s2 * u ** kappa * LOG_LAMBDA
    return out if out.ndim else float(out)


def apply_A(x: TorusPoint) -> TorusPoint:
    """Linear automorphism; exact integer arithmetic followed by reduction."""
    return TorusPoint(5.0 * x.x + 8.0 * x.y, 8.0 * x.x + 13.0 * x.y)


def eigen_data():
    """(lambda, e_u, e_s, fixed points) of the linear model."""
    return LAMBDA, _EU.copy(), _ES.copy(), FIXED_POINTS.copy()


__all__ = [
    "A_MATRIX", "FIXED_POINTS", "FlowState", "LocalPoint", "SlowdownModel",
    "TorusPoint", "SingularityError", "EscapeError", "apply_A", "eigen_data",
    "hamiltonian_H2",
]

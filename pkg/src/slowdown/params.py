"""Construction constants for the slow-down map and their validity rules."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

#: Largest eigenvalue of the hyperbolic automorphism A = [[5, 8], [8, 13]].
LAMBDA = 9.0 + 4.0 * math.sqrt(5.0)
LOG_LAMBDA = math.log(LAMBDA)

#: The integer matrix of the linear model and its inverse.
A_MATRIX = np.array([[5.0, 8.0], [8.0, 13.0]])
A_INVERSE = np.array([[13.0, -8.0], [-8.0, 5.0]])


class ParameterError(ValueError):
    """Raised when a parameter set violates a construction invariant."""


@dataclass(frozen=True)
class SlowdownParams:
    """Immutable parameter set for the slow-down construction.

    Parameters
    ----------
    alpha : float
        Exponent of the power-law slow-down ``psi(u) = (u / r0) ** alpha``.
    mu : float
        Cone aperture used by the comparison bounds and the exponents.
    r0 : float
        Threshold on the squared chart radius ``u = s1**2 + s2**2`` below
        which the flow is slowed.  ``r0 = 0`` switches the slow-down off and
        reproduces the linear automorphism exactly.
    chart_radius : float
        Radius of each eigen-chart around the four fixed points.
    exploratory : bool
        Relax the proven range of ``alpha`` and ``mu`` to ``(0, 1)`` and
        emit a warning instead of raising.
    rtol, atol, h_min : float
        Integrator controls for the slowed flow.
    """

    alpha: float = 0.2
    mu: float = 0.4
    r0: float = 1.5e-4
    chart_radius: float = 0.22
    exploratory: bool = False
    rtol: float = 1e-12
    atol: float = 1e-14
    h_min: float = 1e-16
    lam: float = field(default=LAMBDA, init=False)

    def __post_init__(self):
        self.validate()

    @property
    def kappa(self) -> float:
        return self.alpha / (1.0 - self.alpha)

    @property
    def log_lambda(self) -> float:
        return LOG_LAMBDA

    @property
    def slowed(self) -> bool:
        return self.r0 > 0.0

    def in_proven_range(self) -> bool:
        return 1.0 / 9.0 < self.alpha < 0.25 and 0.0 < self.mu < 0.5

    def validate(self) -> None:
        a, m = self.alpha, self.mu
        if not (0.0 < a < 1.0 and 0.0 < m < 1.0):
            raise ParameterError(f"alpha={a}, mu={m} must lie in (0, 1)")
        if not self.in_proven_range():
            msg = f"alpha={a}, mu={m} outside 1/9 < alpha < 1/4, 0 < mu < 1/2"
            if not self.exploratory:
                raise ParameterError(msg + " (set exploratory=True to allow)")
            warnings.warn(msg, stacklevel=3)
        if not (0.0 < self.chart_radius <= 0.24):
            raise ParameterError(
                f"chart_radius={self.chart_radius} must lie in (0, 0.24] "
                "so that the four charts are disjoint")
        if self.r0 < 0.0:
            raise ParameterError(f"r0={self.r0} must be non-negative")
        # A unit-time linear trajectory that touches the slow disk can start
        # at most sqrt(r0 * (lam**2 + lam**-2)) from the fixed point, which is
        # the sharp form of lam * sqrt(r0) <= chart_radius.
        reach = math.sqrt(self.r0 * (LAMBDA ** 2 + LAMBDA ** -2))
        if reach > self.chart_radius:
            raise ParameterError(
                f"chart_radius={self.chart_radius} too small for r0={self.r0}: "
                f"unit-time trajectories through the slow disk reach {reach:.6g}")
        if not (self.rtol > 0 and self.atol >= 0 and self.h_min > 0):
            raise ParameterError("integrator tolerances must be positive")

    def replace(self, **changes) -> "SlowdownParams":
        data = self.to_dict()
        data.update(changes)
        return SlowdownParams(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("lam")
        return d

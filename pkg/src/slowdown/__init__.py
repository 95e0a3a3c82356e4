"""Simulation and verification lab for the slow-down map of the 2-torus.

The model perturbs the hyperbolic automorphism A = [[5, 8], [8, 13]] near its
four fixed points by slowing the linear flow with a power-law profile, then
conjugates by a radial change of coordinates that restores (piecewise)
Lebesgue invariance.
"""

from .params import LAMBDA, LOG_LAMBDA, ParameterError, SlowdownParams
from .psi import PsiProfile, psi_derivative, psi_eval, q0_compute
from .core import (
    FIXED_POINTS, EscapeError, FlowState, LocalPoint, SingularityError,
    SlowdownModel, TorusPoint, apply_A, eigen_data, hamiltonian_H2,
)

__version__ = "0.1.0"

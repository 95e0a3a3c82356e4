"""Linear model, orbit iteration, Lyapunov exponents and curve evolution."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import (
    FIXED_POINTS, MODES, SlowdownModel, TorusPoint, _raise_status, eigen_data,
)
from .params import A_MATRIX, LAMBDA
from .rng import stream


class ResourceError(RuntimeError):
    """A computation exhausted its configured budget."""


@dataclass(frozen=True)
class EigenData:
    lam: float
    e_u: np.ndarray
    e_s: np.ndarray
    fixed_points: np.ndarray

    @classmethod
    def build(cls) -> "EigenData":
        return cls(*eigen_data())

    def residuals(self) -> dict:
        """Eigen-equation and orthonormality residuals."""
        return {
            "unstable": float(np.abs(A_MATRIX @ self.e_u - self.lam * self.e_u).max()),
            "stable": float(np.abs(A_MATRIX @ self.e_s - self.e_s / self.lam).max()),
            "orthogonality": abs(float(self.e_u @ self.e_s)),
            "norms": max(abs(np.linalg.norm(self.e_u) - 1), abs(np.linalg.norm(self.e_s) - 1)),
        }


def apply_A_array(xs, ys, inverse=False):
    if inverse:
        return np.mod(13.0 * xs - 8.0 * ys, 1.0), np.mod(-8.0 * xs + 5.0 * ys, 1.0)
    return np.mod(5.0 * xs + 8.0 * ys, 1.0), np.mod(8.0 * xs + 13.0 * ys, 1.0)


def orbit_arrays(model: SlowdownModel, x0: TorusPoint, n: int, mode: str = "f"):
    """Arrays (xs, ys) holding x0, T(x0), ..., T^n(x0) for T given by ``mode``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    xs, ys, status = K.trajectory(x0.x, x0.y, int(n), model.P, MODES[mode])
    _raise_status(status, f"after {len(xs) - 1} steps of {mode}")
    return xs, ys


def orbit(model: SlowdownModel, x0: TorusPoint, n: int, mode: str = "f", chunk: int = 4096):
    """Lazily yield x0, f(x0), ..., f^n(x0).

    ``mode="G-weighted"`` iterates G instead and yields ``(point, weight)``
    with weight ``q/q0``; these weights turn Lebesgue-uniform ensembles of
    starting points into samples of the G-invariant probability measure.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    weighted = mode == "G-weighted"
    kmode = MODES["G"] if weighted else MODES[mode]

    def emit(xs, ys):
        if weighted:
            wts = model.q_density_array(xs, ys) / model.q0
            for a, b, w in zip(xs, ys, wts):
                yield TorusPoint(a, b), float(w)
        else:
            for a, b in zip(xs, ys):
                yield TorusPoint(a, b)

    yield from emit(np.array([x0.x]), np.array([x0.y]))
    x, y = x0.x, x0.y
    remaining = n
    while remaining > 0:
        k = min(chunk, remaining)
        xs, ys, status = K.trajectory(x, y, k, model.P, kmode)
        yield from emit(xs[1:], ys[1:])
        _raise_status(status, "in orbit stream")
        remaining -= k
        x, y = xs[-1], ys[-1]


def chart_fraction(model: SlowdownModel) -> float:
    """Invariant-measure mass of the union of the four charts."""
    p = model.params
    if not p.slowed:
        return 4.0 * math.pi * p.chart_radius ** 2
    inside = 4.0 * math.pi * p.chart_radius ** 2 / model.chart_c
    return inside / model.rho_normalizer


@dataclass(frozen=True)
class LyapunovResult:
    chi: float
    stderr: float
    steps: int
    direction: str

    @property
    def band(self):
        return self.chi - 2 * self.stderr, self.chi + 2 * self.stderr


def lyapunov_estimate(model: SlowdownModel, x0: TorusPoint | None, n: int, seed: int = 0,
                      burn: int = 1000, direction: str = "forward",
                      blocks: int = 100) -> LyapunovResult:
    """Largest exponent from renormalized tangent growth along one orbit.

    ``direction="backward"`` iterates f^-1; its top exponent is minus the
    lower exponent of f, so for an area-preserving map both estimates agree.
    The standard error comes from batch means over ``blocks`` blocks.
    """
    if n < 1000:
        raise ValueError("n must be at least 1000")
    rng = stream(seed, "lyapunov", 0 if direction == "forward" else 1)
    if x0 is None:
        x0 = TorusPoint(*rng.random(2))
    v = rng.normal(size=2)
    mode = MODES["f"] if direction == "forward" else MODES["f_inv"]
    block = max(1, n // blocks)
    total, bsum, _, _, status = K.lyapunov_run(x0.x, x0.y, v[0], v[1], int(n), int(burn),
                                               int(block), model.P, mode)
    _raise_status(status, "in lyapunov_estimate")
    steps = block * (n // block)
    chi = total / steps
    means = bsum / block
    stderr = float(np.std(means, ddof=1) / math.sqrt(len(means))) if len(means) > 1 else math.nan
    return LyapunovResult(float(chi), stderr, steps, direction)


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

def _min_image(d):
    return d - np.floor(d + 0.5)


@dataclass
class Curve:
    """Image of a straight parametrized segment under ``steps`` iterates.

    ``a`` and ``b`` are the segment endpoints in unwrapped torus coordinates;
    vertex ``k`` is the image of ``a + t[k] * (b - a)``.
    """

    a: np.ndarray
    b: np.ndarray
    t: np.ndarray
    vertices: np.ndarray
    steps: int = 0
    mode: str = "f"
    charts: np.ndarray = field(default=None)

    @classmethod
    def segment(cls, a, b, n_vertices: int = 9, mode: str = "f") -> "Curve":
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        t = np.linspace(0.0, 1.0, n_vertices)
        pts = a[None, :] + t[:, None] * (b - a)[None, :]
        return cls(a, b, t, np.mod(pts, 1.0), 0, mode)

    @property
    def length(self) -> float:
        d = _min_image(np.diff(self.vertices, axis=0))
        return float(np.hypot(d[:, 0], d[:, 1]).sum())

    def spacing(self) -> np.ndarray:
        d = _min_image(np.diff(self.vertices, axis=0))
        return np.hypot(d[:, 0], d[:, 1])


def _image(model, a, b, t, steps, mode):
    pts = np.mod(a[None, :] + np.asarray(t)[:, None] * (b - a)[None, :], 1.0)
    xs, ys = pts[:, 0].copy(), pts[:, 1].copy()
    for _ in range(steps):
        xs, ys = model.map_array(xs, ys, mode)
    return np.stack([xs, ys], axis=1)


def evolve_curve(model: SlowdownModel, c: Curve, steps: int, refine_tol: float = 1e-4,
                 max_vertices: int = 100_000) -> Curve:
    """Advance a curve by ``steps`` iterates with bisection refinement.

    Whenever two consecutive image vertices are further apart than
    ``refine_tol``, the parameter midpoint is inserted and mapped from the
    original segment.
    """
    total = c.steps + steps
    t = c.t.copy()
    verts = _image(model, c.a, c.b, t, total, c.mode) if steps else c.vertices.copy()
    while True:
        d = _min_image(np.diff(verts, axis=0))
        gaps = np.hypot(d[:, 0], d[:, 1])
        bad = np.nonzero(gaps > refine_tol)[0]
        if len(bad) == 0:
            break
        if len(t) + len(bad) > max_vertices:
            raise ResourceError(f"curve refinement needs more than {max_vertices} vertices")
        tm = 0.5 * (t[bad] + t[bad + 1])
        vm = _image(model, c.a, c.b, tm, total, c.mode)
        t = np.insert(t, bad + 1, tm)
        verts = np.insert(verts, bad + 1, vm, axis=0)
    idx, s1, s2 = model.local_coords(verts[:, 0], verts[:, 1])
    inside = s1 * s1 + s2 * s2 < model.params.chart_radius ** 2
    charts = np.where(inside, idx, 0)
    return Curve(c.a, c.b, t, verts, total, c.mode, charts)


__all__ = [
    "EigenData", "Curve", "LyapunovResult", "ResourceError", "apply_A_array",
    "chart_fraction", "evolve_curve", "lyapunov_estimate", "orbit", "orbit_arrays",
    "FIXED_POINTS", "LAMBDA",
]

"""Exponent formulas and numerical checks of the comparison bounds.

Passages through the slow disk ``u <= r0/2`` are parametrized by their depth
``d = 2*kappa / (r0/2)`` in (0, 1), where ``kappa = s1*s2`` is the conserved
product.  A passage starts on the disk boundary with ``s2 > s1 > 0``, spends
time ``T`` inside and turns (``s1 = s2``) at ``T1 = T/2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import _kernels as K
from .core import SlowdownModel, _raise_status
from .params import LOG_LAMBDA, ParameterError, SlowdownParams
from .parallel import map_ordered
from .rng import chunk_sizes, stream


class InsufficientDataError(RuntimeError):
    """Too few usable points for a statistical fit."""


# ---------------------------------------------------------------------------
# exponents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentPair:
    alpha: float
    mu: float
    gamma: float
    gamma_prime: float
    beta: float
    beta_prime: float
    beta1: float
    C1: float
    kappa: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def exponent_values(alpha: float, mu: float, r0: float) -> ExponentPair:
    """Evaluate all exponent formulas without range checks."""
    beta_prime = (1.0 - mu) / 2.0 ** (alpha + 2.0)
    beta = (1.0 + mu) * 2.0 ** (alpha - 1.0) + (1.0 - mu) / 6.0
    beta1 = 2.0 ** (alpha - 1.0) * (1.0 + mu) + 2.0 ** alpha / alpha + (1.0 - mu) / 6.0
    gamma = 1.0 / (2.0 * alpha) + beta
    gamma_prime = 1.0 / (2.0 * alpha) + beta_prime
    C1 = 2.0 * alpha * LOG_LAMBDA / r0 ** alpha if r0 > 0 else math.inf
    return ExponentPair(alpha, mu, gamma, gamma_prime, beta, beta_prime, beta1, C1,
                        alpha / (1.0 - alpha))


def exponents_compute(params: SlowdownParams) -> ExponentPair:
    e = exponent_values(params.alpha, params.mu, params.r0)
    if not (e.gamma > e.gamma_prime > 2.0):
        msg = f"exponent ordering gamma > gamma' > 2 fails: {e.gamma:.4f}, {e.gamma_prime:.4f}"
        if params.in_proven_range():
            raise ParameterError(msg)
        warnings.warn(msg, stacklevel=2)
    return e


# ---------------------------------------------------------------------------
# power-law fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    stderr: float
    count: int
    max_residual: float

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi


def fit_power_law(points, n_min: float = 0.0) -> PowerLawFit:
    """Least squares of log(value) against log(n) over points with n >= n_min."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (m, 2) array of (n, value)")
    pts = pts[pts[:, 0] >= n_min]
    if np.any(pts[:, 1] <= 0) or np.any(pts[:, 0] <= 0):
        raise ValueError("power-law fit needs positive n and values")
    if len(pts) < 5:
        raise InsufficientDataError(f"need >= 5 points with n >= {n_min}, have {len(pts)}")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    res = stats.linregress(x, y)
    resid = y - (res.intercept + res.slope * x)
    return PowerLawFit(float(res.slope), float(res.intercept), float(res.stderr), len(pts),
                       float(np.abs(resid).max()))


# ---------------------------------------------------------------------------
# single passages
# ---------------------------------------------------------------------------

GRID_POINTS = 512


@dataclass
class Crossing:
    """A reference passage sampled on a time grid (entry at t = 0)."""

    depth: float
    kappa: float
    T: float
    T1: float
    i_mid: int
    times: np.ndarray
    states: np.ndarray  # columns s1, s2, Phi00, Phi01, Phi10, Phi11

    @property
    def s1(self):
        return self.states[:, 0]

    @property
    def s2(self):
        return self.states[:, 1]

    def closure_error(self, r0: float) -> float:
        """Relative mismatch of the exit point with the mirrored entry point."""
        return max(abs(self.s1[-1] - self.s2[0]) / self.s2[0],
                   abs(self.s2[-1] - self.s1[0]) / self.s1[0])


def passage_half_time(params: SlowdownParams, kappa: float, x0: float) -> float:
    """Time from x0 = log(s1/s2)/2 < 0 to the turning point x = 0.

    Uses the one-dimensional reduction dx/dt = log(lambda) psi(2 kappa cosh 2x),
    which holds because s1 s2 = kappa is conserved.
    """
    a, r0 = params.alpha, params.r0

    def integrand(x):
        return (r0 / (2.0 * kappa * math.cosh(2.0 * x))) ** a / LOG_LAMBDA

    val, _ = integrate.quad(integrand, x0, 0.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def entry_point(params: SlowdownParams, depth: float):
    u = 0.5 * params.r0
    kappa = 0.5 * depth * u
    s2 = math.sqrt(0.5 * u * (1.0 + math.sqrt(1.0 - depth * depth)))
    return kappa / s2, s2, kappa


def make_crossing(model: SlowdownModel, depth: float, n_grid: int = GRID_POINTS,
                  rtol: float | None = None) -> Crossing:
    if not 0.0 < depth < 1.0:
        raise ValueError("depth must lie in (0, 1)")
    p = model.params
    s1, s2, kappa = entry_point(p, depth)
    T1 = passage_half_time(p, kappa, 0.5 * math.log(s1 / s2))
    T = 2.0 * T1
    times = np.linspace(0.0, T, n_grid)
    times = np.unique(np.concatenate([times, [T1]]))
    i_mid = int(np.searchsorted(times, T1))
    states = model.flow_samples(s1, s2, times, rtol=rtol, atol=0.0)
    return Crossing(depth, kappa, T, T1, i_mid, times, states)


def _depths(rng, count, lo, hi):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size=count))


# ---------------------------------------------------------------------------
# envelope bounds on a single passage
# ---------------------------------------------------------------------------

ENVELOPE_NAMES = ("s2_lower", "s2_upper", "s1_lower", "s1_upper", "s1_upper_after_turn")


@dataclass
class EnvelopeReport:
    depth: float
    T: float
    margins: dict
    violations: dict
    rejected: str | None = None

    @property
    def total_violations(self) -> int:
        return int(sum(self.violations.values()))


def _pairs(n, lo_a, hi_a, lo_t, hi_t):
    """Index pairs (a, t) with a < t and both in the given index ranges.

    The diagonal a = t is left out: every bound is an identity there.
    """
    a, t = np.meshgrid(np.arange(lo_a, hi_a + 1), np.arange(lo_t, hi_t + 1), indexing="ij")
    keep = a < t
    return a[keep], t[keep]


def envelope_check(model: SlowdownModel, c: Crossing, slack: float = 1e-9) -> EnvelopeReport:
    """Evaluate the five power-law envelopes for s1 and s2 on a passage.

    Margins are relative: ``lhs/rhs - 1`` for lower bounds and ``1 - lhs/rhs``
    for upper bounds, so a negative margin below ``-slack`` is a violation.
    """
    p = model.params
    a_ = p.alpha
    C1 = exponent_values(p.alpha, p.mu, p.r0).C1
    t, s1, s2 = c.times, c.s1, c.s2
    n = len(t) - 1
    m = c.i_mid
    ex = -1.0 / (2.0 * a_)
    margins = {}

    ia, it = _pairs(n, 0, m, 0, m)
    rhs = s2[ia] * (1.0 + 2 ** a_ * C1 * s2[ia] ** (2 * a_) * (t[it] - t[ia])) ** ex
    margins["s2_lower"] = float(np.min(s2[it] / rhs - 1.0))

    ia, it = _pairs(n, 0, n, 0, n)
    rhs = s2[ia] * (1.0 + C1 * s2[ia] ** (2 * a_) * (t[it] - t[ia])) ** ex
    margins["s2_upper"] = float(np.min(1.0 - s2[it] / rhs))

    it, ib = _pairs(n, m, n, m, n)
    rhs = s1[ib] * (1.0 + 2 ** a_ * C1 * s1[ib] ** (2 * a_) * (t[ib] - t[it])) ** ex
    margins["s1_lower"] = float(np.min(s1[it] / rhs - 1.0))

    it, ib = _pairs(n, 0, n, 0, n)
    rhs = s1[ib] * (1.0 + C1 * s1[ib] ** (2 * a_) * (t[ib] - t[it])) ** ex
    margins["s1_upper"] = float(np.min(1.0 - s1[it] / rhs))

    base = 1.0 - 2 ** a_ * C1 * s1[m] ** (2 * a_) * (t[m:] - t[m])
    ok = base > 0
    if np.any(ok):
        rhs = s1[m] * base[ok] ** ex
        margins["s1_upper_after_turn"] = float(np.min(1.0 - s1[m:][ok] / rhs))
    else:
        margins["s1_upper_after_turn"] = math.inf

    violations = {k: int(v < -slack) for k, v in margins.items()}
    return EnvelopeReport(c.depth, c.T, margins, violations)


# ---------------------------------------------------------------------------
# pairs of nearby passages
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryPair:
    crossing: Crossing
    tilde: np.ndarray  # (len(times), 2) companion trajectory
    tilt: float

    @property
    def ds1(self):
        return self.tilde[:, 0] - self.crossing.s1

    @property
    def ds2(self):
        return self.tilde[:, 1] - self.crossing.s2

    def hypothesis_failure(self, mu: float) -> str | None:
        ds1, ds2 = self.ds1, self.ds2
        if np.any(ds2 <= 0):
            return "delta s2 not positive"
        if np.any(np.abs(ds1) > mu * ds2):
            return "delta s1 outside the mu-cone"
        if not ds2[0] / self.crossing.s2[0] < (1.0 - mu) / 72.0:
            return "initial relative separation too large"
        return None


def make_pair(model: SlowdownModel, c: Crossing, tilt: float, chi_fraction: float,
              rtol: float | None = None) -> TrajectoryPair:
    """Companion passage whose separation at exit is ``delta * (tilt, 1)``.

    The companion is integrated backward from the exit, the direction in
    which stable-cone separations are numerically attracting.  ``delta`` is
    chosen from the variational matrix so that the initial relative
    separation ``ds2(0)/s2(0)`` is ``chi_fraction * (1 - mu)/72``.
    """
    mu = model.params.mu
    phi = c.states[-1, 2:6]
    a, b, cc, d = phi
    det = a * d - b * cc
    v = np.array([tilt, 1.0])
    back = np.array([d * v[0] - b * v[1], -cc * v[0] + a * v[1]]) / det
    target = chi_fraction * (1.0 - mu) / 72.0 * c.s2[0]
    delta = target / back[1]
    start = c.states[-1, :2] + delta * v
    rev = c.times[::-1] - c.T
    out = model.flow_samples(start[0], start[1], rev, rtol=rtol, atol=0.0)
    tilde = out[::-1, :2].copy()
    return TrajectoryPair(c, tilde, tilt)


@dataclass
class DeltaReport:
    depth: float
    T: float
    constants: dict
    margins: dict
    violations: dict
    rejected: str | None = None

    @property
    def total_violations(self) -> int:
        return int(sum(self.violations.values()))


DELTA_NAMES = ("constants", "upper_first_half", "upper_second_half", "norm_growth",
               "lower_first_half", "lower_second_half")


def delta_bounds_check(model: SlowdownModel, pair: TrajectoryPair,
                       slack: float = 1e-9) -> DeltaReport:
    """Separation bounds for a hypothesis-satisfying pair.

    Reports envelope constants (C2, C4 against t^-gamma', t^-gamma on the
    first half; C3, C5 as max/min of ds2(t)/ds2(T1) on the second half) and
    the explicit upper bounds with exponent beta' and lower bounds with
    exponents beta, beta1 as relative margins.
    """
    p = model.params
    c = pair.crossing
    reason = pair.hypothesis_failure(p.mu)
    if reason is not None:
        return DeltaReport(c.depth, c.T, {}, {}, {}, rejected=reason)
    e = exponent_values(p.alpha, p.mu, p.r0)
    a_, C1 = p.alpha, e.C1
    t, s1, s2 = c.times, c.s1, c.s2
    ds1, ds2 = pair.ds1, pair.ds2
    m, n = c.i_mid, len(t) - 1
    first = slice(1, m + 1)
    second = slice(m, n + 1)

    ratio0 = ds2[first] / ds2[0]
    consts = {
        "C2": float(np.max(ratio0 * t[first] ** e.gamma_prime)),
        "C4": float(np.min(ratio0 * t[first] ** e.gamma)),
        "C3": float(np.max(ds2[second] / ds2[m])),
        "C5": float(np.min(ds2[second] / ds2[m])),
    }
    ok = all(np.isfinite(v) and v > 0 for v in consts.values())
    if m == 0 or m == n:
        return DeltaReport(c.depth, c.T, consts, {}, {}, rejected="degenerate grid")
    # envelope ordering on the first half: lower envelope below upper one
    lower = consts["C4"] * t[first] ** -e.gamma
    upper = consts["C2"] * t[first] ** -e.gamma_prime
    ok = ok and bool(np.all(lower <= upper * (1 + slack)))

    margins = {"constants": 0.0 if ok else -math.inf}
    chi0 = ds2[0] / s2[0]
    tt = t[: m + 1]
    rhs = chi0 * s2[: m + 1] * (1.0 + 2 ** a_ * C1 * s2[0] ** (2 * a_) * tt) ** -e.beta_prime
    margins["upper_first_half"] = float(np.min(1.0 - ds2[: m + 1] / rhs))

    it, ib = _pairs(n, m, n, m, n)
    k = 2 ** a_ * C1 * s1[ib] ** (2 * a_)
    fac = ((1.0 + k * (t[ib] - t[it])) / (1.0 + k * (t[ib] - t[m]))) ** e.beta_prime
    rhs = ds2[m] / s1[m] * s1[it] * fac
    margins["upper_second_half"] = float(np.min(1.0 - ds2[it] / rhs))

    norm_end = math.hypot(ds1[-1], ds2[-1])
    norm_start = math.hypot(ds1[0], ds2[0])
    rhs = math.sqrt(1 + p.mu ** 2) * s1[-1] / s2[0] * norm_start
    margins["norm_growth"] = 1.0 - norm_end / rhs

    rhs = chi0 * s2[: m + 1] * (1.0 + C1 * s2[0] ** (2 * a_) * tt) ** -e.beta
    margins["lower_first_half"] = float(np.min(ds2[: m + 1] / rhs - 1.0))

    rhs = (ds2[m] / s1[m] * s1[m:]
           * (1.0 + C1 * s1[m] ** (2 * a_) * (t[m:] - t[m])) ** -e.beta1)
    margins["lower_second_half"] = float(np.min(ds2[m:] / rhs - 1.0))

    # smallest exponents for which the two lower bounds would hold on this pair
    g1 = np.log1p(C1 * s2[0] ** (2 * a_) * tt[1:])
    consts["beta_needed"] = float(np.max(-np.log(ds2[1:m + 1] / (chi0 * s2[1:m + 1])) / g1))
    g2 = np.log1p(C1 * s1[m] ** (2 * a_) * (t[m + 1:] - t[m]))
    q = ds2[m + 1:] * s1[m] / (ds2[m] * s1[m + 1:])
    consts["beta1_needed"] = float(np.max(-np.log(q) / g2))

    violations = {k_: int(v < -slack) for k_, v in margins.items()}
    return DeltaReport(c.depth, c.T, consts, margins, violations)


# ---------------------------------------------------------------------------
# population suites
# ---------------------------------------------------------------------------

@dataclass
class SuiteSummary:
    name: str
    accepted: int
    rejected: int
    violations: dict
    worst_margins: dict
    rows: list = field(default_factory=list)

    @property
    def total_violations(self) -> int:
        return int(sum(self.violations.values()))


def _merge(name, reports, keys):
    accepted = [r for r in reports if r.rejected is None]
    viol = {k: sum(r.violations.get(k, 0) for r in accepted) for k in keys}
    worst = {k: min((r.margins[k] for r in accepted), default=math.nan) for k in keys}
    return SuiteSummary(name, len(accepted), len(reports) - len(accepted), viol, worst)


DEPTH_RANGE = (1e-10, 0.5)
SUITE_CHUNK = 16


def envelope_suite(model: SlowdownModel, count: int, seed: int,
                  depth_range=DEPTH_RANGE) -> SuiteSummary:
    def work(args):
        chunk, size = args
        rng = stream(seed, "bounds", chunk)
        out = []
        for d in _depths(rng, size, *depth_range):
            out.append(envelope_check(model, make_crossing(model, d)))
        return out

    tasks = list(enumerate(chunk_sizes(count, SUITE_CHUNK)))
    reports = [r for part in map_ordered(work, tasks) for r in part]
    summary = _merge("envelope", reports, ENVELOPE_NAMES)
    summary.rows = [dict(depth=r.depth, T=r.T, **{f"margin_{k}": v for k, v in r.margins.items()})
                    for r in reports]
    return summary


def delta_suite(model: SlowdownModel, count: int, seed: int,
                depth_range=DEPTH_RANGE) -> SuiteSummary:
    """Random passages with random exit tilt in [-mu, mu] and initial
    relative separation a random fraction of the admissible bound."""
    mu = model.params.mu

    def work(args):
        chunk, size = args
        rng = stream(seed, "bounds", 10_000 + chunk)
        out = []
        for d in _depths(rng, size, *depth_range):
            tilt = rng.uniform(-mu, mu)
            frac = rng.uniform(0.05, 0.5)
            pair = make_pair(model, make_crossing(model, d), tilt, frac)
            out.append(delta_bounds_check(model, pair))
        return out

    tasks = list(enumerate(chunk_sizes(count, SUITE_CHUNK)))
    reports = [r for part in map_ordered(work, tasks) for r in part]
    summary = _merge("delta", reports, DELTA_NAMES)
    summary.rows = [dict(depth=r.depth, T=r.T, rejected=r.rejected or "", **r.constants,
                         **{f"margin_{k}": v for k, v in r.margins.items()})
                    for r in reports]
    return summary


# ---------------------------------------------------------------------------
# curve length ratios across a passage
# ---------------------------------------------------------------------------

@dataclass
class RatioResult:
    rows: list  # dicts with depth, steps (m - n), ratio
    binned: np.ndarray  # (k, 3): steps, median ratio, count
    fit: PowerLawFit | None
    band: tuple
    error: str | None = None

    @property
    def in_band(self) -> bool:
        return self.fit is not None and self.band[0] <= self.fit.slope <= self.band[1]


def _local_map(model, s1, s2, forward, conjugate):
    o1, o2, status = K.local_steps(np.ascontiguousarray(s1), np.ascontiguousarray(s2),
                                   model.P, forward, conjugate)
    _raise_status(status, "in chart-local step")
    return o1, o2


def _polyline_length(s1, s2):
    return float(np.hypot(np.diff(s1), np.diff(s2)).sum())


def _exit_point(model, depth, phase):
    p = model.params
    s1, s2, kappa = entry_point(p, depth)
    T = 2.0 * passage_half_time(p, kappa, 0.5 * math.log(s1 / s2))
    z = model.flow_samples(s1, s2, np.array([T + phase]), atol=0.0)[0]
    return z[0], z[1]


def crossing_ratio(model: SlowdownModel, depth: float, phase: float, tilt: float):
    """Length ratio of a short stable-cone curve across one discrete passage.

    The curve is placed at sigma_m, the first iterate after the passage has
    left ``u <= r0/2`` (``phase`` in [0, 1) is the time since the continuous
    exit), with direction ``(tilt, 1)``.  Its tangent is pulled back through
    the variational flow of G^-1 until the base point leaves the disk, which
    fixes the entry iterate sigma_n.  Returns ``(m - n, L(f^m)/L(f^n))`` with
    lengths measured in f-coordinates.  Working with tangents keeps the
    computation resolvable for passages whose contraction is far below the
    spacing of double-precision numbers at the exit point.
    """
    half = 0.5 * model.params.r0
    zx, zy = _exit_point(model, depth, phase)
    v = np.array([tilt, 1.0]) / math.hypot(tilt, 1.0)
    jm = model.phi_jacobian_local(zx, zy)
    L_m = float(np.linalg.norm(jm @ v))
    px, py = zx, zy
    steps = 0
    while True:
        st = model.flow_samples(px, py, np.array([-1.0]), atol=0.0)[0]
        if st[0] * st[0] + st[1] * st[1] > half:
            break
        v = st[2:6].reshape(2, 2) @ v
        px, py = st[0], st[1]
        steps += 1
        if steps > 1_000_000:
            raise RuntimeError("passage pull-back did not terminate")
    if steps == 0:
        return None
    jn = model.phi_jacobian_local(px, py)
    L_n = float(np.linalg.norm(jn @ v))
    return steps, L_m / L_n


def crossing_ratio_curve(model: SlowdownModel, depth: float, phase: float, tilt: float,
                         n_vertices: int = 9, rel_size: float = 1e-6):
    """Finite-curve version of :func:`crossing_ratio`.

    A polyline is pulled back by G^-1 and the entry curve is pushed forward by
    f in chart coordinates.  Only resolvable for shallow passages; used as an
    independent cross-check of the tangent computation.
    """
    half = 0.5 * model.params.r0
    zx, zy = _exit_point(model, depth, phase)
    d = np.array([tilt, 1.0]) / math.hypot(tilt, 1.0)
    res = crossing_ratio(model, depth, phase, tilt)
    if res is None:
        return None
    ell = rel_size * math.sqrt(half) * res[1]
    off = np.linspace(-0.5, 0.5, n_vertices) * ell
    c1 = zx + off * d[0]
    c2 = zy + off * d[1]
    back = 0
    while True:
        b1, b2 = _local_map(model, c1, c2, forward=False, conjugate=False)
        if np.all(b1 * b1 + b2 * b2 > half):
            break
        c1, c2 = b1, b2
        back += 1
    f1 = np.empty_like(c1)
    f2 = np.empty_like(c2)
    for i in range(len(c1)):
        f1[i], f2[i] = K.phi_local(c1[i], c2[i], model.P)
    L_n = _polyline_length(f1, f2)
    g1, g2 = f1, f2
    for _ in range(back):
        g1, g2 = _local_map(model, g1, g2, forward=True, conjugate=True)
    return back, _polyline_length(g1, g2) / L_n


def ratio_experiment(model: SlowdownModel, crossings: int, seed: int,
                     depth_range=(1e-9, 0.5), min_steps: int = 2,
                     min_per_bin: int = 5) -> RatioResult:
    """Collect (m - n, length ratio) over random passages and fit the slope.

    Ratios are grouped by m - n; the fit uses the median ratio of every group
    with at least ``min_per_bin`` members and m - n >= ``min_steps``.
    """
    p = model.params
    e = exponent_values(p.alpha, p.mu, p.r0)
    band = (-e.gamma - 0.4, -e.gamma_prime + 0.4)
    mu = p.mu

    def work(args):
        chunk, size = args
        rng = stream(seed, "ratio", chunk)
        out = []
        for d in _depths(rng, size, *depth_range):
            phase = rng.uniform(0.0, 1.0)
            tilt = rng.uniform(-mu, mu)
            res = crossing_ratio(model, d, phase, tilt)
            if res is not None:
                out.append({"depth": d, "steps": res[0], "ratio": res[1]})
        return out

    tasks = list(enumerate(chunk_sizes(crossings, SUITE_CHUNK)))
    rows = [r for part in map_ordered(work, tasks) for r in part]
    if not rows:
        return RatioResult(rows, np.empty((0, 3)), None, band, "no crossings")
    steps = np.array([r["steps"] for r in rows])
    ratios = np.array([r["ratio"] for r in rows])
    binned = []
    for k in np.unique(steps):
        sel = ratios[steps == k]
        binned.append((k, float(np.median(sel)), len(sel)))
    binned = np.array(binned, dtype=float)
    use = binned[(binned[:, 2] >= min_per_bin) & (binned[:, 0] >= min_steps)]
    try:
        fit = fit_power_law(use[:, :2])
        err = None
    except InsufficientDataError as exc:
        fit, err = None, str(exc)
    return RatioResult(rows, binned, fit, band, err)

"""First returns to a base rectangle, survival curves and tail-slope fits.

Also holds the exact composition counting used to bound the number of
symbolic words with a given number of base visits.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import reduce

import numpy as np
from scipy import stats

from . import _kernels as K
from .bounds import InsufficientDataError, PowerLawFit, fit_power_law
from .core import _EU, _ES, MODES, SlowdownModel, TorusPoint
from .params import LAMBDA
from .parallel import map_ordered
from .rng import chunk_sizes, stream

RETURN_CHUNK = 4096
N_CAP = 100_000
CENSOR_BOUND = 1e-3
# ``exact`` iterates G, ``approx`` iterates f; both start Lebesgue-uniform in the
# base, which carries density q = 1 because it is disjoint from the charts.
RETURN_MODES = {"exact": "G", "approx": "f"}


class StatisticalWarning(UserWarning):
    """A sample is usable but outside its configured quality bounds."""


# ---------------------------------------------------------------------------
# base rectangle
# ---------------------------------------------------------------------------

def _hits_slow_box(center, a, b, ru, rs):
    """Does the rectangle ``center + [-a, a] e_u + [-b, b] e_s`` (lifted to the
    plane) meet a box ``p + [-ru, ru] e_u + [-rs, rs] e_s`` around a point p of
    the half-lattice (Z/2)^2?
    """
    cu = float(_EU @ center)
    cs = float(_ES @ center)
    au, bs = a + ru, b + rs
    corners = np.array([cu + su * au for su in (-1, 1)])[:, None] * _EU[None, :] \
        + np.array([cs + ss * bs for ss in (-1, 1)])[:, None, None] * _ES[None, None, :]
    corners = corners.reshape(-1, 2)
    # sweep the columns p_x = i/2 of the bounding box; in each column the
    # constraint on e_s.p is an interval of p_y
    for ix in range(math.floor(2 * corners[:, 0].min()), math.ceil(2 * corners[:, 0].max()) + 1):
        px = ix / 2.0
        lo = (cs - bs - _ES[0] * px) / _ES[1]
        hi = (cs + bs - _ES[0] * px) / _ES[1]
        lo, hi = min(lo, hi), max(lo, hi)
        for iy in range(math.ceil(2 * lo), math.floor(2 * hi) + 1):
            if abs(_EU[0] * px + _EU[1] * iy / 2.0 - cu) <= au:
                return True
    return False


@dataclass(frozen=True)
class BaseRect:
    """Rectangle with sides along the eigen-directions of A.

    ``Q`` is a certified number of forward steps for which the images of the
    rectangle avoid every slow region (see ``avoidance_horizon``).
    """

    center: TorusPoint
    half_u: float
    half_s: float
    Q: int

    @classmethod
    def build(cls, model: SlowdownModel, center=(0.25, 0.25), half_u=0.02, half_s=0.02,
              q_max: int = 20) -> "BaseRect":
        if half_u <= 0 or half_s <= 0:
            raise ValueError("half-widths must be positive")
        c = np.array(center, dtype=float)
        p = model.params
        # distance from the rectangle to the nearest fixed point vs chart radius
        rel = c - np.floor(2 * c + 0.5) / 2
        clear = math.hypot(*rel) - math.hypot(half_u, half_s)
        if clear <= p.chart_radius:
            raise ValueError(f"base rectangle meets a chart (clearance {clear:.4g})")
        return cls(TorusPoint(*c), half_u, half_s,
                   avoidance_horizon(model, c, half_u, half_s, q_max))

    def contains(self, xs, ys) -> np.ndarray:
        dx = np.asarray(xs) - self.center.x
        dy = np.asarray(ys) - self.center.y
        dx = dx - np.floor(dx + 0.5)
        dy = dy - np.floor(dy + 0.5)
        return (np.abs(_EU[0] * dx + _EU[1] * dy) <= self.half_u) & \
               (np.abs(_ES[0] * dx + _ES[1] * dy) <= self.half_s)

    @property
    def area(self) -> float:
        return 4.0 * self.half_u * self.half_s

    def sample(self, rng: np.random.Generator, n: int):
        a = rng.uniform(-self.half_u, self.half_u, n)
        b = rng.uniform(-self.half_s, self.half_s, n)
        xs = np.mod(self.center.x + a * _EU[0] + b * _ES[0], 1.0)
        ys = np.mod(self.center.y + a * _EU[1] + b * _ES[1], 1.0)
        return xs, ys


def avoidance_horizon(model: SlowdownModel, center, half_u, half_s, q_max: int = 20) -> int:
    """Number of steps Q <= q_max for which f^j(rect) = phi(A^j rect), j <= Q,
    stays clear of every slow region.

    Under G the base (where phi is the identity) moves linearly until a
    unit-time linear trajectory touches a slow disk.  Such a start point lies
    in the box |s1| <= sqrt(r0), |s2| <= lambda sqrt(r0); the check uses the
    larger radius sqrt(w(r0)) so that it also covers the phi-image.  The box
    test is conservative: the returned Q is a lower bound.
    """
    r0 = model.params.r0
    if r0 <= 0:
        return q_max
    r = math.sqrt(float(model.profile.w(r0)))
    cx, cy = (Fraction(v) for v in center)
    for j in range(q_max):
        cj = np.array([float(cx % 1), float(cy % 1)])
        if _hits_slow_box(cj, half_u * LAMBDA ** j, half_s / LAMBDA ** j, r, LAMBDA * r):
            return j
        cx, cy = 5 * cx + 8 * cy, 8 * cx + 13 * cy
    return q_max


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

@dataclass
class ReturnSample:
    tau: np.ndarray  # uncensored return times
    censored: int
    errors: int
    samples: int
    mode: str
    seed: int
    n_cap: int

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.samples if self.samples else 0.0

    def gcd(self) -> int:
        return int(reduce(math.gcd, np.unique(self.tau).tolist(), 0))


def sample_first_returns(model: SlowdownModel, base: BaseRect, samples: int, seed: int,
                         mode: str = "approx", n_cap: int = N_CAP,
                         censor_bound: float = CENSOR_BOUND) -> ReturnSample:
    """Draw start points uniformly in ``base`` and record first return times.

    Chunks of ``RETURN_CHUNK`` samples draw from independent streams keyed by
    (seed, chunk), so the result does not depend on the worker count.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if mode not in RETURN_MODES:
        raise ValueError(f"mode must be one of {sorted(RETURN_MODES)}")
    kmode = MODES[RETURN_MODES[mode]]
    offset = 0 if mode == "approx" else 1_000_000
    c = base.center

    def work(args):
        chunk, size = args
        xs, ys = base.sample(stream(seed, "returns", offset + chunk), size)
        return K.first_returns(xs, ys, c.x, c.y, base.half_u, base.half_s, int(n_cap),
                               model.P, kmode)

    tasks = list(enumerate(chunk_sizes(samples, RETURN_CHUNK)))
    tau = np.concatenate(map_ordered(work, tasks))
    out = ReturnSample(tau[tau > 0], int((tau == -1).sum()), int((tau == -2).sum()),
                       samples, mode, seed, n_cap)
    if out.censored_fraction > censor_bound:
        warnings.warn(f"censored fraction {out.censored_fraction:.3g} exceeds "
                      f"{censor_bound:g}", StatisticalWarning, stacklevel=2)
    return out


# ---------------------------------------------------------------------------
# survival curves
# ---------------------------------------------------------------------------

def binomial_interval(k, n, level: float = 0.95):
    """Clopper-Pearson interval for k successes out of n (vectorized)."""
    k = np.asarray(k, dtype=float)
    a = 1.0 - level
    lo = np.where(k > 0, stats.beta.ppf(a / 2, k, n - k + 1), 0.0)
    hi = np.where(k < n, stats.beta.ppf(1 - a / 2, k + 1, n - k), 1.0)
    return lo, hi


@dataclass
class TailCurve:
    n: np.ndarray
    survival: np.ndarray
    exceed: np.ndarray
    samples: int
    ci_low: np.ndarray
    ci_high: np.ndarray

    @classmethod
    def from_times(cls, tau, n_grid, samples: int | None = None, censored: int = 0,
                   level: float = 0.95) -> "TailCurve":
        """Survival over ``n_grid``; censored samples count as exceeding every n."""
        tau = np.sort(np.asarray(tau))
        n_grid = np.asarray(n_grid)
        total = len(tau) + censored if samples is None else samples
        if total < 1:
            raise ValueError("empty sample")
        exceed = len(tau) - np.searchsorted(tau, n_grid, side="right") + censored
        lo, hi = binomial_interval(exceed, total, level)
        return cls(n_grid, exceed / total, exceed, total, lo, hi)

    @classmethod
    def from_sample(cls, s: ReturnSample, n_grid) -> "TailCurve":
        return cls.from_times(s.tau, n_grid, s.samples - s.errors, s.censored)

    def rows(self):
        return [dict(n=int(n), survival=float(v), ci_low=float(lo), ci_high=float(hi))
                for n, v, lo, hi in zip(self.n, self.survival, self.ci_low, self.ci_high)]


def default_grid(lo: float = 1e2, hi: float = 1e4, points: int = 21) -> np.ndarray:
    return np.unique(np.round(np.geomspace(lo, hi, points)).astype(np.int64))


@dataclass
class TailFit:
    fit: PowerLawFit
    band: tuple | None
    drift: float  # slope(upper half of grid) - slope(lower half)
    drift_stderr: float
    slope_stderr: float = math.nan  # bootstrap; fit.stderr ignores correlation

    @property
    def in_band(self) -> bool:
        return self.band is not None and self.fit.within(*self.band)

    @property
    def power_law_consistent(self) -> bool:
        """Slopes fitted on the two halves of the grid agree within 3 stderr."""
        return abs(self.drift) <= 3.0 * self.drift_stderr


TAIL_BOOTSTRAP = 400


def _slopes(x, Y):
    """Least-squares slopes of each column of Y against x."""
    xc = x - x.mean()
    return (xc @ (Y - Y.mean(axis=0))) / (xc @ xc)


def _tail_bootstrap(tail: TailCurve, sel, half: int, reps: int, seed: int):
    """Multinomial bootstrap of (overall slope, drift) over the grid cells.

    Survival values at different n share samples, so regression standard
    errors understate the uncertainty; resampling the cell counts
    (-inf, n_0], (n_0, n_1], ..., (n_last, inf) keeps that correlation.
    """
    total = int(tail.samples)
    ex = np.asarray(tail.exceed, dtype=np.int64)
    counts = np.concatenate([[total - ex[0]], -np.diff(ex), [ex[-1]]])
    rng = stream(seed, "returns", 2_000_000)
    draws = rng.multinomial(total, counts / total, size=reps)
    boot = total - np.cumsum(draws, axis=1)[:, :-1]
    Y = np.log(np.maximum(boot[:, sel], 0.5) / total).T
    x = np.log(tail.n[sel].astype(float))
    slope = _slopes(x, Y)
    drift = _slopes(x[half:], Y[half:]) - _slopes(x[:half + 1], Y[:half + 1])
    return float(slope.std(ddof=1)), float(drift.std(ddof=1))


def tail_exponent_fit(tail: TailCurve, n_min: float, band=None, min_points: int = 10,
                      min_exceed: int = 100, n_max: float = math.inf,
                      reps: int = TAIL_BOOTSTRAP, seed: int = 0) -> TailFit:
    """Log-log slope of the survival curve over grid points n >= n_min that
    carry at least ``min_exceed`` exceedances.

    ``drift`` compares slopes on the two halves of the selected points; its
    standard error and ``slope_stderr`` come from a multinomial bootstrap.
    """
    sel = (tail.n >= n_min) & (tail.n <= n_max) & (tail.exceed >= min_exceed)
    if sel.sum() < min_points:
        raise InsufficientDataError(
            f"{int(sel.sum())} grid points with >= {min_exceed} exceedances beyond "
            f"n = {n_min:g}; need {min_points}")
    pts = np.column_stack([tail.n[sel], tail.survival[sel]])
    fit = fit_power_law(pts)
    half = len(pts) // 2
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    drift = _slopes(x[half:], y[half:]) - _slopes(x[:half + 1], y[:half + 1])
    slope_se, drift_se = _tail_bootstrap(tail, np.nonzero(sel)[0], half, reps, seed)
    return TailFit(fit, band, float(drift), drift_se, slope_se)


def tail_band(gamma: float, gamma_prime: float, slack: float = 0.5):
    return (-(gamma - 1.0) - slack, -(gamma_prime - 1.0) + slack)


# ---------------------------------------------------------------------------
# composition counting
# ---------------------------------------------------------------------------

def composition_count(k: int, p: int) -> int:
    """Number of ways to write k as an ordered sum of p positive integers."""
    if not (1 <= p <= k):
        raise ValueError(f"need 1 <= p <= k, got k={k}, p={p}")
    return math.comb(k - 1, p - 1)


def compositions(k: int, p: int):
    """Enumerate compositions of k into p positive parts (brute force)."""
    if p == 1:
        yield (k,)
        return
    for first in range(1, k - p + 2):
        for rest in compositions(k - first, p - 1):
            yield (first,) + rest


def composition_census(k: int) -> np.ndarray:
    """Counts of compositions of k by number of parts, by enumeration.

    Every composition of k is visited once as its set of cut points, a
    bitmask over the k - 1 gaps; entry p of the result counts those with p
    parts (entry 0 is unused).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    masks = np.arange(1 << (k - 1), dtype=np.uint32)
    cuts = np.zeros(masks.shape, dtype=np.int64)
    for bit in range(k - 1):
        cuts += (masks >> np.uint32(bit)) & np.uint32(1)
    return np.bincount(cuts + 1, minlength=k + 1)


def word_count_bound(n: int, k: int, p: int) -> int:
    """p^2 4^p C(k-1, p-1) C(n-k-1, p), exact."""
    return p * p * 4 ** p * math.comb(k - 1, p - 1) * math.comb(n - k - 1, p)


@dataclass
class CountingReport:
    checked: int = 0
    rejected: int = 0
    violations: list = field(default_factory=list)
    worst_log_margin: float = -math.inf  # max of log(lhs) - eps0 (n - k)

    @property
    def ok(self) -> bool:
        return not self.violations


def counting_bound_check(n_max: int, Q: int, eps0: float, n_min: int = 2) -> CountingReport:
    """Check p^2 4^p C(k-1,p-1) C(n-k-1,p) <= exp(eps0 (n-k)) over all
    1 <= p <= k < n <= n_max; triples violating p + 1 < (n - k)/Q are rejected.

    The exponential is evaluated in 60-digit decimal arithmetic.
    """
    rep = CountingReport()
    with localcontext() as ctx:
        ctx.prec = 60
        e0 = Decimal(repr(eps0))
        for n in range(n_min, n_max + 1):
            for k in range(1, n):
                rhs = (e0 * (n - k)).exp()
                for p in range(1, k + 1):
                    if not (p + 1) * Q < n - k:
                        rep.rejected += 1
                        continue
                    lhs = word_count_bound(n, k, p)
                    rep.checked += 1
                    if lhs > 0:
                        rep.worst_log_margin = max(rep.worst_log_margin,
                                                   math.log(lhs) - eps0 * (n - k))
                    if Decimal(lhs) > rhs:
                        rep.violations.append((n, k, p))
    return rep


__all__ = [
    "BaseRect", "CountingReport", "ReturnSample", "StatisticalWarning", "TailCurve", "TailFit",
    "avoidance_horizon", "binomial_interval", "composition_census", "composition_count",
    "compositions",
    "counting_bound_check", "default_grid", "sample_first_returns", "tail_band",
    "tail_exponent_fit", "word_count_bound",
]

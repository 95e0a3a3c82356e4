"""Observables, correlation functions, Green-Kubo variance, CLT and large
deviation estimates along orbits of f (or G).

Orbits start from samples of the invariant measure, so every time average is
a stationary estimator: ``approx`` mode iterates f from rho-distributed
points, ``exact`` mode iterates G from their phi-images, which are
distributed by the G-invariant measure q dm / q0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats

from . import _kernels as K
from .bounds import InsufficientDataError, PowerLawFit, fit_power_law
from .core import FIXED_POINTS, MODES, SlowdownModel
from .parallel import map_ordered
from .rng import chunk_sizes, stream

ORBIT_MODES = {"approx": "f", "exact": "G"}
COVERING_RADIUS = math.sqrt(2.0) / 4.0  # every point is this close to some x_i
EVAL_CHUNK = 1 << 20


class DegenerateObservableError(ValueError):
    """The requested observable vanishes almost everywhere."""


class InconsistencyError(ArithmeticError):
    """An estimate contradicts a constraint by more than its uncertainty."""


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def _torus_delta(a, b):
    d = a - b
    return d - np.floor(d + 0.5)


def _smooth_step(t):
    """C-infinity ramp: 0 for t <= 1, 1 for t >= 2."""
    t = np.asarray(t, dtype=float)
    a = np.clip(t - 1.0, 0.0, 1.0)
    b = np.clip(2.0 - t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        ga = np.where(a > 0, np.exp(-1.0 / np.where(a > 0, a, 1.0)), 0.0)
        gb = np.where(b > 0, np.exp(-1.0 / np.where(b > 0, b, 1.0)), 0.0)
    return ga / (ga + gb)


def fixed_point_cutoff(xs, ys, radius: float):
    """Product of radial ramps: 0 within ``radius`` of each fixed point, 1
    beyond ``2 * radius``."""
    out = np.ones(np.shape(xs))
    for px, py in FIXED_POINTS:
        d = np.hypot(_torus_delta(xs, px), _torus_delta(ys, py))
        out = out * _smooth_step(d / radius)
    return out


@dataclass(frozen=True)
class Observable:
    """Real function on the torus, evaluated on coordinate arrays.

    ``holder_exponent`` and ``norm`` describe the Hoelder class the function
    is certified to lie in (norm = bound on the Hoelder constant).
    """

    name: str
    fn: Callable
    holder_exponent: float = 1.0
    norm: float = math.nan
    cutoff: float = 0.0
    shift: float = 0.0

    def __call__(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        return self.fn(xs, ys) - self.shift

    def centered(self, mean: float) -> "Observable":
        """Mean-zero variant: subtract ``mean`` (usually the invariant mean)."""
        return replace(self, name=f"{self.name}-centered", shift=self.shift + mean)


def _trig(terms, const):
    terms = [(int(kx), int(ky), float(a), float(b)) for kx, ky, a, b in terms]

    def fn(xs, ys):
        out = np.full(np.shape(xs), float(const))
        for kx, ky, a, b in terms:
            arg = 2.0 * math.pi * (kx * xs + ky * ys)
            if a:
                out = out + a * np.cos(arg)
            if b:
                out = out + b * np.sin(arg)
        return out

    sup = abs(const) + sum(abs(a) + abs(b) for _, _, a, b in terms)
    lip = sum(2.0 * math.pi * math.hypot(kx, ky) * (abs(a) + abs(b)) for kx, ky, a, b in terms)
    return fn, sup, lip


# sup of the ramp derivative d/dt smooth_step on [1, 2]
_RAMP_SLOPE = float(np.max(np.gradient(_smooth_step(np.linspace(1, 2, 20001)),
                                       np.linspace(1, 2, 20001))))


def make_observable(kind: str, terms, const: float = 0.0, radius: float | None = None,
                    model: SlowdownModel | None = None, name: str | None = None) -> Observable:
    """Trigonometric polynomial ``const + sum a cos(2 pi k.x) + b sin(2 pi k.x)``.

    ``terms`` is a list of (kx, ky, a, b).  ``kind="bump-cutoff"`` multiplies
    by ``fixed_point_cutoff``; the radius defaults to ``2 sqrt(r0)``.
    """
    fn, sup, lip = _trig(terms, const)
    label = name or kind
    if kind == "trig":
        return Observable(label, fn, 1.0, lip)
    if kind != "bump-cutoff":
        raise ValueError(f"unknown observable kind {kind!r}")
    if radius is None:
        if model is None:
            raise ValueError("bump-cutoff needs a radius or a model")
        radius = 2.0 * math.sqrt(model.params.r0)
    if radius <= 0:
        raise ValueError("cutoff radius must be positive")
    if radius >= COVERING_RADIUS:
        raise DegenerateObservableError(
            f"cutoff radius {radius:g} >= {COVERING_RADIUS:.4f}: observable vanishes a.e.")

    def cut(xs, ys):
        return fn(xs, ys) * fixed_point_cutoff(xs, ys, radius)

    return Observable(label, cut, 1.0, lip + sup * _RAMP_SLOPE / radius, radius)


def coboundary_observable(model: SlowdownModel, g: Observable, mode: str = "approx") -> Observable:
    """``g o T - g`` for T = f (approx) or G (exact)."""
    kmode = ORBIT_MODES[mode]

    def fn(xs, ys):
        fx, fy = model.map_array(np.ravel(xs), np.ravel(ys), kmode)
        return (g(fx, fy) - g(np.ravel(xs), np.ravel(ys))).reshape(np.shape(xs))

    return Observable(f"coboundary({g.name})", fn, g.holder_exponent, math.nan, g.cutoff)


# ---------------------------------------------------------------------------
# invariant measure
# ---------------------------------------------------------------------------

def _grid(n):
    t = (np.arange(n) + 0.5) / n
    return np.meshgrid(t, t, indexing="ij")


def invariant_mean(model: SlowdownModel, h: Observable, grid: int = 1024,
                   mode: str = "approx") -> float:
    """Midpoint-rule mean of h under rho dm (approx) or q dm (exact)."""
    X, Y = _grid(grid)
    X, Y = X.ravel(), Y.ravel()
    num = den = 0.0
    for i in range(0, X.size, EVAL_CHUNK):
        xs, ys = X[i:i + EVAL_CHUNK], Y[i:i + EVAL_CHUNK]
        w = model.rho_array(xs, ys) if mode == "approx" else model.q_density_array(xs, ys)
        num += float(np.dot(w, h(xs, ys)))
        den += float(w.sum())
    return num / den


def invariant_exceedance(model: SlowdownModel, h: Observable, eps: float, mean: float,
                         grid: int = 1024, mode: str = "approx") -> float:
    """Invariant measure of {|h - mean| > eps} by midpoint quadrature."""
    X, Y = _grid(grid)
    xs, ys = X.ravel(), Y.ravel()
    w = model.rho_array(xs, ys) if mode == "approx" else model.q_density_array(xs, ys)
    return float(np.dot(w, np.abs(h(xs, ys) - mean) > eps) / w.sum())


def invariant_sample(model: SlowdownModel, rng: np.random.Generator, n: int,
                     mode: str = "approx"):
    """n points of the f-invariant (approx) or G-invariant (exact) measure.

    rho takes two values, so rejection sampling is exact.  f = phi G phi^-1
    and phi pushes q dm to rho dm, so G-samples are phi^-1 of f-samples.
    """
    top = max(1.0, 1.0 / model.chart_c) if model.params.slowed else 1.0
    xs = np.empty(0)
    ys = np.empty(0)
    while xs.size < n:
        m = int(1.1 * (n - xs.size)) + 16
        cx, cy = rng.random(m), rng.random(m)
        keep = rng.random(m) * top < model.rho_array(cx, cy)
        xs = np.concatenate([xs, cx[keep]])
        ys = np.concatenate([ys, cy[keep]])
    xs, ys = xs[:n].copy(), ys[:n].copy()
    if mode == "exact":
        xs, ys = K.phi_points(xs, ys, model.P, True)
    return xs, ys


def _orbit_values(model, x, y, length, mode, observables):
    """Values of each observable on x, T x, ..., T^(length-1) x."""
    kmode = MODES[ORBIT_MODES[mode]]
    out = [np.empty(length) for _ in observables]
    pos = 0
    while pos < length:
        k = min(EVAL_CHUNK, length - pos)
        xs, ys, status = K.trajectory(x, y, k, model.P, kmode)
        if status != K.OK:
            raise ArithmeticError(f"orbit failed after {pos + len(xs) - 1} steps")
        for arr, h in zip(out, observables):
            arr[pos:pos + k] = h(xs[:k], ys[:k])
        x, y = xs[k], ys[k]
        pos += k
    return out


# ---------------------------------------------------------------------------
# correlations
# ---------------------------------------------------------------------------

def _lagged(a, b, n):
    """Mean of a[k + n] b[k] over valid k; n < 0 reflects to (b, a, -n)."""
    if n < 0:
        return _lagged(b, a, -n)
    L = len(a)
    return float(np.dot(a[n:], b[:L - n])) / (L - n)


def lagged_correlations(a, b, lags):
    """Cor_n estimates sum_k a_{k+n} b_k / (L - |n|) - mean(a) mean(b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    prod = float(np.mean(a)) * float(np.mean(b))
    return np.array([_lagged(a, b, int(n)) - prod for n in lags])


@dataclass
class CorrelationSeries:
    lags: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    per_replica: np.ndarray  # (replicas, len(lags))
    orbit_length: int
    mode: str
    means: tuple = (math.nan, math.nan)
    seed: int | None = None

    @classmethod
    def from_replicas(cls, lags, per_replica, orbit_length, mode, means=(math.nan, math.nan),
                      seed=None) -> "CorrelationSeries":
        per_replica = np.atleast_2d(np.asarray(per_replica, dtype=float))
        r = per_replica.shape[0]
        se = per_replica.std(axis=0, ddof=1) / math.sqrt(r) if r > 1 \
            else np.full(per_replica.shape[1], math.nan)
        return cls(np.asarray(lags), per_replica.mean(axis=0), se, per_replica,
                   int(orbit_length), mode, means, seed)

    @property
    def inconclusive(self) -> bool:
        """No lag n >= 1 where the estimate exceeds its standard error."""
        sel = self.lags >= 1
        return not np.any(np.abs(self.values[sel]) > self.stderr[sel])

    def rows(self):
        return [dict(lag=int(n), corr=float(c), stderr=float(s))
                for n, c, s in zip(self.lags, self.values, self.stderr)]


def geometric_lags(max_lag: int) -> np.ndarray:
    """1, 2, 4, ... up to max_lag."""
    return 2 ** np.arange(int(math.log2(max_lag)) + 1)


def correlation_estimate(model: SlowdownModel, h1: Observable, h2: Observable, lags,
                         orbit_length: int, replicas: int, seed: int,
                         mode: str = "approx") -> CorrelationSeries:
    """Time-average correlation estimates on ``replicas`` independent orbits.

    Every replica starts at its own invariant sample (stream chunk = replica
    index); the standard error is the spread of the replica estimates.
    """
    lags = np.asarray(lags, dtype=np.int64)
    if orbit_length < 100 * int(np.abs(lags).max()):
        raise ValueError("orbit_length must be at least 100 * max(|lag|)")
    if replicas < 2:
        raise ValueError("need at least 2 replicas for error bars")
    same = h1 is h2

    def work(r):
        rng = stream(seed, "correlations", r)
        x, y = invariant_sample(model, rng, 1, mode)
        obs = [h1] if same else [h1, h2]
        vals = _orbit_values(model, x[0], y[0], orbit_length, mode, obs)
        a = vals[0]
        b = a if same else vals[1]
        return lagged_correlations(a, b, lags), float(a.mean()), float(b.mean())

    parts = map_ordered(work, range(replicas))
    per = np.array([p[0] for p in parts])
    means = (float(np.mean([p[1] for p in parts])), float(np.mean([p[2] for p in parts])))
    return CorrelationSeries.from_replicas(lags, per, orbit_length, mode, means, seed)


def correlation_band(gamma: float, gamma_prime: float, slack: float = 0.6):
    return (-(gamma - 2.0) - slack, -(gamma_prime - 2.0) + slack)


@dataclass
class DecayFit:
    fit: PowerLawFit | None
    used_lags: np.ndarray
    band: tuple | None
    reason: str | None = None

    @property
    def in_band(self) -> bool:
        return self.fit is not None and self.band is not None and self.fit.within(*self.band)


def decay_fit(series: CorrelationSeries, n_min: int = 8, z: float = 3.0,
              band=None) -> DecayFit:
    """Log-log slope of Cor_n over lags n >= n_min where Cor_n > z * stderr."""
    sel = (series.lags >= n_min) & (series.values > z * series.stderr)
    used = series.lags[sel]
    try:
        fit = fit_power_law(np.column_stack([used, series.values[sel]]))
        return DecayFit(fit, used, band)
    except InsufficientDataError as exc:
        return DecayFit(None, used, band, f"inconclusive: {exc}")


@dataclass
class SummabilityReport:
    blocks: list  # dicts: lo, hi, signed, signed_se, absolute, noise
    converged: bool


def summability_check(series: CorrelationSeries, n0: int = 8, z: float = 3.0) -> SummabilityReport:
    """Dyadic increments of the partial sums of Cor_n beyond n0.

    Needs consecutive lags.  A block (N, 2N] passes when the signed increment
    is within z standard errors of zero (replica spread) and the absolute
    increment sum |Cor_n| does not exceed sum z * stderr_n, i.e. the tail of
    the series carries no mass above the noise floor.
    """
    lags = series.lags
    if not np.array_equal(lags, np.arange(lags[0], lags[0] + len(lags))):
        raise ValueError("summability needs consecutive lags")
    blocks = []
    ok = True
    N = n0
    while 2 * N <= lags[-1]:
        sel = (lags > N) & (lags <= 2 * N)
        per = series.per_replica[:, sel].sum(axis=1)
        signed = float(per.mean())
        se = float(per.std(ddof=1) / math.sqrt(len(per)))
        absolute = float(np.abs(series.values[sel]).sum())
        noise = float(z * series.stderr[sel].sum())
        passed = abs(signed) <= z * se and absolute <= noise
        ok &= passed
        blocks.append(dict(lo=int(N), hi=int(2 * N), signed=signed, signed_se=se,
                           absolute=absolute, noise=noise, passed=bool(passed)))
        N *= 2
    if not blocks:
        raise InsufficientDataError("lag range too short for a dyadic block beyond n0")
    return SummabilityReport(blocks, bool(ok))


# ---------------------------------------------------------------------------
# Green-Kubo variance and CLT
# ---------------------------------------------------------------------------

@dataclass
class GreenKubo:
    sigma2: float
    stderr: float
    cutoff: int
    tail_bound: float

    @property
    def sigma(self) -> float:
        return math.sqrt(max(self.sigma2, 0.0))

    @property
    def consistent_with_zero(self) -> bool:
        return abs(self.sigma2) <= 3.0 * self.stderr


def green_kubo_sigma(series: CorrelationSeries, decay_slope: float | None = None,
                     z: float = 3.0) -> GreenKubo:
    """sigma^2 = Cor_0 + 2 sum_{n=1}^{N} Cor_n of an autocorrelation series.

    The lags must be 0..N.  With a fitted decay slope s < -1 the neglected
    tail is bounded by |Cor_N| N / (|s| - 1) (integral comparison), doubled.
    """
    lags = series.lags
    if lags[0] != 0 or not np.array_equal(lags, np.arange(len(lags))):
        raise ValueError("Green-Kubo needs lags 0..N")
    w = np.full(len(lags), 2.0)
    w[0] = 1.0
    per = series.per_replica @ w
    s2 = float(per.mean())
    se = float(per.std(ddof=1) / math.sqrt(len(per)))
    N = int(lags[-1])
    tail = math.nan
    if decay_slope is not None and decay_slope < -1.0:
        tail = 2.0 * abs(float(series.values[-1])) * N / (abs(decay_slope) - 1.0)
    if s2 < -z * se:
        raise InconsistencyError(f"negative sigma^2 = {s2:.4g} (stderr {se:.2g})")
    return GreenKubo(s2, se, N, tail)


@dataclass
class CLTResult:
    ks: float
    pvalue: float
    sigma: float
    green_kubo: GreenKubo
    sums: np.ndarray = field(repr=False)
    degenerate: bool = False


def birkhoff_sums(model: SlowdownModel, h: Observable, count: int, length: int, seed: int,
                  mode: str = "approx", stream_name: str = "clt", chunk: int = 64):
    """Sums of h over ``length`` steps of ``count`` independent invariant orbits."""
    return cumulative_sums(model, h, count, [length], seed, mode, stream_name, chunk)[:, 0]


def cumulative_sums(model: SlowdownModel, h: Observable, count: int, checkpoints, seed: int,
                    mode: str = "approx", stream_name: str = "clt", chunk: int = 64):
    """Partial sums sum_{i<n} h(T^i x) at every n in ``checkpoints``."""
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    n_max = int(checkpoints.max())
    kmode = MODES[ORBIT_MODES[mode]]

    def work(args):
        c, size = args
        rng = stream(seed, stream_name, c)
        x0, y0 = invariant_sample(model, rng, size, mode)
        X, Y, status = K.trajectories(x0, y0, n_max - 1, model.P, kmode)
        if status != K.OK:
            raise ArithmeticError("orbit failed in cumulative_sums")
        vals = h(X, Y)
        cs = np.cumsum(vals, axis=1)
        return cs[:, checkpoints - 1]

    tasks = list(enumerate(chunk_sizes(count, chunk)))
    return np.concatenate(map_ordered(work, tasks), axis=0)


def clt_test(model: SlowdownModel, h: Observable, orbit_count: int, orbit_length: int,
             seed: int, mode: str = "approx", gk: GreenKubo | None = None,
             gk_lags: int = 64, gk_length: int = 1 << 21, gk_replicas: int = 16) -> CLTResult:
    """Kolmogorov-Smirnov test of S_N / sqrt(N) against Normal(0, sigma).

    sigma comes from a Green-Kubo estimate on independent orbits (its own
    seed stream) unless ``gk`` is given.  h must be mean-zero.
    """
    if gk is None:
        series = correlation_estimate(model, h, h, np.arange(gk_lags + 1), gk_length,
                                      gk_replicas, seed + 1_000_003, mode)
        gk = green_kubo_sigma(series)
    sums = birkhoff_sums(model, h, orbit_count, orbit_length, seed, mode)
    z = sums / math.sqrt(orbit_length)
    degenerate = gk.consistent_with_zero
    if gk.sigma > 0:
        res = stats.kstest(z, "norm", args=(0.0, gk.sigma))
        ks, p = float(res.statistic), float(res.pvalue)
    else:
        ks, p = math.nan, math.nan
    return CLTResult(ks, p, gk.sigma, gk, z, degenerate)


# ---------------------------------------------------------------------------
# large deviations
# ---------------------------------------------------------------------------

@dataclass
class LDPResult:
    n: np.ndarray
    probability: np.ndarray
    exceed: np.ndarray
    samples: int
    eps: float
    mean: float
    fit: PowerLawFit | None
    band: tuple
    reason: str | None = None

    @property
    def decreasing(self) -> bool:
        """No increase between consecutive grid points beyond 2 joint
        binomial standard errors, and a net decrease over the grid."""
        p = self.probability
        se = np.sqrt(p * (1 - p) / self.samples)
        jump = np.diff(p) - 2.0 * np.hypot(se[1:], se[:-1])
        return bool(np.all(jump <= 0) and p[-1] < p[0])

    @property
    def beta_hat(self) -> float:
        return -self.fit.slope if self.fit is not None else math.nan

    @property
    def in_band(self) -> bool:
        return self.fit is not None and self.band[0] <= self.beta_hat <= self.band[1]

    def rows(self):
        return [dict(n=int(n), probability=float(p), exceedances=int(k))
                for n, p, k in zip(self.n, self.probability, self.exceed)]


def ldp_band(gamma_prime: float):
    return (gamma_prime - 2.0 - 0.5, gamma_prime - 2.0 + 1.0)


def ldp_estimate(model: SlowdownModel, h: Observable, eps: float, n_grid, samples: int,
                 seed: int, mode: str = "approx", mean: float | None = None,
                 min_exceed: int = 100, gamma_prime: float | None = None) -> LDPResult:
    """Fraction of invariant start points whose n-step average of h deviates
    from the invariant mean by more than eps, for each n in n_grid."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    n_grid = np.asarray(n_grid, dtype=np.int64)
    if mean is None:
        mean = invariant_mean(model, h, mode=mode)
    if gamma_prime is None:
        from .bounds import exponent_values
        p = model.params
        gamma_prime = exponent_values(p.alpha, p.mu, p.r0).gamma_prime
    sums = cumulative_sums(model, h, samples, n_grid, seed, mode, "ldp")
    exceed = (np.abs(sums / n_grid[None, :] - mean) > eps).sum(axis=0)
    prob = exceed / samples
    sel = exceed >= min_exceed
    fit, reason = None, None
    try:
        fit = fit_power_law(np.column_stack([n_grid[sel], prob[sel]]))
    except InsufficientDataError as exc:
        reason = f"one-sided only: {exc}"
    return LDPResult(n_grid, prob, exceed, samples, eps, mean, fit, ldp_band(gamma_prime), reason)


__all__ = [
    "CLTResult", "CorrelationSeries", "DecayFit", "DegenerateObservableError", "GreenKubo",
    "InconsistencyError", "LDPResult", "Observable", "SummabilityReport", "birkhoff_sums",
    "clt_test", "coboundary_observable", "correlation_band", "correlation_estimate",
    "cumulative_sums", "decay_fit", "fixed_point_cutoff", "geometric_lags", "green_kubo_sigma",
    "invariant_exceedance", "invariant_mean", "invariant_sample", "lagged_correlations",
    "ldp_band", "ldp_estimate", "make_observable", "summability_check",
]

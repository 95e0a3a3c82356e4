"""Acceptance criteria, one test each, at the stated tolerances and sizes.

Every test prints one ``criterion N: PASS|FAIL`` line (collected again in the
terminal summary) before asserting.  Run with ``pytest -m acceptance -s``.
"""

import math
import os
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from slowdown import _kernels as K
from slowdown import bounds as B
from slowdown import mixing as X
from slowdown import returns as R
from slowdown.cli import carrier_checks, generic_observable
from slowdown.core import FIXED_POINTS, TorusPoint
from slowdown.params import LOG_LAMBDA
from slowdown.rng import stream
from slowdown.torus import apply_A_array, lyapunov_estimate

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

SEED = 20240601


def _min_image(d):
    return d - np.floor(d + 0.5)


def _linear_path_min_u(model, xs, ys):
    """Smallest u = s1^2 + s2^2 reached by the unit-time linear flow started
    at each point, over all four charts (nearest image)."""
    best = np.full(len(xs), np.inf)
    for fx, fy in FIXED_POINTS:
        _, s1, s2 = model.local_coords(np.mod(_min_image(xs - fx) + fx, 1.0),
                                       np.mod(_min_image(ys - fy) + fy, 1.0))
        # along the flow s1 -> s1 lam^t, s2 -> s2 lam^-t; u is convex in lam^2t
        a, b = s1 * s1, s2 * s2
        e = np.clip(np.sqrt(np.where(a > 0, b / np.where(a > 0, a, 1.0), np.inf)),
                    1.0, math.exp(2 * LOG_LAMBDA))
        best = np.minimum(best, a * e + b / e)
    return best


def _outside_charts(model, xs, ys):
    _, s1, s2 = model.local_coords(xs, ys)
    return s1 * s1 + s2 * s2 > model.params.chart_radius ** 2


def test_c1_construction_exactness(model, criterion):
    model.map_array(np.array([0.3]), np.array([0.1]))  # compile outside the timer
    rng = stream(SEED, 101)
    t0 = time.perf_counter()
    xs, ys = np.empty(0), np.empty(0)
    while len(xs) < 1000:
        cx, cy = rng.random(4000), rng.random(4000)
        ax, ay = apply_A_array(cx, cy)
        keep = (_outside_charts(model, cx, cy) & _outside_charts(model, ax, ay)
                & (_linear_path_min_u(model, cx, cy) > model.params.r0))
        xs, ys = np.concatenate([xs, cx[keep]]), np.concatenate([ys, cy[keep]])
    xs, ys = xs[:1000], ys[:1000]
    fx, fy = model.map_array(xs, ys)
    ax, ay = apply_A_array(xs, ys)
    err = float(np.hypot(_min_image(fx - ax), _min_image(fy - ay)).max())
    fixed = max(float(np.hypot(*_min_image(np.array(model.map_f(TorusPoint(*p)).as_array())
                                           - p))) for p in FIXED_POINTS)
    elapsed = time.perf_counter() - t0
    ok = err <= 1e-9 and fixed <= 1e-12 and elapsed < 1.0
    criterion(1, ok, f"max|f-A|={err:.2e} fixed={fixed:.1e} time={elapsed:.2f}s")
    assert ok


def test_c2_conservation_and_area(model, criterion):
    p = model.params
    rng = stream(SEED, 102)
    model.flow_samples(0.001, 0.001, [1.0])
    t0 = time.perf_counter()
    # slow-region starts: u < r0, rejecting the fixed point itself
    r = np.sqrt(p.r0) * np.sqrt(rng.uniform(1e-6, 1.0, 1000))
    th = rng.uniform(0, 2 * math.pi, 1000)
    drift = 0.0
    for s1, s2 in zip(r * np.cos(th), r * np.sin(th)):
        end = model.flow_samples(s1, s2, [1.0])[-1]
        drift = max(drift, abs(end[0] * end[1] - s1 * s2) / abs(s1 * s2))
    # Jacobian: half uniform on the torus, half inside the charts
    xs, ys = rng.random(1000), rng.random(1000)
    k = rng.integers(0, 4, 500)
    rr = p.chart_radius * np.sqrt(rng.random(500))
    tt = rng.uniform(0, 2 * math.pi, 500)
    xs[:500] = np.mod(FIXED_POINTS[k, 0] + rr * np.cos(tt), 1.0)
    ys[:500] = np.mod(FIXED_POINTS[k, 1] + rr * np.sin(tt), 1.0)
    fx, fy, J = model.map_array_jac(xs, ys)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    expected = model.rho_array(xs, ys) / model.rho_array(fx, fy)
    det_err = float(np.abs(det - expected).max())
    # phi round trip on chart points
    bx, by = K.phi_points(*K.phi_points(xs[:500], ys[:500], model.P, False), model.P, True)
    trip = float(np.hypot(_min_image(bx - xs[:500]), _min_image(by - ys[:500])).max())
    elapsed = time.perf_counter() - t0
    ok = drift <= 1e-9 and det_err <= 1e-6 and trip <= 1e-10 and elapsed < 10
    criterion(2, ok, f"s1s2 rel drift={drift:.1e} det err={det_err:.1e} "
                     f"phi trip={trip:.1e} time={elapsed:.1f}s")
    assert ok


def test_c3_lyapunov(model, criterion):
    t0 = time.perf_counter()
    res = lyapunov_estimate(model, None, 10 ** 7, seed=SEED)
    elapsed = time.perf_counter() - t0
    ok = 0.9 * LOG_LAMBDA <= res.chi <= LOG_LAMBDA and elapsed < 120
    criterion(3, ok, f"chi={res.chi:.5f}+-{res.stderr:.1e} band=[{0.9 * LOG_LAMBDA:.4f}, "
                     f"{LOG_LAMBDA:.4f}] time={elapsed:.1f}s")
    assert ok


def test_c4_bound_suites(model, criterion):
    t0 = time.perf_counter()
    env = B.envelope_suite(model, 220, SEED)
    delta = B.delta_suite(model, 320, SEED)
    ratio = B.ratio_experiment(model, 600, SEED)
    elapsed = time.perf_counter() - t0
    slope = ratio.fit.slope if ratio.fit else math.nan
    ok = (env.accepted >= 200 and env.total_violations == 0
          and delta.accepted >= 200 and delta.total_violations == 0
          and ratio.in_band and elapsed < 300)
    bad = {k: v for k, v in delta.violations.items() if v}
    criterion(4, ok, f"envelope {env.accepted} ok/{env.total_violations} viol; "
                     f"delta {delta.accepted} ok/{delta.total_violations} viol {bad}; "
                     f"ratio slope={slope:.3f} band=({ratio.band[0]:.3f}, "
                     f"{ratio.band[1]:.3f}) time={elapsed:.0f}s")
    assert ok


def test_c5_tail_bracketing(model, criterion):
    p = model.params
    e = B.exponent_values(p.alpha, p.mu, p.r0)
    band = R.tail_band(e.gamma, e.gamma_prime)
    base = R.BaseRect.build(model)
    t0 = time.perf_counter()
    fits, notes = {}, []
    for mode in ("approx", "exact"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", R.StatisticalWarning)
            s = R.sample_first_returns(model, base, 10 ** 6, SEED, mode)
        tail = R.TailCurve.from_sample(s, R.default_grid())
        try:
            fits[mode] = R.tail_exponent_fit(tail, 100, band, n_max=1e4)
            f = fits[mode]
            notes.append(f"{mode} slope={f.fit.slope:.3f}+-{f.slope_stderr:.3f} "
                         f"({f.fit.count} pts, drift {f.drift:+.2f}+-{f.drift_stderr:.2f})")
        except B.InsufficientDataError as exc:
            notes.append(f"{mode}: {exc}")
    elapsed = time.perf_counter() - t0
    ok = len(fits) == 2 and all(f.in_band for f in fits.values())
    if len(fits) == 2:
        a, x = fits["approx"], fits["exact"]
        agree = (abs(a.fit.slope - x.fit.slope)
                 <= 2 * math.hypot(a.slope_stderr, x.slope_stderr))
        ok = ok and agree
        notes.append(f"agree={agree}")
    criterion(5, ok, f"{'; '.join(notes)} band=({band[0]:.4f}, {band[1]:.4f}) "
                     f"time={elapsed:.0f}s")
    assert ok


def test_c6_correlation_decay(model, criterion):
    p = model.params
    e = B.exponent_values(p.alpha, p.mu, p.r0)
    band = X.correlation_band(e.gamma, e.gamma_prime)
    h = X.make_observable("bump-cutoff", [(1, 0, 0.5, 0.0)], const=1.0, model=model)
    t0 = time.perf_counter()
    series = X.correlation_estimate(model, h, h, X.geometric_lags(1024), 1 << 22, 16, SEED)
    fit = X.decay_fit(series, band=band)
    hc = h.centered(X.invariant_mean(model, h))
    cs = X.correlation_estimate(model, hc, hc, np.arange(257), 1 << 22, 16, SEED + 1)
    summ = X.summability_check(cs)
    elapsed = time.perf_counter() - t0
    ok = fit.in_band and summ.converged and elapsed <= 1800
    slope = f"{fit.fit.slope:.3f}" if fit.fit else "none"
    criterion(6, ok, f"decay slope={slope} used lags={list(fit.used_lags)} "
                     f"band=({band[0]:.4f}, {band[1]:.4f}) {fit.reason or ''}; "
                     f"summable={summ.converged} time={elapsed:.0f}s")
    assert ok


def test_c7_clt(model, criterion):
    t0 = time.perf_counter()
    h = generic_observable()
    h = h.centered(X.invariant_mean(model, h))
    res = X.clt_test(model, h, 10 ** 4, 10 ** 4, SEED)
    g = X.make_observable("trig", [(1, 1, 1.0, 0.0)])
    cob = X.coboundary_observable(model, g)
    gk = X.green_kubo_sigma(X.correlation_estimate(model, cob, cob, np.arange(65), 1 << 21,
                                                   16, SEED + 7))
    elapsed = time.perf_counter() - t0
    ok = res.pvalue > 0.01 and gk.consistent_with_zero and elapsed <= 1200
    criterion(7, ok, f"KS p={res.pvalue:.3f} sigma={res.sigma:.4f}; coboundary "
                     f"sigma2={gk.sigma2:.2e}+-{gk.stderr:.1e} time={elapsed:.0f}s")
    assert ok


def test_c8_ldp(model, criterion):
    t0 = time.perf_counter()
    grid = np.unique(np.round(np.geomspace(10, 1000, 11)).astype(np.int64))
    res = X.ldp_estimate(model, generic_observable(), 0.05, grid, 10 ** 5, SEED)
    elapsed = time.perf_counter() - t0
    enough = bool(np.all(res.exceed >= 100))
    ok = res.decreasing and (res.in_band if enough else True) and elapsed <= 1200
    criterion(8, ok, f"decreasing={res.decreasing} beta={res.beta_hat:.3f} "
                     f"band=({res.band[0]:.3f}, {res.band[1]:.3f}) min exceed="
                     f"{int(res.exceed.min())} time={elapsed:.0f}s")
    assert ok


def test_c9_combinatorics(criterion):
    t0 = time.perf_counter()
    mismatch = [(k, q) for k in range(1, 21) for q, n in enumerate(R.composition_census(k))
                if q >= 1 and R.composition_count(k, q) != n]
    rep = R.counting_bound_check(60, 20, 0.7)
    elapsed = time.perf_counter() - t0
    ok = not mismatch and rep.ok and rep.checked > 0 and elapsed < 1.0
    criterion(9, ok, f"mismatches={len(mismatch)} counting checked={rep.checked} "
                     f"violations={len(rep.violations)} time={elapsed:.2f}s")
    assert ok


def test_c10_carrier(model, criterion):
    t0 = time.perf_counter()
    rows = carrier_checks(model, SEED)
    elapsed = time.perf_counter() - t0
    ok = all(r["passed"] for r in rows) and elapsed < 10
    criterion(10, ok, " ".join(f"{r['check']}={r['value']:.1e}" for r in rows)
              + f" time={elapsed:.1f}s")
    assert ok


CLI_RUNS = [
    ["simulate", "--steps", "2000"],
    ["tail", "--samples", "20000", "--n-max", "2000"],
    ["bounds", "--count", "40"],
    ["correlations", "--orbit-length", "20000", "--replicas", "4", "--max-lag", "64"],
    ["clt", "--samples", "400", "--steps", "500", "--orbit-length", "20000",
     "--replicas", "4"],
    ["ldp", "--samples", "4000", "--steps", "200"],
    ["carrier-check"],
]


def _run_cli(args, out, workers):
    env = dict(os.environ, SLOWDOWN_WORKERS=str(workers))
    cmd = [sys.executable, "-m", "slowdown.cli", *args, "--seed", "11", "--output", str(out),
           "--no-plots"]
    done = subprocess.run(cmd, env=env, capture_output=True, text=True, timeout=900)
    assert done.returncode == 0, done.stderr


def test_c11_reproducibility(tmp_path, criterion):
    outs = {}
    for workers in (1, 4):
        out = tmp_path / f"w{workers}"
        for args in CLI_RUNS:
            _run_cli(args, out, workers)
        outs[workers] = {name: (out / name).read_bytes()
                         for name in sorted(os.listdir(out)) if name.endswith(".csv")}
    same = outs[1].keys() == outs[4].keys() and all(outs[1][k] == outs[4][k] for k in outs[1])
    differ = [k for k in outs[1] if outs[1][k] != outs[4].get(k)]
    criterion(11, same, f"{len(outs[1])} CSV files byte-identical for 1 vs 4 workers"
              if same else f"differ: {differ}")
    assert same

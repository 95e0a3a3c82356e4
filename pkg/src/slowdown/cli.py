"""Command-line front end: ``slowdown <command> [--config FILE] [--key value ...]``.

Every command writes CSV tables, PNG figures and a JSON manifest into the
output directory and prints its summary as JSON on stdout.  Invalid input
gives a JSON error object on stderr and exit status 2.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import fields

import numpy as np

from .config import ConfigError, RunConfig, load
from .params import LOG_LAMBDA, ParameterError
from .report import Manifest, dumps, write_csv

COMMANDS = {
    "simulate": "dump an orbit of f or G",
    "lyapunov": "forward and backward Lyapunov exponent estimates",
    "bounds": "passage comparison suites and crossing length ratios",
    "tail": "first-return tail to the base rectangle",
    "correlations": "correlation decay for a pair of cutoff observables",
    "clt": "central limit test for a trigonometric observable",
    "ldp": "large deviation exceedance probabilities",
    "carrier-check": "sphere/disk chart identities and Hoelder probes",
    "exponents": "print the exponent values for alpha and mu",
    "emit-plots": "write plot scripts for the CSV files in the output directory",
}

# CSV file -> figure kind, used by emit-plots
CSV_KINDS = {
    "orbit.csv": "orbit",
    "lyapunov.csv": "lyapunov",
    "ratio_binned.csv": "ratio",
    "tail.csv": "tail",
    "correlations.csv": "correlations",
    "correlations_centered.csv": "correlations",
    "clt.csv": "clt",
    "ldp.csv": "ldp",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slowdown", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="flat 'key = value' config file")
        p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
        for f in fields(RunConfig):
            if f.name == "experiment":
                continue
            p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                           metavar=f.type.upper() if isinstance(f.type, str) else None,
                           help=f"(default {f.default!r})")
    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _model(cfg):
    from .core import SlowdownModel
    return SlowdownModel(cfg.params())


def _out(cfg, name):
    return os.path.join(cfg.output, name)


def _figure(ctx, kind, rows, name, **kw):
    if ctx["plots"]:
        from .plotting import render
        ctx["manifest"].add(render(kind, rows, _out(ctx["cfg"], name), **kw))


def cmd_simulate(cfg, ctx):
    from .core import TorusPoint
    from .rng import stream
    from .torus import orbit_arrays
    model = _model(cfg)
    x0 = TorusPoint(*stream(cfg.seed, "simulate").random(2))
    with ctx["manifest"].timed("orbit"):
        xs, ys = orbit_arrays(model, x0, cfg.steps, "f" if cfg.mode == "approx" else "G")
    rows = [dict(step=i, x=float(a), y=float(b)) for i, (a, b) in enumerate(zip(xs, ys))]
    ctx["manifest"].add(write_csv(_out(cfg, "orbit.csv"), rows, ["step", "x", "y"]))
    _figure(ctx, "orbit", rows, "orbit.png")
    return dict(start=[x0.x, x0.y], end=[float(xs[-1]), float(ys[-1])], steps=cfg.steps)


def cmd_lyapunov(cfg, ctx):
    from .torus import lyapunov_estimate
    model = _model(cfg)
    rows = []
    for direction in ("forward", "backward"):
        with ctx["manifest"].timed(direction):
            r = lyapunov_estimate(model, None, cfg.steps, cfg.seed, direction=direction)
        rows.append(dict(direction=direction, chi=r.chi, stderr=r.stderr, steps=r.steps,
                         log_lambda=LOG_LAMBDA))
    ctx["manifest"].add(write_csv(_out(cfg, "lyapunov.csv"), rows))
    _figure(ctx, "lyapunov", rows, "lyapunov.png",
            hlines={"log lambda": LOG_LAMBDA, "0.9 log lambda": 0.9 * LOG_LAMBDA})
    band = (0.9 * LOG_LAMBDA, LOG_LAMBDA)
    return dict(results=rows, band=band,
                in_band=all(band[0] <= r["chi"] <= band[1] for r in rows))


def cmd_bounds(cfg, ctx):
    from . import bounds as B
    model = _model(cfg)
    m = ctx["manifest"]
    with m.timed("envelope_suite"):
        env = B.envelope_suite(model, cfg.count, cfg.seed)
    with m.timed("delta_suite"):
        sd = B.delta_suite(model, cfg.count, cfg.seed)
    with m.timed("ratio_experiment"):
        rr = B.ratio_experiment(model, cfg.count, cfg.seed)
    m.add(write_csv(_out(cfg, "passages.csv"), env.rows))
    m.add(write_csv(_out(cfg, "pairs.csv"), sd.rows))
    m.add(write_csv(_out(cfg, "ratio.csv"), rr.rows, ["depth", "steps", "ratio"]))
    binned = [dict(steps=int(k), median_ratio=float(v), count=int(c)) for k, v, c in rr.binned]
    m.add(write_csv(_out(cfg, "ratio_binned.csv"), binned, ["steps", "median_ratio", "count"]))
    e = B.exponents_compute(cfg.params())
    slopes = {"-gamma": -e.gamma, "-gamma'": -e.gamma_prime}
    if rr.fit is not None:
        slopes["fit"] = rr.fit.slope
    _figure(ctx, "ratio", binned, "ratio.png", slopes=slopes)

    def summary(s):
        return dict(accepted=s.accepted, rejected=s.rejected, violations=s.violations,
                    worst_margins=s.worst_margins)

    return dict(envelope_suite=summary(env), delta_suite=summary(sd),
                ratio=dict(slope=rr.fit.slope if rr.fit else None,
                           stderr=rr.fit.stderr if rr.fit else None,
                           band=rr.band, in_band=rr.in_band, error=rr.error))


def cmd_tail(cfg, ctx):
    from .bounds import InsufficientDataError, exponents_compute
    from .returns import (BaseRect, TailCurve, sample_first_returns, tail_band,
                          tail_exponent_fit)
    model = _model(cfg)
    base = BaseRect.build(model)
    with ctx["manifest"].timed("returns"):
        s = sample_first_returns(model, base, cfg.samples, cfg.seed, cfg.mode, cfg.n_cap)
    grid = np.unique(np.round(np.geomspace(1, cfg.n_max, 41)).astype(np.int64))
    tail = TailCurve.from_sample(s, grid)
    ctx["manifest"].add(write_csv(_out(cfg, "tail.csv"), tail.rows(),
                                  ["n", "survival", "ci_low", "ci_high"]))
    e = exponents_compute(cfg.params())
    band = tail_band(e.gamma, e.gamma_prime)
    out = dict(Q=base.Q, samples=s.samples, censored=s.censored, errors=s.errors,
               mean_tau=float(s.tau.mean()) if len(s.tau) else None, gcd=s.gcd(), band=band)
    try:
        fit = tail_exponent_fit(tail, cfg.n_min, band, n_max=cfg.n_max)
        out.update(slope=fit.fit.slope, stderr=fit.slope_stderr, points=fit.fit.count,
                   in_band=fit.in_band, drift=fit.drift, drift_stderr=fit.drift_stderr)
        slopes = {"fit": fit.fit.slope}
    except InsufficientDataError as exc:
        out.update(slope=None, in_band=False, error=str(exc))
        slopes = {}
    slopes.update({"-(gamma-1)": -(e.gamma - 1), "-(gamma'-1)": -(e.gamma_prime - 1)})
    _figure(ctx, "tail", tail.rows(), "tail.png", slopes=slopes)
    return out


def _cutoff_pair(model):
    from .mixing import make_observable
    return make_observable("bump-cutoff", [(1, 0, 0.5, 0.0)], const=1.0, model=model,
                           name="cutoff(1 + cos(2 pi x)/2)")


def generic_observable():
    from .mixing import make_observable
    return make_observable("trig", [(1, 0, 1.0, 0.0), (0, 1, 0.0, 0.5)],
                           name="cos(2 pi x) + sin(2 pi y)/2")


def cmd_correlations(cfg, ctx):
    from . import mixing as X
    from .bounds import exponents_compute
    model = _model(cfg)
    h = _cutoff_pair(model)
    m = ctx["manifest"]
    lags = X.geometric_lags(cfg.max_lag)
    with m.timed("pair"):
        series = X.correlation_estimate(model, h, h, lags, cfg.orbit_length, cfg.replicas,
                                        cfg.seed, cfg.mode)
    e = exponents_compute(cfg.params())
    band = X.correlation_band(e.gamma, e.gamma_prime)
    fit = X.decay_fit(series, band=band)
    m.add(write_csv(_out(cfg, "correlations.csv"), series.rows(), ["lag", "corr", "stderr"]))
    hc = h.centered(X.invariant_mean(model, h, mode=cfg.mode))
    n_sum = min(cfg.max_lag, max(1, cfg.orbit_length // 100))
    with m.timed("centered"):
        cs = X.correlation_estimate(model, hc, hc, np.arange(n_sum + 1), cfg.orbit_length,
                                    cfg.replicas, cfg.seed + 1, cfg.mode)
    m.add(write_csv(_out(cfg, "correlations_centered.csv"), cs.rows(),
                    ["lag", "corr", "stderr"]))
    try:
        summ = X.summability_check(cs)
        summability = dict(converged=summ.converged, blocks=summ.blocks)
    except X.InsufficientDataError as exc:
        summability = dict(converged=None, error=str(exc))
    slopes = {"-(gamma-2)": -(e.gamma - 2), "-(gamma'-2)": -(e.gamma_prime - 2)}
    if fit.fit is not None:
        slopes["fit"] = fit.fit.slope
    _figure(ctx, "correlations", series.rows(), "correlations.png", slopes=slopes)
    return dict(observable=h.name, cutoff_radius=h.cutoff, band=band,
                slope=fit.fit.slope if fit.fit else None,
                stderr=fit.fit.stderr if fit.fit else None,
                used_lags=fit.used_lags, in_band=fit.in_band, reason=fit.reason,
                inconclusive=series.inconclusive, summability=summability)


def cmd_clt(cfg, ctx):
    from . import mixing as X
    model = _model(cfg)
    h = generic_observable()
    h = h.centered(X.invariant_mean(model, h, mode=cfg.mode))
    with ctx["manifest"].timed("clt"):
        r = X.clt_test(model, h, cfg.samples, cfg.steps, cfg.seed, cfg.mode,
                       gk_length=cfg.orbit_length, gk_replicas=cfg.replicas)
    rows = [dict(index=i, z=float(z)) for i, z in enumerate(r.sums)]
    ctx["manifest"].add(write_csv(_out(cfg, "clt.csv"), rows, ["index", "z"]))
    _figure(ctx, "clt", rows, "clt.png")
    return dict(observable=h.name, ks=r.ks, pvalue=r.pvalue, sigma=r.sigma,
                sigma2=r.green_kubo.sigma2, sigma2_stderr=r.green_kubo.stderr,
                degenerate=r.degenerate, passed=bool(r.pvalue > 0.01))


def cmd_ldp(cfg, ctx):
    from . import mixing as X
    model = _model(cfg)
    h = generic_observable()
    grid = np.unique(np.round(np.geomspace(10, cfg.steps, 11)).astype(np.int64))
    with ctx["manifest"].timed("ldp"):
        r = X.ldp_estimate(model, h, cfg.eps, grid, cfg.samples, cfg.seed, cfg.mode)
    ctx["manifest"].add(write_csv(_out(cfg, "ldp.csv"), r.rows(),
                                  ["n", "probability", "exceedances"]))
    slopes = {"fit": r.fit.slope} if r.fit else {}
    _figure(ctx, "ldp", r.rows(), "ldp.png", slopes=slopes)
    return dict(observable=h.name, eps=cfg.eps, mean=r.mean, decreasing=r.decreasing,
                beta_hat=r.beta_hat if r.fit else None, band=r.band, in_band=r.in_band,
                reason=r.reason)


def carrier_checks(model, seed=0, n=1000):
    """Rows (check, value, tolerance, passed) for the chart identities."""
    from . import carrier as C
    from .rng import stream
    alpha = model.params.alpha
    kappa = alpha / (1 - alpha)
    rng = stream(seed, "carrier", 1)
    s = rng.uniform(-0.2, 0.2, (n, 2))
    a, b = C.phi1_local(s[:, 0], s[:, 1])
    r = np.sqrt(rng.uniform(1e-4, 0.98, n))
    th = rng.uniform(0, 2 * math.pi, n)
    t1, t2 = r * np.cos(th), r * np.sin(th)
    w = C.phi2(t1, t2)
    back = C.phi2_inverse(*w)
    det = np.linalg.det(C.phi2_jacobian(t1, t2))
    h2 = C.holder_probe(lambda x, y: C.h2_second_partials(x, y, alpha)[1])
    h3 = C.holder_probe(lambda x, y: C.h3_second_partials(x, y, alpha)[0])
    checks = [
        ("phi1_radius_identity", float(np.abs(np.hypot(a, b) - np.hypot(s[:, 0], s[:, 1])).max()),
         1e-15),
        ("phi2_round_trip", float(max(np.abs(back[0] - t1).max(), np.abs(back[1] - t2).max())),
         1e-12),
        ("phi2_abs_jacobian_minus_one", float(np.abs(np.abs(det) - 1).max()), 1e-6),
        ("equivariance_f", C.equivariance_error(model, n, seed), 1e-9),
        ("holder_H2_xy_minus_2kappa", abs(h2.exponent - 2 * kappa), 0.05),
        ("holder_H3_xx_minus_2kappa", abs(h3.exponent - 2 * kappa), 0.05),
    ]
    return [dict(check=c, value=v, tolerance=t, passed=bool(v <= t)) for c, v, t in checks]


def cmd_carrier_check(cfg, ctx):
    model = _model(cfg)
    with ctx["manifest"].timed("checks"):
        rows = carrier_checks(model, cfg.seed)
    ctx["manifest"].add(write_csv(_out(cfg, "carrier.csv"), rows,
                                  ["check", "value", "tolerance", "passed"]))
    return dict(checks={r["check"]: r["value"] for r in rows},
                passed=all(r["passed"] for r in rows))


def cmd_exponents(cfg, ctx):
    from .bounds import exponents_compute
    return exponents_compute(cfg.params()).to_dict()


def cmd_emit_plots(cfg, ctx):
    from .plotting import plot_script
    written = []
    if not os.path.isdir(cfg.output):
        raise ConfigError(f"output directory {cfg.output!r} does not exist")
    for name in sorted(os.listdir(cfg.output)):
        kind = CSV_KINDS.get(name)
        if kind is None:
            continue
        path = _out(cfg, "plot_" + os.path.splitext(name)[0] + ".py")
        with open(path, "w") as fh:
            fh.write(plot_script(kind, name))
        written.append(ctx["manifest"].add(path))
    return dict(scripts=[os.path.basename(p) for p in written])


HANDLERS = {
    "simulate": cmd_simulate,
    "lyapunov": cmd_lyapunov,
    "bounds": cmd_bounds,
    "tail": cmd_tail,
    "correlations": cmd_correlations,
    "clt": cmd_clt,
    "ldp": cmd_ldp,
    "carrier-check": cmd_carrier_check,
    "exponents": cmd_exponents,
    "emit-plots": cmd_emit_plots,
}


def _error(kind, message, code):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if f.name != "experiment" and getattr(args, f.name) is not None}
    overrides["experiment"] = args.command
    try:
        cfg = load(args.config, overrides)
    except (ConfigError, ParameterError) as exc:
        return _error("invalid_config", str(exc), 2)
    manifest = Manifest(args.command, cfg)
    ctx = dict(cfg=cfg, manifest=manifest, plots=not args.no_plots)
    if args.command not in ("exponents", "emit-plots"):
        os.makedirs(cfg.output, exist_ok=True)
    try:
        result = HANDLERS[args.command](cfg, ctx)
    except (ConfigError, ParameterError, ValueError) as exc:
        return _error("invalid_input", str(exc), 2)
    except ArithmeticError as exc:
        return _error("numerical_failure", str(exc), 3)
    manifest.results = result
    if args.command != "exponents":
        manifest.write(_out(cfg, f"{args.command}_manifest.json"))
    print(dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())

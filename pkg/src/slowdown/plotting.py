"""Figures for the CLI reports and standalone plot-script emission.

Each CSV kind has one figure description; ``render`` draws it from rows in
memory and ``plot_script`` writes an equivalent self-contained script that
reads the CSV back, so figures can be restyled without rerunning anything.
"""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# kind -> x column, y column, error column(s), log axes, labels, style
FIGURES = {
    "tail": dict(x="n", y="survival", lo="ci_low", hi="ci_high", log=True,
                 xlabel="n", ylabel="P(tau > n)", style="line"),
    "correlations": dict(x="lag", y="corr", err="stderr", log=True, absolute=True,
                         xlabel="lag n", ylabel="|Cor_n|", style="points"),
    "ldp": dict(x="n", y="probability", log=True, xlabel="n",
                ylabel="P(|S_n/n - mean| > eps)", style="line"),
    "ratio": dict(x="steps", y="median_ratio", log=True, xlabel="m - n",
                  ylabel="median length ratio", style="points"),
    "lyapunov": dict(x="direction", y="chi", err="stderr", log=False, xlabel="direction",
                     ylabel="Lyapunov exponent", style="bars"),
    "orbit": dict(x="x", y="y", log=False, xlabel="x", ylabel="y", style="scatter"),
    "clt": dict(x="z", log=False, xlabel="S_N / sqrt(N)", ylabel="density", style="hist"),
}


def _col(rows, key, cast=float):
    return np.array([cast(r[key]) for r in rows])


def _style_axes(ax):
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)


def render(kind: str, rows: list[dict], path: str, title: str = "",
           slopes: dict | None = None, hlines: dict | None = None) -> str:
    """Draw the figure for ``kind`` to ``path`` (PNG).

    ``slopes`` maps a label to a log-log slope drawn through the mid-range
    data point; ``hlines`` maps a label to a horizontal reference value.
    """
    desc = FIGURES[kind]
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    style = desc["style"]
    if not rows:
        ax.text(0.5, 0.5, "no data", ha="center", va="center", transform=ax.transAxes)
    elif style == "scatter":
        ax.plot(_col(rows, "x"), _col(rows, "y"), ",", color="k", alpha=0.5)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_aspect("equal")
    elif style == "hist":
        z = _col(rows, "z")
        ax.hist(z, bins=60, density=True, color="0.7")
        s = float(np.std(z))
        if s > 0:
            t = np.linspace(z.min(), z.max(), 200)
            ax.plot(t, np.exp(-0.5 * (t / s) ** 2) / (s * math.sqrt(2 * math.pi)), "k-")
    elif style == "bars":
        labels = [r[desc["x"]] for r in rows]
        y = _col(rows, desc["y"])
        err = 2 * _col(rows, desc["err"])
        ax.errorbar(range(len(y)), y, yerr=err, fmt="o", color="k", capsize=3)
        ax.set_xticks(range(len(y)), labels)
    else:
        x = _col(rows, desc["x"])
        y = _col(rows, desc["y"])
        if desc.get("absolute"):
            y = np.abs(y)
        keep = (y > 0) if desc["log"] else np.ones(len(y), bool)
        fmt = "o" if style == "points" else "-"
        if "err" in desc:
            ax.errorbar(x[keep], y[keep], yerr=_col(rows, desc["err"])[keep], fmt=fmt,
                        color="k", ms=3, capsize=2)
        else:
            ax.plot(x[keep], y[keep], fmt, color="k", ms=3)
        if "lo" in desc:
            lo, hi = _col(rows, desc["lo"]), _col(rows, desc["hi"])
            ok = keep & (lo > 0)
            ax.fill_between(x[ok], lo[ok], hi[ok], color="0.85")
        if desc["log"] and keep.any():
            ax.set_xscale("log")
            ax.set_yscale("log")
            # reference slopes pass through the data point nearest the middle
            xk, yk = x[keep], y[keep]
            mid = int(np.argmin(np.abs(np.log(xk) - 0.5 * np.log(xk[0] * xk[-1]))))
            x0, y0 = xk[mid], yk[mid]
            for i, (label, s) in enumerate((slopes or {}).items()):
                t = np.geomspace(xk[0], xk[-1], 10)
                ax.plot(t, y0 * (t / x0) ** s, ["--", ":", "-."][i % 3], color="0.4",
                        label=f"{label} ({s:.2f})")
    for i, (label, v) in enumerate((hlines or {}).items()):
        ax.axhline(v, ls=["--", ":"][i % 2], color="0.4", label=f"{label} ({v:.4g})")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(frameon=False, fontsize=8)
    ax.set_xlabel(desc["xlabel"])
    ax.set_ylabel(desc["ylabel"])
    if title:
        ax.set_title(title, fontsize=9)
    _style_axes(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


_SCRIPT = '''"""Plot {csv_name} ({kind}).  Generated by `slowdown emit-plots`."""

import csv
import math
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

CSV = "{csv_name}"
OUT = sys.argv[1] if len(sys.argv) > 1 else "{png_name}"
DESC = {desc!r}
SLOPES = {slopes!r}

with open(CSV, newline="") as fh:
    rows = list(csv.DictReader(fh))

fig, ax = plt.subplots(figsize=(5.0, 3.6))
style = DESC["style"]
if style == "scatter":
    ax.plot([float(r["x"]) for r in rows], [float(r["y"]) for r in rows], ",", color="k")
    ax.set_aspect("equal")
elif style == "hist":
    z = np.array([float(r["z"]) for r in rows])
    ax.hist(z, bins=60, density=True, color="0.7")
    s = z.std()
    t = np.linspace(z.min(), z.max(), 200)
    ax.plot(t, np.exp(-0.5 * (t / s) ** 2) / (s * math.sqrt(2 * math.pi)), "k-")
elif style == "bars":
    y = [float(r[DESC["y"]]) for r in rows]
    err = [2 * float(r[DESC["err"]]) for r in rows]
    ax.errorbar(range(len(y)), y, yerr=err, fmt="o", color="k", capsize=3)
    ax.set_xticks(range(len(y)), [r[DESC["x"]] for r in rows])
else:
    x = np.array([float(r[DESC["x"]]) for r in rows])
    y = np.array([float(r[DESC["y"]]) for r in rows])
    if DESC.get("absolute"):
        y = np.abs(y)
    keep = y > 0 if DESC["log"] else np.ones(len(y), bool)
    ax.plot(x[keep], y[keep], "o" if style == "points" else "-", color="k", ms=3)
    if DESC["log"]:
        ax.set_xscale("log")
        ax.set_yscale("log")
        xk, yk = x[keep], y[keep]
        mid = int(np.argmin(np.abs(np.log(xk) - 0.5 * np.log(xk[0] * xk[-1]))))
        for label, s in SLOPES.items():
            t = np.geomspace(xk[0], xk[-1], 10)
            ax.plot(t, yk[mid] * (t / xk[mid]) ** s, "--", color="0.4",
                    label="%s (%.2f)" % (label, s))
        if SLOPES:
            ax.legend(frameon=False, fontsize=8)
ax.set_xlabel(DESC["xlabel"])
ax.set_ylabel(DESC["ylabel"])
ax.spines["right"].set_visible(False)
ax.spines["top"].set_visible(False)
fig.tight_layout()
fig.savefig(OUT, dpi=150)
'''


def plot_script(kind: str, csv_name: str, png_name: str | None = None,
                slopes: dict | None = None) -> str:
    """Source of a standalone script plotting ``csv_name`` as ``kind``."""
    png_name = png_name or os.path.splitext(csv_name)[0] + ".png"
    return _SCRIPT.format(csv_name=csv_name, png_name=png_name, kind=kind,
                          desc=FIGURES[kind], slopes=dict(slopes or {}))


__all__ = ["FIGURES", "plot_script", "render"]

"""SVG line and scatter charts drawn from the CSV outputs."""
from __future__ import annotations

import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids and no timestamp so identical CSVs give identical SVG bytes
STYLE = {"svg.hashsalt": "rlnn_opt", "svg.fonttype": "none", "figure.figsize": (7.2, 4.4)}
METADATA = {"Date": None, "Creator": None}


def chart(path, series, title="", xlabel="", ylabel="", scatter=False, xscale="linear"):
    """Write one SVG with a line (or point cloud) per ``(label, xs, ys)`` series."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, xs, ys in series:
            if scatter:
                ax.scatter(xs, ys, s=2, alpha=0.5, label=label)
            else:
                ax.plot(xs, ys, lw=1.5, label=label)
        if xscale == "symlog":
            ax.set_xscale("symlog", linthresh=1.0)
        ax.set(title=title, xlabel=xlabel, ylabel=ylabel)
        ax.grid(alpha=0.3)
        if series:
            ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata=METADATA)
        plt.close(fig)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def grouped(rows, key, x, y):
    groups = defaultdict(lambda: ([], []))
    for row in rows:
        xs, ys = groups[row[key]]
        xs.append(float(row[x]))
        ys.append(float(row[y]))
    return [(k, xs, ys) for k, (xs, ys) in groups.items()]


def plot_convergence(csv_path, svg_path, title=""):
    chart(svg_path, grouped(read_csv(csv_path), "mode", "epoch", "error"), title, "epoch",
          "t0 price error vs COS", xscale="symlog")


def plot_profiles(csv_path, svg_prefix, title=""):
    rows = read_csv(csv_path)
    for stat in ("EE", "PFE"):
        chart(f"{svg_prefix}_{stat.lower()}.svg", grouped(rows, "model", "t", stat),
              f"{title} {stat}", "t (years)", stat)


def plot_pv(csv_path, svg_prefix, title=""):
    rows = read_csv(csv_path)
    for t in sorted({r["t"] for r in rows}, key=float):
        sel = [r for r in rows if r["t"] == t]
        series = [(name, [float(r["spot"]) for r in sel], [float(r[col]) for r in sel])
                  for name, col in (("rlnn - cos", "err_rlnn"), ("lsm - cos", "err_lsm"))]
        chart(f"{svg_prefix}_t{float(t):.4f}.svg", series, f"{title} PV error at t={float(t):g}",
              "spot", "PV error", scatter=True)

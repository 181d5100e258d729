"""Figure rendering from declarative plot descriptions.

A plot description is a JSON-able dict::

    {"title": ..., "x": column, "y": column, "xlabel": ..., "ylabel": ...,
     "logx": bool, "logy": bool, "series": column or null,
     "reference_lines": [{"slope": s, "intercept": c, "label": ...}],
     "hlines": [{"y": v, "label": ...}]}

Columns refer to the tidy CSV written next to it.  Logs, when requested, are
applied by the axes scale rather than baked into the data.
"""

from __future__ import annotations

import csv
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.4,
    "lines.markersize": 4,
}


def read_csv(path: str) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_csv(path: str, rows: list, columns: list):
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({c: r.get(c, "") for c in columns})


def render(desc: dict, rows: list, path: str):
    """Draw ``rows`` (dicts of strings or numbers) per ``desc`` into ``path``."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        groups = {}
        key = desc.get("series")
        for r in rows:
            groups.setdefault(r.get(key, "") if key else "", []).append(r)
        xs_all = []
        for name, grp in sorted(groups.items(), key=lambda kv: str(kv[0])):
            xs = [float(r[desc["x"]]) for r in grp]
            ys = [float(r[desc["y"]]) for r in grp]
            xs_all += xs
            label = f"{key}={name}" if key else desc.get("ylabel", desc["y"])
            ax.plot(xs, ys, "o-", label=label)
        if xs_all:
            lo, hi = min(xs_all), max(xs_all)
            for ref, ls in zip(desc.get("reference_lines", []), ["--", ":", "-."] * 4):
                # y = exp(intercept) x^slope on log-log axes, else a straight line
                if desc.get("logx") and desc.get("logy"):
                    f = lambda x: math.exp(ref.get("intercept", 0.0)) * x ** ref["slope"]
                else:
                    f = lambda x: ref.get("intercept", 0.0) + ref["slope"] * x
                ax.plot([lo, hi], [f(lo), f(hi)], ls, color="0.4", label=ref.get("label"))
        for hl in desc.get("hlines", []):
            ax.axhline(hl["y"], color="0.5", lw=0.8, ls=":", label=hl.get("label"))
        if desc.get("logx"):
            ax.set_xscale("log")
        if desc.get("logy"):
            ax.set_yscale("log")
        ax.set_xlabel(desc.get("xlabel", desc["x"]))
        ax.set_ylabel(desc.get("ylabel", desc["y"]))
        if desc.get("title"):
            ax.set_title(desc["title"])
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)

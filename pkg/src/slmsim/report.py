"""Matplotlib figures written next to the CSV/JSON reports.

Figures are byte-reproducible: the SVG hash salt is pinned and date
metadata is stripped.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

FIGURE_FORMATS = ("svg", "png")

_RC = {
    "svg.hashsalt": "slmsim",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "figure.dpi": 100,
}


def _save(fig, stem, formats):
    written = []
    for fmt in formats:
        if fmt not in FIGURE_FORMATS:
            continue
        path = stem.with_suffix(f".{fmt}")
        meta = {"Date": None} if fmt == "svg" else {"Software": None}
        fig.savefig(path, format=fmt, metadata=meta, bbox_inches="tight")
        written.append(path)
    plt.close(fig)
    return written


def plot_sweep(points, frontiers, stem, formats=("svg",)):
    """Throughput against latency, one curve per (model, TP degree), with
    the per-model Pareto frontier circled."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 5))
        curves = {}
        for p in points:
            curves.setdefault((p.model, p.tp_degree), []).append(p)
        # one colour per model; TP variants share it with a dashed line
        colours = {}
        for model, _ in curves:
            colours.setdefault(model, f"C{len(colours) % 10}")
        for (model, tp), pts in curves.items():
            pts = sorted(pts, key=lambda p: p.batch_cap)
            label = model if tp == 1 else f"{model} (TP={tp})"
            ax.plot(
                [p.latency_mean for p in pts],
                [p.throughput_rps for p in pts],
                marker="o",
                ms=3,
                ls="-" if tp == 1 else "--",
                color=colours[model],
                label=label,
            )
            for p in pts:
                ax.annotate(str(p.batch_cap), (p.latency_mean, p.throughput_rps), fontsize=6,
                            xytext=(2, 2), textcoords="offset points")
        front = [p for pts in frontiers.values() for p in pts]
        if front:
            ax.scatter([p.latency_mean for p in front], [p.throughput_rps for p in front],
                       s=60, facecolors="none", edgecolors="k", lw=0.8, label="Pareto frontier", zorder=3)
        if points:
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlabel("mean latency (s)")
        ax.set_ylabel("throughput (requests/s)")
        ax.legend(loc="best")
        return _save(fig, stem, formats)


def plot_plan(rows, stem, formats=("svg",)):
    """Exact vs power-of-two maximum batch per model (single replica rows)."""
    rows = [r for r in rows if r["replicas"] == 1 and r["status"] == "ok"]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        labels = [f"{r['model']}\nTP={r['tp_degree']}" for r in rows]
        x = range(len(rows))
        ax.bar([i - 0.2 for i in x], [r["exact_batch"] for r in rows], width=0.4, label="exact")
        ax.bar([i + 0.2 for i in x], [r["pow2_batch"] for r in rows], width=0.4, label="power of two (capped)")
        ax.set_yscale("log", base=2)
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, fontsize=7)
        ax.set_ylabel("max batch (requests)")
        ax.legend()
        return _save(fig, stem, formats)


def plot_replication(rows, stem, formats=("svg",)):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        by_model = {}
        for r in rows:
            if r["status"] == "ok":
                by_model.setdefault(r["model"], []).append(r)
        for model, rs in by_model.items():
            ax.plot([r["latency_mean_s"] for r in rs], [r["throughput_rps"] for r in rs], marker="o", label=model)
            for r in rs:
                ax.annotate(f"R={r['replicas']}", (r["latency_mean_s"], r["throughput_rps"]), fontsize=6,
                            xytext=(2, 2), textcoords="offset points")
        if by_model:
            ax.set_yscale("log")
        ax.set_xlabel("latency, max over replicas of the mean (s)")
        ax.set_ylabel("aggregate throughput (requests/s)")
        ax.legend()
        return _save(fig, stem, formats)

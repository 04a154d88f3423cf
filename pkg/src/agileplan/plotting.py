"""Bar charts of a sweep's metrics: error per GP, GPs observed, nodes created."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import read_metrics  # noqa: E402

FIGURES = [
    ("avgErrPerObservedGP", "avg measurement error per observed GP", "avg_err.png"),
    ("gpObserved", "# GPs observed", "gp_observed.png"),
    ("nodesCreated", "# search nodes created", "nodes.png"),
]


def _groups(rows):
    """[(group label, [(b, row)])]: one group per heuristic under the objective, then a DFS group."""
    groups = []
    seen = []
    for r in rows:
        if r["global"] == "objective" and r["heuristic"] not in seen:
            seen.append(r["heuristic"])
    for h in seen:
        groups.append((h, [(r["beamWidth"], r) for r in rows if r["global"] == "objective" and r["heuristic"] == h]))
    dfs = [r for r in rows if r["global"] == "dfs"]
    if dfs:
        groups.append(("DFS", [(r["beamWidth"], r) for r in dfs]))
    return groups


def plot_metrics(csv_path, out_dir, scenario=None) -> list:
    rows = [r for r in read_metrics(csv_path) if not r["status"].startswith("error")]
    if scenario is not None:
        rows = [r for r in rows if r["scenario"] == scenario]
    # the CSV is append-only; keep the latest row per cell
    latest = {}
    for r in rows:
        latest[(r["scenario"], r["heuristic"], r["global"], r["beamWidth"], r["passes"])] = r
    rows = list(latest.values())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    groups = _groups(rows)
    for key, ylabel, fname in FIGURES:
        fig, ax = plt.subplots(figsize=(7, 3.6))
        x = 0.0
        ticks, labels = [], []
        for label, members in groups:
            start = x
            for b, r in members:
                tag = f"{r['heuristic'][:6]} b={b}" if label == "DFS" else f"b={b}"
                ax.bar(x, r[key], width=0.8, color=f"C{[1, 3, 5].index(b) if b in (1, 3, 5) else 3}")
                ax.text(x, r[key], tag, rotation=90, ha="center", va="bottom", fontsize=7)
                x += 1
            ticks.append((start + x - 1) / 2)
            labels.append(label)
            x += 1
        ax.set_xticks(ticks)
        ax.set_xticklabels(labels)
        ax.set_ylabel(ylabel)
        ax.margins(y=0.25)
        fig.tight_layout()
        path = out / fname
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths

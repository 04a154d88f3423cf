"""Heuristic x beam-width x strategy sweeps written to an append-only CSV."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .audit import audit_plan
from .heuristics import LOCAL_HEURISTICS
from .ingest import load_scenario
from .planio import write_plan
from .planner import PlannerConfig, plan_metrics, run_planner

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["scenario", "heuristic", "global", "beamWidth", "passes", "status",
                  "avgErrPerObservedGP", "gpObserved", "nodesCreated", "imageCount", "planScore",
                  "auditViolations"]
TIMING_COLUMNS = ["scenario", "heuristic", "global", "beamWidth", "passes", "wallTime"]


@dataclass(frozen=True)
class SweepCell:
    heuristic: str
    global_strategy: str
    beam_width: int

    @property
    def name(self) -> str:
        return f"{self.global_strategy}-{self.heuristic}-b{self.beam_width}"


def default_sweep(widths=(1, 3, 5), dfs_widths=(5,)) -> list:
    """Objective beam at every width for each heuristic, then the DFS group."""
    cells = [SweepCell(h, "objective", b) for h in LOCAL_HEURISTICS for b in widths]
    cells += [SweepCell(h, "dfs", b) for h in LOCAL_HEURISTICS for b in dfs_widths]
    return cells


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def run_cell(scenario_dir, cell: SweepCell, base: PlannerConfig, plan_dir=None) -> dict:
    """Plan one cell; failures come back as a status string instead of raising."""
    row = {"scenario": Path(scenario_dir).name, "heuristic": cell.heuristic, "global": cell.global_strategy,
           "beamWidth": cell.beam_width, "passes": base.passes}
    try:
        scenario = load_scenario(scenario_dir)
        cfg = replace(base, heuristic=cell.heuristic, global_strategy=cell.global_strategy,
                      beam_width=cell.beam_width)
        result = run_planner(scenario, cfg)
        m = plan_metrics(result, scenario)
        report = audit_plan(result.plan, scenario)
        if plan_dir is not None:
            write_plan(result.plan, Path(plan_dir) / cell.name)
        row.update(status="truncated" if result.truncated else "ok",
                   avgErrPerObservedGP=m["avg_err_per_observed_gp"], gpObserved=m["gp_observed"],
                   nodesCreated=m["nodes_created"], imageCount=m["image_count"], planScore=m["plan_score"],
                   auditViolations=len(report.violations), wallTime=m["wall_time"])
    except Exception as exc:  # one bad cell must not sink the sweep
        log.exception("cell %s failed", cell.name)
        row.update(status=f"error: {type(exc).__name__}: {exc}", avgErrPerObservedGP="", gpObserved="",
                   nodesCreated="", imageCount="", planScore="", auditViolations="", wallTime="")
    return row


def _append(path: Path, columns: list, rows: list) -> None:
    new = not path.exists() or path.stat().st_size == 0
    if not new:
        with path.open(newline="") as fh:
            header = next(csv.reader(fh), [])
        if header != columns:
            raise ValueError(f"{path} has columns {header}, expected {columns}")
    with path.open("a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def run_experiment(scenario_dir, out_dir, cells=None, base: PlannerConfig = None, jobs: int = 1,
                   save_plans: bool = True) -> list:
    """Run the sweep and append one row per cell to metrics.csv (wall times go to timings.csv)."""
    cells = list(cells or default_sweep())
    base = base or PlannerConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan_dir = out / "plans" if save_plans else None
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_cell, [scenario_dir] * len(cells), cells, [base] * len(cells),
                                 [plan_dir] * len(cells)))
    else:
        rows = [run_cell(scenario_dir, c, base, plan_dir) for c in cells]
    _append(out / "metrics.csv", METRIC_COLUMNS, rows)
    _append(out / "timings.csv", TIMING_COLUMNS, rows)
    return rows


def read_metrics(path) -> list:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        if not r["status"].startswith("error"):
            r["beamWidth"] = int(r["beamWidth"])
            for k in ("gpObserved", "nodesCreated", "imageCount", "auditViolations"):
                r[k] = int(r[k])
            for k in ("avgErrPerObservedGP", "planScore"):
                r[k] = float(r[k])
    return rows

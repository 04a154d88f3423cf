"""agileplan command line: gen, ingest, plan, audit, experiment.

Settings resolve as command-line flags, then the --config JSON file, then defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import generator
from .audit import audit_plan
from .engine import GLOBAL_STRATEGIES
from .experiment import default_sweep, run_experiment
from .heuristics import LOCAL_HEURISTICS
from .ingest import IngestError, load_scenario, with_horizon, write_planner_inputs
from .planio import read_plan, write_plan
from .planner import PlannerConfig, PlanningError, plan_metrics, run_planner

log = logging.getLogger("agileplan")

PLANNER_DEFAULTS = {
    "heuristic": "err-reduction",
    "global": "objective",
    "beam_width": 1,
    "node_budget": 200_000,
    "passes": "single",
    "followups": False,
    "followup_threshold": 0.5,
    "max_open": 50_000,
    "horizon_seconds": None,
}


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(f"cannot read config {path}: {exc}")
    if not isinstance(data, dict):
        raise SystemExit(f"config {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve(args, defaults: dict) -> dict:
    """defaults <- config file <- explicit flags."""
    out = dict(defaults)
    cfg = _load_config(getattr(args, "config", None))
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise SystemExit(f"unknown config keys: {', '.join(sorted(unknown))}")
    out.update(cfg)
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def planner_config(settings: dict) -> PlannerConfig:
    try:
        return PlannerConfig(heuristic=settings["heuristic"], global_strategy=settings["global"],
                             beam_width=settings["beam_width"], node_budget=settings["node_budget"],
                             passes=settings["passes"], followups=bool(settings["followups"]),
                             followup_threshold=settings["followup_threshold"], max_open=settings["max_open"])
    except ValueError as exc:
        raise SystemExit(str(exc))


def _add_planner_flags(p):
    p.add_argument("--heuristic", choices=LOCAL_HEURISTICS)
    p.add_argument("--global", dest="global", choices=sorted(GLOBAL_STRATEGIES))
    p.add_argument("--beam-width", type=int)
    p.add_argument("--node-budget", type=int)
    p.add_argument("--passes", choices=("single", "multi"))
    p.add_argument("--followups", action="store_const", const=True, help="reserve complementary follow-up looks")
    p.add_argument("--followup-threshold", type=float,
                   help="relative error gain a follow-up must promise (default 0.5)")
    p.add_argument("--max-open", type=int, help="cap on retained open nodes")
    p.add_argument("--horizon-seconds", type=int)
    p.add_argument("--config", help="JSON file of settings; flags override it")


def _scenario(path, horizon=None):
    try:
        sc = load_scenario(path)
    except IngestError as exc:
        raise SystemExit(f"ingest failed: {exc}")
    return with_horizon(sc, horizon) if horizon else sc


def cmd_gen(args) -> int:
    defaults = asdict(generator.reference_profile(args.scale))
    defaults["seed"] = None
    settings = resolve(args, defaults)
    seed = settings.pop("seed")
    if seed is None:
        raise SystemExit("gen needs --seed (or a seed in --config)")
    try:
        params = generator.GeneratorParams.from_dict(settings)
        params.validate()
    except (TypeError, ValueError) as exc:
        raise SystemExit(f"bad generator parameters: {exc}")
    out = generator.generate(params, seed, args.out)
    sc = load_scenario(out)
    counts = sc.choices_per_tp()
    mean = sum(counts) / len(counts) if counts else 0.0
    print(f"wrote {out}: {len(sc.gps)} GPs, {len(counts)} TPs, "
          f"{mean:.1f} choices/TP (max {max(counts, default=0)})")
    return 0


def cmd_ingest(args) -> int:
    sc = _scenario(args.scenario)
    st = sc.stats
    counts = sc.choices_per_tp()
    print(f"raw choices {st.raw_choices}, after merge {st.merged_choices} "
          f"({100 * st.reduction:.1f}% removed), dual-instrument choices added {st.dual_choices}")
    print(f"{len(counts)} TPs, mean {sum(counts) / max(len(counts), 1):.1f} choices/TP, max {max(counts, default=0)}")
    if args.out:
        for p in write_planner_inputs(sc, args.out):
            print(f"wrote {p}")
    return 0


def cmd_plan(args) -> int:
    settings = resolve(args, PLANNER_DEFAULTS)
    sc = _scenario(args.scenario, settings["horizon_seconds"])
    cfg = planner_config(settings)
    try:
        result = run_planner(sc, cfg)
    except PlanningError as exc:
        print(f"infeasible at the root: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    write_plan(result.plan, out)
    m = plan_metrics(result, sc)
    metrics = {"avgErrPerObservedGP": m["avg_err_per_observed_gp"], "gpObserved": m["gp_observed"],
               "nodesCreated": m["nodes_created"], "imageCount": m["image_count"],
               "planScore": m["plan_score"], "wallTime": m["wall_time"], "truncated": result.truncated}
    if result.passes:
        metrics["passes"] = result.passes
    (out / "metrics.json").write_text(json.dumps(metrics, indent=1) + "\n")
    print(json.dumps(metrics))
    return 0


def cmd_audit(args) -> int:
    sc = _scenario(args.scenario, args.horizon_seconds)
    plan = read_plan(args.plan)
    report = audit_plan(plan, sc)
    print(report.summary())
    for kind, sat, tick, detail in report.violations[: args.show]:
        print(f"  {kind:9s} sat={sat} t={tick}: {detail}")
    return 0 if report.ok else 1


def cmd_experiment(args) -> int:
    settings = resolve(args, PLANNER_DEFAULTS)
    out = Path(args.out)
    if args.scenario:
        scenario_dir = args.scenario
    else:
        if args.seed is None:
            raise SystemExit("experiment needs a scenario directory or --seed to generate one")
        scenario_dir = generator.generate(generator.reference_profile(args.scale), args.seed, out / "scenario")
    if settings["horizon_seconds"]:
        raise SystemExit("--horizon-seconds is set when generating; experiments use the scenario's horizon")
    widths = [int(x) for x in args.widths.split(",")]
    dfs_widths = [int(x) for x in args.dfs_widths.split(",")] if args.dfs_widths else []
    cells = default_sweep(widths, dfs_widths)
    base = planner_config(settings)
    rows = run_experiment(scenario_dir, out, cells, base, jobs=args.jobs, save_plans=not args.no_plans)
    for r in rows:
        if r["status"].startswith("error"):
            print(f"{r['global']:9s} {r['heuristic']:16s} b={r['beamWidth']}  {r['status']}")
        else:
            print(f"{r['global']:9s} {r['heuristic']:16s} b={r['beamWidth']}  err/GP={r['avgErrPerObservedGP']:.5f} "
                  f"GPs={r['gpObserved']} nodes={r['nodesCreated']} images={r['imageCount']} "
                  f"score={r['planScore']:.4f}")
    if not args.no_plots:
        from .plotting import plot_metrics
        for p in plot_metrics(out / "metrics.csv", out, scenario=Path(scenario_dir).name):
            print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="agileplan", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic scenario")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--scale", type=float, default=1000.0, help="divide the full-size GP count by this")
    g.add_argument("--config", help="JSON file of generator parameters")
    for name in ("n_sats", "n_gps", "tps_per_sat", "passes_per_sat", "horizon_seconds"):
        g.add_argument("--" + name.replace("_", "-"), type=int)
    for name in ("mean_choices_per_tp", "duplication_factor", "rain_fraction", "saturation_fraction",
                 "eclipse_fraction", "initial_charge"):
        g.add_argument("--" + name.replace("_", "-"), type=float)
    g.set_defaults(func=cmd_gen)

    i = sub.add_parser("ingest", help="flatten raw access files and report statistics")
    i.add_argument("scenario")
    i.add_argument("--out", help="write tp_choices_<sat>.jsonl and gp_choices.jsonl here")
    i.set_defaults(func=cmd_ingest)

    p = sub.add_parser("plan", help="plan one scenario")
    p.add_argument("scenario")
    p.add_argument("--out", required=True)
    _add_planner_flags(p)
    p.set_defaults(func=cmd_plan)

    a = sub.add_parser("audit", help="check a plan against every hard constraint")
    a.add_argument("scenario")
    a.add_argument("plan", help="plan.jsonl or the directory holding it")
    a.add_argument("--horizon-seconds", type=int)
    a.add_argument("--show", type=int, default=20, help="violations to list")
    a.set_defaults(func=cmd_audit)

    e = sub.add_parser("experiment", help="sweep heuristics, strategies and beam widths")
    e.add_argument("scenario", nargs="?")
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int, help="generate a reference-profile scenario with this seed")
    e.add_argument("--scale", type=float, default=1000.0)
    e.add_argument("--widths", default="1,3,5")
    e.add_argument("--dfs-widths", default="5")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--no-plans", action="store_true")
    e.add_argument("--no-plots", action="store_true")
    _add_planner_flags(e)
    e.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

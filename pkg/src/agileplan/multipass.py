"""Priority-cohort planning: rainy GPs first, then back-fill idle gaps.

Pass one plans the whole horizon using only choices that see a rainy GP.
Later cohorts (non-rainy, then saturated) are spliced into the idle gaps of
the running plan, longest gap first, without moving any planned image.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

from .constraints import charge_trace
from .model import IMAGE_SECONDS, Cohort, Plan
from .planner import PlannerConfig, PlanResult, check_root_energy, images_from_path, path_score, plan_single, search
from .state import PlanningContext, SatStart

log = logging.getLogger(__name__)
_EPS = 1e-12


def partition_cohorts(gp_ids, rain, saturated) -> tuple:
    """(rainy, non_rainy, saturated) GP sets; saturation overrides rain."""
    saturated = frozenset(g for g in gp_ids if g in saturated)
    rainy = frozenset(g for g in gp_ids if g in rain and g not in saturated)
    non_rainy = frozenset(g for g in gp_ids if g not in rainy and g not in saturated)
    return rainy, non_rainy, saturated


def scenario_cohorts(scenario) -> tuple:
    by = {c: set() for c in Cohort}
    for gp, g in scenario.gps.items():
        by[g.cohort].add(gp)
    return frozenset(by[Cohort.RAINY]), frozenset(by[Cohort.NON_RAINY]), frozenset(by[Cohort.SATURATED])


def plan_pass_one(scenario, config: PlannerConfig, rainy=None) -> PlanResult:
    if rainy is None:
        rainy = scenario_cohorts(scenario)[0]
    rainy = frozenset(rainy)
    return plan_single(scenario, config, reward_gps=rainy,
                       keep_option=lambda sat, tick, choice, gps: any(g in rainy for g in gps))


@dataclass(frozen=True)
class Gap:
    sat: int
    start: int  # first free tick
    end: int  # first tick of the next planned image (or the horizon)
    angle_in: object = None
    angle_out: object = None
    charge: float = 0.0  # charge on entry
    margin: float = 0.0  # smallest headroom above the floor from here on

    @property
    def length(self) -> int:
        return self.end - self.start


def find_gaps(images: dict, scenario) -> list:
    """Idle stretches of each satellite's timeline with their boundary angles and energy headroom."""
    energy, slew = scenario.config.energy, scenario.slew
    horizon = scenario.config.horizon_seconds
    floor = energy.min_charge
    gaps = []
    for sat in scenario.sat_ids:
        imgs = sorted(images.get(sat, ()), key=lambda i: i.start)
        trace = charge_trace(energy, slew, sat, imgs, energy.initial_charge)
        # suffix minimum of headroom over every later checkpoint
        suffix = [float("inf")] * (len(trace) + 1)
        for k in range(len(trace) - 1, -1, -1):
            suffix[k] = min(suffix[k + 1], trace[k][1] - floor, trace[k][2] - floor)
        prev_end, prev_angle, prev_charge = 0, None, energy.initial_charge
        for k in range(len(imgs) + 1):
            nxt = imgs[k] if k < len(imgs) else None
            end = nxt.start if nxt else horizon
            margin = min(prev_charge - floor, suffix[k])
            if end > prev_end:
                gaps.append(Gap(sat, prev_end, end, prev_angle, nxt.angle if nxt else None, prev_charge, margin))
            if nxt:
                prev_end, prev_angle, prev_charge = nxt.start + IMAGE_SECONDS, nxt.angle, trace[k][2]
    gaps.sort(key=lambda g: (-g.length, g.start, g.sat))
    return gaps


def _fits_gap(gap: Gap, slew):
    def keep(sat, tick, choice, gps):
        a = choice.angle
        if gap.angle_in is not None and tick < gap.start + slew.seconds(gap.angle_in, a):
            return False
        exit_s = slew.seconds(a, gap.angle_out) if gap.angle_out is not None else 0
        return tick + IMAGE_SECONDS + exit_s <= gap.end
    return keep


def fill_gap(scenario, config: PlannerConfig, gap: Gap, cohort, observed):
    """Plan one gap; returns (images, score, nodes). Solar charging is ignored inside the gap
    and the entry charge is capped at the headroom left for every later checkpoint."""
    if gap.length < IMAGE_SECONDS or gap.margin <= _EPS:
        return [], 0.0, 0
    energy = replace(scenario.config.energy, solar_rate=0.0)
    start = SatStart(charge=energy.min_charge + gap.margin, tick=gap.start, angle=gap.angle_in,
                     exit_angle=gap.angle_out)
    keep_gap = _fits_gap(gap, scenario.slew)
    cohort = frozenset(cohort)

    def keep(sat, tick, choice, gps):
        return any(g in cohort for g in gps) and keep_gap(sat, tick, choice, gps)

    windows = {s: (gap.start, gap.end) if s == gap.sat else (0, 0) for s in scenario.sat_ids}
    starts = {s: start if s == gap.sat else SatStart(energy.initial_charge) for s in scenario.sat_ids}
    ctx = PlanningContext(scenario, reward_gps=cohort, keep_option=keep, excluded_gps=observed,
                          windows=windows, starts=starts, energy=energy)
    if not ctx.keys:
        return [], 0.0, 0
    result = search(ctx, replace(config, followups=False))
    path = result.best.path()
    return images_from_path(path).get(gap.sat, []), path_score(path), result.nodes_created


def energy_violations(images: dict, scenario) -> list:
    """Satellites whose chronological charge trace dips below the floor."""
    energy = scenario.config.energy
    bad = []
    for sat, imgs in images.items():
        for _, c1, c2 in charge_trace(energy, scenario.slew, sat, imgs, energy.initial_charge):
            if min(c1, c2) < energy.min_charge - _EPS:
                bad.append(sat)
                break
    return bad


def backfill_gaps(base: dict, cohort, scenario, config: PlannerConfig, *, budget=None) -> tuple:
    """Insert observations of ``cohort`` into the idle gaps of ``base`` (sat -> images).

    Returns (images, added score, nodes created). Base images are never moved.
    """
    images = {s: list(v) for s, v in base.items()}
    observed = {g for imgs in images.values() for i in imgs for g in i.gps}
    added, nodes = 0.0, 0
    done = set()
    while True:
        gaps = [g for g in find_gaps(images, scenario) if (g.sat, g.start, g.end) not in done]
        if not gaps or (budget is not None and nodes >= budget):
            break
        gap = gaps[0]
        done.add((gap.sat, gap.start, gap.end))
        cfg = config if budget is None else replace(config, node_budget=max(1, budget - nodes))
        new, score, n = fill_gap(scenario, cfg, gap, cohort, observed)
        nodes += n
        if not new:
            continue
        trial = dict(images)
        trial[gap.sat] = sorted(images.get(gap.sat, []) + new, key=lambda i: i.start)
        if energy_violations({gap.sat: trial[gap.sat]}, scenario):
            log.warning("gap %s rejected by energy re-validation", gap)
            continue
        images = trial
        added += score
        for i in new:
            observed.update(i.gps)
    return images, added, nodes


def plan_multi(scenario, config: PlannerConfig) -> PlanResult:
    check_root_energy(scenario)
    t0 = time.perf_counter()
    rainy, non_rainy, saturated = scenario_cohorts(scenario)
    first = plan_pass_one(scenario, config, rainy)
    images = {s: first.plan.images(s) for s in scenario.sat_ids}
    score = first.plan.plan_score
    nodes = first.nodes_created
    passes = [{"cohort": "rainy", "images": first.plan.image_count, "score": score, "nodes": first.nodes_created}]
    for name, cohort in (("nonRainy", non_rainy), ("saturated", saturated)):
        budget = None if config.node_budget is None else max(0, config.node_budget - nodes)
        if budget == 0 or not cohort:
            passes.append({"cohort": name, "images": 0, "score": 0.0, "nodes": 0})
            continue
        before = sum(len(v) for v in images.values())
        images, added, n = backfill_gaps(images, cohort, scenario, config, budget=budget)
        nodes += n
        score += added
        passes.append({"cohort": name, "images": sum(len(v) for v in images.values()) - before,
                       "score": added, "nodes": n})
    plan = Plan.from_images(images, scenario.slew, score)
    for sat in scenario.sat_ids:
        plan.commands.setdefault(sat, [])
    truncated = config.node_budget is not None and nodes >= config.node_budget
    return PlanResult(plan, nodes, first.iterations, truncated or first.truncated, first.complete,
                      time.perf_counter() - t0, passes)

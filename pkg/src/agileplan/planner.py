"""Observation-planning callbacks for the search engine, and plan extraction."""

from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

from . import constraints as cons
from .engine import DEFAULT_BUDGET, GLOBAL_STRATEGIES, Callbacks, SearchResult, plan_it
from .heuristics import LOCAL_HEURISTICS, VALUE_SORTERS, choose_variable_chrono, err_reduction_reward
from .model import Plan, TakeImage, observation_outcomes
from .state import LiveChoice, PlanningContext


class PlanningError(Exception):
    pass


@dataclass
class PlannerConfig:
    heuristic: str = "err-reduction"
    global_strategy: str = "objective"
    beam_width: Optional[int] = 1
    node_budget: Optional[int] = DEFAULT_BUDGET
    passes: str = "single"
    followups: bool = False
    followup_threshold: float = 0.5
    max_open: Optional[int] = 50_000
    exhaustive: bool = False

    def __post_init__(self):
        if self.heuristic not in LOCAL_HEURISTICS:
            raise ValueError(f"unknown heuristic {self.heuristic!r}; pick one of {', '.join(LOCAL_HEURISTICS)}")
        if self.global_strategy not in GLOBAL_STRATEGIES:
            raise ValueError(f"unknown global strategy {self.global_strategy!r}")
        if self.passes not in ("single", "multi"):
            raise ValueError("passes is 'single' or 'multi'")
        if self.beam_width is not None and self.beam_width < 1:
            raise ValueError("beam width must be positive")


class ObservationProblem:
    """Binds a planning context and a heuristic choice to the engine's callback slots."""

    def __init__(self, ctx: PlanningContext, config: PlannerConfig):
        self.ctx = ctx
        self.config = config
        self._sort_values = VALUE_SORTERS[config.heuristic]

    def callbacks(self) -> Callbacks:
        return Callbacks(
            choose_nodes=GLOBAL_STRATEGIES[self.config.global_strategy],
            choose_variable=self.choose_variable,
            choose_value=self.choose_value,
            propagate_choices=self.propagate_choices,
            is_feasible=self.is_feasible,
            value_gain=self.value_gain,
        )

    def choose_variable(self, node):
        # Skipping variables the battery cannot afford is forward checking on
        # the node before it has children, so mutating its state is safe.
        ctx, st = self.ctx, node.state
        while True:
            key = choose_variable_chrono(ctx, st)
            if key is None:
                return None
            dom = st.domain(ctx, key)
            opts = ctx.options[key]
            kept = [gps if gps is not None and cons.energy_allows(ctx, st, key, opts[i]) else None
                    for i, gps in enumerate(dom)]
            if any(g is not None for g in kept):
                if kept != list(dom):
                    st.set_domain(key, kept)
                return key
            st.remove(key)

    def choose_value(self, node, key) -> list:
        return [LiveChoice(opt, gps) for opt, gps in self._sort_values(self.ctx, node.state, key)]

    def value_gain(self, node, value: LiveChoice) -> float:
        """Search-score increment of assigning ``value`` at ``node``; matches propagate_choices."""
        return err_reduction_reward(self.ctx, node.state, node.variable, value.option, value.gps)

    def propagate_choices(self, child, key, value: LiveChoice) -> None:
        ctx, st = self.ctx, child.state
        tick, sat = key
        opt, gps = value.option, value.gps
        res = st.reservations.get(key)
        full = err_reduction_reward(ctx, st, key, opt, gps, only_counted=False)
        counted = full if ctx.reward_gps is None else err_reduction_reward(ctx, st, key, opt, gps)
        value.plan_reward = full
        if res is not None and res.required_gp in gps:
            value.followup = (res.required_gp, res.first_tick)
        st.close_through(ctx, ctx.key_pos[key])
        st.plan_score += full
        child.score += counted
        cons.propagate_energy(ctx, st, key, opt)
        cons.propagate_image_lock(ctx, st, sat, tick)
        cons.propagate_slew(ctx, st, sat, tick, opt.angle)
        if ctx.followups:
            cons.reserve_follow_up(ctx, st, key, opt, gps)
        cons.propagate_duplicates(ctx, st, gps)

    def is_feasible(self, node) -> bool:
        return cons.is_feasible(self.ctx, node.state)


@dataclass
class PlanResult:
    plan: Plan
    nodes_created: int = 0
    iterations: int = 0
    truncated: bool = False
    complete: bool = True
    wall_time: float = 0.0
    passes: list = field(default_factory=list)


def images_from_path(path) -> dict:
    images = defaultdict(list)
    for (tick, sat), value in path:
        images[sat].append(TakeImage(tick, value.option.choice.pairs, tuple(value.gps), value.followup))
    return images


def path_score(path, start: float = 0.0) -> float:
    total = start
    for _, value in path:
        total += value.plan_reward
    return total


def search(ctx: PlanningContext, config: PlannerConfig) -> SearchResult:
    problem = ObservationProblem(ctx, config)
    return plan_it(ctx.root_state(), problem.callbacks(), config.beam_width, config.node_budget,
                   exhaustive=config.exhaustive, max_open=config.max_open)


def check_root_energy(scenario) -> None:
    en = scenario.config.energy
    if en.initial_charge < en.min_charge:
        raise PlanningError(f"initial charge {en.initial_charge:.3f} is already below the "
                            f"{en.min_charge:.2f} floor; no feasible plan exists")


def plan_single(scenario, config: PlannerConfig, **context_kw) -> PlanResult:
    check_root_energy(scenario)
    t0 = time.perf_counter()
    ctx = PlanningContext(scenario, followups=config.followups, followup_threshold=config.followup_threshold,
                          **context_kw)
    result = search(ctx, config)
    path = result.best.path()
    plan = Plan.from_images(images_from_path(path), scenario.slew, path_score(path))
    for sat in scenario.sat_ids:
        plan.commands.setdefault(sat, [])
    return PlanResult(plan, result.nodes_created, result.iterations, result.truncated, result.complete,
                      time.perf_counter() - t0)


def run_planner(scenario, config: PlannerConfig) -> PlanResult:
    if config.passes == "multi":
        from .multipass import plan_multi
        return plan_multi(scenario, config)
    return plan_single(scenario, config)


def plan_metrics(result: PlanResult, scenario) -> dict:
    """Mean measurement error over observed GPs (a completed follow-up counts its fused error),
    GPs observed, nodes, images, score, wall time."""
    outcomes = observation_outcomes(result.plan, scenario.error_context)
    final = {}
    for _sat, _tick, gp, _prior, meas, _r in outcomes:
        final[gp] = meas
    avg = sum(final.values()) / len(final) if final else 0.0
    return {
        "avg_err_per_observed_gp": avg,
        "gp_observed": len(final),
        "nodes_created": result.nodes_created,
        "image_count": result.plan.image_count,
        "plan_score": result.plan.plan_score,
        "wall_time": result.wall_time,
    }

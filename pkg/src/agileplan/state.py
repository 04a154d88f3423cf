"""Static planning context and the mutable per-node plan state."""

from __future__ import annotations

import bisect
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

from .model import IMAGE_SECONDS, CommandChoice, evolve_model_error

_MISSING = object()


@dataclass(frozen=True)
class Option:
    """One command choice of one variable, with its per-GP measurement errors."""

    key: tuple  # (tick, sat)
    idx: int
    choice: CommandChoice
    errors: dict  # gp -> measurement error
    imaging_energy: float

    @property
    def tick(self) -> int:
        return self.key[0]

    @property
    def sat(self) -> int:
        return self.key[1]

    @property
    def angle(self) -> int:
        return self.choice.angle

    @property
    def signature(self) -> str:
        return self.choice.signature


class LiveChoice:
    """A value handed to the engine: an option plus the GPs it still credits."""

    __slots__ = ("option", "gps", "plan_reward", "followup")

    def __init__(self, option: Option, gps: tuple):
        self.option = option
        self.gps = gps
        self.plan_reward = None
        self.followup = None

    def __repr__(self):
        return f"LiveChoice({self.option.sat}@{self.option.tick} {self.option.choice.label} {list(self.gps)})"


@dataclass(frozen=True)
class SatStart:
    """Where a satellite stands when a search begins."""

    charge: float
    tick: int = 0
    angle: Optional[int] = None
    exit_angle: Optional[int] = None  # must be able to slew here after the last image


class PlanningContext:
    """Read-only tables shared by every node of one search.

    ``keep_option`` filters choices out of the base domains, ``windows``
    restricts each satellite to ``[start, end)`` tick ranges with optional
    boundary angles, ``excluded_gps`` are already observed and credit nothing,
    and ``reward_gps`` limits which GPs count towards the search score.
    """

    def __init__(self, scenario, *, reward_gps=None, keep_option=None, excluded_gps=frozenset(),
                 windows=None, starts=None, followups=False, followup_threshold=0.5,
                 followup_window=7200, energy=None):
        self.scenario = scenario
        self.gps = scenario.gps
        self.rain = scenario.rain
        self.slew = scenario.slew
        self.energy = energy if energy is not None else scenario.config.energy
        self.error_model = scenario.config.error_model
        self.horizon = scenario.config.horizon_seconds
        self.reward_gps = reward_gps
        self.followups = followups
        self.followup_threshold = followup_threshold
        self.followup_window = followup_window
        self.sats = tuple(scenario.sat_ids)
        self.sat_index = {s: i for i, s in enumerate(self.sats)}
        self.windows = windows or {}
        self.starts = starts or {s: SatStart(self.energy.initial_charge) for s in self.sats}
        self._prior_base = {gp: g.model_error for gp, g in self.gps.items()}

        table = scenario.table
        excluded = frozenset(excluded_gps)
        options, base = {}, {}
        for sat in self.sats:
            window = self.windows.get(sat)
            for var in scenario.variables[sat]:
                if window is not None and not window[0] <= var.tick < window[1]:
                    continue
                key = (var.tick, sat)
                opts = []
                for choice in var.domain:
                    gps = tuple(g for g in choice.covered if g not in excluded)
                    if not gps:
                        continue
                    if keep_option is not None and not keep_option(sat, var.tick, choice, gps):
                        continue
                    errors = {g: table.lookup(choice.signature, self.gps[g].biome) for g in choice.covered}
                    en = self.energy.imaging_rate * IMAGE_SECONDS * len(choice.pairs)
                    opts.append((choice, gps, errors, en))
                if not opts:
                    continue
                options[key] = tuple(Option(key, i, c, e, en) for i, (c, _, e, en) in enumerate(opts))
                base[key] = tuple(g for _, g, _, _ in opts)
        self.options = options
        self.base = base
        self.keys = sorted(options)
        self.key_pos = {k: i for i, k in enumerate(self.keys)}
        self.sat_ticks = defaultdict(list)
        for tick, sat in self.keys:
            self.sat_ticks[sat].append(tick)

        slots = {}
        refs = defaultdict(list)
        for key in self.keys:
            per_gp = defaultdict(list)
            for i, gps in enumerate(base[key]):
                for g in gps:
                    per_gp[g].append(i)
            slots[key] = {g: tuple(ix) for g, ix in per_gp.items()}
            for g in per_gp:
                refs[g].append(key)
        self.gp_slots = slots
        self.gp_refs = {g: tuple(ks) for g, ks in refs.items()}

        # ranked-choice position of each (gp, sat, tick, signature) among all ways to see the gp
        self.ranks = {}
        for gp, entries in scenario.gp_index.items():
            n = len(entries)
            pos = 0
            prev = None
            for i, e in enumerate(entries):
                if prev is None or e.error != prev:
                    pos = i + 1
                    prev = e.error
                self.ranks[(gp, e.sat_id, e.tick, e.signature)] = (n - pos) / n

    def prior(self, gp: int, tick: int) -> float:
        return evolve_model_error(self._prior_base[gp], 0, tick, self.rain.get(gp, ()), self.error_model)

    def counts(self, gp: int) -> bool:
        return self.reward_gps is None or gp in self.reward_gps

    def sat_keys_between(self, sat: int, lo: int, hi: int) -> list:
        """Keys of ``sat`` with lo <= tick < hi."""
        ticks = self.sat_ticks.get(sat, [])
        i = bisect.bisect_left(ticks, lo)
        j = bisect.bisect_left(ticks, hi)
        return [(t, sat) for t in ticks[i:j]]

    def root_state(self) -> "PlanState":
        charge = [self.starts[s].charge for s in self.sats]
        last_tick = [self.starts[s].tick for s in self.sats]
        last_angle = [self.starts[s].angle for s in self.sats]
        return PlanState({}, 0, charge, last_tick, last_angle, 0.0, {})


class PlanState:
    """Node-local fluents: domain overrides, battery, pointing, score, reservations."""

    __slots__ = ("overrides", "frontier", "charge", "last_tick", "last_angle", "plan_score", "reservations")

    def __init__(self, overrides, frontier, charge, last_tick, last_angle, plan_score, reservations):
        self.overrides = overrides
        self.frontier = frontier
        self.charge = charge
        self.last_tick = last_tick
        self.last_angle = last_angle
        self.plan_score = plan_score
        self.reservations = reservations

    def copy(self) -> "PlanState":
        return PlanState(dict(self.overrides), self.frontier, list(self.charge), list(self.last_tick),
                         list(self.last_angle), self.plan_score, dict(self.reservations))

    def domain(self, ctx: PlanningContext, key) -> Optional[tuple]:
        """Live GP tuples aligned with ``ctx.options[key]`` (None = choice removed), or None if closed."""
        pos = ctx.key_pos.get(key)
        if pos is None or pos < self.frontier:
            return None
        d = self.overrides.get(key, _MISSING)
        return ctx.base[key] if d is _MISSING else d

    def remove(self, key) -> None:
        self.overrides[key] = None
        self.reservations.pop(key, None)

    def set_domain(self, key, entries) -> None:
        if any(e is not None for e in entries):
            self.overrides[key] = tuple(entries)
        else:
            self.remove(key)

    def close_through(self, ctx: PlanningContext, pos: int) -> None:
        self.frontier = pos + 1
        if len(self.overrides) > 256:
            kp = ctx.key_pos
            self.overrides = {k: v for k, v in self.overrides.items() if kp[k] >= self.frontier}
        if self.reservations:
            kp = ctx.key_pos
            for k in [k for k in self.reservations if kp[k] < self.frontier]:
                del self.reservations[k]

    def open_keys(self, ctx: PlanningContext):
        for key in ctx.keys[self.frontier:]:
            if self.overrides.get(key, _MISSING) is not None:
                yield key

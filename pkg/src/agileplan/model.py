"""Core data types and reward arithmetic for observation planning."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

IMAGE_SECONDS = 3
N_ANGLES = 62
INSTRUMENTS = ("L", "P")


class Biome(str, Enum):
    BARREN = "barren"
    SHRUBS = "shrubs"
    FOREST = "forest"
    CROPLANDS = "croplands"
    GRASSLANDS = "grasslands"
    OTHER = "other"


class Cohort(str, Enum):
    RAINY = "rainy"
    NON_RAINY = "nonRainy"
    SATURATED = "saturated"


@dataclass(frozen=True)
class GroundPosition:
    gp_id: int
    lat: float
    lon: float
    biome: Biome
    model_error: float = 0.0161
    cohort: Cohort = Cohort.NON_RAINY
    last_observed_tick: Optional[int] = None

    def __post_init__(self):
        if self.model_error < 0:
            raise ValueError(f"GP {self.gp_id}: negative model error {self.model_error}")


@dataclass(frozen=True)
class Instrument:
    id: str
    imaging_power_rate: float

    def __post_init__(self):
        if self.id not in INSTRUMENTS:
            raise ValueError(f"unknown instrument {self.id!r}")


Pair = tuple  # (instrument, angle)


def signature_of(pairs: Iterable[Pair]) -> str:
    """Machine signature, e.g. ``L@32`` or ``L@32+P@32``."""
    return "+".join(f"{inst}@{angle}" for inst, angle in sorted(pairs))


def label_of(pairs: Iterable[Pair]) -> str:
    """Human label as printed in plans, e.g. ``L.32 & P.32``."""
    return " & ".join(f"{inst}.{angle}" for inst, angle in sorted(pairs))


def parse_signature(sig: str) -> tuple:
    pairs = []
    for part in sig.strip().split("+"):
        inst, _, angle = part.strip().partition("@")
        if inst not in INSTRUMENTS or not angle.lstrip("-").isdigit():
            raise ValueError(f"bad command signature {sig!r}")
        pairs.append((inst, int(angle)))
    return _checked_pairs(pairs)


def parse_label(label: str) -> tuple:
    pairs = []
    for part in label.split("&"):
        inst, _, angle = part.strip().partition(".")
        if inst not in INSTRUMENTS or not angle.isdigit():
            raise ValueError(f"bad command label {label!r}")
        pairs.append((inst, int(angle)))
    return _checked_pairs(pairs)


def _checked_pairs(pairs) -> tuple:
    pairs = tuple(sorted((str(i), int(a)) for i, a in pairs))
    if not 1 <= len(pairs) <= 2:
        raise ValueError(f"a command uses one or two instruments, got {pairs}")
    if len({i for i, _ in pairs}) != len(pairs):
        raise ValueError(f"duplicate instrument in {pairs}")
    if len({a for _, a in pairs}) != 1:
        raise ValueError(f"instruments imaging together share one angle: {pairs}")
    for _, a in pairs:
        if not 0 <= a < N_ANGLES:
            raise ValueError(f"view angle {a} outside 0..{N_ANGLES - 1}")
    return pairs


@dataclass(frozen=True)
class CommandChoice:
    """One or two <instrument, angle> pairs taken at one tick, plus the GPs they cover."""

    pairs: tuple
    covered: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "pairs", _checked_pairs(self.pairs))
        object.__setattr__(self, "covered", tuple(sorted(set(self.covered))))

    @property
    def angle(self) -> int:
        return self.pairs[0][1]

    @property
    def instruments(self) -> tuple:
        return tuple(i for i, _ in self.pairs)

    @property
    def signature(self) -> str:
        return signature_of(self.pairs)

    @property
    def label(self) -> str:
        return label_of(self.pairs)

    @property
    def is_dual(self) -> bool:
        return len(self.pairs) == 2


@dataclass(frozen=True)
class TimepointVariable:
    sat_id: int
    tick: int
    domain: tuple

    @property
    def key(self) -> tuple:
        return (self.tick, self.sat_id)


class MissingErrorEntry(KeyError):
    pass


class MeasurementErrorTable:
    """Lookup of measurement error by (command signature, biome)."""

    def __init__(self, entries: Optional[Mapping] = None):
        self._entries: dict = {}
        for (sig, biome), err in (entries or {}).items():
            self.set(sig, biome, err)

    def set(self, signature: str, biome, error: float) -> None:
        if error < 0:
            raise ValueError(f"negative measurement error for {signature}/{biome}")
        self._entries[(signature, Biome(biome))] = float(error)

    def lookup(self, signature: str, biome) -> float:
        try:
            return self._entries[(signature, Biome(biome))]
        except KeyError:
            raise MissingErrorEntry(f"no measurement error for {signature} over {Biome(biome).value}") from None

    def __contains__(self, key) -> bool:
        sig, biome = key
        return (sig, Biome(biome)) in self._entries

    def __len__(self):
        return len(self._entries)

    def items(self):
        return self._entries.items()


class SlewTable:
    """Slew time (s) and energy (charge fraction) between viewing angles."""

    def __init__(self, entries: Mapping, n_angles: int = N_ANGLES):
        self.n_angles = n_angles
        self._seconds = [[0] * n_angles for _ in range(n_angles)]
        self._energy = [[0.0] * n_angles for _ in range(n_angles)]
        seen = set()
        for (a, b), (sec, en) in entries.items():
            if sec < 0 or en < 0:
                raise ValueError(f"negative slew cost for {a}->{b}")
            self._seconds[a][b] = int(sec)
            self._energy[a][b] = float(en)
            seen.add((a, b))
        missing = [(a, b) for a in range(n_angles) for b in range(n_angles) if a != b and (a, b) not in seen]
        if missing:
            raise ValueError(f"slew table missing {len(missing)} angle pairs, e.g. {missing[0]}")
        for a in range(n_angles):
            if (a, a) in seen and (self._seconds[a][a] or self._energy[a][a]):
                raise ValueError(f"slew {a}->{a} must cost nothing")
        self.max_seconds = max(max(row) for row in self._seconds) if n_angles else 0

    def seconds(self, a: Optional[int], b: int) -> int:
        return 0 if a is None else self._seconds[a][b]

    def energy(self, a: Optional[int], b: int) -> float:
        return 0.0 if a is None else self._energy[a][b]

    def monotonicity_violations(self) -> list:
        """Pairs where cost decreases while moving farther from the start angle."""
        bad = []
        for a in range(self.n_angles):
            for step in (1, -1):
                b = a + step
                while 0 <= b < self.n_angles and 0 <= b - step:
                    prev = b - step
                    if (self._seconds[a][b] < self._seconds[a][prev]
                            or self._energy[a][b] < self._energy[a][prev]):
                        bad.append((a, b))
                    b += step
        return bad

    def rows(self):
        for a in range(self.n_angles):
            for b in range(self.n_angles):
                yield a, b, self._seconds[a][b], self._energy[a][b]


@dataclass(frozen=True)
class ErrorModel:
    """Linear drift plus a fixed bump per rain event, capped."""

    drift_rate: float = 1e-6
    rain_bump: float = 0.01
    error_cap: float = 1.0


def evolve_model_error(error: float, from_tick: int, to_tick: int, rain_ticks: Sequence[int] = (),
                       params: ErrorModel = ErrorModel()) -> float:
    """Model error after ``to_tick - from_tick`` seconds without observation.

    ``rain_ticks`` must be sorted; events in ``(from_tick, to_tick]`` count.
    """
    if to_tick < from_tick:
        raise ValueError("cannot evolve error backwards in time")
    n_rain = bisect.bisect_right(rain_ticks, to_tick) - bisect.bisect_right(rain_ticks, from_tick)
    grown = error + params.drift_rate * (to_tick - from_tick) + params.rain_bump * n_rain
    return min(params.error_cap, grown) if error <= params.error_cap else error


def gp_reward(prior_error: float, measurement_error: float) -> float:
    """Error reduction for one GP; observations that would raise error earn nothing."""
    if prior_error < 0 or measurement_error < 0:
        raise ValueError("errors are non-negative")
    return max(0.0, prior_error - measurement_error)


def fuse_errors(first: float, second: float) -> float:
    """Combined error of two independent looks at one GP (inverse-variance)."""
    if first == 0 or second == 0:
        return 0.0
    return 1.0 / math.sqrt(1.0 / first ** 2 + 1.0 / second ** 2)


def cmd_reward(choice: CommandChoice, errors: Mapping[int, float], table: MeasurementErrorTable,
               biome_of: Mapping[int, Biome]) -> float:
    """Sum of GP rewards over everything the choice covers."""
    total = 0.0
    sig = choice.signature
    for gp in choice.covered:
        total += gp_reward(errors[gp], table.lookup(sig, biome_of[gp]))
    return total


# -- plans -----------------------------------------------------------------

@dataclass(frozen=True)
class TakeImage:
    start: int
    pairs: tuple
    gps: tuple = ()
    followup: Optional[tuple] = None  # (gp, tick of the first look) this image completes

    @property
    def end(self) -> int:
        return self.start + IMAGE_SECONDS - 1

    @property
    def angle(self) -> int:
        return self.pairs[0][1]

    @property
    def label(self) -> str:
        return label_of(self.pairs)

    @property
    def signature(self) -> str:
        return signature_of(self.pairs)


@dataclass(frozen=True)
class SlewToAngle:
    start: int
    end: int
    from_angle: int
    to_angle: int


@dataclass(frozen=True)
class Idle:
    start: int
    end: int


@dataclass
class Plan:
    """Per-satellite command timelines. ``plan_score`` is the score the planner tracked."""

    commands: dict = field(default_factory=dict)
    plan_score: float = 0.0

    @classmethod
    def from_images(cls, images: Mapping[int, Sequence[TakeImage]], slew: SlewTable,
                    plan_score: float = 0.0) -> "Plan":
        """Lay out images with a slew ending right before each angle change and idles in between."""
        commands = {}
        for sat in sorted(images):
            timeline = []
            prev = None
            for img in sorted(images[sat], key=lambda i: i.start):
                cursor = prev.end + 1 if prev else img.start
                if prev is not None and prev.angle != img.angle:
                    sec = slew.seconds(prev.angle, img.angle)
                    slew_start = img.start - sec
                    if slew_start > cursor:
                        timeline.append(Idle(cursor, slew_start - 1))
                    if sec:
                        timeline.append(SlewToAngle(slew_start, img.start - 1, prev.angle, img.angle))
                elif img.start > cursor:
                    timeline.append(Idle(cursor, img.start - 1))
                timeline.append(img)
                prev = img
            commands[sat] = timeline
        return cls(commands, plan_score)

    def images(self, sat: Optional[int] = None) -> list:
        sats = [sat] if sat is not None else sorted(self.commands)
        return [c for s in sats for c in self.commands.get(s, []) if isinstance(c, TakeImage)]

    def timed_images(self) -> list:
        """(start, sat, image) in the order the planner chose them: chronological, satellite-minor."""
        out = [(c.start, s, c) for s, cmds in self.commands.items() for c in cmds if isinstance(c, TakeImage)]
        out.sort(key=lambda x: (x[0], x[1]))
        return out

    @property
    def image_count(self) -> int:
        return sum(1 for _ in self.images())


@dataclass
class ErrorContext:
    """Everything needed to price an observation after the fact."""

    gps: Mapping[int, GroundPosition]
    rain: Mapping[int, Sequence[int]]
    table: MeasurementErrorTable
    model: ErrorModel = ErrorModel()

    def prior(self, gp: int, tick: int) -> float:
        g = self.gps[gp]
        return evolve_model_error(g.model_error, 0, tick, self.rain.get(gp, ()), self.model)


def observation_outcomes(plan: Plan, ctx: ErrorContext) -> list:
    """Replay a plan: ``(sat, tick, gp, prior, measurement, reward)`` per credited GP.

    Follow-up looks are priced against the error left by the first look and
    the fused measurement error of the pair.
    """
    last = {}  # gp -> (tick, post_error, measurement)
    out = []
    for tick, sat, img in plan.timed_images():
        for gp in img.gps:
            meas = ctx.table.lookup(img.signature, ctx.gps[gp].biome)
            if img.followup is not None and img.followup[0] == gp and gp in last:
                t0, post0, meas0 = last[gp]
                prior = evolve_model_error(post0, t0, tick, ctx.rain.get(gp, ()), ctx.model)
                meas = fuse_errors(meas0, meas)
            else:
                prior = ctx.prior(gp, tick)
            r = gp_reward(prior, meas)
            out.append((sat, tick, gp, prior, meas, r))
            last[gp] = (tick, prior - r, meas)
    return out


def plan_score(plan: Plan, ctx: Optional[ErrorContext] = None) -> float:
    """Sum of command rewards, recomputed by replaying the plan.

    Without an error context, returns the score recorded on the plan.
    """
    if ctx is None:
        return plan.plan_score
    total = 0.0
    current = None
    cmd_total = 0.0
    for sat, tick, _gp, _prior, _meas, r in observation_outcomes(plan, ctx):
        if (sat, tick) != current:
            total += cmd_total
            cmd_total = 0.0
            current = (sat, tick)
        cmd_total += r
    return total + cmd_total

"""Forward checking for image lock, slew, duplicates and follow-ups; the battery model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .model import IMAGE_SECONDS, evolve_model_error, fuse_errors

FOLLOWUP_WINDOW = 7200
_EPS = 1e-12


@dataclass(frozen=True)
class EnergyConfig:
    min_charge: float = 0.70
    initial_charge: float = 0.95
    imaging_rate: float = 2e-4  # charge per second per instrument
    solar_rate: float = 2e-5  # charge per second in sunlight
    eclipses: dict = field(default_factory=dict)  # sat -> sorted disjoint [start, end) intervals

    def __post_init__(self):
        if not 0 <= self.min_charge <= 1 or not 0 <= self.initial_charge <= 1:
            raise ValueError("charge levels are fractions of capacity")
        for sat, ivs in self.eclipses.items():
            prev_end = None
            for a, b in ivs:
                if b < a or (prev_end is not None and a < prev_end):
                    raise ValueError(f"eclipse intervals of sat {sat} must be sorted and disjoint")
                prev_end = b

    def sunlit_seconds(self, sat: int, t0: int, t1: int) -> int:
        if t1 <= t0:
            return 0
        dark = 0
        for a, b in self.eclipses.get(sat, ()):
            if b <= t0:
                continue
            if a >= t1:
                break
            dark += min(b, t1) - max(a, t0)
        return (t1 - t0) - dark

    def recharge(self, sat: int, charge: float, t0: int, t1: int) -> float:
        return min(1.0, charge + self.solar_rate * self.sunlit_seconds(sat, t0, t1))


@dataclass(frozen=True)
class Reservation:
    sat_id: int
    window: tuple  # (earliest, latest) ticks
    target_tick: int
    required_instrument: str
    required_gp: int
    first_tick: int
    first_error: float  # measurement error of the first look
    first_post_error: float  # model error left by the first look


# -- energy ------------------------------------------------------------------

def image_checkpoints(energy: EnergyConfig, slew, sat, charge, last_tick, last_angle, tick, option):
    """Charge after the slew into ``option`` and after its image debit."""
    sec = slew.seconds(last_angle, option.angle)
    slew_start = max(last_tick, tick - sec)
    c1 = energy.recharge(sat, charge, last_tick, slew_start) - slew.energy(last_angle, option.angle)
    c2 = energy.recharge(sat, c1, slew_start, tick) - option.imaging_energy
    return c1, c2


@dataclass(frozen=True)
class _ImageDebit:
    angle: int
    imaging_energy: float


def charge_trace(energy: EnergyConfig, slew, sat, images, charge: float, tick: int = 0, angle=None) -> list:
    """(tick, after-slew, after-image) for each image of one satellite, in time order."""
    out = []
    for img in sorted(images, key=lambda i: i.start):
        debit = _ImageDebit(img.angle, energy.imaging_rate * IMAGE_SECONDS * len(img.pairs))
        c1, c2 = image_checkpoints(energy, slew, sat, charge, tick, angle, img.start, debit)
        out.append((img.start, c1, c2))
        charge, tick, angle = c2, img.start, img.angle
    return out


def energy_allows(ctx, st, key, option) -> bool:
    tick, sat = key
    i = ctx.sat_index[sat]
    c1, c2 = image_checkpoints(ctx.energy, ctx.slew, sat, st.charge[i], st.last_tick[i], st.last_angle[i],
                               tick, option)
    floor = ctx.energy.min_charge - _EPS
    if c1 < floor or c2 < floor:
        return False
    exit_angle = ctx.starts[sat].exit_angle
    return exit_angle is None or c2 - ctx.slew.energy(option.angle, exit_angle) >= floor


def propagate_energy(ctx, st, key, option) -> None:
    tick, sat = key
    i = ctx.sat_index[sat]
    c1, c2 = image_checkpoints(ctx.energy, ctx.slew, sat, st.charge[i], st.last_tick[i], st.last_angle[i],
                               tick, option)
    # a slew that breaches the floor must stay visible to is_feasible
    st.charge[i] = c1 if c1 < ctx.energy.min_charge - _EPS else c2
    st.last_tick[i] = tick
    st.last_angle[i] = option.angle


def is_feasible(ctx, st) -> bool:
    floor = ctx.energy.min_charge - _EPS
    for sat, i in ctx.sat_index.items():
        c = st.charge[i]
        if c < floor:
            return False
        exit_angle = ctx.starts[sat].exit_angle
        if exit_angle is not None and st.last_angle[i] is not None:
            if c - ctx.slew.energy(st.last_angle[i], exit_angle) < floor:
                return False
    return True


# -- forward checking --------------------------------------------------------

def propagate_image_lock(ctx, st, sat: int, tick: int) -> None:
    """Nothing else for this satellite while the image is held."""
    for t in range(tick + 1, tick + IMAGE_SECONDS):
        key = (t, sat)
        if key in ctx.key_pos:
            st.remove(key)


def propagate_slew(ctx, st, sat: int, tick: int, angle: int) -> None:
    """Drop future choices that cannot be slewed to in time from ``angle``."""
    end = tick + IMAGE_SECONDS
    slew = ctx.slew
    for key in ctx.sat_keys_between(sat, tick + 1, end + slew.max_seconds):
        dom = st.domain(ctx, key)
        if dom is None:
            continue
        t = key[0]
        opts = ctx.options[key]
        new = None
        for i, gps in enumerate(dom):
            if gps is not None and t < end + slew.seconds(angle, opts[i].angle):
                if new is None:
                    new = list(dom)
                new[i] = None
        if new is not None:
            st.set_domain(key, new)


def propagate_duplicates(ctx, st, gps) -> None:
    """Observed GPs disappear from every future choice of every satellite.

    When only some GPs count (a cohort pass), a choice left without any of
    them goes too.
    """
    observed = set(gps)
    counted = ctx.reward_gps
    touched = set()
    for g in observed:
        touched.update(ctx.gp_refs.get(g, ()))
    for key in sorted(touched, key=ctx.key_pos.__getitem__):
        dom = st.domain(ctx, key)
        if dom is None:
            continue
        slots = ctx.gp_slots[key]
        res = st.reservations.get(key)
        new = list(dom)
        changed = False
        for g in observed:
            for i in slots.get(g, ()):
                live = new[i]
                if live is None or g not in live:
                    continue
                if res is not None and res.required_gp == g and _serves(ctx.options[key][i], res):
                    continue
                live = tuple(x for x in live if x != g)
                if counted is not None and not any(x in counted for x in live):
                    live = ()
                new[i] = live or None
                changed = True
        if changed:
            st.set_domain(key, new)


def _serves(option, res: Reservation) -> bool:
    return res.required_instrument in option.choice.instruments


def reserve_follow_up(ctx, st, key, option, gps) -> Optional[Reservation]:
    """Reserve a later complementary look at one GP when the pair beats the single look.

    Only single-instrument images qualify; the target variable keeps just the
    choices that use the other instrument and still see the GP.
    """
    if len(option.choice.pairs) != 1:
        return None
    tick, sat = key
    first_inst = option.choice.instruments[0]
    other = "P" if first_inst == "L" else "L"
    latest = min(tick + ctx.followup_window, ctx.horizon - 1)
    earliest = tick + IMAGE_SECONDS
    if latest < earliest:
        return None
    best = None
    for g in gps:
        if not ctx.counts(g):
            continue
        m1 = option.errors[g]
        prior = ctx.prior(g, tick)
        post = prior - max(0.0, prior - m1)
        for e in ctx.scenario.gp_index.get(g, ()):
            if e.sat_id != sat or not earliest <= e.tick <= latest or e.signature.count("@") != 1:
                continue
            if not e.signature.startswith(other + "@"):
                continue
            fused = fuse_errors(m1, e.error)
            if m1 <= 0 or (m1 - fused) / m1 < ctx.followup_threshold:
                continue
            tkey = (e.tick, sat)
            if tkey in st.reservations:
                continue
            dom = st.domain(ctx, tkey)
            if dom is None:
                continue
            idx = [i for i, o in enumerate(ctx.options[tkey]) if dom[i] is not None and g in dom[i]
                   and (other, int(e.signature.split("@")[1])) in o.choice.pairs]
            if not idx:
                continue
            cand = (fused, e.tick, g, tkey, idx, m1, post)
            if best is None or cand[:3] < best[:3]:
                best = cand
    if best is None:
        return None
    fused, t2, g, tkey, idx, m1, post = best
    res = Reservation(sat, (earliest, latest), t2, other, g, tick, m1, post)
    dom = st.domain(ctx, tkey)
    keep = set(idx)
    st.set_domain(tkey, [d if i in keep else None for i, d in enumerate(dom)])
    st.reservations[tkey] = res
    return res


def followup_terms(ctx, res: Reservation, tick: int, option):
    """Prior and effective measurement error for the reserved GP at its second look."""
    g = res.required_gp
    prior = evolve_model_error(res.first_post_error, res.first_tick, tick, ctx.rain.get(g, ()), ctx.error_model)
    return prior, fuse_errors(res.first_error, option.errors[g])

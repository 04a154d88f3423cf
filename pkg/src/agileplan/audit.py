"""Stand-alone plan checker.

Re-derives every hard constraint from the scenario tables alone, without the
planner's propagation code, so a propagation bug cannot hide itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import IMAGE_SECONDS, Idle, SlewToAngle, TakeImage

FLOOR_TOL = 1e-12
SCORE_RTOL = 1e-9


@dataclass
class AuditReport:
    violations: list = field(default_factory=list)  # (kind, sat, tick, detail)
    replay_score: float = 0.0
    recorded_score: float = 0.0
    min_charge: float = 1.0

    @property
    def ok(self) -> bool:
        return not self.violations

    def count(self, kind: str) -> int:
        return sum(1 for v in self.violations if v[0] == kind)

    def summary(self) -> str:
        kinds = ("lock", "slew", "duplicate", "energy", "choice", "timeline", "score")
        counts = ", ".join(f"{k}={self.count(k)}" for k in kinds)
        return (f"{'OK' if self.ok else 'VIOLATIONS'}: {counts}; replay score {self.replay_score:.9g}, "
                f"recorded {self.recorded_score:.9g}, lowest charge {self.min_charge:.4f}")


def _sunlit(eclipses, t0, t1):
    if t1 <= t0:
        return 0
    dark = sum(max(0, min(b, t1) - max(a, t0)) for a, b in eclipses)
    return t1 - t0 - dark


def _error_at(e0, t0, t1, rain, drift, bump, cap):
    n = sum(1 for r in rain if t0 < r <= t1)
    e = e0 + drift * (t1 - t0) + bump * n
    return min(cap, e) if e0 <= cap else e0


def audit_plan(plan, scenario, followup_window: int = 7200) -> AuditReport:
    rep = AuditReport(recorded_score=plan.plan_score)
    cfg = scenario.config
    en = cfg.energy
    slew = scenario.slew
    em = cfg.error_model

    # choices available at each (sat, tick)
    available = {}
    for sat, variables in scenario.variables.items():
        for var in variables:
            available[(sat, var.tick)] = {c.signature: set(c.covered) for c in var.domain}

    for sat, cmds in plan.commands.items():
        cursor = -1
        for c in cmds:
            if c.start <= cursor or getattr(c, "end", c.start) < c.start:
                rep.violations.append(("timeline", sat, c.start, f"{type(c).__name__} overlaps the previous command"))
            cursor = max(cursor, getattr(c, "end", c.start))
            if isinstance(c, TakeImage) and c.end != c.start + IMAGE_SECONDS - 1:
                rep.violations.append(("timeline", sat, c.start, "image does not last the lock period"))
            if isinstance(c, (Idle, SlewToAngle)) and c.end >= cfg.horizon_seconds:
                rep.violations.append(("timeline", sat, c.start, "command runs past the horizon"))

        images = sorted((c for c in cmds if isinstance(c, TakeImage)), key=lambda i: i.start)
        charge = en.initial_charge
        last_t, last_a = 0, None
        ecl = en.eclipses.get(sat, ())
        for img in images:
            if not 0 <= img.start or img.end >= cfg.horizon_seconds:
                rep.violations.append(("timeline", sat, img.start, "image outside the horizon"))
            have = available.get((sat, img.start), {})
            covered = have.get(img.signature)
            if covered is None:
                rep.violations.append(("choice", sat, img.start, f"{img.label} is not a command choice here"))
            elif not set(img.gps) <= covered:
                rep.violations.append(("choice", sat, img.start, "credits GPs the choice does not cover"))
            if last_a is not None:
                if img.start < last_t + IMAGE_SECONDS:
                    rep.violations.append(("lock", sat, img.start, f"starts during the image at {last_t}"))
                need = 0 if img.angle == last_a else slew.seconds(last_a, img.angle)
                if img.start - (last_t + IMAGE_SECONDS) < need:
                    rep.violations.append(("slew", sat, img.start,
                                           f"{last_a}->{img.angle} needs {need}s, has {img.start - last_t - IMAGE_SECONDS}s"))
            # battery: recharge until the slew starts, pay the slew, recharge, pay the image
            if last_a is None or img.angle == last_a:
                sec, cost = 0, 0.0
            else:
                sec, cost = slew.seconds(last_a, img.angle), slew.energy(last_a, img.angle)
            slew_start = max(last_t, img.start - sec)
            charge = min(1.0, charge + en.solar_rate * _sunlit(ecl, last_t, slew_start)) - cost
            if charge < en.min_charge - FLOOR_TOL:
                rep.violations.append(("energy", sat, img.start, f"charge {charge:.4f} after slew"))
            rep.min_charge = min(rep.min_charge, charge)
            charge = min(1.0, charge + en.solar_rate * _sunlit(ecl, slew_start, img.start))
            charge -= en.imaging_rate * IMAGE_SECONDS * len(img.pairs)
            if charge < en.min_charge - FLOOR_TOL:
                rep.violations.append(("energy", sat, img.start, f"charge {charge:.4f} after image"))
            rep.min_charge = min(rep.min_charge, charge)
            last_t, last_a = img.start, img.angle

    # duplicate credit and score replay, in planning order
    timed = sorted(((img.start, sat, img) for sat, cmds in plan.commands.items()
                    for img in cmds if isinstance(img, TakeImage)), key=lambda x: (x[0], x[1]))
    seen = {}  # gp -> (sat, tick, post error, measurement)
    total = 0.0
    for tick, sat, img in timed:
        cmd = 0.0
        for gp in img.gps:
            g = scenario.gps[gp]
            meas = scenario.table.lookup(img.signature, g.biome)
            rain = scenario.rain.get(gp, ())
            if gp in seen:
                s0, t0, post0, m0 = seen[gp]
                legit = (img.followup is not None and img.followup[0] == gp and img.followup[1] == t0
                         and s0 == sat and tick - t0 <= followup_window)
                if not legit:
                    rep.violations.append(("duplicate", sat, tick, f"GP {gp} already credited at {t0}"))
                prior = _error_at(post0, t0, tick, rain, em.drift_rate, em.rain_bump, em.error_cap)
                meas = 1.0 / math.sqrt(1.0 / m0 ** 2 + 1.0 / meas ** 2) if legit and m0 and meas else meas
            else:
                prior = _error_at(g.model_error, 0, tick, rain, em.drift_rate, em.rain_bump, em.error_cap)
            r = max(0.0, prior - meas)
            cmd += r
            seen[gp] = (sat, tick, prior - r, meas)
        total += cmd
    rep.replay_score = total
    scale = max(abs(total), abs(plan.plan_score), 1e-12)
    if abs(total - plan.plan_score) > SCORE_RTOL * scale:
        rep.violations.append(("score", None, None, f"recorded {plan.plan_score!r} vs replay {total!r}"))
    return rep

"""Synthetic scenario generator.

Visibility follows a sweeping window: during a pass a satellite's
along-track position advances one unit per second, and at each tick every
viewing angle sees the GPs inside a footprint that widens away from nadir.
Wide looks therefore cover more GPs but carry larger measurement errors.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .model import N_ANGLES, Biome, signature_of

BIOMES = [b.value for b in Biome]
NADIR = (N_ANGLES - 1) / 2

# base retrieval error per biome, and per-instrument multipliers (P-band sees through canopy)
BIOME_ERROR = {"barren": 0.0045, "shrubs": 0.0060, "grasslands": 0.0065,
               "croplands": 0.0080, "forest": 0.0110, "other": 0.0075}
INSTRUMENT_FACTOR = {
    "L": {"barren": 0.9, "shrubs": 1.0, "grasslands": 1.0, "croplands": 1.1, "forest": 1.6, "other": 1.0},
    "P": {"barren": 1.3, "shrubs": 1.2, "grasslands": 1.1, "croplands": 1.0, "forest": 0.8, "other": 1.1},
}
L_ANGLES = range(0, N_ANGLES)
P_ANGLES = range(4, N_ANGLES - 4)


@dataclass(frozen=True)
class GeneratorParams:
    n_sats: int = 3
    n_gps: int = 1662
    horizon_seconds: int = 21_600
    angles_per_instrument: int = N_ANGLES
    tps_per_sat: int = 120
    passes_per_sat: int = 4
    mean_choices_per_tp: float = 51.0
    cluster_size: float = 20.0  # mean GPs per land patch
    cluster_spread: float = 2.5  # patch radius, in along-track seconds and angle steps
    coverage_fraction: float = 0.64
    footprint_half_length: int = 4
    footprint_growth: float = 3.0  # edge footprint is (1 + growth) times as wide as the nadir one
    footprint_stretch: float = 1.0  # edge footprint is (1 + stretch) times as long
    rain_fraction: float = 0.25
    saturation_fraction: float = 0.08
    eclipse_fraction: float = 0.35
    orbit_period: int = 5400
    duplication_factor: float = 3.0
    initial_error_mean: float = 0.0161
    initial_error_spread: float = 0.004
    error_scale: float = 1.0  # multiplies every retrieval error before clipping
    error_slope: float = 3.0
    combined_worse_fraction: float = 0.15
    min_measurement_error: float = 0.001
    max_measurement_error: float = 0.05
    slew_settle_seconds: float = 0.5
    slew_seconds_per_sqrt_angle: float = 1.5  # bang-bang attitude manoeuvre: time ~ sqrt(angle)
    slew_energy_base: float = 2e-4
    slew_energy_per_angle: float = 5e-5
    initial_charge: float = 0.90
    min_charge: float = 0.70
    imaging_rate: float = 2e-4
    solar_rate: float = 2e-5
    drift_rate: float = 1e-6
    rain_bump: float = 0.01

    def validate(self) -> None:
        if self.n_sats < 1:
            raise ValueError("need at least one satellite")
        if self.n_gps < 0 or self.tps_per_sat < 0 or self.passes_per_sat < 1:
            raise ValueError("counts must be non-negative and passes_per_sat positive")
        if self.angles_per_instrument != N_ANGLES:
            raise ValueError(f"only {N_ANGLES} viewing angles are supported")
        if self.duplication_factor < 1:
            raise ValueError("duplication_factor is at least 1")
        for name in ("rain_fraction", "saturation_fraction", "eclipse_fraction", "coverage_fraction",
                     "combined_worse_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.cluster_size <= 0 or self.cluster_spread < 0:
            raise ValueError("cluster_size must be positive and cluster_spread non-negative")
        if not 0 < self.min_measurement_error <= self.max_measurement_error:
            raise ValueError("measurement error bounds are inverted")
        if self.mean_choices_per_tp <= 0:
            raise ValueError("mean_choices_per_tp must be positive")
        if self.tps_per_sat and self.tps_per_sat // self.passes_per_sat < 1:
            raise ValueError("each pass needs at least one tick")
        pass_len = math.ceil(self.tps_per_sat / self.passes_per_sat) if self.tps_per_sat else 0
        if pass_len * self.passes_per_sat * 2 > self.horizon_seconds:
            raise ValueError("passes do not fit in the horizon")

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generator parameters: {sorted(unknown)}")
        return cls(**d)


def reference_profile(scale: float = 1000.0, **overrides) -> GeneratorParams:
    """Three satellites and ~1.66M GPs divided by ``scale``; 51 choices per TP, 62 angles."""
    params = GeneratorParams(n_gps=int(round(1_662_486 / scale)))
    return replace(params, **overrides)


def slew_cost(params: GeneratorParams, a: int, b: int) -> tuple:
    if a == b:
        return 0, 0.0
    d = abs(a - b)
    return (math.ceil(params.slew_settle_seconds + params.slew_seconds_per_sqrt_angle * math.sqrt(d)),
            params.slew_energy_base + params.slew_energy_per_angle * d)


def measurement_errors(params: GeneratorParams, rng: np.random.Generator) -> dict:
    """(signature, biome) -> error for every single look and every same-angle pair."""
    lo, hi = params.min_measurement_error, params.max_measurement_error
    out = {}
    for biome in BIOMES:
        patch = rng.lognormal(0.0, 0.15)
        for a in range(N_ANGLES):
            off = abs(a - NADIR) / NADIR
            single = {}
            for inst, ok in (("L", L_ANGLES), ("P", P_ANGLES)):
                if a not in ok:
                    continue
                m = BIOME_ERROR[biome] * INSTRUMENT_FACTOR[inst][biome] * patch * params.error_scale
                m *= (1 + params.error_slope * off ** 2) * rng.lognormal(0.0, 0.2)
                single[inst] = float(np.clip(m, lo, hi))
                out[(signature_of([(inst, a)]), biome)] = single[inst]
            if len(single) == 2:
                ml, mp = single["L"], single["P"]
                if rng.random() < params.combined_worse_fraction:
                    mc = rng.uniform(min(ml, mp), max(ml, mp) * 1.2)
                else:
                    mc = 1.0 / math.sqrt(1 / ml ** 2 + 1 / mp ** 2) * rng.lognormal(-0.1, 0.15)
                out[(signature_of([("L", a), ("P", a)]), biome)] = float(np.clip(mc, lo, hi))
    return out


class _World:
    """GP layout, pass geometry and footprint coverage for one seed."""

    def __init__(self, params: GeneratorParams, rng: np.random.Generator):
        p = self.params = params
        self.pass_len = math.ceil(p.tps_per_sat / p.passes_per_sat) if p.tps_per_sat else 0
        self.reach = p.footprint_half_length * (1 + p.footprint_stretch)
        swept = p.n_sats * p.passes_per_sat * (self.pass_len + 2 * p.footprint_half_length)
        self.length = max(swept / max(p.coverage_fraction, 1e-6), 1.0)

        # GPs clump into land patches, so a footprint that touches one sees several
        n_patches = max(1, int(round(p.n_gps / p.cluster_size)))
        cu = rng.random(n_patches) * self.length
        cv = rng.random(n_patches) * (N_ANGLES - 1)
        patch = rng.integers(0, n_patches, size=p.n_gps)
        self.u = np.clip(cu[patch] + rng.normal(0, p.cluster_spread, p.n_gps), 0, self.length)
        self.v = np.clip(cv[patch] + rng.normal(0, p.cluster_spread, p.n_gps), 0, N_ANGLES - 1)
        biome_of_patch = rng.choice(len(BIOMES), size=n_patches, p=[0.14, 0.2, 0.2, 0.18, 0.18, 0.1])
        self.biome = [BIOMES[i] for i in biome_of_patch[patch]]
        self.order = np.argsort(self.u, kind="stable")
        self.u_sorted = self.u[self.order]

        self.passes = {}
        for s in range(1, p.n_sats + 1):
            slots = p.horizon_seconds // max(self.pass_len * 2, 1)
            chosen = np.sort(rng.choice(max(slots, p.passes_per_sat), size=p.passes_per_sat, replace=False))
            starts = [int(c * (p.horizon_seconds // max(slots, p.passes_per_sat))) + int(rng.integers(0, self.pass_len + 1))
                      for c in chosen]
            u0s = rng.random(p.passes_per_sat) * max(self.length - self.pass_len, 1.0)
            self.passes[s] = [(t0, float(u0)) for t0, u0 in zip(starts, u0s)]

    def footprint(self, angles: np.ndarray, scale: float) -> np.ndarray:
        off = np.abs(angles - NADIR) / NADIR
        return scale * (1 + self.params.footprint_growth * off)

    def access(self, scale: float):
        """Yield (sat, tick, angle, gp ids) for each non-empty single-angle footprint."""
        p = self.params
        angles = np.arange(N_ANGLES, dtype=float)
        width = self.footprint(angles, scale)
        off = np.abs(angles - NADIR) / NADIR
        length = p.footprint_half_length * (1 + p.footprint_stretch * off)
        for s in sorted(self.passes):
            for t0, u0 in self.passes[s]:
                for k in range(self.pass_len):
                    t = t0 + k
                    if t >= p.horizon_seconds:
                        break
                    pos = u0 + k
                    i = np.searchsorted(self.u_sorted, pos - self.reach, side="left")
                    j = np.searchsorted(self.u_sorted, pos + self.reach, side="right")
                    if i == j:
                        continue
                    idx = self.order[i:j]
                    hit = ((np.abs(self.v[idx][:, None] - angles[None, :]) <= width[None, :])
                           & (np.abs(self.u[idx][:, None] - pos) <= length[None, :]))
                    for a in np.nonzero(hit.any(axis=0))[0]:
                        yield s, t, int(a), sorted(int(g) + 1 for g in idx[hit[:, a]])

    def mean_choices(self, scale: float) -> float:
        per_tp = {}
        for s, t, a, _ in self.access(scale):
            n = (a in L_ANGLES) + (a in P_ANGLES)
            per_tp[(s, t)] = per_tp.get((s, t), 0) + n + (n == 2)
        return sum(per_tp.values()) / len(per_tp) if per_tp else 0.0

    def calibrate(self) -> float:
        """Footprint scale whose mean choice count per TP is closest to the target."""
        target = self.params.mean_choices_per_tp
        lo, hi = 0.05, 8.0
        if self.params.n_gps == 0 or self.pass_len == 0:
            return 1.0
        for _ in range(24):
            mid = 0.5 * (lo + hi)
            if self.mean_choices(mid) < target:
                lo = mid
            else:
                hi = mid
        return round(0.5 * (lo + hi), 6)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def generate(params: GeneratorParams, seed: int, out_dir) -> Path:
    """Write a raw scenario directory; identical (params, seed) give identical bytes."""
    params.validate()
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world = _World(params, rng)
    scale = world.calibrate()

    # GP definitions, rain, saturation
    n = params.n_gps
    rainy = rng.random(n) < params.rain_fraction
    saturated = rng.random(n) < params.saturation_fraction
    rain_rows = []
    err0 = np.clip(rng.normal(params.initial_error_mean, params.initial_error_spread, n), 0.002, 0.05)
    for g in range(n):
        if not rainy[g]:
            continue
        for _ in range(int(rng.integers(1, 4))):
            if rng.random() < 0.5:
                t = -int(rng.integers(60, 6 * 3600))
                err0[g] = min(err0[g] + params.rain_bump * 0.5, 0.08)
            else:
                t = int(rng.integers(0, max(params.horizon_seconds, 1)))
            rain_rows.append((g + 1, t))
    rain_rows.sort()
    lat = -60 + 120 * world.u / world.length if n else []
    lon = -180 + 360 * world.v / (N_ANGLES - 1) if n else []
    with (out / "gp_defs.csv").open("w") as fh:
        fh.write("gpId,lat,lon,biome,error\n")
        for g in range(n):
            fh.write(f"{g + 1},{lat[g]:.4f},{lon[g]:.4f},{world.biome[g]},{_fmt(err0[g])}\n")
    with (out / "rain.csv").open("w") as fh:
        fh.write("gpId,tick\n")
        for g, t in rain_rows:
            fh.write(f"{g},{t}\n")
    with (out / "saturation.csv").open("w") as fh:
        fh.write("gpId\n")
        for g in np.nonzero(saturated)[0]:
            fh.write(f"{int(g) + 1}\n")

    # access records, with each distinct command split over duplicated raw rows
    whole, frac = divmod(params.duplication_factor, 1.0)
    files = {s: [] for s in range(1, params.n_sats + 1)}
    for s, t, a, gps in world.access(scale):
        for inst, ok in (("L", L_ANGLES), ("P", P_ANGLES)):
            if a not in ok:
                continue
            k = int(whole) + (1 if rng.random() < frac else 0)
            for j in range(k):
                part = gps[j::k] or [gps[j % len(gps)]]
                files[s].append((t, inst, a, part))
    for s, rows in files.items():
        rows.sort(key=lambda r: (r[0], r[1], r[2]))
        with (out / f"access_{s}.csv").open("w") as fh:
            fh.write("tick,instrument,angle,gpIds\n")
            for t, inst, a, part in rows:
                fh.write(f"{t},{inst},{a},{';'.join(map(str, part))}\n")

    with (out / "meas_err.csv").open("w") as fh:
        fh.write("signature,biome,error\n")
        for (sig, biome), e in sorted(measurement_errors(params, rng).items()):
            fh.write(f"{sig},{biome},{_fmt(e)}\n")

    with (out / "slew.csv").open("w") as fh:
        fh.write("fromAngle,toAngle,seconds,energy\n")
        for a in range(N_ANGLES):
            for b in range(N_ANGLES):
                sec, en = slew_cost(params, a, b)
                fh.write(f"{a},{b},{sec},{_fmt(en)}\n")

    eclipses = {}
    for s in range(1, params.n_sats + 1):
        phase = int(rng.integers(0, params.orbit_period))
        dark = int(round(params.eclipse_fraction * params.orbit_period))
        ivs = []
        start = phase - params.orbit_period
        while start < params.horizon_seconds:
            a, b = max(start, 0), min(start + dark, params.horizon_seconds)
            if b > a:
                ivs.append([a, b])
            start += params.orbit_period
        eclipses[str(s)] = ivs
    config = {
        "horizonSeconds": params.horizon_seconds,
        "energy": {"minCharge": params.min_charge, "initialCharge": params.initial_charge,
                   "imagingRate": params.imaging_rate, "solarRate": params.solar_rate},
        "eclipses": eclipses,
        "errorModel": {"driftRate": params.drift_rate, "rainBump": params.rain_bump, "errorCap": 1.0},
        "generator": {"seed": seed, "footprintScale": scale, "params": asdict(params)},
    }
    (out / "scenario.json").write_text(json.dumps(config, indent=1, sort_keys=True) + "\n")
    return out

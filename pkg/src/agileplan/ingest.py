"""Scenario ingest: raw files -> flattened per-TP domains and the GP-choice index."""

from __future__ import annotations

import csv
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .constraints import EnergyConfig
from .model import (
    IMAGE_SECONDS,
    INSTRUMENTS,
    N_ANGLES,
    Biome,
    Cohort,
    CommandChoice,
    ErrorContext,
    ErrorModel,
    GroundPosition,
    MeasurementErrorTable,
    MissingErrorEntry,
    SlewTable,
    TimepointVariable,
    parse_signature,
    signature_of,
)

DUPLICATE_WINDOW = 86_400
ACCESS_RE = re.compile(r"access_(\d+)\.csv$")


class IngestError(Exception):
    def __init__(self, message: str, file: Optional[str] = None, line: Optional[int] = None):
        self.file = file
        self.line = line
        where = ""
        if file:
            where = f"{file}:{line}: " if line else f"{file}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class RawAccessRecord:
    sat_id: int
    tick: int
    instrument: str
    angle: int
    gps: tuple


@dataclass
class ScenarioConfig:
    horizon_seconds: int = 21_600
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    error_model: ErrorModel = field(default_factory=ErrorModel)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        e = d.get("energy", {})
        eclipses = {int(s): tuple((int(a), int(b)) for a, b in iv) for s, iv in d.get("eclipses", {}).items()}
        energy = EnergyConfig(
            min_charge=e.get("minCharge", 0.70),
            initial_charge=e.get("initialCharge", 0.95),
            imaging_rate=e.get("imagingRate", 2e-4),
            solar_rate=e.get("solarRate", 2e-5),
            eclipses=eclipses,
        )
        m = d.get("errorModel", {})
        model = ErrorModel(m.get("driftRate", 1e-6), m.get("rainBump", 0.01), m.get("errorCap", 1.0))
        return cls(int(d.get("horizonSeconds", 21_600)), energy, model)

    def to_dict(self) -> dict:
        en = self.energy
        return {
            "horizonSeconds": self.horizon_seconds,
            "energy": {"minCharge": en.min_charge, "initialCharge": en.initial_charge,
                       "imagingRate": en.imaging_rate, "solarRate": en.solar_rate},
            "eclipses": {str(s): [list(iv) for iv in ivs] for s, ivs in sorted(en.eclipses.items())},
            "errorModel": {"driftRate": self.error_model.drift_rate, "rainBump": self.error_model.rain_bump,
                           "errorCap": self.error_model.error_cap},
        }


@dataclass
class RawScenario:
    gps: dict
    access: dict  # sat -> list[RawAccessRecord]
    rain: dict  # gp -> sorted tuple of ticks
    saturated: frozenset
    table: MeasurementErrorTable
    slew: SlewTable
    config: ScenarioConfig


@dataclass(frozen=True)
class GPChoiceEntry:
    sat_id: int
    tick: int
    signature: str
    error: float

    @property
    def label(self) -> str:
        return " & ".join(p.replace("@", ".") for p in self.signature.split("+"))


@dataclass
class FlattenStats:
    raw_choices: int = 0
    merged_choices: int = 0
    dual_choices: int = 0

    @property
    def reduction(self) -> float:
        """Fraction of raw choices removed by merging (synthesised duals excluded)."""
        return 1.0 - self.merged_choices / self.raw_choices if self.raw_choices else 0.0

    @property
    def flattened_choices(self) -> int:
        return self.merged_choices + self.dual_choices


@dataclass
class Scenario:
    gps: dict
    variables: dict  # sat -> list[TimepointVariable], chronological
    table: MeasurementErrorTable
    slew: SlewTable
    rain: dict
    saturated: frozenset
    config: ScenarioConfig
    gp_index: dict
    stats: FlattenStats = field(default_factory=FlattenStats)

    @property
    def sat_ids(self) -> list:
        return sorted(self.variables)

    @property
    def error_context(self) -> ErrorContext:
        return ErrorContext(self.gps, self.rain, self.table, self.config.error_model)

    def choices_per_tp(self) -> list:
        return [len(v.domain) for vs in self.variables.values() for v in vs]


# -- parsing ---------------------------------------------------------------

def _rows(path: Path, required: list):
    if not path.exists():
        raise IngestError("missing file", path.name)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        absent = [c for c in required if c not in header]
        if absent:
            raise IngestError(f"header lacks column(s) {absent}", path.name, 1)
        for row in reader:
            yield reader.line_num, row


def _int(value, path, line, what):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise IngestError(f"{what} is not an integer: {value!r}", path.name, line) from None


def _float(value, path, line, what):
    try:
        return float(value)
    except (TypeError, ValueError):
        raise IngestError(f"{what} is not a number: {value!r}", path.name, line) from None


def parse_scenario(directory) -> RawScenario:
    """Read and cross-check the six raw scenario files (plus optional scenario.json)."""
    d = Path(directory)
    if not d.is_dir():
        raise IngestError(f"scenario directory {d} does not exist")

    gps = {}
    path = d / "gp_defs.csv"
    for line, row in _rows(path, ["gpId", "lat", "lon", "biome"]):
        gp = _int(row["gpId"], path, line, "gpId")
        if gp in gps:
            raise IngestError(f"duplicate gpId {gp}", path.name, line)
        try:
            biome = Biome(row["biome"].strip())
        except ValueError:
            raise IngestError(f"unknown biome {row['biome']!r}", path.name, line) from None
        err = row.get("error")
        last = row.get("lastObserved")
        gps[gp] = GroundPosition(
            gp, _float(row["lat"], path, line, "lat"), _float(row["lon"], path, line, "lon"), biome,
            model_error=_float(err, path, line, "error") if err not in (None, "") else 0.0161,
            last_observed_tick=_int(last, path, line, "lastObserved") if last not in (None, "") else None,
        )

    access_files = sorted((int(m.group(1)), p) for p in d.iterdir() if (m := ACCESS_RE.search(p.name)))
    if not access_files:
        raise IngestError("no access_<satId>.csv files", d.name)
    access = {}
    for sat, path in access_files:
        records = []
        for line, row in _rows(path, ["tick", "instrument", "angle", "gpIds"]):
            tick = _int(row["tick"], path, line, "tick")
            inst = row["instrument"].strip()
            if inst not in INSTRUMENTS:
                raise IngestError(f"unknown instrument {inst!r}", path.name, line)
            angle = _int(row["angle"], path, line, "angle")
            if not 0 <= angle < N_ANGLES:
                raise IngestError(f"angle {angle} outside 0..{N_ANGLES - 1}", path.name, line)
            ids = [s for s in (row["gpIds"] or "").split(";") if s.strip()]
            if not ids:
                raise IngestError("empty GP list", path.name, line)
            members = tuple(_int(s, path, line, "gpId") for s in ids)
            for gp in members:
                if gp not in gps:
                    raise IngestError(f"dangling reference to unknown GP {gp}", path.name, line)
            records.append(RawAccessRecord(sat, tick, inst, angle, members))
        access[sat] = records

    rain = defaultdict(list)
    path = d / "rain.csv"
    for line, row in _rows(path, ["gpId", "tick"]):
        gp = _int(row["gpId"], path, line, "gpId")
        if gp not in gps:
            raise IngestError(f"dangling reference to unknown GP {gp}", path.name, line)
        rain[gp].append(_int(row["tick"], path, line, "tick"))
    rain = {gp: tuple(sorted(ts)) for gp, ts in rain.items()}

    saturated = set()
    path = d / "saturation.csv"
    for line, row in _rows(path, ["gpId"]):
        gp = _int(row["gpId"], path, line, "gpId")
        if gp not in gps:
            raise IngestError(f"dangling reference to unknown GP {gp}", path.name, line)
        saturated.add(gp)

    table = MeasurementErrorTable()
    path = d / "meas_err.csv"
    for line, row in _rows(path, ["signature", "biome", "error"]):
        try:
            sig = signature_of(parse_signature(row["signature"]))
            table.set(sig, Biome(row["biome"].strip()), _float(row["error"], path, line, "error"))
        except ValueError as exc:
            raise IngestError(str(exc), path.name, line) from None

    entries = {}
    path = d / "slew.csv"
    for line, row in _rows(path, ["fromAngle", "toAngle", "seconds", "energy"]):
        a = _int(row["fromAngle"], path, line, "fromAngle")
        b = _int(row["toAngle"], path, line, "toAngle")
        if not (0 <= a < N_ANGLES and 0 <= b < N_ANGLES):
            raise IngestError(f"slew angles {a}->{b} out of range", path.name, line)
        entries[(a, b)] = (_int(row["seconds"], path, line, "seconds"), _float(row["energy"], path, line, "energy"))
    for a in range(N_ANGLES):
        entries.setdefault((a, a), (0, 0.0))
    try:
        slew = SlewTable(entries)
    except ValueError as exc:
        raise IngestError(str(exc), path.name) from None
    bad = slew.monotonicity_violations()
    if bad:
        raise IngestError(f"slew cost not monotone in angle distance at {bad[0]}", path.name)

    cfg_path = d / "scenario.json"
    config = ScenarioConfig.from_dict(json.loads(cfg_path.read_text())) if cfg_path.exists() else ScenarioConfig()
    gps = {gp: _with_cohort(g, gp in rain, gp in saturated) for gp, g in gps.items()}
    return RawScenario(gps, access, rain, frozenset(saturated), table, slew, config)


def _with_cohort(g: GroundPosition, rainy: bool, saturated: bool) -> GroundPosition:
    cohort = Cohort.SATURATED if saturated else Cohort.RAINY if rainy else Cohort.NON_RAINY
    return replace(g, cohort=cohort)


# -- flattening ------------------------------------------------------------

def flatten_choices(records, stats: Optional[FlattenStats] = None) -> dict:
    """Regroup per-GP raw access records into one variable per (sat, tick).

    Identical (tick, instrument, angle) commands merge with their GP lists
    unioned; where both instruments image at one (tick, angle) a dual choice
    covering the GPs both see is added.
    """
    stats = stats if stats is not None else FlattenStats()
    merged = defaultdict(set)  # (sat, tick, inst, angle) -> gps
    for r in records:
        stats.raw_choices += 1
        merged[(r.sat_id, r.tick, r.instrument, r.angle)].update(r.gps)
    stats.merged_choices += len(merged)

    by_var = defaultdict(dict)  # (sat, tick) -> {(inst, angle): gps}
    for (sat, tick, inst, angle), members in merged.items():
        by_var[(sat, tick)][(inst, angle)] = members

    out = defaultdict(list)
    for (sat, tick) in sorted(by_var, key=lambda k: (k[0], k[1])):
        cmds = by_var[(sat, tick)]
        choices = [CommandChoice(((i, a),), tuple(g)) for (i, a), g in cmds.items()]
        for angle in sorted({a for _, a in cmds}):
            if ("L", angle) in cmds and ("P", angle) in cmds:
                both = cmds[("L", angle)] & cmds[("P", angle)]
                if both:
                    choices.append(CommandChoice((("L", angle), ("P", angle)), tuple(both)))
                    stats.dual_choices += 1
        choices.sort(key=lambda c: c.signature)
        out[sat].append(TimepointVariable(sat, tick, tuple(choices)))
    return dict(out)


def build_gp_choice_index(variables: dict, table: MeasurementErrorTable, gps: dict) -> dict:
    """For every GP, each (sat, tick, command) that sees it, best measurement error first."""
    index = defaultdict(list)
    for sat in sorted(variables):
        for var in variables[sat]:
            for choice in var.domain:
                sig = choice.signature
                for gp in choice.covered:
                    try:
                        err = table.lookup(sig, gps[gp].biome)
                    except MissingErrorEntry as exc:
                        raise IngestError(str(exc), "meas_err.csv") from None
                    index[gp].append(GPChoiceEntry(sat, var.tick, sig, err))
    for entries in index.values():
        entries.sort(key=lambda e: (e.error, e.tick, e.sat_id, e.signature))
    return dict(index)


def build_scenario(raw: RawScenario) -> Scenario:
    stale = {gp for gp, g in raw.gps.items()
             if g.last_observed_tick is not None and g.last_observed_tick > -DUPLICATE_WINDOW}
    stats = FlattenStats()
    variables = {}
    for sat in sorted(raw.access):
        records = raw.access[sat]
        if stale:
            records = [RawAccessRecord(r.sat_id, r.tick, r.instrument, r.angle,
                                       tuple(g for g in r.gps if g not in stale)) for r in records]
            records = [r for r in records if r.gps]
        variables[sat] = flatten_choices(records, stats).get(sat, [])
    index = build_gp_choice_index(variables, raw.table, raw.gps)
    scenario = Scenario(raw.gps, variables, raw.table, raw.slew, raw.rain, raw.saturated, raw.config, index, stats)
    return with_horizon(scenario, raw.config.horizon_seconds)


def with_horizon(scenario: Scenario, horizon_seconds: int) -> Scenario:
    """The scenario cut to ``[0, horizon_seconds)``; TPs whose image would overrun are dropped."""
    if horizon_seconds <= 0:
        raise ValueError("horizon must be positive")
    last = horizon_seconds - IMAGE_SECONDS
    variables = {sat: [v for v in vs if 0 <= v.tick <= last] for sat, vs in scenario.variables.items()}
    if all(len(variables[s]) == len(scenario.variables[s]) for s in variables) \
            and horizon_seconds == scenario.config.horizon_seconds:
        return scenario
    index = build_gp_choice_index(variables, scenario.table, scenario.gps)
    config = replace(scenario.config, horizon_seconds=horizon_seconds)
    return replace(scenario, variables=variables, config=config, gp_index=index)


def load_scenario(directory) -> Scenario:
    return build_scenario(parse_scenario(directory))


# -- planner input files ---------------------------------------------------

def write_planner_inputs(scenario: Scenario, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for sat in scenario.sat_ids:
        path = out / f"tp_choices_{sat}.jsonl"
        with path.open("w") as fh:
            for var in scenario.variables[sat]:
                rec = {"sat": sat, "tick": var.tick,
                       "choices": [{"cmd": c.label, "signature": c.signature, "gps": list(c.covered)}
                                   for c in var.domain]}
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        written.append(path)
    path = out / "gp_choices.jsonl"
    with path.open("w") as fh:
        for gp in sorted(scenario.gp_index):
            rec = {"gp": gp, "biome": scenario.gps[gp].biome.value,
                   "choices": [{"sat": e.sat_id, "tick": e.tick, "cmd": e.label, "signature": e.signature,
                                "error": e.error} for e in scenario.gp_index[gp]]}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    written.append(path)
    return written


def read_tp_choices(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            dom = tuple(CommandChoice(parse_signature(c["signature"]), tuple(c["gps"])) for c in rec["choices"])
            out.append(TimepointVariable(rec["sat"], rec["tick"], dom))
    return out


def read_gp_choices(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            out[rec["gp"]] = [GPChoiceEntry(c["sat"], c["tick"], c["signature"], c["error"]) for c in rec["choices"]]
    return out

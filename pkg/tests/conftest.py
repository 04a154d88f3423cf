import csv
import sys
import json
import math
from pathlib import Path

import pytest

N_ANGLES = 62


def slew_cost(a, b):
    if a == b:
        return 0, 0.0
    d = abs(a - b)
    return math.ceil(0.5 + 1.5 * math.sqrt(d)), 2e-4 + 5e-5 * d


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_scenario(out, gps, access, meas, rain=(), saturated=(), config=None, slew=slew_cost):
    """Write a raw scenario directory.

    gps: {gpId: biome} or {gpId: (biome, error)}
    access: {sat: [(tick, instrument, angle, [gpIds]), ...]}
    meas: {(signature, biome): error}; signatures like "L@32" or "L@32+P@32"
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for gp, spec in sorted(gps.items()):
        biome, err = (spec, "") if isinstance(spec, str) else spec
        rows.append([gp, 0.0, 0.0, biome, err])
    _write_csv(out / "gp_defs.csv", ["gpId", "lat", "lon", "biome", "error"], rows)
    for sat, recs in access.items():
        _write_csv(out / f"access_{sat}.csv", ["tick", "instrument", "angle", "gpIds"],
                   [[t, i, a, ";".join(map(str, g))] for t, i, a, g in recs])
    _write_csv(out / "rain.csv", ["gpId", "tick"], list(rain))
    _write_csv(out / "saturation.csv", ["gpId"], [[g] for g in saturated])
    _write_csv(out / "meas_err.csv", ["signature", "biome", "error"],
               [[s, b, e] for (s, b), e in sorted(meas.items())])
    _write_csv(out / "slew.csv", ["fromAngle", "toAngle", "seconds", "energy"],
               [[a, b, *slew(a, b)] for a in range(N_ANGLES) for b in range(N_ANGLES)])
    if config is not None:
        (out / "scenario.json").write_text(json.dumps(config))
    return out


def full_meas(biomes=("forest",), value=0.005):
    """A measurement-error table with an entry for every signature and biome."""
    meas = {}
    for b in biomes:
        for a in range(N_ANGLES):
            meas[(f"L@{a}", b)] = value
            meas[(f"P@{a}", b)] = value
            meas[(f"L@{a}+P@{a}", b)] = value
    return meas


@pytest.fixture
def scenario_dir(tmp_path):
    """Small two-satellite scenario with a mix of single and dual choices."""
    gps = {g: ("forest", 0.02) for g in range(1, 9)}
    access = {
        1: [(0, "L", 30, [1, 2]), (0, "P", 30, [2, 3]), (5, "L", 31, [3, 4]), (12, "L", 40, [5]),
            (12, "P", 40, [5, 6])],
        2: [(2, "L", 10, [1, 7]), (9, "P", 12, [7, 8]), (20, "L", 12, [8, 2])],
    }
    return write_scenario(tmp_path / "sc", gps, access, full_meas(value=0.006))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.VERDICTS):
        terminalreporter.write_line(mod.VERDICTS[n])

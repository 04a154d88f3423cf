import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agileplan.model import (
    Biome,
    CommandChoice,
    ErrorContext,
    ErrorModel,
    GroundPosition,
    Idle,
    MeasurementErrorTable,
    MissingErrorEntry,
    Plan,
    SlewTable,
    SlewToAngle,
    TakeImage,
    cmd_reward,
    evolve_model_error,
    fuse_errors,
    gp_reward,
    label_of,
    parse_label,
    parse_signature,
    plan_score,
    signature_of,
)
from agileplan.planio import timeline_text

from conftest import N_ANGLES, slew_cost


def make_slew():
    return SlewTable({(a, b): slew_cost(a, b) for a in range(N_ANGLES) for b in range(N_ANGLES)})


def test_gp_reward_clamps_at_zero():
    assert gp_reward(0.02, 0.005) == pytest.approx(0.015)
    assert gp_reward(0.005, 0.02) == 0.0
    with pytest.raises(ValueError):
        gp_reward(-0.1, 0.01)


@given(st.floats(0, 1), st.floats(0, 1))
def test_gp_reward_nonnegative_and_bounded(prior, meas):
    r = gp_reward(prior, meas)
    assert 0.0 <= r <= prior


def test_cmd_reward_sums_covered_gps():
    table = MeasurementErrorTable()
    table.set("L@32", Biome.FOREST, 0.038)
    choice = CommandChoice((("L", 32),), (1, 2))
    r = cmd_reward(choice, {1: 0.05, 2: 0.03}, table, {1: Biome.FOREST, 2: Biome.FOREST})
    assert r == pytest.approx(0.012)


def test_signature_and_label_round_trip():
    pairs = (("P", 32), ("L", 32))
    assert signature_of(pairs) == "L@32+P@32"
    assert label_of(pairs) == "L.32 & P.32"
    assert parse_signature("L@32+P@32") == (("L", 32), ("P", 32))
    assert parse_label("L.32 & P.32") == (("L", 32), ("P", 32))


@pytest.mark.parametrize("pairs", [(("L", 32), ("P", 33)), (("L", 1), ("L", 1)), (("L", 62),), ()])
def test_bad_commands_rejected(pairs):
    with pytest.raises(ValueError):
        CommandChoice(pairs)


def test_command_choice_dedups_covered():
    c = CommandChoice((("L", 5), ("P", 5)), (3, 1, 3))
    assert c.covered == (1, 3)
    assert c.is_dual and c.angle == 5 and c.instruments == ("L", "P")


def test_ground_position_rejects_negative_error():
    with pytest.raises(ValueError):
        GroundPosition(1, 0, 0, Biome.FOREST, model_error=-0.1)


def test_error_table_missing_entry():
    t = MeasurementErrorTable()
    t.set("L@3", Biome.FOREST, 0.01)
    assert t.lookup("L@3", Biome.FOREST) == 0.01
    with pytest.raises(MissingErrorEntry):
        t.lookup("P@3", Biome.FOREST)


def test_slew_table_validation():
    entries = {(a, b): slew_cost(a, b) for a in range(4) for b in range(4)}
    t = SlewTable(entries, n_angles=4)
    assert t.seconds(0, 0) == 0 and t.seconds(None, 3) == 0
    missing = dict(entries)
    del missing[(1, 2)]
    with pytest.raises(ValueError):
        SlewTable(missing, n_angles=4)
    bad = dict(entries)
    bad[(2, 2)] = (1, 0.0)
    with pytest.raises(ValueError):
        SlewTable(bad, n_angles=4)
    assert t.monotonicity_violations() == []


def test_error_evolution_drift_rain_and_cap():
    m = ErrorModel(drift_rate=1e-6, rain_bump=0.01, error_cap=1.0)
    assert evolve_model_error(0.02, 0, 1000, (), m) == pytest.approx(0.021)
    # rain at tick 0 is before the interval; tick 500 is inside
    assert evolve_model_error(0.02, 0, 1000, (0, 500), m) == pytest.approx(0.031)
    assert evolve_model_error(0.995, 0, 100, (50,), m) == 1.0
    with pytest.raises(ValueError):
        evolve_model_error(0.02, 10, 5)


@given(st.floats(0.001, 0.05), st.floats(0.001, 0.05))
def test_fused_error_beats_both_looks(a, b):
    f = fuse_errors(a, b)
    assert f <= min(a, b)
    assert f == pytest.approx(1 / math.sqrt(a ** -2 + b ** -2))


def test_timeline_matches_reference_rows():
    # 48 -> 44 slews in 4 s, so the L.44 image at 41 needs the slew at 37-40
    slew = make_slew()
    assert slew.seconds(48, 44) == 4
    plan = Plan.from_images({1: [TakeImage(2, (("P", 48),)), TakeImage(15, (("L", 48),)),
                                 TakeImage(41, (("L", 44),))]}, slew)
    assert timeline_text(plan, 1).splitlines() == [
        "[2-4] P.48", "[5-14] Idle", "[15-17] L.48", "[18-36] Idle", "[37-40] Slew", "[41-43] L.44"]


def test_adjacent_angle_slew_takes_two_seconds():
    slew = make_slew()
    assert slew.seconds(44, 45) == 2
    plan = Plan.from_images({1: [TakeImage(41, (("L", 44),)), TakeImage(46, (("P", 45),))]}, slew)
    assert plan.commands[1] == [TakeImage(41, (("L", 44),)), SlewToAngle(44, 45, 44, 45),
                                TakeImage(46, (("P", 45),))]


def test_plan_layout_adds_idle_between_same_angle_images():
    plan = Plan.from_images({1: [TakeImage(0, (("L", 3),)), TakeImage(10, (("L", 3),))]}, make_slew())
    assert plan.commands[1][1] == Idle(3, 9)
    assert plan.image_count == 2


def test_plan_score_replay():
    table = MeasurementErrorTable()
    table.set("L@3", Biome.FOREST, 0.005)
    table.set("P@3", Biome.FOREST, 0.004)
    gps = {g: GroundPosition(g, 0, 0, Biome.FOREST, model_error=0.02) for g in (1, 2)}
    ctx = ErrorContext(gps, {}, table, ErrorModel(drift_rate=0.0))
    plan = Plan.from_images({1: [TakeImage(0, (("L", 3),), (1,))], 2: [TakeImage(0, (("P", 3),), (2,))]},
                            make_slew(), plan_score=0.031)
    assert plan_score(plan, ctx) == pytest.approx(0.015 + 0.016)
    assert plan_score(plan) == 0.031


def test_followup_is_priced_as_fused_second_look():
    table = MeasurementErrorTable()
    table.set("L@3", Biome.FOREST, 0.01)
    table.set("P@3", Biome.FOREST, 0.01)
    gps = {1: GroundPosition(1, 0, 0, Biome.FOREST, model_error=0.02)}
    ctx = ErrorContext(gps, {}, table, ErrorModel(drift_rate=0.0))
    plan = Plan.from_images({1: [TakeImage(0, (("L", 3),), (1,)), TakeImage(10, (("P", 3),), (1,), (1, 0))]},
                            make_slew())
    fused = fuse_errors(0.01, 0.01)
    assert plan_score(plan, ctx) == pytest.approx(0.01 + (0.01 - fused))

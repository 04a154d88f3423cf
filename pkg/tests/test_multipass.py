import pytest

from agileplan import generator
from agileplan.audit import audit_plan
from agileplan.ingest import load_scenario
from agileplan.model import TakeImage
from agileplan.multipass import (
    _fits_gap,
    backfill_gaps,
    find_gaps,
    partition_cohorts,
    plan_multi,
    plan_pass_one,
    scenario_cohorts,
)
from agileplan.planner import PlannerConfig, plan_single
from agileplan.state import PlanningContext

from conftest import full_meas, write_scenario

QUIET = {"energy": {"initialCharge": 1.0, "imagingRate": 0.0, "solarRate": 0.0}, "horizonSeconds": 60}


@pytest.fixture(scope="module")
def small_generated(tmp_path_factory):
    params = generator.reference_profile(scale=8000, tps_per_sat=40, horizon_seconds=7200)
    return load_scenario(generator.generate(params, 7, tmp_path_factory.mktemp("gen")))


def test_partition_rules():
    rainy, dry, sat = partition_cohorts([1, 2, 3], rain={1: (5,), 2: (6,)}, saturated={2})
    assert rainy == {1} and dry == {3} and sat == {2}


def test_partition_is_a_partition(small_generated):
    sc = small_generated
    parts = scenario_cohorts(sc)
    assert set().union(*parts) == set(sc.gps)
    assert sum(len(p) for p in parts) == len(sc.gps)


@pytest.fixture
def fig3_gap(tmp_path):
    # planned L.48 at 15-17 and L.44 at 41-43 leave a 23 s gap; 48 -> 44 takes 4 s
    access = {1: [(15, "L", 48, [1]), (41, "L", 44, [2])] +
              [(t, "P", a, [10 + t]) for t in range(18, 40) for a in (44, 48)]}
    gps = {1: "forest", 2: "forest", **{10 + t: "forest" for t in range(18, 40)}}
    return load_scenario(write_scenario(tmp_path / "g", gps, access, full_meas(), config=QUIET))


def test_gap_boundaries(fig3_gap):
    base = {1: [TakeImage(15, (("L", 48),), (1,)), TakeImage(41, (("L", 44),), (2,))]}
    gaps = {(g.start, g.end): g for g in find_gaps(base, fig3_gap)}
    gap = gaps[(18, 41)]
    assert gap.length == 23 and gap.angle_in == 48 and gap.angle_out == 44
    keep = _fits_gap(gap, fig3_gap.slew)
    ok48 = [t for t in range(18, 41) if keep(1, t, TakeImage(t, (("P", 48),)), ())]
    ok44 = [t for t in range(18, 41) if keep(1, t, TakeImage(t, (("P", 44),)), ())]
    # staying at 48 leaves 4 s to slew out; starting at 44 needs 4 s to slew in
    assert ok48 == list(range(18, 35))
    assert ok44 == list(range(22, 39))


def test_backfill_respects_boundary_slews(fig3_gap):
    base = {1: [TakeImage(15, (("L", 48),), (1,)), TakeImage(41, (("L", 44),), (2,))]}
    cohort = {10 + t for t in range(18, 40)}
    images, added, _ = backfill_gaps(base, cohort, fig3_gap, PlannerConfig())
    new = [i for i in images[1] if i not in base[1]]
    assert new and added > 0
    assert all(i in images[1] for i in base[1])
    inside = [i for i in new if 18 <= i.start < 41]
    first, last = min(inside, key=lambda i: i.start), max(inside, key=lambda i: i.start)
    slew = fig3_gap.slew
    assert first.start >= 18 + slew.seconds(48, first.angle)
    assert last.start + 3 + slew.seconds(last.angle, 44) <= 41


def test_short_gap_gets_nothing(tmp_path):
    # 4 s between images at different angles cannot hold a 3 s image plus two slews
    access = {1: [(0, "L", 10, [1]), (7, "L", 20, [2]), (3, "P", 15, [3])]}
    sc = load_scenario(write_scenario(tmp_path / "s", {1: "forest", 2: "forest", 3: "forest"}, access,
                                      full_meas(), config=QUIET))
    base = {1: [TakeImage(0, (("L", 10),), (1,)), TakeImage(7, (("L", 20),), (2,))]}
    images, added, _ = backfill_gaps(base, {3}, sc, PlannerConfig())
    assert images[1] == base[1] and added == 0


def test_no_rainy_gps_gives_empty_pass_one(scenario_dir):
    sc = load_scenario(scenario_dir)
    assert plan_pass_one(sc, PlannerConfig()).plan.image_count == 0


def test_all_rainy_matches_single_pass(tmp_path):
    access = {1: [(0, "L", 30, [1, 2]), (0, "P", 30, [2, 3]), (8, "L", 31, [3, 4])], 2: [(2, "L", 10, [1, 4])]}
    gps = {g: ("forest", 0.02) for g in range(1, 5)}
    sc = load_scenario(write_scenario(tmp_path / "r", gps, access, full_meas(value=0.006),
                                      rain=[(g, 1) for g in gps]))
    one = plan_pass_one(sc, PlannerConfig())
    single = plan_single(sc, PlannerConfig())
    assert one.plan.commands == single.plan.commands
    assert one.plan.plan_score == pytest.approx(single.plan.plan_score)


def test_multi_pass_plan_audits_clean(small_generated):
    sc = small_generated
    rainy = scenario_cohorts(sc)[0]
    cfg = PlannerConfig(beam_width=2)
    first = plan_pass_one(sc, cfg)
    assert all(any(g in rainy for g in i.gps) for i in first.plan.images())
    multi = plan_multi(sc, cfg)
    assert audit_plan(multi.plan, sc).ok
    assert multi.plan.plan_score >= first.plan.plan_score
    assert multi.plan.image_count >= first.plan.image_count
    assert [p["cohort"] for p in multi.passes] == ["rainy", "nonRainy", "saturated"]
    first_images = set(first.plan.images())
    assert first_images <= set(multi.plan.images())


def test_backfill_context_has_no_foreign_satellite_variables(fig3_gap):
    gap = [g for g in find_gaps({1: [TakeImage(15, (("L", 48),), (1,))]}, fig3_gap) if g.start == 18][0]
    ctx = PlanningContext(fig3_gap, windows={1: (gap.start, gap.end)})
    assert all(gap.start <= t < gap.end for t, _ in ctx.keys)

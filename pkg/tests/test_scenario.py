from __future__ import annotations

import json

import pytest

from pavesim import census, telemetry, world
from pavesim.census import AgentDescription, ConfigError
from pavesim.judgment import JudgmentRequest, OracleProvider, ProviderFatal
from pavesim.judgment.oracle import oracle_verdict
from pavesim.scenario import (
    CONDITIONS,
    DATA_DIR,
    RunConfig,
    ScheduleItem,
    apply_condition,
    load_scenario,
    normalize_condition,
    run_cell,
    run_matrix,
    warmup,
)


def _verdicts(path, agents=None, window=None):
    return telemetry.read_log(path).verdicts(agents, window)


# -- shipped specs ---------------------------------------------------------------


@pytest.mark.parametrize("name", ["s1", "s2", "s3", "s1_fire", "s2_fire_officer", "s3_jaywalk"])
def test_shipped_scenarios_load_with_windows_in_range(name):
    spec = load_scenario(name)
    assert spec.total_ticks == 2000
    for lo, hi in spec.windows.values():
        assert 0 <= lo < hi <= 2000


@pytest.mark.parametrize("name", ["s1", "s2"])
def test_fire_schedule(name):
    (fire,) = load_scenario(name).hazards
    assert (fire.kind, fire.ignite_tick, fire.extinguish_tick, fire.s0) == ("fire", 50, 150, 95)
    assert load_scenario(name).windows["fire"] == (50, 150)


def test_s2_officers_leave_the_cafe_exit_unsupervised(default_map, oracle_logs):
    spec = load_scenario("s2")
    officers = {n.id: n for n in spec.npcs if n.role == census.AUTHORITY}
    assert sorted(officers) == ["TO1", "TO2"]
    for n in officers.values():
        timeline = list(n.script.timeline) + [(spec.total_ticks, None)]
        for (start, act), (stop, _) in zip(timeline, timeline[1:]):
            if act.kind != "instruct":
                continue
            zone = default_map.intersection(act.zone)
            for t in range(start, stop):
                # a burning tile cannot be stood on, so it is never supervised
                burning = world.hazard_blocked(spec.hazards, t)
                open_exit = [p for p in spec.regions["cafe_exit"].tiles()
                             if default_map.walkable(p) and p not in burning]
                assert not any(world.in_effective_zone(zone, p) for p in open_exit), (n.id, t)
    run = telemetry.read_log(oracle_logs[("s2_fire_officer", "full", 1)])
    at_exit = [v for v in run.verdicts() if "cafe_exit" in v["payload"]["regions"]]
    assert at_exit and not any(v["payload"]["supervised"] for v in at_exit)


def test_s3_confederates_pass_two_ticks_before_each_focal_decision(oracle_logs):
    spec = load_scenario("s3")
    run = telemetry.read_log(oracle_logs[("s3_jaywalk", "full", 1)])
    bases = sorted({t for n in spec.npcs if n.role == census.CONFEDERATE
                    for t, a in n.script.timeline if a.kind == "jaywalk"})
    firsts = []
    for agent in spec.groups["focal"]:
        ticks = [v["tick"] for v in run.verdicts([agent])
                 if "focal" in v["payload"]["regions"] and v["payload"]["target_rule"]]
        # first decision of each approach (approaches are separated by long gaps)
        firsts += [t for k, t in enumerate(ticks) if k == 0 or t - ticks[k - 1] > 50]
    arrivals = sorted(t for t in firsts if any(0 < t - b <= 3 for b in bases))
    assert [t - 2 for t in arrivals] == bases
    assert spec.confederate_jitter == 1


def test_run_config_invariants():
    spec = load_scenario("s1")
    with pytest.raises(ConfigError):
        RunConfig(spec, seeds=[])
    with pytest.raises(ConfigError):
        RunConfig(spec, seeds=[1, 1])
    with pytest.raises(ConfigError):
        RunConfig(spec, condition="chaos")
    assert RunConfig(spec, condition="nogate").condition == "no_gate"
    assert RunConfig(spec).seeds == [1, 2, 3, 4, 5]


def test_condition_aliases():
    assert [normalize_condition(c) for c in ("nogate", "vanilla", *CONDITIONS)] == [
        "no_gate", "vanilla_proxy", *CONDITIONS]
    assert [apply_condition(c).gate for c in ("full", "no_gate")] == [True, False]
    assert apply_condition("vanilla").name == "vanilla_proxy"


# -- warm-up --------------------------------------------------------------------


def _roster():
    return census.load_roster(DATA_DIR / "roster.yaml", landmarks=world.load_map(DATA_DIR / "default_map.yaml").landmarks)


def test_warmup_records_reachable_infrastructure(default_map):
    spec = load_scenario("s1")
    roster = _roster()
    a = warmup(default_map, roster.regulated(), spec.starts, spec.schedules)
    b = warmup(default_map, roster.regulated(), spec.starts, spec.schedules)
    assert a.memories == b.memories
    one_ways = {s.name for s in default_map.streets if s.one_way}
    for agent in spec.groups["cafe"]:
        mem = a.memories[agent]
        assert {f"one_way:{n}" for n in one_ways} <= mem
        assert any(f.startswith("crosswalk:") for f in mem)
        assert any(f.startswith("intersection:") for f in mem)


def test_warmup_rejects_isolated_and_unreachable_agents():
    island = world.parse_map({"tiles": ".X.."})
    agent = AgentDescription("A", "A", tau=50)
    with pytest.raises(ConfigError):
        warmup(island, [agent], {"A": (0, 0)}, {})
    with pytest.raises(ConfigError):
        warmup(island, [agent], {"A": (2, 0)}, {"A": [ScheduleItem(0, (0, 0), "visit")]})
    ok = warmup(island, [agent], {"A": (2, 0)}, {"A": [ScheduleItem(0, (3, 0), "visit")]})
    assert ok.path_cache[("A", (3, 0))].cost == 1


# -- conditions ---------------------------------------------------------------------


def test_no_gate_formula_on_the_late_commuter_tuple():
    tuple_ = {"r": 10, "p_emp": 25, "b": 18, "ell": 12}
    assert (18 + 75 + 12) / 3 == 35
    assert oracle_verdict(tuple_, 65, hold=False, gate=False)[0] == "violate"
    assert oracle_verdict(tuple_, 65, hold=False, gate=True)[0] == "comply"
    assert oracle_verdict(tuple_, 65, hold=True, gate=False)[0] == "comply"


# -- tick scheduler examples -----------------------------------------------------------


def test_s1_examples(oracle_logs):
    path = oracle_logs[("s1_fire", "full", 1)]
    run = telemetry.read_log(path)
    cafe = run.group("cafe")
    assert not [v for v in run.verdicts(cafe) if v["tick"] <= 49 and v["payload"]["decision"] == "violate"]
    cc52 = [v for v in run.verdicts(["CC"]) if v["tick"] == 52]
    assert cc52 and cc52[0]["payload"]["decision"] == "violate"
    assert cc52[0]["payload"]["target_rule"] in ("one_way", "red_light")


def test_s3_focal_tick_complies_despite_confederates(oracle_logs):
    run = telemetry.read_log(oracle_logs[("s3_jaywalk", "full", 1)])
    (v,) = [v for v in run.verdicts(["CC"]) if v["tick"] == 32]
    assert v["payload"]["decision"] == "comply" and v["payload"]["gated"]
    assert v["payload"]["confederate_seen"]


@pytest.mark.parametrize("sid", ["s1_fire", "s2_fire_officer"])
def test_day_two_is_clean_in_full_runs(oracle_logs, sid):
    run = telemetry.read_log(oracle_logs[(sid, "full", 1)])
    assert not [v for v in run.verdicts(window="day2") if v["payload"]["decision"] == "violate"]


@pytest.mark.parametrize("sid", ["s1_fire", "s2_fire_officer", "s3_jaywalk"])
def test_every_violation_breaks_only_its_target_rule(oracle_logs, sid):
    run = telemetry.read_log(oracle_logs[(sid, "full", 1)])
    for a in run.actions():
        broken = set(a["payload"]["broken"])
        if broken:
            assert a["payload"]["verdict"] == "violate"
            assert broken == {a["payload"]["target_rule"]}, a


@pytest.mark.parametrize("sid", ["s1_fire", "s2_fire_officer", "s3_jaywalk"])
def test_record_windows_match_their_ticks(oracle_logs, sid):
    run = telemetry.read_log(oracle_logs[(sid, "full", 1)])
    windows = run.header["windows"]
    for rec in run.records:
        claimed = set(rec["windows"])
        assert claimed == {k for k, (lo, hi) in windows.items() if lo <= rec["tick"] < hi}


# -- runs -------------------------------------------------------------------------------


def test_same_cell_is_byte_identical(tmp_path, oracle_logs):
    res = run_cell(load_scenario("s3"), "full", OracleProvider(), 1, tmp_path)
    assert res.path.read_bytes() == oracle_logs[("s3_jaywalk", "full", 1)].read_bytes()


def test_run_matrix_parallel_matches_serial(tmp_path):
    spec = load_scenario("s3")
    serial = run_matrix(RunConfig(spec, "no_gate", seeds=[1, 2], out_dir=tmp_path / "a"))
    parallel = run_matrix(RunConfig(spec, "no_gate", seeds=[1, 2], out_dir=tmp_path / "b"), jobs=2)
    assert [r.path.name for r in serial] == ["s3_jaywalk_no_gate_1.jsonl", "s3_jaywalk_no_gate_2.jsonl"]
    for a, b in zip(serial, parallel):
        assert a.path.read_bytes() == b.path.read_bytes()
    # seeds differ in jitter, so their logs differ
    assert serial[0].path.read_bytes() != serial[1].path.read_bytes()
    focal = [v for v in _verdicts(serial[0].path) if "focal" in v["payload"]["regions"]]
    assert any(v["payload"]["decision"] == "violate" for v in focal)


def test_unwritable_output_is_a_config_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigError):
        run_matrix(RunConfig(load_scenario("s1"), seeds=[1], out_dir=blocker / "sub"))


class _DiesAtFire:
    name = "dies"

    def evaluate(self, req: JudgmentRequest):
        if req.tick >= 50 and req.op != "threshold":
            raise ProviderFatal("credentials revoked")
        return OracleProvider().evaluate(req)


def test_fatal_provider_error_flushes_an_aborted_log(tmp_path):
    with pytest.raises(ProviderFatal):
        run_cell(load_scenario("s1"), "full", _DiesAtFire(), 1, tmp_path)
    path = tmp_path / "s1_fire_full_1.jsonl"
    last = json.loads(path.read_text().splitlines()[-1])
    assert last["terminal"] and last["status"] == "aborted" and "tick 50" in last["reason"]
    with pytest.raises(telemetry.IncompleteLogError):
        telemetry.read_log(path)

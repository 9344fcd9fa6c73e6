from __future__ import annotations

import csv
import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pavesim import cli
from pavesim.cli import UsageError, parse_seeds

from conftest import FIXTURES

GOLDEN = FIXTURES / "spec_artifact" / "help"
WALKTHROUGHS = FIXTURES / "spec_acceptance"


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# -- seeds -------------------------------------------------------------------------


def test_seed_syntax():
    assert parse_seeds("1..5") == [1, 2, 3, 4, 5]
    assert parse_seeds("1,2,5") == [1, 2, 5]
    assert parse_seeds("1..3,7") == [1, 2, 3, 7]
    for bad in ("", "1,,2", "3..1", "a", "1,1", "1..2,2"):
        with pytest.raises(UsageError):
            parse_seeds(bad)


@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=8, unique=True))
def test_seed_lists_round_trip(seeds):
    assert parse_seeds(",".join(map(str, seeds))) == seeds


# -- help golden files --------------------------------------------------------------


@pytest.mark.parametrize("command", ["", "run", "metrics", "elicit", "replay"])
def test_help_matches_golden(command, capsys, monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    argv = [command, "--help"] if command else ["--help"]
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 0
    text = capsys.readouterr().out
    golden = GOLDEN / f"{command or 'pavesim'}.txt"
    if os.environ.get("PAVESIM_REGEN_GOLDEN"):
        golden.parent.mkdir(parents=True, exist_ok=True)
        golden.write_text(text, encoding="utf-8")
    assert text == golden.read_text(encoding="utf-8")


def test_every_flag_is_documented_in_help():
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        help_text = p.format_help()
        for action in p._actions:
            for flag in action.option_strings:
                assert flag in help_text, (name, flag)


# -- exit codes ----------------------------------------------------------------------


@pytest.mark.parametrize("argv", [
    [],
    ["run", "--scenario", "s1", "--bogus"],
    ["run", "--scenario", "s1", "--condition", "chaos"],
    ["run", "--scenario", "s1", "--seeds", "3..1"],
    ["replay", "--log", "x", "--agent", "CC", "--from", "5", "--to", "4"],
])
def test_usage_errors_exit_one(argv, capsys, tmp_path):
    try:
        code = cli.main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == cli.EXIT_USAGE


def test_config_errors_exit_two(capsys, tmp_path):
    assert run_cli(capsys, "run", "--scenario", str(tmp_path / "none.yaml"), "--out", str(tmp_path))[0] == 2
    assert run_cli(capsys, "metrics", "--logs", str(tmp_path / "missing"))[0] == 2
    bad_cfg = tmp_path / "cfg.yaml"
    bad_cfg.write_text("colour: blue\n")
    assert run_cli(capsys, "run", "--scenario", "s1", "--config", str(bad_cfg))[0] == 2


def test_unreachable_remote_exits_three(capsys, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("provider: remote\nendpoint: http://127.0.0.1:9/v1\n")
    code, _, err = run_cli(capsys, "run", "--scenario", "s1", "--seeds", "1", "--out", str(tmp_path / "o"),
                           "--config", str(cfg))
    assert code == cli.EXIT_PROVIDER and "provider error" in err
    assert not list((tmp_path / "o").glob("*.jsonl"))


def test_truncated_log_exits_four_naming_the_file(capsys, oracle_logs, tmp_path):
    src = oracle_logs[("s1_fire", "full", 1)]
    cut = tmp_path / "s1_fire_full_1.jsonl"
    cut.write_text("\n".join(src.read_text().splitlines()[:-1]) + "\n")
    code, _, err = run_cli(capsys, "metrics", "--logs", str(tmp_path))
    assert code == cli.EXIT_INCOMPLETE and cut.name in err


# -- run and metrics -------------------------------------------------------------------


def test_run_prints_seeds_and_cell_summaries(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "run", "--scenario", "s3", "--condition", "nogate", "--seeds", "1,2",
                           "--out", str(tmp_path))
    lines = out.splitlines()
    assert code == 0 and lines[0] == "seeds: 1,2"
    assert [ln.split()[:3] for ln in lines[1:]] == [["s3_jaywalk", "no_gate", "seed=1"],
                                                    ["s3_jaywalk", "no_gate", "seed=2"]]
    assert sorted(p.name for p in tmp_path.iterdir()) == ["s3_jaywalk_no_gate_1.jsonl", "s3_jaywalk_no_gate_2.jsonl"]


def test_metrics_over_mixed_directory(capsys, oracle_logs):
    log_dir = oracle_logs[("s1_fire", "full", 1)].parent
    code, out, _ = run_cli(capsys, "metrics", "--logs", str(log_dir))
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0 and {r["scenario"] for r in rows} == {"s1_fire", "s2_fire_officer", "s3_jaywalk"}
    s1 = {r["metric"]: r for r in rows if r["scenario"] == "s1_fire"}
    assert (s1["VR_cafe"]["mean"], s1["URV"]["mean"]) == ("1.000000", "0.000000")
    code, out, _ = run_cli(capsys, "metrics", "--logs", str(log_dir), "--format", "table")
    assert [ln for ln in out.splitlines() if ln.startswith("==")] == [
        "== s1_fire ==", "== s2_fire_officer ==", "== s3_jaywalk =="]


def test_metrics_output_file(capsys, oracle_logs, tmp_path):
    out = tmp_path / "m.csv"
    assert run_cli(capsys, "metrics", "--logs", str(oracle_logs[("s3_jaywalk", "full", 1)]),
                   "--output", str(out))[0] == 0
    assert out.read_text().startswith("scenario,condition,metric")


# -- elicit ---------------------------------------------------------------------------


def test_elicit_table(capsys):
    code, out, _ = run_cli(capsys, "elicit", "--agents", "CC,EY")
    assert code == 0
    assert [ln.split() for ln in out.splitlines()] == [
        ["agent", "pinned", "elicited"], ["CC", "65", "65"], ["EY", "40", "40"]]
    assert run_cli(capsys, "elicit", "--agents", "ZZ")[0] == 2


# -- replay -----------------------------------------------------------------------------


def _fixture(name):
    with open(WALKTHROUGHS / f"{name}.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def _replay(oracle_logs, sid, agent, lo, hi):
    log = oracle_logs[(sid, "full", 1)]
    return cli.replay_rows(cli.telemetry.read_log(log), agent, lo, hi)


# expected verdicts at the sampled walkthrough ticks
SAMPLED = {
    "walk_s1_cc": {48: "comply", 50: "violate", 52: "violate", 53: "violate", 55: "violate", 56: "violate",
                 57: "comply", 58: "comply", 60: "comply"},
    "walk_s2_ey": {60: "violate", 62: "violate", 63: "violate", 64: "comply", 66: "comply", 68: "violate",
                 70: "violate", 72: "violate"},
    "walk_s3_cc": {30: "comply", 32: "comply", 33: "comply", 34: "comply", 37: "comply", 40: "comply",
                 42: "comply"},
}
CASES = [("walk_s1_cc", "s1_fire", "CC", 48, 60), ("walk_s2_ey", "s2_fire_officer", "EY", 60, 72),
         ("walk_s3_cc", "s3_jaywalk", "CC", 30, 42)]


@pytest.mark.parametrize("name", list(SAMPLED))
def test_walkthrough_fixtures_agree_with_the_sampled_ticks(name):
    got = {int(r["tick"]): r["verdict"] for r in _fixture(name)}
    assert {t: got[t] for t in SAMPLED[name]} == SAMPLED[name]


@pytest.mark.parametrize("name,sid,agent,lo,hi", CASES)
def test_replay_reproduces_walkthrough_columns(oracle_logs, name, sid, agent, lo, hi):
    rows = _replay(oracle_logs, sid, agent, lo, hi)
    got = [{"tick": str(r.tick), "verdict": r.verdict, "rule": r.rule, "action": r.action} for r in rows]
    assert got == _fixture(name)


def test_replay_command_output(capsys, oracle_logs):
    log = str(oracle_logs[("s2_fire_officer", "full", 1)])
    code, out, _ = run_cli(capsys, "replay", "--log", log, "--agent", "EY", "--from", "64", "--to", "67")
    lines = out.splitlines()
    assert code == 0 and lines[0].split() == list(cli.REPLAY_COLUMNS)
    assert [ln.split()[3:] for ln in lines[1:]] == [["comply", "red_light", "wait"]] * 4
    # empty range: header only
    code, out, _ = run_cli(capsys, "replay", "--log", log, "--agent", "EY", "--from", "64", "--to", "63")
    assert code == cli.EXIT_USAGE
    assert cli.render_rows([]).split() == list(cli.REPLAY_COLUMNS)


def test_replay_of_unknown_agent_or_log_exits_two(capsys, oracle_logs, tmp_path):
    log = str(oracle_logs[("s1_fire", "full", 1)])
    assert run_cli(capsys, "replay", "--log", log, "--agent", "ZZ", "--from", "1", "--to", "2")[0] == 2
    assert run_cli(capsys, "replay", "--log", str(tmp_path / "x.jsonl"), "--agent", "CC",
                   "--from", "1", "--to", "2")[0] == 2


def test_endpoint_settings_must_be_known_fields(capsys, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("provider: remote\nendpoint: {base_url: 'http://127.0.0.1:9/v1', colour: blue}\n")
    assert run_cli(capsys, "elicit", "--config", str(cfg))[0] == cli.EXIT_CONFIG

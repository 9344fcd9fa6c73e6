"""Command-line entry points: run, metrics, elicit and replay.

Exit codes: 0 success, 1 usage, 2 config, 3 provider-fatal, 4 incomplete log.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import census, telemetry, world
from .judgment.base import ProviderFatal
from .scenario import CONDITIONS, CONDITION_ALIASES, DATA_DIR, RunConfig, load_scenario, make_provider, run_matrix

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_PROVIDER, EXIT_INCOMPLETE = 0, 1, 2, 3, 4
NONE = "--"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract reserves 2 for config errors
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_seeds(text: str) -> list[int]:
    """``1..5`` or ``1,2,5`` (the two forms can be mixed: ``1..3,7``)."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise UsageError(f"empty item in seed list {text!r}")
        try:
            if ".." in part:
                lo, hi = (int(x) for x in part.split("..", 1))
                if hi < lo:
                    raise UsageError(f"descending seed range {part!r}")
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed list {text!r}") from None
    if len(set(seeds)) != len(seeds):
        raise UsageError(f"duplicate seeds in {text!r}")
    return seeds


def load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise census.ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise census.ConfigError(f"config {path} must be a mapping")
    unknown = set(doc) - {"provider", "endpoint", "seeds", "out", "jobs"}
    if unknown:
        raise census.ConfigError(f"config {path}: unknown keys {sorted(unknown)}")
    return doc


# -- run -------------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    seeds = parse_seeds(args.seeds or str(cfg.get("seeds", "1..5")))
    provider_kind = args.provider or cfg.get("provider", "oracle")
    out = Path(args.out or cfg.get("out", "runs"))
    jobs = args.jobs if args.jobs is not None else int(cfg.get("jobs", 1))
    spec = load_scenario(args.scenario)
    config = RunConfig(spec, args.condition, provider_kind, seeds, out,
                       Path(args.map) if args.map else None, Path(args.roster) if args.roster else None)
    print(f"seeds: {','.join(map(str, seeds))}")
    provider = None
    if provider_kind == "remote":
        provider = make_provider("remote", cfg.get("endpoint"))
        provider.probe()  # type: ignore[attr-defined]
    results = run_matrix(config, provider, jobs=jobs, endpoint=cfg.get("endpoint"))
    for r in results:
        print(f"{r.scenario} {r.condition} seed={r.seed} records={r.records} "
              f"verdicts={r.verdicts} violate={r.violates} log={r.path}")
    if provider is not None and hasattr(provider, "malformed_fraction"):
        print(f"malformed fraction: {provider.malformed_fraction:.4f}")
    return EXIT_OK


# -- metrics ---------------------------------------------------------------------


def cmd_metrics(args: argparse.Namespace) -> int:
    paths: list[Path] = []
    for item in args.logs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.jsonl")))
        elif p.exists():
            paths.append(p)
        else:
            raise census.ConfigError(f"no such log or directory: {p}")
    if not paths:
        raise census.ConfigError("no logs found")
    reports = telemetry.build_reports(telemetry.read_logs(paths))
    text = telemetry.emit_report(reports, args.format)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_OK


# -- elicit ----------------------------------------------------------------------


def cmd_elicit(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    provider_kind = args.provider or cfg.get("provider", "oracle")
    provider = make_provider(provider_kind, cfg.get("endpoint"))
    if provider_kind == "remote":
        provider.probe()  # type: ignore[attr-defined]
    landmarks = world.load_map(args.map).landmarks if args.map else world.load_map(DATA_DIR / "default_map.yaml").landmarks
    roster = census.load_roster(args.roster or DATA_DIR / "roster.yaml", landmarks)
    wanted = set(args.agents.split(",")) if args.agents else None
    agents = [a for a in roster.regulated() if wanted is None or a.id in wanted]
    if wanted and wanted - {a.id for a in agents}:
        raise census.ConfigError(f"unknown agents: {sorted(wanted - {a.id for a in agents})}")
    print("agent  pinned  elicited")
    for a in agents:
        tau = census.elicit_threshold(a, provider)
        pinned = NONE if a.tau is None else str(a.tau)
        print(f"{a.id:<5}  {pinned:<6}  {tau}")
    return EXIT_OK


# -- replay ----------------------------------------------------------------------


@dataclass(frozen=True)
class ReplayRow:
    tick: int
    cue: str
    ell: str
    verdict: str
    rule: str
    action: str


REPLAY_COLUMNS = ("tick", "cue", "ell", "verdict", "rule", "action")


def _cue_text(cue: dict[str, Any] | None) -> str:
    if not cue:
        return NONE
    return f"{cue['kind']}@{cue['distance']}({cue['severity']})"


def replay_rows(run: telemetry.RunLog, agent: str, start: int, stop: int) -> list[ReplayRow]:
    """One row per tick; verdict columns show the verdict in force at that tick."""
    if agent not in run.header.get("agents", []) and not any(r["agent"] == agent for r in run.records):
        raise census.ConfigError(f"agent {agent} does not appear in {run.path}")
    verdicts = sorted(run.verdicts([agent]), key=lambda r: r["tick"])
    actions = {r["tick"]: r for r in run.actions([agent])}
    rows = []
    k, current = 0, None
    for t in range(start, stop + 1):
        while k < len(verdicts) and verdicts[k]["tick"] <= t:
            current = verdicts[k]
            k += 1
        act = actions.get(t)
        if current is None:
            cue, ell, verdict, rule = NONE, NONE, "comply", NONE
        else:
            p = current["payload"]
            cue, ell = _cue_text(p.get("cue")), str(p["assessment"]["ell"])
            verdict, rule = p["decision"], p.get("target_rule") or NONE
        rows.append(ReplayRow(t, cue, ell, verdict, rule, act["payload"]["intent"] if act else "idle"))
    return rows


def render_rows(rows: Sequence[ReplayRow]) -> str:
    table = [list(REPLAY_COLUMNS)] + [[str(r.tick), r.cue, r.ell, r.verdict, r.rule, r.action] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(REPLAY_COLUMNS))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in table) + "\n"


def cmd_replay(args: argparse.Namespace) -> int:
    if args.to < args.from_:
        raise UsageError("--to must not precede --from")
    if not Path(args.log).is_file():
        raise census.ConfigError(f"no such log: {args.log}")
    run = telemetry.read_log(args.log)
    sys.stdout.write(render_rows(replay_rows(run, args.agent, args.from_, args.to)))
    return EXIT_OK


# -- wiring ----------------------------------------------------------------------


def _condition(text: str) -> str:
    name = CONDITION_ALIASES.get(text, text)
    if name not in CONDITIONS:
        raise argparse.ArgumentTypeError(f"unknown condition {text!r}; choose from {', '.join(CONDITIONS)}")
    return name


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pavesim", description="Run rule-compliance scenarios and analyse their logs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="{run,metrics,elicit,replay}", parser_class=_Parser)

    run = sub.add_parser("run", help="run a scenario for one condition over a seed list")
    run.add_argument("--scenario", required=True, help="s1, s2, s3, a shipped id or a scenario YAML path")
    run.add_argument("--condition", type=_condition, default="full",
                     help="full, no_gate (alias nogate) or vanilla_proxy (alias vanilla)")
    run.add_argument("--provider", choices=("oracle", "remote"), help="judgment provider (default oracle)")
    run.add_argument("--seeds", help="seed list such as 1..5 or 1,2,5 (default 1..5)")
    run.add_argument("--out", help="directory for JSONL logs (default runs)")
    run.add_argument("--map", help="override the scenario map file")
    run.add_argument("--roster", help="override the scenario roster file")
    run.add_argument("--jobs", type=int, help="cells to run in parallel (default 1)")
    run.add_argument("--config", help="YAML file with provider, endpoint, seeds, out and jobs defaults")
    run.set_defaults(func=cmd_run)

    met = sub.add_parser("metrics", help="compute metrics from complete logs")
    met.add_argument("--logs", nargs="+", required=True, help="log files or directories of *.jsonl")
    met.add_argument("--format", choices=("csv", "table"), default="csv", help="report format (default csv)")
    met.add_argument("--output", help="write the report here instead of stdout")
    met.set_defaults(func=cmd_metrics)

    eli = sub.add_parser("elicit", help="elicit legitimacy thresholds from a provider")
    eli.add_argument("--roster", help="roster file (default: shipped roster)")
    eli.add_argument("--map", help="map file used to resolve landmark homes")
    eli.add_argument("--agents", help="comma-separated agent ids (default all regulated agents)")
    eli.add_argument("--provider", choices=("oracle", "remote"), help="judgment provider (default oracle)")
    eli.add_argument("--config", help="YAML file with provider and endpoint settings")
    eli.set_defaults(func=cmd_elicit)

    rep = sub.add_parser("replay", help="print a tick-by-tick table for one agent")
    rep.add_argument("--log", required=True, help="JSONL log file")
    rep.add_argument("--agent", required=True, help="agent id")
    rep.add_argument("--from", dest="from_", type=int, required=True, help="first tick")
    rep.add_argument("--to", type=int, required=True, help="last tick (inclusive)")
    rep.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pavesim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except census.ConfigError as exc:
        print(f"pavesim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProviderFatal as exc:
        print(f"pavesim: provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except telemetry.IncompleteLogError as exc:
        print(f"pavesim: incomplete log: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE


if __name__ == "__main__":
    sys.exit(main())

"""JSONL event logs and the metric pipeline computed from them.

A log is a header line, one event record per line, and a terminal marker.
Metrics read only logs: rates are averaged over agents within a seed, then
over seeds, with the standard error taken across seed-level means.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

PHASES = ("perception", "assessment", "verdict", "action", "observation", "npc", "hazard")
SUSTAIN_TICKS = 10
NEAR_MAX = 3
FAR_MIN = 12  # strictly beyond
ABSENT = "—"


class IncompleteLogError(RuntimeError):
    def __init__(self, path: str | Path, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = str(path)


@dataclass(frozen=True)
class EventRecord:
    tick: int
    agent: str
    phase: str
    payload: Mapping[str, Any]
    scenario: str
    condition: str
    seed: int
    windows: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"tick": self.tick, "agent": self.agent, "phase": self.phase, "payload": dict(self.payload),
                "scenario": self.scenario, "condition": self.condition, "seed": self.seed,
                "windows": list(self.windows)}


def dumps(obj: Mapping[str, Any]) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def log_name(scenario: str, condition: str, seed: int) -> str:
    return f"{scenario}_{condition}_{seed}.jsonl"


class LogWriter:
    """Single-writer append-only JSONL log closed by a terminal marker."""

    def __init__(self, path: str | Path, header: Mapping[str, Any]) -> None:
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self.count = 0
        self._last_tick = -1
        self._fh.write(dumps({"header": True, **header}) + "\n")

    def write(self, record: Mapping[str, Any]) -> None:
        if record["phase"] not in PHASES:
            raise ValueError(f"unknown phase {record['phase']!r}")
        if record["tick"] < self._last_tick:
            raise ValueError("records must be appended in tick order")
        self._last_tick = record["tick"]
        self._fh.write(dumps(record) + "\n")
        self.count += 1

    def close(self, status: str = "complete", reason: str = "") -> None:
        if self._fh.closed:
            return
        marker = {"terminal": True, "status": status, "records": self.count}
        if reason:
            marker["reason"] = reason
        self._fh.write(dumps(marker) + "\n")
        self._fh.close()

    def __enter__(self) -> "LogWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close("complete" if exc_type is None else "aborted", "" if exc is None else str(exc))


@dataclass
class RunLog:
    path: str
    header: dict[str, Any]
    records: list[dict[str, Any]]

    @property
    def scenario(self) -> str:
        return self.header["scenario"]

    @property
    def condition(self) -> str:
        return self.header["condition"]

    @property
    def seed(self) -> int:
        return int(self.header["seed"])

    def window(self, name: str) -> tuple[int, int] | None:
        w = self.header.get("windows", {}).get(name)
        return None if w is None else (int(w[0]), int(w[1]))

    def group(self, name: str) -> list[str]:
        return list(self.header.get("groups", {}).get(name, []))

    def verdicts(self, agents: Iterable[str] | None = None, window: str | None = None) -> list[dict[str, Any]]:
        return self._select("verdict", agents, window)

    def actions(self, agents: Iterable[str] | None = None, window: str | None = None) -> list[dict[str, Any]]:
        return self._select("action", agents, window)

    def _select(self, phase: str, agents: Iterable[str] | None, window: str | None) -> list[dict[str, Any]]:
        allowed = None if agents is None else set(agents)
        out = []
        for r in self.records:
            if r["phase"] != phase:
                continue
            if allowed is not None and r["agent"] not in allowed:
                continue
            if window is not None and window not in r["windows"]:
                continue
            out.append(r)
        return out


def read_log(path: str | Path) -> RunLog:
    """Parse a log, refusing anything without a complete terminal marker."""
    p = Path(path)
    try:
        lines = p.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IncompleteLogError(p, f"unreadable ({exc})") from exc
    if not lines:
        raise IncompleteLogError(p, "empty log")
    try:
        rows = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        raise IncompleteLogError(p, f"corrupt line ({exc})") from exc
    header, last = rows[0], rows[-1]
    if not header.get("header"):
        raise IncompleteLogError(p, "missing header record")
    if not last.get("terminal"):
        raise IncompleteLogError(p, "missing terminal marker (truncated log)")
    if last.get("status") != "complete":
        raise IncompleteLogError(p, f"run {last.get('status')}: {last.get('reason', '')}".strip())
    records = rows[1:-1]
    if len(records) != last.get("records"):
        raise IncompleteLogError(p, "record count does not match terminal marker")
    return RunLog(str(p), header, records)


def read_logs(paths: Iterable[str | Path]) -> list[RunLog]:
    return [read_log(p) for p in sorted(str(p) for p in paths)]


# -- aggregation ------------------------------------------------------------------


@dataclass
class MetricValue:
    mean: float | None
    se: float | None
    per_seed: dict[int, float | None] = field(default_factory=dict)

    @property
    def absent(self) -> bool:
        return self.mean is None


def aggregate(per_seed_agent: Mapping[int, Mapping[str, float | None]]) -> MetricValue:
    """Agent mean within each seed, then the mean and standard error over seed means."""
    seed_means: dict[int, float | None] = {}
    for seed in sorted(per_seed_agent):
        vals = [v for _, v in sorted(per_seed_agent[seed].items()) if v is not None]
        seed_means[seed] = math.fsum(vals) / len(vals) if vals else None
    defined = [v for v in seed_means.values() if v is not None]
    if not defined:
        return MetricValue(None, None, seed_means)
    mean = math.fsum(defined) / len(defined)
    se = statistics.stdev(defined) / math.sqrt(len(defined)) if len(defined) > 1 else 0.0
    return MetricValue(mean, se, seed_means)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def _by_agent(records: Iterable[dict[str, Any]]) -> dict[str, list[dict[str, Any]]]:
    out: dict[str, list[dict[str, Any]]] = {}
    for r in records:
        out.setdefault(r["agent"], []).append(r)
    return out


def _violate_rate(recs: Sequence[dict[str, Any]]) -> float | None:
    return _ratio(sum(r["payload"]["decision"] == "violate" for r in recs), len(recs))


@dataclass
class Counts:
    opportunities: int = 0
    violations: int = 0
    unrelated_events: int = 0


# -- metrics --------------------------------------------------------------------------


def _targeted(recs: Iterable[dict[str, Any]], rules: Iterable[str]) -> list[dict[str, Any]]:
    allowed = set(rules)
    return [r for r in recs if r["payload"].get("target_rule") in allowed]


def vr_by_agent(run: RunLog, window: str | None, agents: Iterable[str] | None,
                rules: Iterable[str], where: Callable[[dict[str, Any]], bool] | None = None) -> dict[str, float | None]:
    agents = None if agents is None else list(agents)
    recs = _targeted(run.verdicts(agents, window), rules)
    if where is not None:
        recs = [r for r in recs if where(r)]
    grouped = _by_agent(recs)
    names = agents if agents is not None else sorted(grouped)
    return {a: _violate_rate(grouped.get(a, [])) for a in names}


def compute_vr(logs: Sequence[RunLog], window: str | None, agents: Iterable[str] | None,
               rules: Iterable[str] | None = None,
               where: Callable[[dict[str, Any]], bool] | None = None) -> MetricValue:
    """Per-agent violate share of targeted decisions; agents without opportunities are excluded."""
    agents = None if agents is None else list(agents)
    return aggregate({
        run.seed: vr_by_agent(run, window, agents, run.header["trigger_rules"] if rules is None else rules, where)
        for run in logs
    })


def urv_by_agent(run: RunLog, window: str | None) -> dict[str, float | None]:
    trig = set(run.header["trigger_rules"])
    opp = _by_agent(r for r in run.verdicts(None, window)
                    if r["payload"].get("target_rule") not in (None, *trig))
    events = _by_agent(r for r in run.actions(None, window) if set(r["payload"]["broken"]) - trig)
    return {a: _ratio(len(events.get(a, [])), len(opp.get(a, []))) for a in sorted(set(opp) | set(events))}


def compute_urv(logs: Sequence[RunLog], window: str | None) -> MetricValue:
    """Actions breaking a non-trigger rule over decisions targeting non-trigger rules."""
    return aggregate({run.seed: urv_by_agent(run, window) for run in logs})


def recovery_ticks(run: RunLog, agent: str, hazard: str) -> int | None:
    radius = [r for r in run.records if r["agent"] == agent and r["phase"] == "observation"
              and r["payload"].get("kind") == "radius" and r["payload"].get("hazard") == hazard]
    if not radius or radius[-1]["payload"]["event"] != "exit":
        return None
    t_exit = radius[-1]["tick"]
    verdicts = [r for r in run.verdicts([agent]) if r["tick"] >= t_exit]
    violates = [r["tick"] for r in verdicts if r["payload"]["decision"] == "violate"]
    for r in verdicts:
        if r["payload"]["decision"] != "comply":
            continue
        t = r["tick"]
        if not any(t <= tv <= t + SUSTAIN_TICKS for tv in violates):
            return t - t_exit
    return None


def compute_recovery(logs: Sequence[RunLog], agents: Iterable[str], hazard: str) -> MetricValue:
    """Ticks from the final exit of a hazard radius to sustained compliance."""
    agents = list(agents)
    return aggregate({
        run.seed: {a: (None if (v := recovery_ticks(run, a, hazard)) is None else float(v)) for a in agents}
        for run in logs
    })


def _has_officers(run: RunLog) -> bool:
    return any(r["phase"] == "verdict" and r["payload"].get("officer_distance") is not None for r in run.records)


def compute_ocr(logs: Sequence[RunLog], window: str | None = None,
                near_far_agents: Iterable[str] | None = None) -> dict[str, MetricValue]:
    """Compliance while supervised, plus violate rates near (0-3) and far (>12) from an officer."""
    usable = [run for run in logs if _has_officers(run)]
    if len(usable) < len(logs):
        log.warning("%d log(s) contain no officers; OCR is absent for them", len(logs) - len(usable))
    ocr: dict[int, dict[str, float | None]] = {}
    for run in usable:
        sup = [r for r in run.verdicts(None, window)
               if r["payload"].get("supervised") and r["payload"].get("target_rule") is not None]
        ocr[run.seed] = {a: _ratio(sum(r["payload"]["decision"] == "comply" for r in recs), len(recs))
                         for a, recs in sorted(_by_agent(sup).items())}
    agents = None if near_far_agents is None else list(near_far_agents)

    def near(r: dict[str, Any]) -> bool:
        d = r["payload"].get("officer_distance")
        return d is not None and d <= NEAR_MAX

    def far(r: dict[str, Any]) -> bool:
        d = r["payload"].get("officer_distance")
        return d is not None and d > FAR_MIN

    return {
        "OCR": aggregate(ocr),
        "VR_near": compute_vr(usable, window, agents, where=near),
        "VR_far": compute_vr(usable, window, agents, where=far),
    }


def compute_cr(logs: Sequence[RunLog], focal: Iterable[str], day_windows: Sequence[str],
               region: str = "focal") -> tuple[dict[str, MetricValue], list[str]]:
    """Violate share of focal-crossing decisions made after seeing a confederate, per day."""
    focal = list(focal)
    out: dict[str, MetricValue] = {}
    faults: list[str] = []

    def at_focal(r: dict[str, Any]) -> bool:
        return region in r["payload"].get("regions", []) and bool(r["payload"].get("confederate_seen"))

    for i, w in enumerate(day_windows, start=1):
        out[f"CR_D{i}"] = compute_vr(logs, w, focal, where=at_focal)
        for run in logs:
            if not any(at_focal(r) for r in run.verdicts(focal, w)):
                faults.append(f"seed {run.seed} {w}: no focal decision followed a confederate observation")
    return out, faults


# -- reports ----------------------------------------------------------------------

# (column, kind, window, group, extra); the table headline columns come first
METRIC_ORDER = ("VR_cafe", "URV", "T_rec", "OCR", "VR_near", "VR_far", "CR_D1", "CR_D2",
                "VR_bystander", "VR_day2", "VR_exit", "CR_nonobs")
FIRE_WINDOW = "fire"
DAY_WINDOWS = ("day1", "day2")


@dataclass
class MetricsReport:
    scenario: str
    condition: str
    seeds: list[int]
    metrics: dict[str, MetricValue]
    counts: Counts
    warnings: list[str] = field(default_factory=list)


def _counts(logs: Sequence[RunLog]) -> Counts:
    c = Counts()
    for run in logs:
        trig = set(run.header["trigger_rules"])
        for r in run.records:
            p = r["payload"]
            if r["phase"] == "verdict" and p.get("target_rule") is not None:
                c.opportunities += 1
                c.violations += p["decision"] == "violate"
            elif r["phase"] == "action" and set(p["broken"]) - trig:
                c.unrelated_events += 1
    return c


def scenario_metrics(logs: Sequence[RunLog]) -> MetricsReport:
    """Every metric whose window and agent group the logs define."""
    first = logs[0]
    windows, groups = first.header.get("windows", {}), first.header.get("groups", {})
    m: dict[str, MetricValue] = {}
    warnings: list[str] = []
    fire = FIRE_WINDOW if FIRE_WINDOW in windows else None
    cafe = groups.get("cafe")
    if fire and cafe:
        m["VR_cafe"] = compute_vr(logs, fire, cafe)
        m["VR_exit"] = compute_vr(logs, fire, cafe, where=lambda r: "cafe_exit" in r["payload"].get("regions", []))
        hazards = first.header.get("hazards", [])
        if hazards:
            m["T_rec"] = compute_recovery(logs, cafe, hazards[0])
    if fire:
        m["URV"] = compute_urv(logs, fire)
    if fire and groups.get("bystanders"):
        m["VR_bystander"] = compute_vr(logs, fire, groups["bystanders"])
    if "day2_commute" in windows and groups.get("commuters"):
        m["VR_day2"] = compute_vr(logs, "day2_commute", groups["commuters"])
    if first.header.get("officers"):
        m.update(compute_ocr(logs, fire, cafe))
    focal = groups.get("focal")
    if focal and all(w in windows for w in DAY_WINDOWS):
        cr, faults = compute_cr(logs, focal, DAY_WINDOWS)
        m.update(cr)
        warnings += faults
        others = sorted(set(first.header.get("agents", [])) - set(focal))
        m["CR_nonobs"] = compute_vr(logs, None, others)
    return MetricsReport(first.scenario, first.condition, sorted(run.seed for run in logs), m, _counts(logs), warnings)


def build_reports(logs: Sequence[RunLog]) -> list[MetricsReport]:
    cells: dict[tuple[str, str], list[RunLog]] = {}
    for run in logs:
        cells.setdefault((run.scenario, run.condition), []).append(run)
    return [scenario_metrics(sorted(cells[k], key=lambda r: r.seed)) for k in sorted(cells)]


def _fmt(v: float | None) -> str:
    return ABSENT if v is None else f"{v:.6f}"


def emit_report(reports: Sequence[MetricsReport], fmt: str = "csv") -> str:
    """Deterministic CSV (long form) or an aligned table with one row per scenario and condition."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "condition", "metric", "mean", "se", "n_seeds", "per_seed"])
        for rep in reports:
            for name in METRIC_ORDER:
                mv = rep.metrics.get(name)
                if mv is None:
                    continue
                per_seed = ";".join(f"{s}:{_fmt(v)}" for s, v in sorted(mv.per_seed.items()))
                n = sum(v is not None for v in mv.per_seed.values())
                w.writerow([rep.scenario, rep.condition, name, _fmt(mv.mean), _fmt(mv.se), n, per_seed])
            c = rep.counts
            w.writerow([rep.scenario, rep.condition, "opportunities", c.opportunities, "", len(rep.seeds), ""])
            w.writerow([rep.scenario, rep.condition, "violation_events", c.violations, "", len(rep.seeds), ""])
            w.writerow([rep.scenario, rep.condition, "unrelated_events", c.unrelated_events, "", len(rep.seeds), ""])
        return buf.getvalue()
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    out: list[str] = []
    for scen in sorted({r.scenario for r in reports}):
        rows = [r for r in reports if r.scenario == scen]
        cols = [c for c in METRIC_ORDER if any(c in r.metrics for r in rows)]
        table = [["condition", *cols]]
        for r in rows:
            cells = [r.condition]
            for c in cols:
                mv = r.metrics.get(c)
                if mv is None or mv.mean is None:
                    cells.append(ABSENT)
                else:
                    cells.append(f"{mv.mean:.2f} ± {mv.se:.2f}")
            table.append(cells)
        widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
        out.append(f"== {scen} ==")
        for row in table:
            out.append("  ".join(cell.ljust(wd) for cell, wd in zip(row, widths)).rstrip())
        for r in rows:
            out.extend(f"warning ({r.condition}): {w}" for w in r.warnings)
        out.append("")
    return "\n".join(out)

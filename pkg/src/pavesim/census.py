"""Agent roster, personal rule databases, thresholds and scripted NPCs."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import yaml

from .judgment import JudgmentProvider, JudgmentRequest, ProviderError

log = logging.getLogger(__name__)

Coord = tuple[int, int]

REGULATED = "regulated"
AUTHORITY = "authority"
CONFEDERATE = "confederate"
ROLES = (REGULATED, AUTHORITY, CONFEDERATE)
INSTRUCTIONS = ("hold_back", "pass", "direction_correction")
NPC_ACTIONS = ("move_to", "jaywalk", "instruct", "idle")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Rule:
    id: str
    description: str
    scope: str = "global"  # global | street:<name> | intersection:<id>

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ConfigError(f"rule {self.id} has an empty description")


@dataclass(frozen=True)
class RuleEntry:
    rule_id: str
    c: str
    u: str
    alpha_kind: str = "injunctive"
    s_act: int = 80
    s_val: int = 80

    def __post_init__(self) -> None:
        if self.alpha_kind not in ("injunctive", "descriptive"):
            raise ConfigError(f"entry for {self.rule_id}: alpha_kind must be injunctive or descriptive")
        for name in ("s_act", "s_val"):
            v = getattr(self, name)
            if not 1 <= v <= 100:
                raise ConfigError(f"entry for {self.rule_id}: {name}={v} outside [1,100]")

    def as_payload(self) -> dict[str, Any]:
        return {"id": self.rule_id, "c": self.c, "u": self.u, "alpha_kind": self.alpha_kind,
                "s_act": self.s_act, "s_val": self.s_val}


@dataclass(frozen=True)
class AgentDescription:
    id: str
    name: str
    occupation: str = ""
    persona: str = ""
    current_goal: str = ""
    rules: Mapping[str, RuleEntry] = field(default_factory=dict)
    role: str = REGULATED
    tau: int | None = None
    home_tile: Coord | None = None
    goal_tile: Coord | None = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ConfigError(f"agent {self.id}: unknown role {self.role!r}")
        if self.role != REGULATED and self.tau is not None:
            raise ConfigError(f"agent {self.id}: only regulated agents carry a threshold")
        if self.tau is not None and not 1 <= self.tau <= 100:
            raise ConfigError(f"agent {self.id}: tau {self.tau} outside [1,100]")

    def as_payload(self) -> dict[str, Any]:
        return {"id": self.id, "name": self.name, "occupation": self.occupation,
                "persona": self.persona, "goal": self.current_goal}


@dataclass(frozen=True)
class NpcAction:
    kind: str
    tile: Coord | None = None
    intersection: str | None = None
    instruction: str | None = None
    zone: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in NPC_ACTIONS:
            raise ConfigError(f"unknown NPC action {self.kind!r}")
        if self.kind == "instruct" and self.instruction not in INSTRUCTIONS:
            raise ConfigError(f"unknown instruction {self.instruction!r}")


IDLE = NpcAction("idle")


@dataclass(frozen=True)
class NpcScript:
    npc_id: str
    role: str
    timeline: tuple[tuple[int, NpcAction], ...] = ()

    def __post_init__(self) -> None:
        ticks = [t for t, _ in self.timeline]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise ConfigError(f"script {self.npc_id}: timeline ticks must be strictly increasing")
        for _, act in self.timeline:
            if act.kind == "instruct" and self.role != AUTHORITY:
                raise ConfigError(f"script {self.npc_id}: only authorities may instruct")
            if act.kind == "jaywalk" and self.role != CONFEDERATE:
                raise ConfigError(f"script {self.npc_id}: only confederates may jaywalk")


def scheduled_action(script: NpcScript, t: int) -> NpcAction | None:
    for tick, action in script.timeline:
        if tick == t:
            return action
        if tick > t:
            break
    return None


def npc_step(script: NpcScript, t: int) -> NpcAction:
    act = scheduled_action(script, t)
    return IDLE if act is None else act


def jitter_script(script: NpcScript, rng: random.Random, tick_jitter: int = 3) -> NpcScript:
    """Shift confederate timelines by a seed-drawn offset; other roles unchanged."""
    if script.role != CONFEDERATE or not script.timeline or tick_jitter <= 0:
        return script
    shift = rng.randint(-tick_jitter, tick_jitter)
    return replace(script, timeline=tuple((max(0, t + shift), a) for t, a in script.timeline))


def jitter_position(base: Coord, rng: random.Random, walkable, band: int = 1) -> Coord:
    """Officer station jittered within ``band`` tiles; falls back to ``base`` if unwalkable."""
    dx = rng.randint(-band, band)
    cand = (base[0] + dx, base[1])
    return cand if walkable(cand) else base


def elicit_threshold(agent: AgentDescription, provider: JudgmentProvider) -> int:
    if agent.role != REGULATED:
        raise ConfigError(f"agent {agent.id} is not regulated; thresholds apply to regulated agents only")
    req = JudgmentRequest("threshold", {"agent": agent.as_payload()}, agent_id=agent.id)
    try:
        resp = provider.evaluate(req)
    except ProviderError as exc:
        log.warning("threshold elicitation for %s failed (%s); using 50", agent.id, exc)
        return 50
    if resp.degraded:
        log.warning("threshold elicitation for %s degraded; using %d", agent.id, resp.get("threshold"))
    return int(resp.get("threshold"))


# -- loading -------------------------------------------------------------------


@dataclass
class Roster:
    rules: dict[str, Rule]
    agents: list[AgentDescription]
    npcs: list[AgentDescription]

    def regulated(self) -> list[AgentDescription]:
        return [a for a in self.agents if a.role == REGULATED]

    def get(self, agent_id: str) -> AgentDescription:
        for a in [*self.agents, *self.npcs]:
            if a.id == agent_id:
                return a
        raise KeyError(agent_id)


def _coord(v: Any, landmarks: Mapping[str, Coord]) -> Coord | None:
    if v is None:
        return None
    if isinstance(v, str):
        if v not in landmarks:
            raise ConfigError(f"unknown landmark {v!r}")
        return landmarks[v]
    x, y = v
    return (int(x), int(y))


def _entries(spec: Any, rules: Mapping[str, Rule], default: Mapping[str, Any], who: str) -> dict[str, RuleEntry]:
    if spec in (None, "all"):
        items: Iterable[Mapping[str, Any]] = [{"id": rid} for rid in rules]
    else:
        items = [s if isinstance(s, Mapping) else {"id": s} for s in spec]
    out: dict[str, RuleEntry] = {}
    for item in items:
        rid = item["id"]
        if rid not in rules:
            raise ConfigError(f"{who}: rule {rid!r} not in the rule set")
        merged = {**default, **item}
        out[rid] = RuleEntry(
            rule_id=rid,
            c=merged.get("c", rules[rid].scope),
            u=merged.get("u", rules[rid].description),
            alpha_kind=merged.get("alpha_kind", "injunctive"),
            s_act=int(merged.get("s_act", 80)),
            s_val=int(merged.get("s_val", 80)),
        )
    return out


def parse_roster(
    doc: Mapping[str, Any],
    landmarks: Mapping[str, Coord] | None = None,
    overrides: Mapping[str, Mapping[str, Any]] | None = None,
    provider: JudgmentProvider | None = None,
) -> Roster:
    landmarks = landmarks or {}
    rules: dict[str, Rule] = {}
    for r in doc.get("rules", []):
        if r["id"] in rules:
            raise ConfigError(f"duplicate rule id {r['id']!r}")
        rules[r["id"]] = Rule(r["id"], r["description"], r.get("scope", "global"))
    default = doc.get("default_entry", {})
    seen: set[str] = set()
    agents: list[AgentDescription] = []
    npcs: list[AgentDescription] = []
    for raw in [*doc.get("agents", []), *doc.get("npcs", [])]:
        spec = {**raw, **(overrides or {}).get(raw["id"], {})}
        aid = spec["id"]
        if aid in seen:
            raise ConfigError(f"duplicate agent id {aid!r}")
        seen.add(aid)
        role = spec.get("role", REGULATED)
        agent = AgentDescription(
            id=aid,
            name=spec.get("name", aid),
            occupation=spec.get("occupation", ""),
            persona=spec.get("persona", ""),
            current_goal=spec.get("goal", ""),
            rules=_entries(spec.get("rules"), rules, default, aid) if role == REGULATED else {},
            role=role,
            tau=spec.get("tau"),
            home_tile=_coord(spec.get("home"), landmarks),
            goal_tile=_coord(spec.get("goal_tile"), landmarks),
        )
        if role == REGULATED and agent.tau is None:
            if provider is None:
                raise ConfigError(f"agent {aid} has no threshold and no provider to elicit one")
            agent = replace(agent, tau=elicit_threshold(agent, provider))
        (agents if role == REGULATED else npcs).append(agent)
    return Roster(rules, agents, npcs)


def load_roster(
    path: str | Path,
    landmarks: Mapping[str, Coord] | None = None,
    overrides: Mapping[str, Mapping[str, Any]] | None = None,
    provider: JudgmentProvider | None = None,
) -> Roster:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read roster {path}: {exc}") from exc
    return parse_roster(doc, landmarks, overrides, provider)


def parse_script(npc_id: str, role: str, items: Sequence[Mapping[str, Any]],
                 landmarks: Mapping[str, Coord] | None = None) -> NpcScript:
    landmarks = landmarks or {}
    timeline = []
    for item in items:
        timeline.append((
            int(item["tick"]),
            NpcAction(
                kind=item["action"],
                tile=_coord(item.get("tile"), landmarks),
                intersection=item.get("intersection"),
                instruction=item.get("instruction"),
                zone=item.get("zone"),
            ),
        ))
    return NpcScript(npc_id, role, tuple(timeline))

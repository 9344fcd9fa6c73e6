"""Perception, Assessment, Verdict and Emulation for one agent at one decision tick."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .census import AgentDescription
from .judgment import JudgmentProvider, JudgmentRequest
from .world import (
    Coord,
    Path,
    RawObservation,
    TileMap,
    move_broken_rules,
    step_intent,
)

log = logging.getLogger(__name__)

INF = None  # authority distance when nobody is in view
MEMORY_SIZE = 50
SECONDS_PER_TICK = 10
EMULATE_HORIZON = 8  # plan steps shown to the emulation op


@dataclass(frozen=True)
class SituationalCue:
    kind: str
    distance: int
    severity: int

    def __post_init__(self) -> None:
        if self.distance < 0 or not 1 <= self.severity <= 100:
            raise ValueError(f"bad cue {self}")

    def as_payload(self) -> dict[str, Any]:
        return {"type": self.kind, "distance_tiles": self.distance, "severity": self.severity}


@dataclass(frozen=True)
class ContextObject:
    a_pres: bool
    d_auth: int | None
    b_peer: tuple[str, ...]
    u_cue: tuple[SituationalCue, ...]
    zeta: str
    degraded: bool = False

    def __post_init__(self) -> None:
        if not self.a_pres and self.d_auth is not None:
            raise ValueError("authority distance must be infinite when no authority is present")

    def as_payload(self) -> dict[str, Any]:
        return {
            "authority_present": self.a_pres,
            "authority_distance_tiles": "inf" if self.d_auth is None else self.d_auth,
            "peer_behaviors": list(self.b_peer),
            "situational_cues": [c.as_payload() for c in self.u_cue],
            "scene_summary": self.zeta,
        }


@dataclass(frozen=True)
class AssessmentTuple:
    r: int
    p_emp: int
    p_norm: int
    b: int
    ell: int

    def __post_init__(self) -> None:
        for name in ("r", "p_emp", "p_norm", "b", "ell"):
            v = getattr(self, name)
            if not 1 <= v <= 100:
                raise ValueError(f"{name}={v} outside [1,100]")

    def as_payload(self) -> dict[str, int]:
        return {"r": self.r, "p_emp": self.p_emp, "p_norm": self.p_norm, "b": self.b, "ell": self.ell}


@dataclass(frozen=True)
class Verdict:
    y: str
    j: str
    kappa: int
    target_rule: str | None
    gated: bool = False  # True when the legitimacy gate forced comply

    def __post_init__(self) -> None:
        if self.y not in ("comply", "violate"):
            raise ValueError(self.y)
        if self.y == "violate" and self.target_rule is None:
            raise ValueError("a violate verdict needs a target rule")


@dataclass(frozen=True)
class ActionStep:
    description: str
    duration_s: int
    intent: str  # move | wait | cross | idle
    src: Coord
    dst: Coord


@dataclass(frozen=True)
class ActionSequence:
    steps: tuple[ActionStep, ...]
    broken_rules: frozenset[str] = frozenset()

    def positions(self) -> list[Coord]:
        return [s.dst for s in self.steps]


@dataclass(frozen=True)
class PeerObservation:
    actor: str
    observed_behavior: str
    observed_outcome: str
    rule_followed: bool
    rule: str | None = None

    def __post_init__(self) -> None:
        if len(self.observed_behavior.split()) > 20:
            raise ValueError("observed behavior exceeds 20 words")

    def as_payload(self) -> dict[str, Any]:
        return {"behavior": self.observed_behavior, "rule": self.rule, "rule_followed": self.rule_followed}


@dataclass(frozen=True)
class Plan:
    agent_id: str
    destination: Coord | None
    path: Path | None
    purpose: str


@dataclass(frozen=True)
class RouteOptions:
    """Legal and single-rule-relaxed routes to the agent's current objective."""

    objective: str  # "safety" or "goal"
    legal: Path | None
    relaxed: Mapping[str, Path]
    destination: Coord | None = None

    @property
    def target_rule(self) -> str | None:
        return select_target(self.legal, self.relaxed)

    def facts(self) -> dict[str, int | None]:
        target = self.target_rule
        return {
            "legal_cost": None if self.legal is None else self.legal.cost,
            "relaxed_cost": None if target is None else self.relaxed[target].cost,
        }


def select_target(legal: Path | None, relaxed: Mapping[str, Path]) -> str | None:
    """Cheapest single relaxation strictly cheaper than the legal route; ties by rule id."""
    bound = None if legal is None else legal.cost
    best: tuple[int, str] | None = None
    for rule in sorted(relaxed):
        cost = relaxed[rule].cost
        if bound is not None and cost >= bound:
            continue
        if best is None or cost < best[0]:
            best = (cost, rule)
    return None if best is None else best[1]


@dataclass(frozen=True)
class MemoryEntry:
    tick: int
    decision: str
    target_rule: str | None
    outcome: str


class ActorMemory:
    """Bounded ring of recent (verdict, outcome) pairs; phrasing only."""

    def __init__(self, size: int = MEMORY_SIZE) -> None:
        self._ring: deque[MemoryEntry] = deque(maxlen=size)

    def add(self, entry: MemoryEntry) -> None:
        self._ring.append(entry)

    def entries(self) -> list[MemoryEntry]:
        return list(self._ring)

    def __len__(self) -> int:
        return len(self._ring)


# -- payload helpers -----------------------------------------------------------


def observation_payload(obs: RawObservation) -> dict[str, Any]:
    return {
        "observer": obs.observer,
        "tick": obs.tick,
        "visible_agents": [{"id": a.id, "behavior": a.behavior} for a in obs.visible_agents],
        "visible_authorities": [
            {"id": a.id, "distance": a.distance, "instruction": a.instruction, "zone": a.zone}
            for a in obs.visible_authorities
        ],
        "hazard_readings": [{"kind": h.kind, "distance": h.distance, "severity": h.severity} for h in obs.hazard_readings],
        "signal_states": [list(s) for s in obs.signal_states],
        "current_tile_rules": sorted(obs.current_tile_rules),
    }


def personal_rules(agent: AgentDescription) -> list[dict[str, Any]]:
    return [agent.rules[k].as_payload() for k in sorted(agent.rules)]


def _ask(provider: JudgmentProvider, op: str, payload: Mapping[str, Any], agent: AgentDescription, tick: int):
    return provider.evaluate(JudgmentRequest(op, payload, agent_id=agent.id, tick=tick))


# -- perception ----------------------------------------------------------------


def perceive_context(
    obs: RawObservation, agent: AgentDescription, provider: JudgmentProvider, tick: int | None = None
) -> ContextObject:
    if obs.observer != agent.id:
        raise ValueError(f"observation belongs to {obs.observer}, not {agent.id}")
    t = obs.tick if tick is None else tick
    resp = _ask(provider, "perceive", {"agent": agent.as_payload(), "observation": observation_payload(obs)}, agent, t)
    if resp.degraded:
        log.warning("perception degraded for %s at tick %d", agent.id, t)
    res = resp.result
    d = res.authority_distance_tiles
    return ContextObject(
        a_pres=res.authority_present,
        d_auth=None if d == "inf" else int(d),
        b_peer=tuple(res.peer_behaviors),
        u_cue=tuple(SituationalCue(c.type, c.distance_tiles, c.severity) for c in res.situational_cues),
        zeta=res.scene_summary,
        degraded=resp.degraded,
    )


# -- assessment ----------------------------------------------------------------


def _base(agent: AgentDescription, rule: str, rule_text: str) -> dict[str, Any]:
    return {"agent": agent.as_payload(), "rule": rule, "rule_text": rule_text}


def assess_risk(ctx: ContextObject, agent: AgentDescription, provider: JudgmentProvider, rule: str, rule_text: str,
                authority: Mapping[str, Any], tick: int = 0) -> int:
    context = {**ctx.as_payload(), **authority}
    resp = _ask(provider, "risk", {**_base(agent, rule, rule_text), "context": context}, agent, tick)
    return int(resp.get("risk"))


def assess_empirical(peers: Sequence[PeerObservation], rule: str, provider: JudgmentProvider,
                     agent: AgentDescription, tick: int = 0) -> int:
    payload = {"rule": rule, "peers": [p.as_payload() for p in peers], "agent": agent.as_payload()}
    return int(_ask(provider, "empirical", payload, agent, tick).get("p_emp"))


def assess_normative(ctx: ContextObject, agent: AgentDescription, provider: JudgmentProvider, rule: str,
                     rule_text: str, tick: int = 0) -> int:
    if rule not in agent.rules:
        log.info("rule %s not in %s's database; normative prior 50", rule, agent.id)
    payload = {**_base(agent, rule, rule_text), "context": ctx.as_payload(), "personal_rules": personal_rules(agent)}
    return int(_ask(provider, "normative", payload, agent, tick).get("p_norm"))


def assess_benefit(ctx: ContextObject, agent: AgentDescription, provider: JudgmentProvider, rule: str,
                   rule_text: str, tick: int = 0) -> int:
    payload = {**_base(agent, rule, rule_text), "cues": [c.as_payload() for c in ctx.u_cue]}
    return int(_ask(provider, "benefit", payload, agent, tick).get("benefit"))


def assess_legitimacy(ctx: ContextObject, agent: AgentDescription, provider: JudgmentProvider, rule: str,
                      rule_text: str, route: Mapping[str, Any] | None, tick: int = 0) -> tuple[int, str, str, str]:
    payload = {
        **_base(agent, rule, rule_text),
        "cues": [c.as_payload() for c in ctx.u_cue],
        "personal_rules": personal_rules(agent),
        "route": dict(route or {}),
    }
    res = _ask(provider, "legitimacy", payload, agent, tick).result
    return res.legitimacy, res.necessity, res.proportionality, res.alternatives


# -- verdict -------------------------------------------------------------------


def generate_verdict(
    a: AssessmentTuple,
    agent: AgentDescription,
    tau: int,
    hold: bool,
    provider: JudgmentProvider,
    target_rule: str | None,
    rule_text: str = "",
    gate: bool = True,
    tick: int = 0,
) -> Verdict:
    """Verdict with the legitimacy gate applied here, never trusted to the provider."""
    if not 1 <= tau <= 100:
        raise ValueError(f"tau {tau} outside [1,100]")
    if target_rule is None:
        return Verdict("comply", f"No rule is at stake; legal route kept (legitimacy {a.ell}, risk {a.r}).", 90, None)
    if gate and a.ell < tau:
        return Verdict(
            "comply",
            f"Legitimacy {a.ell} is below threshold {tau}; insufficient legitimacy, so risk {a.r} and benefit {a.b} are not weighed.",
            90,
            target_rule,
            gated=True,
        )
    payload = {
        "agent": agent.as_payload(),
        "assessment": a.as_payload(),
        "tau": tau,
        "rule": target_rule,
        "rule_text": rule_text,
        "hold": hold,
        "gate": gate,
    }
    res = _ask(provider, "verdict", payload, agent, tick).result
    return Verdict(res.decision, res.justification, res.confidence, target_rule)


# -- emulation -----------------------------------------------------------------


def check_steps(tmap: TileMap, steps: Iterable[tuple[Coord, Coord]], t0: int,
                occupied: frozenset[Coord] = frozenset()) -> frozenset[str]:
    """Independent replay of a step list against world rules."""
    broken: set[str] = set()
    for k, (a, b) in enumerate(steps):
        broken |= move_broken_rules(tmap, a, b, t0 + k, occupied)
    return frozenset(broken)


def _path_steps(path: Path | None, here: Coord) -> list[tuple[Coord, Coord]]:
    if path is None:
        return []
    return [(a, b) for a, b, _ in path.moves()]


def emulate_action(
    v: Verdict,
    plan: Plan,
    route: RouteOptions,
    agent: AgentDescription,
    tmap: TileMap,
    provider: JudgmentProvider,
    here: Coord,
    tick: int,
    occupied: frozenset[Coord] = frozenset(),
) -> tuple[ActionSequence, Verdict]:
    """Scoped action sequence; a violate verdict whose route breaks anything else degrades to comply."""
    if v.y == "violate":
        relaxed = route.relaxed.get(v.target_rule) if v.target_rule else None
        moves = _path_steps(relaxed, here)
        broken = check_steps(tmap, moves, tick, occupied)
        if relaxed is None or broken != {v.target_rule}:
            log.warning("inconsistent violation for %s at %d (route breaks %s); complying", agent.id, tick, sorted(broken))
            v = Verdict("comply", v.j + " No scoped violation route exists; complying.", v.kappa, v.target_rule)
    if v.y == "comply":
        moves = _path_steps(plan.path, here)
        broken = check_steps(tmap, moves, tick, occupied)
        if broken:
            raise AssertionError(f"legal plan for {agent.id} breaks {sorted(broken)}")
    shown = [
        {"intent": step_intent(tmap, a, b), "broken": bool(move_broken_rules(tmap, a, b, tick + k, occupied))}
        for k, (a, b) in enumerate(moves[:EMULATE_HORIZON])
    ]
    payload = {"agent": agent.as_payload(), "verdict": {"decision": v.y, "justification": v.j, "rule": v.target_rule},
               "plan": shown}
    lines = _ask(provider, "emulate", payload, agent, tick).result.actions
    steps = []
    for k, (a, b) in enumerate(moves):
        text = lines[min(k, len(lines) - 1)].description if lines else "Follow the plan"
        steps.append(ActionStep(text, SECONDS_PER_TICK, step_intent(tmap, a, b), a, b))
    return ActionSequence(tuple(steps), broken), v


def propagate_outcome(
    v: Verdict,
    act: ActionSequence,
    agent: AgentDescription,
    neighbors: Iterable[str],
    feedback: str,
    provider: JudgmentProvider,
    memory: ActorMemory,
    rule_text: str = "",
    tick: int = 0,
) -> tuple[PeerObservation, dict[str, PeerObservation]]:
    """Observer summary plus the per-neighbor deliveries for the next perception cycle."""
    actions = [{"intent": s.intent, "broken": v.y == "violate" and bool(act.broken_rules)} for s in act.steps[:EMULATE_HORIZON]]
    payload = {
        "agent": agent.as_payload(),
        "verdict": {"decision": v.y, "rule": v.target_rule, "rule_text": rule_text},
        "actions": actions,
        "feedback": feedback,
    }
    res = _ask(provider, "propagate", payload, agent, tick).result
    obs = PeerObservation(agent.id, res.observed_behavior, res.observed_outcome, res.rule_followed, v.target_rule)
    memory.add(MemoryEntry(tick, v.y, v.target_rule, res.observed_outcome))
    return obs, {n: obs for n in sorted(neighbors) if n != agent.id}


@dataclass
class DecisionTrace:
    context: ContextObject
    assessment: AssessmentTuple
    legitimacy_texts: tuple[str, str, str]
    verdict: Verdict
    sequence: ActionSequence
    route: RouteOptions
    extras: dict[str, Any] = field(default_factory=dict)


def run_pipeline(
    agent: AgentDescription,
    obs: RawObservation,
    peers: Sequence[PeerObservation],
    route: RouteOptions,
    plan: Plan,
    tmap: TileMap,
    provider: JudgmentProvider,
    rule_texts: Mapping[str, str],
    authority: Mapping[str, Any],
    hold: bool,
    gate: bool = True,
    occupied: frozenset[Coord] = frozenset(),
) -> DecisionTrace:
    t = obs.tick
    ctx = perceive_context(obs, agent, provider)
    target = route.target_rule
    rule = target or "none"
    text = rule_texts.get(target, "no rule at stake") if target else "no rule at stake"
    r = assess_risk(ctx, agent, provider, rule, text, authority, t)
    p_emp = assess_empirical(peers, rule, provider, agent, t)
    p_norm = assess_normative(ctx, agent, provider, rule, text, t)
    b = assess_benefit(ctx, agent, provider, rule, text, t)
    ell, nec, prop, alt = assess_legitimacy(ctx, agent, provider, rule, text, route.facts(), t)
    a = AssessmentTuple(r, p_emp, p_norm, b, ell)
    assert agent.tau is not None
    v = generate_verdict(a, agent, agent.tau, hold, provider, target, text, gate=gate, tick=t)
    seq, v = emulate_action(v, plan, route, agent, tmap, provider, obs.position, t, occupied)
    return DecisionTrace(ctx, a, (nec, prop, alt), v, seq, route)

"""Scenario definitions, warm-up, the tick scheduler and ablation conditions."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath
from typing import Any, Callable, Mapping, Sequence

import yaml

from . import census, pave, world
from .census import AgentDescription, ConfigError, NpcAction, NpcScript, Roster
from .judgment import JudgmentProvider, ProviderError, ProviderFatal
from .judgment.oracle import RESTRICTIVE_INSTRUCTIONS, cue_class
from .judgment.vanilla import alters_plan, vanilla_importance
from .world import Coord, Hazard, Path, Region, TileMap

log = logging.getLogger(__name__)

CONDITIONS = ("full", "no_gate", "vanilla_proxy")
CONDITION_ALIASES = {"nogate": "no_gate", "vanilla": "vanilla_proxy", "w/o_gate": "no_gate"}
SCENARIO_IDS = ("s1_fire", "s2_fire_officer", "s3_jaywalk")
DATA_DIR = FsPath(__file__).parent / "data"
SALIENT_SEVERITY = 40
SAFETY = "safety"
GOAL = "goal"


def normalize_condition(name: str) -> str:
    c = CONDITION_ALIASES.get(name, name)
    if c not in CONDITIONS:
        raise ConfigError(f"unknown condition {name!r}; expected one of {', '.join(CONDITIONS)}")
    return c


def resolve_scenario_path(name: str) -> FsPath:
    """Accept a shipped id, its short form (s1) or a path to a spec file."""
    p = FsPath(name)
    if p.suffix in (".yaml", ".yml") and p.exists():
        return p
    for sid in SCENARIO_IDS:
        if name in (sid, sid.split("_")[0]):
            return DATA_DIR / f"{sid}.yaml"
    raise ConfigError(f"unknown scenario {name!r}")


@dataclass(frozen=True)
class ScheduleItem:
    tick: int
    goal: Coord | None
    purpose: str = ""


@dataclass(frozen=True)
class NpcSpec:
    id: str
    role: str
    script: NpcScript
    start: Coord | None = None


@dataclass
class ScenarioSpec:
    id: str
    map_path: FsPath
    roster_path: FsPath
    hazards: list[Hazard]
    npcs: list[NpcSpec]
    windows: dict[str, tuple[int, int]]
    trigger_rules: frozenset[str]
    starts: dict[str, Coord]
    schedules: dict[str, list[ScheduleItem]]
    groups: dict[str, list[str]] = field(default_factory=dict)
    regions: dict[str, Region] = field(default_factory=dict)
    roster_overrides: dict[str, dict[str, Any]] = field(default_factory=dict)
    signal_overrides: dict[str, list[int]] = field(default_factory=dict)
    days: int = 2
    ticks_per_day: int = 1000
    confederate_jitter: int = 3
    officer_jitter: int = 1
    focal_intersection: str | None = None

    def __post_init__(self) -> None:
        total = self.total_ticks
        for name, (a, b) in self.windows.items():
            if not 0 <= a < b <= total:
                raise ConfigError(f"window {name} [{a},{b}) outside [0,{total})")

    @property
    def total_ticks(self) -> int:
        return self.days * self.ticks_per_day

    def windows_at(self, t: int) -> list[str]:
        return sorted(n for n, (a, b) in self.windows.items() if a <= t < b)


def _coord(v: Any, landmarks: Mapping[str, Coord]) -> Coord | None:
    return census._coord(v, landmarks)


def parse_scenario(doc: Mapping[str, Any], base_dir: FsPath, landmarks: Mapping[str, Coord] | None = None) -> ScenarioSpec:
    map_path = (base_dir / doc["map"]).resolve()
    roster_path = (base_dir / doc["roster"]).resolve()
    if landmarks is None:
        landmarks = world.load_map(map_path).landmarks
    npcs = []
    for nid, spec in (doc.get("npcs") or {}).items():
        role = spec["role"]
        npcs.append(NpcSpec(nid, role, census.parse_script(nid, role, spec.get("script", []), landmarks),
                            _coord(spec.get("start"), landmarks)))
    schedules: dict[str, list[ScheduleItem]] = {}
    starts: dict[str, Coord] = {}
    for aid, spec in (doc.get("agents") or {}).items():
        if spec.get("start") is not None:
            starts[aid] = _coord(spec["start"], landmarks)
        items = [ScheduleItem(int(s["tick"]), _coord(s.get("goal"), landmarks), s.get("purpose", ""))
                 for s in spec.get("schedule", [])]
        if any(b.tick <= a.tick for a, b in zip(items, items[1:])):
            raise ConfigError(f"schedule for {aid} must have increasing ticks")
        schedules[aid] = items
    try:
        hazards = world.parse_hazards(doc.get("hazards", []))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ScenarioSpec(
        id=doc["id"],
        map_path=map_path,
        roster_path=roster_path,
        hazards=hazards,
        npcs=npcs,
        windows={k: (int(v[0]), int(v[1])) for k, v in (doc.get("windows") or {}).items()},
        trigger_rules=frozenset(doc.get("trigger_rules", [])),
        starts=starts,
        schedules=schedules,
        groups={k: list(v) for k, v in (doc.get("groups") or {}).items()},
        regions={k: world._region(v, k) for k, v in (doc.get("regions") or {}).items()},
        roster_overrides=dict(doc.get("roster_overrides") or {}),
        signal_overrides=dict(doc.get("signals") or {}),
        days=int(doc.get("days", 2)),
        ticks_per_day=int(doc.get("ticks_per_day", 1000)),
        confederate_jitter=int(doc.get("confederate_jitter", 3)),
        officer_jitter=int(doc.get("officer_jitter", 1)),
        focal_intersection=doc.get("focal_intersection"),
    )


def load_scenario(name_or_path: str | FsPath) -> ScenarioSpec:
    path = resolve_scenario_path(str(name_or_path))
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(doc, path.parent)


@dataclass
class RunConfig:
    scenario: ScenarioSpec
    condition: str = "full"
    provider: str = "oracle"
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    out_dir: FsPath = FsPath("runs")
    map_path: FsPath | None = None
    roster_path: FsPath | None = None

    def __post_init__(self) -> None:
        self.condition = normalize_condition(self.condition)
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")


# -- route planning --------------------------------------------------------------


class Planner:
    """Legal and relaxed routes with a per-run cache keyed on signal phase."""

    def __init__(self, tmap: TileMap) -> None:
        self.tmap = tmap
        periods = [i.red_ticks + i.green_ticks for i in tmap.intersections if i.signalized] or [1]
        self.period = math.lcm(*periods)
        self._cache: dict[tuple, Path | None] = {}

    def path(self, start: Coord, goal: world.Goal, t: int, relax: tuple[str, ...] = (),
             blocked: frozenset[Coord] = frozenset(), occupied: frozenset[Coord] = frozenset(),
             max_cost: int = 4000) -> Path | None:
        gkey = goal if isinstance(goal, tuple) else tuple(goal)
        key = (start, gkey, t % self.period, relax, blocked, occupied, max_cost)
        if key not in self._cache:
            self._cache[key] = world.legal_shortest_path(
                self.tmap, start, goal, t0=t, relax=relax,
                blocked=(blocked.__contains__ if blocked else None), occupied=occupied, max_cost=max_cost,
            )
        p = self._cache[key]
        return None if p is None else replace(p, t0=t)

    def options(self, start: Coord, objective: str, goal: world.Goal | None, t: int,
                blocked: frozenset[Coord], occupied: frozenset[Coord],
                rules: Sequence[str] = world.SPATIAL_RULES) -> pave.RouteOptions:
        if goal is None:
            empty = Path(start, (), 0, t)
            return pave.RouteOptions(objective, empty, {}, start)
        legal = self.path(start, goal, t, (), blocked, occupied)
        bound = 4000 if legal is None else legal.cost - 1
        relaxed: dict[str, Path] = {}
        if bound >= 1:
            for rule in rules:
                p = self.path(start, goal, t, (rule,), blocked, occupied, max_cost=bound)
                if p is not None and (legal is None or p.cost < legal.cost):
                    relaxed[rule] = p
        dest = goal if isinstance(goal, tuple) else (legal.end if legal else None)
        return pave.RouteOptions(objective, legal, relaxed, dest)


# -- warm-up ---------------------------------------------------------------------


@dataclass
class WarmupResult:
    memories: dict[str, frozenset[str]]
    path_cache: dict[tuple[str, Coord], Path | None]


def _reachable(tmap: TileMap, start: Coord) -> set[Coord]:
    # legal connectivity with signal waits allowed (red light never disconnects)
    seen = {start}
    stack = [start]
    while stack:
        cur = stack.pop()
        for nxt in tmap.neighbors(cur):
            if nxt in seen or not tmap.walkable(nxt):
                continue
            if world.move_broken_rules(tmap, cur, nxt, 0) - {world.RED_LIGHT}:
                continue
            seen.add(nxt)
            stack.append(nxt)
    return seen


def warmup(tmap: TileMap, agents: Sequence[AgentDescription], starts: Mapping[str, Coord],
           schedules: Mapping[str, Sequence[ScheduleItem]]) -> WarmupResult:
    """Record reachable infrastructure per agent and validate roster origin/destination pairs."""
    memories: dict[str, frozenset[str]] = {}
    cache: dict[tuple[str, Coord], Path | None] = {}
    for agent in agents:
        home = starts.get(agent.id, agent.home_tile)
        if home is None or not tmap.walkable(home):
            raise ConfigError(f"agent {agent.id} has no walkable home tile")
        reach = _reachable(tmap, home)
        if len(reach) == 1:
            raise ConfigError(f"agent {agent.id} starts on an isolated tile {home}")
        facts: set[str] = set()
        for inter in tmap.intersections:
            if any(p in reach for p in [inter.position, *tmap.neighbors(inter.position)]):
                facts.add(f"intersection:{inter.id}")
        for street in tmap.streets:
            if street.one_way and any(p in reach for p in street.tiles):
                facts.add(f"one_way:{street.name}")
        for p in sorted(reach):
            if tmap.kind(p) == world.CROSSWALK:
                facts.add(f"crosswalk:{p[0]},{p[1]}")
        memories[agent.id] = frozenset(facts)
        for item in schedules.get(agent.id, []):
            if item.goal is None:
                continue
            if item.goal not in reach:
                raise ConfigError(f"agent {agent.id}: goal {item.goal} unreachable from {home}")
            if (agent.id, item.goal) not in cache:
                cache[(agent.id, item.goal)] = world.legal_shortest_path(tmap, home, item.goal)
    return WarmupResult(memories, cache)


# -- conditions --------------------------------------------------------------------


@dataclass
class Decision:
    verdict: pave.Verdict
    sequence: pave.ActionSequence
    records: list[tuple[str, dict[str, Any]]]  # (phase, payload) in emission order


class Policy:
    name = "full"
    gate = True

    def decide(self, sim: "Simulation", st: "AgentState", obs: world.RawObservation,
               route: pave.RouteOptions, authority: Mapping[str, Any], hold: bool) -> Decision:
        plan = pave.Plan(st.desc.id, route.destination, route.legal, st.purpose)
        peers = sim.peer_observations(st.desc.id, obs)
        trace = pave.run_pipeline(
            st.desc, obs, peers, route, plan, sim.tmap, sim.provider, sim.rule_texts,
            authority, hold, gate=self.gate, occupied=sim.occupied,
        )
        a = trace.assessment
        nec, prop, alt = trace.legitimacy_texts
        return Decision(trace.verdict, trace.sequence, [
            ("perception", {"context": trace.context.as_payload(), "degraded": trace.context.degraded}),
            ("assessment", {"assessment": a.as_payload(), "necessity": nec, "proportionality": prop,
                            "alternatives": alt, "route": route.facts()}),
        ])


class NoGatePolicy(Policy):
    name = "no_gate"
    gate = False


class VanillaPolicy(Policy):
    """Single importance scalar; the committed plan changes only at high importance."""

    name = "vanilla_proxy"

    def decide(self, sim, st, obs, route, authority, hold) -> Decision:
        events = [h.kind for h in obs.hazard_readings]
        events += [f"the traffic signal is {s}" for _, s in obs.signal_states]
        events += [f"officer instruction {a.instruction}" for a in obs.visible_authorities if a.instruction]
        score = max((vanilla_importance(e) for e in events), default=0)
        t = obs.tick
        if alters_plan(score):
            moves = [(a, b) for a, b, _ in route.legal.moves()] if route.legal else []
            y, target = "comply", route.target_rule
        else:
            moves = [(s.src, s.dst) for s in st.seq]
            broken = pave.check_steps(sim.tmap, moves, t, sim.occupied)
            target = route.target_rule if route.target_rule in broken else (min(broken) if broken else route.target_rule)
            y = "violate" if broken else "comply"
        steps = tuple(pave.ActionStep("Follow the current plan", pave.SECONDS_PER_TICK,
                                      world.step_intent(sim.tmap, a, b), a, b) for a, b in moves)
        seq = pave.ActionSequence(steps, pave.check_steps(sim.tmap, moves, t, sim.occupied))
        j = f"Importance {score} {'reaches' if alters_plan(score) else 'stays below'} the plan-change threshold."
        return Decision(pave.Verdict(y, j, 50, target), seq, [
            ("perception", {"events": sorted(set(events))}),
            ("assessment", {"importance": score, "route": route.facts()}),
        ])


def apply_condition(condition: str) -> Policy:
    c = normalize_condition(condition)
    return {"full": Policy, "no_gate": NoGatePolicy, "vanilla_proxy": VanillaPolicy}[c]()


# -- simulation state ----------------------------------------------------------------


@dataclass
class AgentState:
    desc: AgentDescription
    pos: Coord
    prev_pos: Coord
    goal: Coord | None = None
    purpose: str = ""
    seq: list[pave.ActionStep] = field(default_factory=list)
    objective: str = GOAL
    verdict: pave.Verdict | None = None
    memory: pave.ActorMemory = field(default_factory=pave.ActorMemory)
    known: frozenset[str] = frozenset()
    cue_sig: frozenset = frozenset()
    auth_sig: tuple | None = None
    behavior: pave.PeerObservation | None = None
    behavior_key: tuple | None = None
    in_radius: frozenset[str] = frozenset()
    fled_from: str | None = None
    saw_confederate_day: int | None = None


@dataclass
class NpcState:
    spec: NpcSpec
    script: NpcScript
    pos: Coord | None
    present: bool = False
    instruction: str | None = None
    zone: str | None = None
    walk: list[Coord] = field(default_factory=list)
    behavior: pave.PeerObservation | None = None
    station_dx: int = 0


def _band(d: int | None) -> str:
    if d is None:
        return "none"
    return "near" if d <= 3 else ("mid" if d <= 10 else "far")


class Simulation:
    def __init__(self, spec: ScenarioSpec, condition: str, provider: JudgmentProvider, seed: int,
                 sink: Callable[[dict[str, Any]], None], map_path: FsPath | None = None,
                 roster_path: FsPath | None = None, roster: Roster | None = None) -> None:
        self.spec = spec
        self.condition = normalize_condition(condition)
        self.policy = apply_condition(self.condition)
        self.provider = provider
        self.seed = seed
        self.sink = sink
        self.rng = random.Random(seed)
        tmap = world.load_map(map_path or spec.map_path)
        if spec.signal_overrides:
            tmap = world.with_signal_overrides(tmap, spec.signal_overrides)
        self.tmap = tmap
        self.planner = Planner(tmap)
        if roster is None:
            roster = census.load_roster(roster_path or spec.roster_path, tmap.landmarks,
                                        spec.roster_overrides, provider)
        self.roster = roster
        self.rule_texts = {rid: r.description for rid, r in roster.rules.items()}
        self.hazards = list(spec.hazards)
        self.group_of: dict[str, list[str]] = {}
        for g, members in spec.groups.items():
            for m in members:
                self.group_of.setdefault(m, []).append(g)
        wu = warmup(tmap, roster.regulated(), spec.starts, spec.schedules)
        self.agents: dict[str, AgentState] = {}
        for a in roster.regulated():
            home = spec.starts.get(a.id, a.home_tile)
            assert home is not None
            self.agents[a.id] = AgentState(a, home, home, known=wu.memories[a.id])
        # seed-controlled jitter, drawn in a fixed order
        self.npcs: dict[str, NpcState] = {}
        for ns in sorted(spec.npcs, key=lambda n: n.id):
            script = ns.script
            dx = 0
            if ns.role == census.CONFEDERATE:
                script = census.jitter_script(script, self.rng, spec.confederate_jitter)
            elif ns.role == census.AUTHORITY and spec.officer_jitter > 0:
                dx = self.rng.randint(-spec.officer_jitter, spec.officer_jitter)
            self.npcs[ns.id] = NpcState(ns, script, ns.start, present=ns.start is not None, station_dx=dx)
        self.occupied: frozenset[Coord] = frozenset()
        self.blocked: frozenset[Coord] = frozenset()
        self.t = 0
        self._schedule_idx = {aid: 0 for aid in self.agents}

    # -- helpers ----------------------------------------------------------------

    def emit(self, tick: int, agent: str, phase: str, payload: Mapping[str, Any]) -> None:
        self.sink({
            "tick": tick, "agent": agent, "phase": phase, "payload": dict(payload),
            "scenario": self.spec.id, "condition": self.condition, "seed": self.seed,
            "windows": self.spec.windows_at(tick),
        })

    def _station(self, npc: NpcState, tile: Coord) -> Coord:
        if npc.station_dx:
            cand = (tile[0] + npc.station_dx, tile[1])
            if self.tmap.in_bounds(cand) and self.tmap.walkable(cand):
                return cand
        return tile

    def officers(self) -> list[NpcState]:
        return [n for n in self.npcs.values() if n.spec.role == census.AUTHORITY and n.present and n.pos]

    def view(self) -> world.WorldView:
        positions = {aid: st.pos for aid, st in self.agents.items()}
        behaviors = {aid: st.behavior.observed_behavior for aid, st in self.agents.items() if st.behavior}
        authorities = {}
        for n in self.npcs.values():
            if not n.present or n.pos is None:
                continue
            if n.spec.role == census.AUTHORITY:
                authorities[n.spec.id] = (n.pos, n.instruction, n.zone)
            else:
                positions[n.spec.id] = n.pos
                if n.behavior:
                    behaviors[n.spec.id] = n.behavior.observed_behavior
        return world.WorldView(self.tmap, self.hazards, positions, behaviors, authorities)

    def peer_observations(self, agent_id: str, obs: world.RawObservation) -> list[pave.PeerObservation]:
        out = []
        for va in obs.visible_agents:
            src = self.agents.get(va.id)
            beh = src.behavior if src else (self.npcs[va.id].behavior if va.id in self.npcs else None)
            if beh is not None:
                out.append(beh)
        return out

    def authority_signal(self, st: AgentState, obs: world.RawObservation) -> tuple[dict[str, Any], bool, tuple | None]:
        auths = sorted(obs.visible_authorities, key=lambda a: (a.distance, a.id))
        hold = False
        for a in auths:
            if a.instruction in RESTRICTIVE_INSTRUCTIONS and a.zone and \
                    world.in_effective_zone(self.tmap.intersection(a.zone), st.pos):
                hold = True
        if not auths:
            return {"authority_instruction": None, "in_zone": False}, hold, None
        near = auths[0]
        in_zone = bool(near.zone) and world.in_effective_zone(self.tmap.intersection(near.zone), st.pos)
        sig = (near.id, _band(near.distance), near.instruction, in_zone)
        return {"authority_instruction": near.instruction, "in_zone": in_zone}, hold, sig

    def emergency_readings(self, obs: world.RawObservation) -> list[world.HazardReading]:
        return [h for h in obs.hazard_readings if cue_class(h.kind, h.distance) == "emergency"]

    def hazard_active(self, hid: str, t: int) -> bool:
        return any(h.id == hid and h.active(t) for h in self.hazards)

    def objective_for(self, st: AgentState, obs: world.RawObservation, t: int) -> tuple[str, world.Goal | None]:
        if self.condition != "vanilla_proxy":
            em = self.emergency_readings(obs)
            if em:
                st.fled_from = em[0].hazard_id
            elif st.fled_from and not self.hazard_active(st.fled_from, t):
                st.fled_from = None
            if st.fled_from:
                return SAFETY, tuple(self.tmap.safe_zones)
        return GOAL, st.goal

    # -- tick ---------------------------------------------------------------------

    def run(self) -> None:
        for t in range(self.spec.total_ticks):
            self.tick_step(t)

    def tick_step(self, t: int) -> None:
        self.t = t
        tpd = self.spec.ticks_per_day
        # (1) hazards and signals (signals are a pure function of t)
        for h in self.hazards:
            if t == h.ignite_tick:
                self.emit(t, "", "hazard", {"hazard": h.id, "kind": h.kind, "event": "ignite",
                                            "tile": list(h.ignition_tile), "s0": h.s0})
            if t == h.extinguish_tick:
                self.emit(t, "", "hazard", {"hazard": h.id, "kind": h.kind, "event": "extinguish"})
        self.blocked = world.hazard_blocked(self.hazards, t)
        if t % tpd == 0:
            for st in self.agents.values():
                st.cue_sig = frozenset()
        # (2) scripted NPCs
        self._npc_phase(t)
        self.occupied = frozenset(n.pos for n in self.officers())
        goal_changed = self._schedule_phase(t)
        # (3) observations
        view = self.view()
        observations = {aid: world.observe(view, aid, t) for aid in sorted(self.agents)}
        # (4) decisions
        pending: dict[str, list[tuple[str, dict[str, Any]]]] = {}
        for aid in sorted(self.agents):
            pending[aid] = self._consider(self.agents[aid], observations[aid], t, aid in goal_changed)
        # (5) commit in seed-determined order
        order = sorted(self.agents)
        self.rng.shuffle(order)
        executed: dict[str, tuple[pave.ActionStep, frozenset[str]] | None] = {}
        for aid in order:
            for phase, payload in pending[aid]:
                self.emit(t, aid, phase, payload)
            executed[aid] = self._commit(self.agents[aid], t)
        # (6) propagate, (7) emitted inline
        for aid in order:
            self._propagate(self.agents[aid], executed[aid], t)

    def _npc_phase(self, t: int) -> None:
        for nid in sorted(self.npcs):
            n = self.npcs[nid]
            act = census.scheduled_action(n.script, t)
            if act is not None:
                self._apply_npc(n, act, t)
            if n.walk:
                n.pos = n.walk.pop(0)

    def _apply_npc(self, n: NpcState, act: NpcAction, t: int) -> None:
        nid = n.spec.id
        payload: dict[str, Any] = {"action": act.kind}
        if act.kind == "move_to" and act.tile is not None:
            n.pos = self._station(n, act.tile) if n.spec.role == census.AUTHORITY else act.tile
            n.present, n.walk, n.behavior = True, [], None
        elif act.kind == "instruct":
            if act.tile is not None:
                n.pos = self._station(n, act.tile)
            n.present = n.pos is not None
            n.instruction, n.zone = act.instruction, act.zone or act.intersection
            payload.update(instruction=n.instruction, zone=n.zone)
        elif act.kind == "jaywalk":
            dest = act.tile
            path = None
            if n.pos is not None and dest is not None:
                path = world.legal_shortest_path(self.tmap, n.pos, dest, t0=t, relax=(world.RED_LIGHT,))
            if path is None:
                log.warning("confederate %s cannot reach %s at tick %d", nid, dest, t)
            else:
                n.walk = list(path.steps)
                n.behavior = pave.PeerObservation(nid, "crossed against the red signal", "no authority reaction",
                                                  False, world.RED_LIGHT)
            payload.update(intersection=act.intersection)
        elif act.kind == "idle":
            n.present, n.instruction, n.zone, n.walk, n.behavior = False, None, None, [], None
        if n.pos is not None:
            payload["position"] = list(n.pos)
        self.emit(t, nid, "npc", payload)

    def _schedule_phase(self, t: int) -> set[str]:
        changed = set()
        for aid in sorted(self.agents):
            items = self.spec.schedules.get(aid, [])
            k = self._schedule_idx[aid]
            while k < len(items) and items[k].tick <= t:
                st = self.agents[aid]
                st.goal, st.purpose = items[k].goal, items[k].purpose
                changed.add(aid)
                k += 1
            self._schedule_idx[aid] = k
        return changed

    def _consider(self, st: AgentState, obs: world.RawObservation, t: int, goal_changed: bool) -> list[tuple[str, dict[str, Any]]]:
        records: list[tuple[str, dict[str, Any]]] = []
        authority, hold, auth_sig = self.authority_signal(st, obs)
        cue_sig = frozenset(
            (h.kind, cue_class(h.kind, h.distance)) for h in obs.hazard_readings if h.severity >= SALIENT_SEVERITY
        )
        triggers = []
        if st.pos != st.prev_pos and self.tmap.is_rule_bearing(st.pos):
            triggers.append("rule_tile")
        if cue_sig != st.cue_sig:
            triggers.append("cue")
        if auth_sig != st.auth_sig:
            triggers.append("authority")
        st.cue_sig, st.auth_sig = cue_sig, auth_sig
        in_r = frozenset(h.hazard_id for h in obs.hazard_readings)
        for hid in sorted(in_r - st.in_radius):
            records.append(("observation", {"kind": "radius", "event": "enter", "hazard": hid}))
        for hid in sorted(st.in_radius - in_r):
            records.append(("observation", {"kind": "radius", "event": "exit", "hazard": hid}))
        st.in_radius = in_r
        day = t // self.spec.ticks_per_day
        if any(va.id in self.npcs and self.npcs[va.id].behavior for va in obs.visible_agents):
            st.saw_confederate_day = day
        objective, goal = self.objective_for(st, obs, t)
        if t == 0:
            triggers = []
        if triggers:
            route = self.planner.options(st.pos, objective, goal, t, self.blocked, self.occupied)
            decision = self._decide(st, obs, route, authority, hold)
            st.seq = list(decision.sequence.steps)
            st.verdict = decision.verdict
            st.objective = objective
            records.extend(decision.records)
            records.append(("verdict", self._verdict_payload(st, obs, decision, route, authority, hold, triggers, objective)))
            return records
        reached = goal is None or (st.pos == goal if isinstance(goal, tuple) else self.tmap.in_safe_zone(st.pos))
        if goal_changed or objective != st.objective or (not st.seq and not reached):
            st.objective = objective
            st.seq = self._plan_steps(st.pos, goal, t)
        return records

    def _decide(self, st, obs, route, authority, hold) -> Decision:
        last: Exception | None = None
        for _ in range(3):
            try:
                return self.policy.decide(self, st, obs, route, authority, hold)
            except ProviderError as exc:
                last = exc
                log.warning("provider error for %s at tick %d: %s; retrying", st.desc.id, obs.tick, exc)
        raise ProviderFatal(f"provider kept failing at tick {obs.tick}: {last}")

    def _plan_steps(self, start: Coord, goal: world.Goal | None, t: int) -> list[pave.ActionStep]:
        if goal is None:
            return []
        relax = (world.RED_LIGHT,) if self.condition == "vanilla_proxy" else ()
        path = self.planner.path(start, goal, t, relax, self.blocked, self.occupied)
        if path is None:
            return []
        return [pave.ActionStep("Walk the planned route", pave.SECONDS_PER_TICK, world.step_intent(self.tmap, a, b), a, b)
                for a, b, _ in path.moves()]

    def _verdict_payload(self, st, obs, decision: Decision, route: pave.RouteOptions, authority, hold,
                         triggers, objective) -> dict[str, Any]:
        v = decision.verdict
        assessment = next((p for ph, p in decision.records if ph == "assessment"), {})
        officers = self.officers()
        dists = [world.manhattan_distance(st.pos, n.pos) for n in officers]
        supervised = any(
            n.instruction in RESTRICTIVE_INSTRUCTIONS and n.zone
            and world.in_effective_zone(self.tmap.intersection(n.zone), st.pos)
            for n in officers
        )
        nearest = min(obs.visible_authorities, key=lambda a: (a.distance, a.id), default=None)
        cue = max(obs.hazard_readings, key=lambda h: (h.severity, -h.distance), default=None)
        return {
            "decision": v.y,
            "justification": v.j,
            "confidence": v.kappa,
            "target_rule": v.target_rule,
            "gated": v.gated,
            "assessment": assessment.get("assessment", {"importance": assessment.get("importance")}),
            "route": route.facts(),
            "objective": objective,
            "triggers": triggers,
            "position": list(st.pos),
            "authority": {
                "distance": None if nearest is None else nearest.distance,
                "instruction": authority.get("authority_instruction"),
                "in_zone": authority.get("in_zone", False),
                "hold": hold,
            },
            "officer_distance": min(dists) if dists else None,
            "supervised": supervised,
            "confederate_seen": st.saw_confederate_day == obs.tick // self.spec.ticks_per_day,
            "cue": None if cue is None else {"kind": cue.kind, "distance": cue.distance, "severity": cue.severity},
            "groups": self.group_of.get(st.desc.id, []),
            "regions": sorted(n for n, r in self.spec.regions.items() if r.contains(st.pos)),
            "steps": len(decision.sequence.steps),
        }

    def _commit(self, st: AgentState, t: int) -> tuple[pave.ActionStep, frozenset[str]] | None:
        if not st.seq:
            st.prev_pos = st.pos
            return None
        step = st.seq[0]
        broken: frozenset[str] = frozenset()
        ok = step.src == st.pos and (step.dst == step.src or step.dst not in self.blocked)
        if ok:
            broken = world.move_broken_rules(self.tmap, step.src, step.dst, t, self.occupied)
            scoped = st.verdict is not None and st.verdict.y == "violate" and broken == {st.verdict.target_rule}
            ok = not broken or scoped or self.condition == "vanilla_proxy"
        if not ok:
            # stale plan: hold position this tick and replan next tick
            st.seq = []
            step = pave.ActionStep("Hold position", pave.SECONDS_PER_TICK, "wait", st.pos, st.pos)
            broken = frozenset()
        else:
            st.seq.pop(0)
        st.prev_pos = st.pos
        st.pos = step.dst
        self.emit(t, st.desc.id, "action", {
            "from": list(step.src), "to": list(step.dst), "intent": step.intent,
            "description": step.description, "broken": sorted(broken),
            "verdict": None if st.verdict is None else st.verdict.y,
            "target_rule": None if st.verdict is None else st.verdict.target_rule,
        })
        return step, broken

    def _propagate(self, st: AgentState, done: tuple[pave.ActionStep, frozenset[str]] | None, t: int) -> None:
        if done is None:
            st.behavior, st.behavior_key = None, None
            return
        step, broken = done
        v = st.verdict or pave.Verdict("comply", "", 0, None)
        key = (v.y, v.target_rule, step.intent, broken)
        if key == st.behavior_key:
            return
        neighbors = [
            aid for aid, o in self.agents.items()
            if aid != st.desc.id and world.shares_local_context(self.tmap, st.pos, o.pos)
        ]
        act = pave.ActionSequence((step,), broken)
        feedback = "no authority reaction" if broken else "no incident"
        obs, _ = pave.propagate_outcome(v, act, st.desc, neighbors, feedback, self.provider, st.memory,
                                        self.rule_texts.get(v.target_rule or "", ""), t)
        st.behavior, st.behavior_key = obs, key
        self.emit(t, st.desc.id, "observation", {
            "kind": "peer", "behavior": obs.observed_behavior, "outcome": obs.observed_outcome,
            "rule_followed": obs.rule_followed, "rule": obs.rule, "neighbors": sorted(neighbors),
        })


# -- runs ----------------------------------------------------------------------------


def log_header(sim: Simulation) -> dict[str, Any]:
    spec = sim.spec
    return {
        "scenario": spec.id,
        "condition": sim.condition,
        "seed": sim.seed,
        "provider": getattr(sim.provider, "name", type(sim.provider).__name__),
        "ticks": spec.total_ticks,
        "ticks_per_day": spec.ticks_per_day,
        "windows": {k: list(v) for k, v in sorted(spec.windows.items())},
        "groups": {k: list(v) for k, v in sorted(spec.groups.items())},
        "trigger_rules": sorted(spec.trigger_rules),
        "hazards": [h.id for h in spec.hazards],
        "officers": sorted(n.id for n in spec.npcs if n.role == census.AUTHORITY),
        "confederates": sorted(n.id for n in spec.npcs if n.role == census.CONFEDERATE),
        "agents": sorted(sim.agents),
        "tau": {aid: st.desc.tau for aid, st in sorted(sim.agents.items())},
    }


@dataclass
class CellResult:
    scenario: str
    condition: str
    seed: int
    path: FsPath
    records: int
    verdicts: int
    violates: int


def run_cell(spec: ScenarioSpec, condition: str, provider: JudgmentProvider, seed: int, out_dir: FsPath,
             map_path: FsPath | None = None, roster_path: FsPath | None = None) -> CellResult:
    """Run one (scenario, condition, seed) cell and write its log.

    A fatal provider error closes the partial log with an aborted marker and re-raises.
    """
    from . import telemetry

    out_dir = FsPath(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = {"verdicts": 0, "violates": 0}
    writer: telemetry.LogWriter | None = None

    def sink(rec: dict[str, Any]) -> None:
        if rec["phase"] == "verdict":
            counts["verdicts"] += 1
            counts["violates"] += rec["payload"]["decision"] == "violate"
        assert writer is not None
        writer.write(rec)

    sim = Simulation(spec, condition, provider, seed, sink, map_path, roster_path)
    path = out_dir / telemetry.log_name(spec.id, sim.condition, seed)
    writer = telemetry.LogWriter(path, log_header(sim))
    try:
        sim.run()
    except ProviderFatal as exc:
        writer.close("aborted", f"provider fatal at tick {sim.t}: {exc}")
        raise
    except BaseException as exc:
        writer.close("aborted", f"{type(exc).__name__} at tick {sim.t}: {exc}")
        raise
    writer.close()
    return CellResult(spec.id, sim.condition, seed, path, writer.count, counts["verdicts"], counts["violates"])


def make_provider(kind: str, endpoint: Mapping[str, Any] | str | None = None) -> JudgmentProvider:
    """``endpoint`` is a base URL or a mapping of EndpointConfig fields."""
    from .judgment import EndpointConfig, OracleProvider, RemoteProvider

    if kind == "oracle":
        return OracleProvider()
    if kind == "remote":
        if isinstance(endpoint, str):
            endpoint = {"base_url": endpoint}
        if endpoint is not None and not isinstance(endpoint, Mapping):
            raise ConfigError("endpoint must be a URL or a mapping")
        try:
            return RemoteProvider(EndpointConfig(**dict(endpoint or {})))
        except TypeError as exc:
            raise ConfigError(f"bad endpoint settings: {exc}") from exc
    raise ConfigError(f"unknown provider {kind!r}; expected oracle or remote")


def run_matrix(config: RunConfig, provider: JudgmentProvider | None = None, jobs: int = 1,
               endpoint: Mapping[str, Any] | str | None = None) -> list[CellResult]:
    """One log per seed. Cells are independent, so they may run in parallel."""
    out = FsPath(config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc

    def one(seed: int) -> CellResult:
        prov = provider or make_provider(config.provider, endpoint)
        return run_cell(config.scenario, config.condition, prov, seed, out, config.map_path, config.roster_path)

    if jobs <= 1 or len(config.seeds) == 1:
        return [one(s) for s in config.seeds]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, config.seeds))

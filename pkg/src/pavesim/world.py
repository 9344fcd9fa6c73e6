"""Tile grid, streets, signals, hazards and legal-path planning.

The world is the only source of raw observations. Everything here is read-only
during the decision phase of a tick; the scheduler mutates positions and NPC
state in its commit phase.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Callable, Iterable, Mapping, Sequence

import yaml

Coord = tuple[int, int]

ROAD = "road"
SIDEWALK = "sidewalk"
CROSSWALK = "crosswalk"
BUILDING = "building"
PARK = "park"
BLOCKED = "blocked"

TILE_CHARS = {
    "#": ROAD,
    ".": SIDEWALK,
    "+": CROSSWALK,
    "B": BUILDING,
    "P": PARK,
    "X": BLOCKED,
}
KIND_CHARS = {kind: ch for ch, kind in TILE_CHARS.items()}

HEADINGS: dict[str, Coord] = {"N": (0, -1), "S": (0, 1), "E": (1, 0), "W": (-1, 0)}

# Rule ids the move-legality checker knows about. The rule set itself lives in
# the roster config; these are the ones with a spatial meaning.
RED_LIGHT = "red_light"
ONE_WAY = "one_way"
CROSSWALK_ONLY = "crosswalk_only"
NO_CORDON = "no_cordon"
NO_PRIVATE_BUILDING = "no_private_building"
NO_THEFT = "no_theft"
PERSONAL_SPACE = "personal_space"
SPATIAL_RULES = (RED_LIGHT, ONE_WAY, CROSSWALK_ONLY, NO_CORDON, NO_PRIVATE_BUILDING, PERSONAL_SPACE)

CUE_RADIUS = 12
AUTHORITY_RADIUS = 20
PEER_RADIUS = 8


class MapError(ValueError):
    """Malformed map or out-of-contract map query."""


class BoundsError(MapError):
    pass


class PathInputError(MapError):
    pass


def manhattan_distance(a: Coord, b: Coord, bounds: tuple[int, int] | None = None) -> int:
    if bounds is not None:
        w, h = bounds
        for x, y in (a, b):
            if not (0 <= x < w and 0 <= y < h):
                raise BoundsError(f"coordinate {(x, y)} outside {w}x{h} map")
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class Region:
    """Inclusive axis-aligned tile rectangle."""

    x0: int
    y0: int
    x1: int
    y1: int
    name: str = ""

    def contains(self, p: Coord) -> bool:
        return self.x0 <= p[0] <= self.x1 and self.y0 <= p[1] <= self.y1

    def distance(self, p: Coord) -> int:
        dx = max(self.x0 - p[0], 0, p[0] - self.x1)
        dy = max(self.y0 - p[1], 0, p[1] - self.y1)
        return dx + dy

    def tiles(self) -> list[Coord]:
        return [(x, y) for y in range(self.y0, self.y1 + 1) for x in range(self.x0, self.x1 + 1)]


@dataclass(frozen=True)
class Street:
    name: str
    tiles: frozenset[Coord]
    heading: str | None = None  # None means bidirectional
    scoped_rules: frozenset[str] = frozenset()

    @property
    def one_way(self) -> bool:
        return self.heading is not None


@dataclass(frozen=True)
class Intersection:
    id: str
    position: Coord
    red_ticks: int = 30
    green_ticks: int = 30
    phase_offset: int = 0
    effective_zone_radius: int = 12
    crosswalks: frozenset[Coord] = frozenset()
    signalized: bool = True
    name: str = ""

    def __post_init__(self) -> None:
        if self.red_ticks <= 0 or self.green_ticks <= 0:
            raise MapError(f"intersection {self.id}: signal phases must be positive")
        if self.effective_zone_radius < 0:
            raise MapError(f"intersection {self.id}: negative effective zone")


@dataclass(frozen=True)
class Hazard:
    kind: str
    ignition_tile: Coord
    ignite_tick: int
    extinguish_tick: int
    s0: int = 95
    alpha_decay: float = 5
    id: str = "fire"
    footprint: frozenset[Coord] = frozenset()  # impassable while active

    def __post_init__(self) -> None:
        if not 1 <= self.s0 <= 100:
            raise MapError(f"hazard {self.id}: s0 must lie in [1,100]")
        if self.alpha_decay <= 0:
            raise MapError(f"hazard {self.id}: alpha_decay must be positive")
        if self.ignite_tick >= self.extinguish_tick:
            raise MapError(f"hazard {self.id}: ignite_tick must precede extinguish_tick")

    @property
    def reach(self) -> int:
        return math.ceil(self.s0 / self.alpha_decay)

    def active(self, t: int) -> bool:
        return self.ignite_tick <= t < self.extinguish_tick


def hazard_severity_at(h: Hazard, p: Coord, t: int) -> int:
    if not h.active(t):
        return 0
    d = manhattan_distance(h.ignition_tile, p)
    return int(max(0, h.s0 - h.alpha_decay * d))


def hazard_blocked(hazards: Iterable[Hazard], t: int) -> frozenset[Coord]:
    out: set[Coord] = set()
    for h in hazards:
        if h.active(t):
            out |= h.footprint
    return frozenset(out)


def signal_state(i: Intersection, t: int) -> str:
    if not i.signalized:
        return "green"
    phase = (t + i.phase_offset) % (i.red_ticks + i.green_ticks)
    return "red" if phase < i.red_ticks else "green"


def ticks_until_green(i: Intersection, t: int) -> int:
    if not i.signalized:
        return 0
    phase = (t + i.phase_offset) % (i.red_ticks + i.green_ticks)
    return max(0, i.red_ticks - phase)


def in_effective_zone(i: Intersection, p: Coord) -> bool:
    return manhattan_distance(i.position, p) <= i.effective_zone_radius


@dataclass
class TileMap:
    width: int
    height: int
    grid: list[str]
    streets: list[Street] = field(default_factory=list)
    intersections: list[Intersection] = field(default_factory=list)
    safe_zones: list[Region] = field(default_factory=list)
    public_buildings: list[Region] = field(default_factory=list)
    cordoned: list[Region] = field(default_factory=list)
    landmarks: dict[str, Coord] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.grid) != self.height or any(len(row) != self.width for row in self.grid):
            raise MapError("tile grid does not match declared width/height")
        for row in self.grid:
            for ch in row:
                if ch not in TILE_CHARS:
                    raise MapError(f"unknown tile character {ch!r}")
        self._street_at: dict[Coord, Street] = {}
        for street in self.streets:
            for p in street.tiles:
                if p in self._street_at:
                    raise MapError(f"tile {p} belongs to both {self._street_at[p].name} and {street.name}")
                if self.kind(p) not in (ROAD, CROSSWALK):
                    raise MapError(f"street {street.name} covers non-road tile {p}")
                self._street_at[p] = street
        self._signal_at: dict[Coord, Intersection] = {}
        for inter in self.intersections:
            if self.kind(inter.position) not in (ROAD, CROSSWALK):
                raise MapError(f"intersection {inter.id} is not on a road tile")
            for p in inter.crosswalks:
                if self.kind(p) != CROSSWALK:
                    raise MapError(f"intersection {inter.id} lists non-crosswalk tile {p}")
                self._signal_at[p] = inter
        for y, row in enumerate(self.grid):
            for x, ch in enumerate(row):
                if TILE_CHARS[ch] == CROSSWALK and not any(
                    self.kind(q) in (ROAD, CROSSWALK) for q in self.neighbors((x, y))
                ):
                    raise MapError(f"crosswalk {(x, y)} has no adjacent road tile")
        self._rule_bearing = self._compute_rule_bearing()

    # -- tile queries -----------------------------------------------------

    def in_bounds(self, p: Coord) -> bool:
        return 0 <= p[0] < self.width and 0 <= p[1] < self.height

    def kind(self, p: Coord) -> str:
        if not self.in_bounds(p):
            raise BoundsError(f"coordinate {p} outside {self.width}x{self.height} map")
        return TILE_CHARS[self.grid[p[1]][p[0]]]

    def walkable(self, p: Coord) -> bool:
        return self.in_bounds(p) and self.kind(p) != BLOCKED

    def is_public(self, p: Coord) -> bool:
        return any(r.contains(p) for r in self.public_buildings)

    def in_cordon(self, p: Coord) -> bool:
        return any(r.contains(p) for r in self.cordoned)

    def in_safe_zone(self, p: Coord) -> bool:
        return any(r.contains(p) for r in self.safe_zones)

    def street_at(self, p: Coord) -> Street | None:
        return self._street_at.get(p)

    def signal_at(self, p: Coord) -> Intersection | None:
        return self._signal_at.get(p)

    def intersection(self, iid: str) -> Intersection:
        for inter in self.intersections:
            if inter.id == iid:
                return inter
        raise KeyError(iid)

    def street(self, name: str) -> Street:
        for s in self.streets:
            if s.name == name:
                return s
        raise KeyError(name)

    def distance(self, a: Coord, b: Coord) -> int:
        return manhattan_distance(a, b, (self.width, self.height))

    def neighbors(self, p: Coord) -> list[Coord]:
        # (y, x) lexicographic order: up, left, right, down
        x, y = p
        out = []
        for q in ((x, y - 1), (x - 1, y), (x + 1, y), (x, y + 1)):
            if self.in_bounds(q):
                out.append(q)
        return out

    def streets_near(self, p: Coord) -> frozenset[str]:
        """Names of streets whose road tiles are on or next to ``p``."""
        names = set()
        for q in [p, *self.neighbors(p)]:
            s = self._street_at.get(q)
            if s is not None:
                names.add(s.name)
        return frozenset(names)

    def rules_in_force(self, p: Coord) -> frozenset[str]:
        rules: set[str] = set()
        for name in self.streets_near(p):
            rules |= self.street(name).scoped_rules
        return frozenset(rules)

    def is_rule_bearing(self, p: Coord) -> bool:
        return p in self._rule_bearing

    def _compute_rule_bearing(self) -> frozenset[Coord]:
        # carriageway, crosswalk curbs, cordon and private-building thresholds,
        # and intersection approaches
        tiles: set[Coord] = set()
        for y in range(self.height):
            for x in range(self.width):
                p = (x, y)
                k = self.kind(p)
                if k == BLOCKED:
                    continue
                if k in (ROAD, CROSSWALK):
                    tiles.add(p)
                    continue
                for q in self.neighbors(p):
                    kq = self.kind(q)
                    if (
                        kq == CROSSWALK
                        or (self.in_cordon(q) and not self.in_cordon(p))
                        or (kq == BUILDING and not self.is_public(q) and k != BUILDING)
                    ):
                        tiles.add(p)
                        break
        for inter in self.intersections:
            ix, iy = inter.position
            for dy in range(-2, 3):
                for dx in range(-2, 3):
                    q = (ix + dx, iy + dy)
                    if abs(dx) + abs(dy) <= 2 and self.walkable(q):
                        tiles.add(q)
        return frozenset(tiles)


# -- move legality ---------------------------------------------------------


def move_broken_rules(
    tmap: TileMap, a: Coord, b: Coord, t: int, occupied: frozenset[Coord] = frozenset()
) -> frozenset[str]:
    """Rules a pedestrian breaks by stepping from ``a`` to ``b`` during tick ``t``.

    A wait (``a == b``) is always legal. Moves onto blocked tiles are not moves
    at all and raise. ``occupied`` holds tiles whose occupant claims personal
    space (stationed officers).
    """
    if a == b:
        return frozenset()
    if not tmap.walkable(b):
        raise PathInputError(f"tile {b} is not walkable")
    ka, kb = tmap.kind(a), tmap.kind(b)
    broken: set[str] = set()
    if b in occupied:
        broken.add(PERSONAL_SPACE)
    if kb == BUILDING and not tmap.is_public(b):
        broken.add(NO_PRIVATE_BUILDING)
    if tmap.in_cordon(b) and not tmap.in_cordon(a):
        broken.add(NO_CORDON)
    carriageway = (ROAD, CROSSWALK)
    if kb == ROAD and ka not in carriageway:
        broken.add(CROSSWALK_ONLY)
    if kb == CROSSWALK and ka not in carriageway:
        inter = tmap.signal_at(b)
        if inter is not None and signal_state(inter, t) == "red":
            broken.add(RED_LIGHT)
    if ka in carriageway and kb in carriageway:
        sa, sb = tmap.street_at(a), tmap.street_at(b)
        if sa is not None and sa is sb and sa.one_way:
            hx, hy = HEADINGS[sa.heading]
            if (b[0] - a[0], b[1] - a[1]) == (-hx, -hy):
                broken.add(ONE_WAY)
    return frozenset(broken)


def step_intent(tmap: TileMap, a: Coord, b: Coord) -> str:
    if a == b:
        return "wait"
    if tmap.kind(b) == CROSSWALK:
        return "cross"
    return "move"


@dataclass(frozen=True)
class Path:
    start: Coord
    steps: tuple[Coord, ...]  # position after each tick; repeats are waits
    cost: int
    t0: int = 0

    @property
    def end(self) -> Coord:
        return self.steps[-1] if self.steps else self.start

    def moves(self) -> list[tuple[Coord, Coord, int]]:
        """(from, to, tick) triples, one per tick of the path."""
        out = []
        prev = self.start
        for k, p in enumerate(self.steps):
            out.append((prev, p, self.t0 + k))
            prev = p
        return out

    def broken_rules(self, tmap: TileMap, occupied: frozenset[Coord] = frozenset()) -> list[frozenset[str]]:
        return [move_broken_rules(tmap, a, b, t, occupied) for a, b, t in self.moves()]


Goal = Coord | Sequence[Region]


def _goal_functions(goal: Goal) -> tuple[Callable[[Coord], bool], Callable[[Coord], int]]:
    if isinstance(goal, tuple) and len(goal) == 2 and all(isinstance(v, int) for v in goal):
        g = goal
        return (lambda p: p == g), (lambda p: abs(p[0] - g[0]) + abs(p[1] - g[1]))
    regions = list(goal)
    if not regions:
        raise PathInputError("empty goal region list")
    return (lambda p: any(r.contains(p) for r in regions)), (lambda p: min(r.distance(p) for r in regions))


def legal_shortest_path(
    tmap: TileMap,
    start: Coord,
    goal: Goal,
    t0: int = 0,
    relax: Iterable[str] = (),
    blocked: Callable[[Coord], bool] | None = None,
    occupied: frozenset[Coord] = frozenset(),
    max_cost: int = 4000,
) -> Path | None:
    """A* earliest-arrival path using only moves legal under the rule set minus ``relax``.

    Waiting at a red crosswalk costs one tick per tick waited. Signals are
    periodic and waiting is always allowed, so arrival times are FIFO and the
    label-setting search stays optimal. Returns None when no path exists.
    """
    relaxed = frozenset(relax)
    if not tmap.walkable(start):
        raise PathInputError(f"start {start} is not walkable")
    if isinstance(goal, tuple) and len(goal) == 2 and isinstance(goal[0], int):
        if not tmap.walkable(goal):
            raise PathInputError(f"goal {goal} is not walkable")
    is_goal, h = _goal_functions(goal)
    if is_goal(start):
        return Path(start, (), 0, t0)

    g: dict[Coord, int] = {start: 0}
    parent: dict[Coord, tuple[Coord, int]] = {}
    closed: set[Coord] = set()
    counter = 0
    heap: list[tuple[int, int, Coord]] = [(h(start), counter, start)]
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if is_goal(cur):
            return _rebuild(start, cur, parent, g[cur], t0)
        closed.add(cur)
        gc = g[cur]
        if gc >= max_cost:
            continue
        for nxt in tmap.neighbors(cur):
            if nxt in closed or not tmap.walkable(nxt):
                continue
            if blocked is not None and blocked(nxt):
                continue
            wait = _earliest_departure(tmap, cur, nxt, t0 + gc, relaxed, occupied)
            if wait is None:
                continue
            ng = gc + wait + 1
            if ng < g.get(nxt, 1 << 30):
                g[nxt] = ng
                parent[nxt] = (cur, wait)
                counter += 1
                heapq.heappush(heap, (ng + h(nxt), counter, nxt))
    return None


def _earliest_departure(
    tmap: TileMap, a: Coord, b: Coord, t: int, relaxed: frozenset[str], occupied: frozenset[Coord]
) -> int | None:
    broken = move_broken_rules(tmap, a, b, t, occupied)
    if broken <= relaxed:
        return 0
    if broken - relaxed == {RED_LIGHT}:
        inter = tmap.signal_at(b)
        assert inter is not None
        wait = ticks_until_green(inter, t)
        if move_broken_rules(tmap, a, b, t + wait, occupied) <= relaxed:
            return wait
    return None


def _rebuild(start: Coord, end: Coord, parent: Mapping[Coord, tuple[Coord, int]], cost: int, t0: int) -> Path:
    rev: list[Coord] = []
    cur = end
    while cur != start:
        prev, wait = parent[cur]
        rev.append(cur)
        rev.extend([prev] * wait)
        cur = prev
    rev.reverse()
    return Path(start, tuple(rev), cost, t0)


# -- observations ------------------------------------------------------------


@dataclass(frozen=True)
class VisibleAgent:
    id: str
    position: Coord
    behavior: str


@dataclass(frozen=True)
class VisibleAuthority:
    id: str
    position: Coord
    distance: int
    instruction: str | None
    zone: str | None = None


@dataclass(frozen=True)
class HazardReading:
    kind: str
    distance: int
    severity: int
    hazard_id: str = ""


@dataclass(frozen=True)
class RawObservation:
    observer: str
    tick: int
    position: Coord
    visible_agents: tuple[VisibleAgent, ...] = ()
    visible_authorities: tuple[VisibleAuthority, ...] = ()
    hazard_readings: tuple[HazardReading, ...] = ()
    signal_states: tuple[tuple[str, str], ...] = ()
    current_tile_rules: frozenset[str] = frozenset()


@dataclass
class WorldView:
    """Snapshot of everything observable at one tick."""

    tmap: TileMap
    hazards: Sequence[Hazard]
    positions: Mapping[str, Coord]
    behaviors: Mapping[str, str] = field(default_factory=dict)
    authorities: Mapping[str, tuple[Coord, str | None, str | None]] = field(default_factory=dict)


def shares_local_context(tmap: TileMap, a: Coord, b: Coord) -> bool:
    if manhattan_distance(a, b) > PEER_RADIUS:
        return False
    if tmap.streets_near(a) & tmap.streets_near(b):
        return True
    return any(in_effective_zone(i, a) and in_effective_zone(i, b) for i in tmap.intersections)


def observe(view: WorldView, agent_id: str, t: int) -> RawObservation:
    tmap = view.tmap
    pos = view.positions[agent_id]
    peers = []
    for other in sorted(view.positions):
        if other == agent_id or other in view.authorities:
            continue
        q = view.positions[other]
        if shares_local_context(tmap, pos, q):
            peers.append(VisibleAgent(other, q, view.behaviors.get(other, "")))
    auths = []
    for aid in sorted(view.authorities):
        apos, instruction, zone = view.authorities[aid]
        d = manhattan_distance(pos, apos)
        if d <= AUTHORITY_RADIUS:
            auths.append(VisibleAuthority(aid, apos, d, instruction, zone))
    readings = []
    for hz in view.hazards:
        d = manhattan_distance(hz.ignition_tile, pos)
        sev = hazard_severity_at(hz, pos, t)
        if sev > 0 and d <= CUE_RADIUS:
            readings.append(HazardReading(hz.kind, d, sev, hz.id))
    signals = tuple(
        (i.id, signal_state(i, t))
        for i in tmap.intersections
        if i.signalized and manhattan_distance(i.position, pos) <= CUE_RADIUS
    )
    return RawObservation(
        observer=agent_id,
        tick=t,
        position=pos,
        visible_agents=tuple(peers),
        visible_authorities=tuple(auths),
        hazard_readings=tuple(readings),
        signal_states=signals,
        current_tile_rules=tmap.rules_in_force(pos),
    )


# -- map files -----------------------------------------------------------------


def _region(spec: Sequence[int], name: str = "") -> Region:
    x0, y0, x1, y1 = spec
    return Region(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1), name)


def _tiles(rects: Iterable[Sequence[int]]) -> frozenset[Coord]:
    out: set[Coord] = set()
    for r in rects:
        out.update(_region(r).tiles())
    return frozenset(out)


def parse_map(doc: Mapping) -> TileMap:
    grid = [row for row in str(doc["tiles"]).splitlines() if row.strip()]
    width = int(doc.get("width", len(grid[0]) if grid else 0))
    height = int(doc.get("height", len(grid)))
    streets = []
    for s in doc.get("streets", []):
        direction = s.get("direction", "bidirectional")
        heading = s.get("heading") if direction == "one_way" else None
        if direction == "one_way" and heading not in HEADINGS:
            raise MapError(f"one-way street {s['name']} needs a heading in N/S/E/W")
        streets.append(
            Street(s["name"], _tiles(s["rects"]), heading, frozenset(s.get("rules", [])))
        )
    intersections = []
    for i in doc.get("intersections", []):
        red, green, offset = i.get("signal", [30, 30, 0])
        intersections.append(
            Intersection(
                id=i["id"],
                name=i.get("name", i["id"]),
                position=tuple(i["position"]),
                red_ticks=red,
                green_ticks=green,
                phase_offset=offset,
                effective_zone_radius=i.get("zone", 12),
                crosswalks=_tiles(i.get("crosswalks", [])),
                signalized=i.get("signalized", True),
            )
        )
    return TileMap(
        width=width,
        height=height,
        grid=grid,
        streets=streets,
        intersections=intersections,
        safe_zones=[_region(z["rect"], z["name"]) for z in doc.get("safe_zones", [])],
        public_buildings=[_region(z["rect"], z["name"]) for z in doc.get("public_buildings", [])],
        cordoned=[_region(z["rect"], z["name"]) for z in doc.get("cordoned", [])],
        landmarks={k: tuple(v) for k, v in doc.get("landmarks", {}).items()},
    )


def parse_hazards(items: Iterable[Mapping]) -> list[Hazard]:
    return [
        Hazard(
            id=h.get("id", h["kind"]),
            kind=h["kind"],
            ignition_tile=tuple(h["ignition_tile"]),
            s0=h.get("s0", 95),
            alpha_decay=h.get("alpha_decay", 5),
            ignite_tick=h["ignite_tick"],
            extinguish_tick=h["extinguish_tick"],
            footprint=_tiles(h.get("footprint", [])),
        )
        for h in items
    ]


def load_map(path: str | FsPath) -> TileMap:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return parse_map(doc)


def with_signal_overrides(tmap: TileMap, overrides: Mapping[str, Sequence[int]]) -> TileMap:
    """Copy of ``tmap`` with (red, green, offset) replaced for the named intersections."""
    if not overrides:
        return tmap
    inters = []
    for i in tmap.intersections:
        if i.id in overrides:
            red, green, offset = overrides[i.id]
            i = Intersection(i.id, i.position, red, green, offset, i.effective_zone_radius,
                             i.crosswalks, i.signalized, i.name)
        inters.append(i)
    unknown = set(overrides) - {i.id for i in tmap.intersections}
    if unknown:
        raise MapError(f"signal override for unknown intersections {sorted(unknown)}")
    return TileMap(tmap.width, tmap.height, tmap.grid, tmap.streets, inters, tmap.safe_zones,
                   tmap.public_buildings, tmap.cordoned, tmap.landmarks)

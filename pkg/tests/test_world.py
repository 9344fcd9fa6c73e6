from __future__ import annotations

import heapq
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pavesim import world
from pavesim.world import Hazard, Intersection, hazard_severity_at, legal_shortest_path, move_broken_rules

from conftest import random_small_map

CORRIDOR = """\
..+..
##+##
.....
"""


def corridor_map(**signal) -> world.TileMap:
    # a vertical crosswalk through a one-way (westbound) road
    doc = {
        "tiles": CORRIDOR,
        "streets": [{"name": "Main", "direction": "one_way", "heading": "W", "rects": [[0, 1, 4, 1], [2, 0, 2, 0]]}],
        "intersections": [{"id": "I", "position": [2, 1], "crosswalks": [[2, 0, 2, 1]],
                           "signal": [signal.get("red", 3), signal.get("green", 3), signal.get("offset", 0)]}],
    }
    return world.parse_map(doc)


def brute_force_cost(tmap: world.TileMap, start, goal, t0: int, relax=frozenset()) -> int | None:
    """Dijkstra over (tile, signal phase) with an explicit wait edge at every tile."""
    period = 1
    for i in tmap.intersections:
        period = math.lcm(period, i.red_ticks + i.green_ticks)
    relax = frozenset(relax)
    dist = {(start, 0): 0}
    heap = [(0, start)]
    while heap:
        g, p = heapq.heappop(heap)
        if p == goal:
            return g
        if dist.get((p, g % period), None) is not None and dist[(p, g % period)] < g:
            continue
        if g > 4 * tmap.width * tmap.height * period:
            break
        t = t0 + g
        cands = [(p, 1)]
        for q in tmap.neighbors(p):
            if tmap.walkable(q) and move_broken_rules(tmap, p, q, t) <= relax:
                cands.append((q, 1))
        for q, c in cands:
            key = (q, (g + c) % period)
            if g + c < dist.get(key, 1 << 30):
                dist[key] = g + c
                heapq.heappush(heap, (g + c, q))
    return None


# -- hazards ---------------------------------------------------------------------


def test_fire_decay_matches_linear_formula_exactly():
    fire = Hazard("fire", (0, 0), ignite_tick=50, extinguish_tick=150)
    for d in range(0, 131):
        assert hazard_severity_at(fire, (d, 0), 60) == max(0, 95 - 5 * d)


@given(st.integers(-500, 500), st.integers(0, 40), st.integers(0, 40))
def test_fire_is_zero_outside_active_window(t, x, y):
    fire = Hazard("fire", (0, 0), ignite_tick=50, extinguish_tick=150)
    sev = hazard_severity_at(fire, (x, y), t)
    if t < 50 or t >= 150:
        assert sev == 0
    else:
        assert 0 <= sev <= 95


def test_hazard_validation():
    with pytest.raises(world.MapError):
        Hazard("fire", (0, 0), ignite_tick=5, extinguish_tick=5)
    with pytest.raises(world.MapError):
        Hazard("fire", (0, 0), 0, 10, s0=0)
    with pytest.raises(world.MapError):
        Hazard("fire", (0, 0), 0, 10, alpha_decay=0)


def test_reach_is_ceiling_of_s0_over_alpha():
    assert Hazard("fire", (0, 0), 0, 1).reach == 19
    assert Hazard("fire", (0, 0), 0, 1, s0=96).reach == 20


# -- geometry and signals ---------------------------------------------------------


@given(st.tuples(st.integers(0, 63), st.integers(0, 63)), st.tuples(st.integers(0, 63), st.integers(0, 63)))
def test_manhattan_symmetric_and_bounded(a, b):
    d = world.manhattan_distance(a, b, (64, 64))
    assert d == world.manhattan_distance(b, a) >= 0
    assert d <= 126


def test_manhattan_rejects_out_of_bounds():
    with pytest.raises(world.BoundsError):
        world.manhattan_distance((0, 0), (64, 0), (64, 64))


@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 80), st.integers(0, 10_000))
def test_signal_is_periodic_and_wait_lands_on_green(red, green, offset, t):
    i = Intersection("I", (0, 0), red, green, offset)
    assert world.signal_state(i, t) == world.signal_state(i, t + red + green)
    wait = world.ticks_until_green(i, t)
    assert world.signal_state(i, t + wait) == "green"
    assert 0 <= wait <= red
    assert (wait == 0) == (world.signal_state(i, t) == "green")


def test_effective_zone_boundary_is_inclusive():
    i = Intersection("I", (5, 5), effective_zone_radius=3)
    assert world.in_effective_zone(i, (8, 5))
    assert not world.in_effective_zone(i, (8, 6))


# -- move legality ------------------------------------------------------------------


def test_sidewalk_to_road_breaks_crosswalk_only():
    m = corridor_map()
    assert move_broken_rules(m, (1, 0), (1, 1), 0) == {world.CROSSWALK_ONLY}


def test_entering_crosswalk_on_red_breaks_red_light_only_from_the_curb():
    m = corridor_map(red=3, green=3, offset=0)
    assert move_broken_rules(m, (1, 0), (2, 0), 0) == {world.RED_LIGHT}
    assert move_broken_rules(m, (1, 0), (2, 0), 3) == frozenset()
    # already on the carriageway: continuing across is not a fresh red-light entry
    assert world.RED_LIGHT not in move_broken_rules(m, (2, 0), (2, 1), 0)


def test_wrong_way_on_one_way_street():
    m = corridor_map()
    assert move_broken_rules(m, (1, 1), (2, 1), 0) == {world.ONE_WAY}
    assert move_broken_rules(m, (2, 1), (1, 1), 0) == frozenset()


def test_wait_is_always_legal_and_blocked_tiles_raise():
    m = corridor_map()
    assert move_broken_rules(m, (0, 0), (0, 0), 0) == frozenset()
    blocked = world.parse_map({"tiles": ".X\n.."})
    with pytest.raises(world.PathInputError):
        move_broken_rules(blocked, (0, 0), (1, 0), 0)


def test_private_building_cordon_and_personal_space():
    m = world.parse_map({
        "tiles": "..B\n...",
        "cordoned": [{"name": "lot", "rect": [1, 1, 1, 1]}],
    })
    assert move_broken_rules(m, (1, 0), (2, 0), 0) == {world.NO_PRIVATE_BUILDING}
    assert move_broken_rules(m, (0, 1), (1, 1), 0) == {world.NO_CORDON}
    assert move_broken_rules(m, (0, 0), (1, 0), 0, occupied=frozenset({(1, 0)})) == {world.PERSONAL_SPACE}


def test_map_validation_errors():
    with pytest.raises(world.MapError):
        world.parse_map({"tiles": "..\n.", "width": 2, "height": 2})
    with pytest.raises(world.MapError):
        world.parse_map({"tiles": "?."})
    with pytest.raises(world.MapError):
        world.parse_map({"tiles": ".+.", "streets": []})  # isolated crosswalk
    with pytest.raises(world.MapError):
        world.parse_map({"tiles": "..", "streets": [{"name": "S", "rects": [[0, 0, 1, 0]]}]})


# -- pathfinding ----------------------------------------------------------------------


def test_path_waits_for_green_instead_of_jaywalking():
    m = corridor_map(red=3, green=3, offset=0)
    p = legal_shortest_path(m, (1, 0), (1, 2), t0=0)
    assert p is not None
    assert all(not b for b in p.broken_rules(m))
    assert p.steps[:3] == ((1, 0),) * 3  # three red ticks at the curb
    relaxed = legal_shortest_path(m, (1, 0), (1, 2), t0=0, relax=(world.RED_LIGHT,))
    assert relaxed.cost < p.cost


def test_unreachable_goal_returns_none():
    m = world.parse_map({"tiles": ".X."})
    assert legal_shortest_path(m, (0, 0), (2, 0)) is None


def test_start_on_goal_is_empty_path():
    m = world.parse_map({"tiles": "..."})
    p = legal_shortest_path(m, (1, 0), (1, 0))
    assert p.steps == () and p.cost == 0


def test_region_goal():
    m = world.parse_map({"tiles": ".....\n....."})
    p = legal_shortest_path(m, (0, 0), [world.Region(3, 0, 4, 1)])
    assert p.cost == 3 and p.end[0] == 3


def test_thousand_random_pairs_on_default_map_are_legal(default_map):
    rng = random.Random(7)
    tiles = [(x, y) for y in range(default_map.height) for x in range(default_map.width)
             if default_map.walkable((x, y))]
    found = 0
    for _ in range(1000):
        a, b, t0 = rng.choice(tiles), rng.choice(tiles), rng.randrange(0, 2000)
        p = legal_shortest_path(default_map, a, b, t0=t0)
        if p is None:
            continue
        found += 1
        assert p.cost == len(p.steps)
        for (u, v, t) in p.moves():
            assert u == v or world.manhattan_distance(u, v) == 1
            assert not move_broken_rules(default_map, u, v, t)
    assert found > 300


@pytest.mark.parametrize("seed", range(60))
def test_astar_matches_brute_force_dijkstra_on_small_fixtures(seed):
    m = random_small_map(seed)
    rng = random.Random(seed)
    tiles = [(x, y) for y in range(m.height) for x in range(m.width) if m.walkable((x, y))]
    for _ in range(8):
        a, b = rng.choice(tiles), rng.choice(tiles)
        t0 = rng.randrange(0, 12)
        relax = rng.choice([(), (world.RED_LIGHT,), (world.ONE_WAY,), (world.CROSSWALK_ONLY,)])
        p = legal_shortest_path(m, a, b, t0=t0, relax=relax)
        expected = brute_force_cost(m, a, b, t0, relax)
        assert (None if p is None else p.cost) == expected, (seed, a, b, t0, relax)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_astar_optimal_property(seed):
    m = random_small_map(seed, max_side=8)
    rng = random.Random(seed)
    tiles = [(x, y) for y in range(m.height) for x in range(m.width) if m.walkable((x, y))]
    a, b = rng.choice(tiles), rng.choice(tiles)
    p = legal_shortest_path(m, a, b, t0=seed % 7)
    assert (None if p is None else p.cost) == brute_force_cost(m, a, b, seed % 7)


# -- observation -------------------------------------------------------------------------


def test_observe_reports_cues_authorities_and_peers(default_map):
    fire = Hazard("fire", (21, 22), 50, 150)
    view = world.WorldView(
        default_map, [fire],
        positions={"A": (20, 21), "B": (22, 21), "Z": (58, 19), "TO": (24, 20)},
        behaviors={"B": "crossed"},
        authorities={"TO": ((24, 20), "hold_back", "XA")},
    )
    obs = world.observe(view, "A", 60)
    assert obs.hazard_readings[0].severity == 85
    assert [a.id for a in obs.visible_agents] == ["B"]
    assert obs.visible_authorities[0].distance == 5
    assert world.ONE_WAY in obs.current_tile_rules
    quiet = world.observe(view, "Z", 60)
    assert quiet.hazard_readings == () and quiet.visible_agents == ()

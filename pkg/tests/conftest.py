from __future__ import annotations

import random
from pathlib import Path

import pytest

from pavesim import world
from pavesim.judgment import OracleProvider
from pavesim.scenario import load_scenario, run_cell

FIXTURES = Path(__file__).parent / "fixtures"


def random_small_map(seed: int, max_side: int = 12) -> world.TileMap:
    """A valid random map no larger than max_side x max_side with every rule in play."""
    rng = random.Random(seed)
    w, h = rng.randint(4, max_side), rng.randint(4, max_side)
    weights = {".": 5, "#": 4, "+": 2, "X": 2, "B": 1, "P": 1}
    chars, wts = zip(*weights.items())
    grid = [[rng.choices(chars, wts)[0] for _ in range(w)] for _ in range(h)]

    def kind(x, y):
        return world.TILE_CHARS[grid[y][x]]

    # crosswalks need an adjacent carriageway tile
    for y in range(h):
        for x in range(w):
            if grid[y][x] == "+":
                near = [(x + dx, y + dy) for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))
                        if 0 <= x + dx < w and 0 <= y + dy < h]
                if not any(kind(*q) in (world.ROAD, world.CROSSWALK) for q in near):
                    grid[y][x] = "#"
    carriage = [(x, y) for y in range(h) for x in range(w) if kind(x, y) in (world.ROAD, world.CROSSWALK)]
    split = rng.randint(0, w)
    west = [[x, y, x, y] for x, y in carriage if x < split]
    east = [[x, y, x, y] for x, y in carriage if x >= split]
    streets = []
    if west:
        streets.append({"name": "W", "direction": "one_way", "heading": rng.choice("NSEW"), "rects": west})
    if east:
        streets.append({"name": "E", "rects": east})
    inters = []
    cross = [(x, y) for x, y in carriage if grid[y][x] == "+"]
    if cross:
        red, green = rng.randint(1, 5), rng.randint(1, 5)
        inters.append({"id": "I", "position": list(cross[0]), "crosswalks": [[x, y, x, y] for x, y in cross],
                       "signal": [red, green, rng.randint(0, red + green - 1)], "zone": 2})
    bx, by = rng.randrange(w), rng.randrange(h)
    doc = {
        "tiles": "\n".join("".join(r) for r in grid),
        "streets": streets,
        "intersections": inters,
        "public_buildings": [{"name": "pub", "rect": [bx, by, min(w - 1, bx + 1), min(h - 1, by + 1)]}],
        "cordoned": [{"name": "lot", "rect": [rng.randrange(w), rng.randrange(h)] * 2}],
    }
    return world.parse_map(doc)


@pytest.fixture(scope="session")
def default_map() -> world.TileMap:
    return world.load_map(Path(world.__file__).parent / "data" / "default_map.yaml")


@pytest.fixture(scope="session")
def oracle_logs(tmp_path_factory) -> dict[tuple[str, str, int], Path]:
    """Seed-1 full-condition oracle logs for the three shipped scenarios."""
    out = tmp_path_factory.mktemp("oracle_logs")
    logs = {}
    for sid in ("s1_fire", "s2_fire_officer", "s3_jaywalk"):
        res = run_cell(load_scenario(sid), "full", OracleProvider(), 1, out)
        logs[(sid, "full", 1)] = res.path
    return logs


# criterion number -> (passed, description); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {text}")

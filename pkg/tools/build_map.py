"""Regenerate src/pavesim/data/default_map.yaml from the feature list below.

The grid is mostly blocked; streets, sidewalks and lots are carved into it so
that every route in the shipped scenarios is explicit.
"""

from __future__ import annotations

from pathlib import Path

import yaml

W = H = 64
OUT = Path(__file__).resolve().parents[1] / "src" / "pavesim" / "data" / "default_map.yaml"


def rect(grid, x0, y0, x1, y1, ch):
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            grid[y][x] = ch


def build() -> dict:
    g = [["X"] * W for _ in range(H)]
    rect(g, 4, 18, 59, 19, ".")      # north sidewalk, two tiles wide
    rect(g, 4, 20, 59, 21, "#")      # Main St N
    rect(g, 4, 22, 16, 22, ".")      # south sidewalk, west block
    rect(g, 18, 22, 24, 22, ".")     # cafe frontage
    rect(g, 18, 23, 21, 24, "B")     # Hobbs Cafe
    rect(g, 25, 22, 25, 26, "#")     # Park Lane
    rect(g, 27, 22, 27, 26, "#")     # Mill Lane
    rect(g, 20, 27, 32, 33, "P")     # Johnson Park
    rect(g, 25, 8, 25, 17, "#")      # Birch St (dead end north)
    g[18][25] = "+"
    g[19][25] = g[19][26] = "X"      # planters: Birch and Mill are reached only at their crosswalks
    rect(g, 40, 6, 41, 17, "#")      # Oak St
    rect(g, 40, 18, 41, 19, "+")     # two-lane crossing at Oak & Main
    rect(g, 22, 20, 22, 21, "+")     # mid-block crosswalk by the cafe
    rect(g, 27, 20, 27, 21, "+")     # Mill crossing
    rect(g, 43, 12, 43, 17, ".")     # walkway around the apartments
    rect(g, 49, 12, 49, 17, ".")
    rect(g, 43, 17, 49, 17, ".")
    rect(g, 44, 12, 48, 16, "B")     # Oak Apartments (private)
    rect(g, 50, 14, 53, 16, "B")     # office (public)
    rect(g, 50, 17, 53, 17, ".")
    rect(g, 6, 14, 9, 16, ".")       # construction lot, cordoned
    rect(g, 6, 17, 9, 17, ".")
    tiles = "\n".join("".join(row) for row in g)
    return {
        "width": W,
        "height": H,
        "tiles": tiles + "\n",
        "streets": [
            {"name": "Main St N", "direction": "one_way", "heading": "W", "rects": [[4, 20, 59, 21]],
             "rules": ["one_way", "crosswalk_only", "red_light"]},
            {"name": "Birch St", "rects": [[25, 8, 25, 18]], "rules": ["crosswalk_only", "red_light"]},
            {"name": "Oak St", "rects": [[40, 6, 41, 19]], "rules": ["crosswalk_only", "red_light"]},
            {"name": "Park Lane", "rects": [[25, 22, 25, 26]], "rules": ["crosswalk_only"]},
            {"name": "Mill Lane", "direction": "one_way", "heading": "N", "rects": [[27, 22, 27, 26]],
             "rules": ["one_way", "crosswalk_only"]},
        ],
        # signal: [red, green, offset]; red while (t + offset) % (red + green) < red
        "intersections": [
            {"id": "XA", "name": "Cafe crossing", "position": [22, 20], "crosswalks": [[22, 20, 22, 21]],
             "signal": [30, 30, 10], "zone": 3},
            {"id": "XB", "name": "Birch & Main", "position": [25, 17], "crosswalks": [[25, 18, 25, 18]],
             "signal": [30, 30, 20], "zone": 3},
            {"id": "X1", "name": "Mill & Main", "position": [27, 20], "crosswalks": [[27, 20, 27, 21]],
             "signal": [30, 30, 10], "zone": 1},
            {"id": "X2", "name": "Oak & Main", "position": [40, 19], "crosswalks": [[40, 18, 41, 19]],
             "signal": [30, 30, 53], "zone": 3},
        ],
        "safe_zones": [{"name": "Johnson Park", "rect": [20, 27, 32, 33]}],
        "public_buildings": [
            {"name": "Hobbs Cafe", "rect": [18, 23, 21, 24]},
            {"name": "Office", "rect": [50, 14, 53, 16]},
        ],
        "cordoned": [{"name": "Construction lot", "rect": [6, 14, 9, 16]}],
        "landmarks": {
            "cafe": [20, 23],
            "park_gate": [25, 27],
            "office": [52, 17],
            "apartments_west": [43, 14],
            "apartments_east": [49, 14],
            "oak_east": [46, 19],
            "birch_west": [20, 18],
            "home_cc": [29, 18],
            "home_kq": [28, 19],
            "home_tp": [43, 14],
            "home_lc": [58, 19],
            "library": [34, 18],
            "west_end": [6, 19],
        },
    }


def main() -> None:
    doc = build()
    tiles = doc.pop("tiles")
    text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=120)
    block = "tiles: |\n" + "".join(f"  {row}\n" for row in tiles.splitlines())
    OUT.write_text("# generated by tools/build_map.py\n" + block + text, encoding="utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()

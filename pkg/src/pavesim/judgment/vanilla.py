"""Single-scalar importance scorer standing in for a memory-stream agent.

The scorer rates events by how unusual they are socially, which leaves
physical danger in the same band as everyday street activity.
"""

from __future__ import annotations

import re
from typing import Mapping

PLAN_ALTERATION_THRESHOLD = 60

# (pattern, score), first match wins
_TABLE: tuple[tuple[str, int], ...] = (
    (r"college acceptance|wedding|proposal|promotion|award|celebrity|lottery", 80),
    (r"fire|smoke|flood|collapse|explosion|medical emergency", 29),
    (r"signal|red light|green light|crosswalk|traffic|jaywalk|crossing", 25),
    (r"officer|police|instruction", 35),
    (r"late|time pressure|meeting", 30),
)
DEFAULT_SCORE = 20


def vanilla_importance(event: str | Mapping[str, object]) -> int:
    """Importance in [0,100] of a perceived event (text, or a cue with a ``type``)."""
    text = event if isinstance(event, str) else str(event.get("type", ""))
    text = text.lower()
    for pattern, score in _TABLE:
        if re.search(pattern, text):
            return score
    return DEFAULT_SCORE


def alters_plan(score: int, threshold: int = PLAN_ALTERATION_THRESHOLD) -> bool:
    return score >= threshold

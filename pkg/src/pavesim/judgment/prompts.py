from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Any, Mapping

from .schemas import OPS

GATE_BLOCK_START = "LEGITIMACY GATE (HARD RULE):"


@lru_cache(maxsize=None)
def load_template(op: str, override_dir: str | None = None) -> str:
    if op not in OPS:
        raise KeyError(op)
    if override_dir:
        from pathlib import Path

        candidate = Path(override_dir) / f"{op}.txt"
        if candidate.exists():
            return candidate.read_text(encoding="utf-8")
    return resources.files("pavesim.judgment").joinpath("prompts", f"{op}.txt").read_text(encoding="utf-8")


def template_version(op: str) -> str:
    first = load_template(op).splitlines()[0]
    return first.split(":", 1)[1].strip() if first.startswith("# version") else "0"


def _js(v: Any) -> str:
    return v if isinstance(v, str) else json.dumps(v, sort_keys=True)


def _agent_description(agent: Mapping[str, Any]) -> str:
    parts = [str(agent.get(k, "")).strip().rstrip(".") for k in ("name", "occupation", "persona")]
    goal = str(agent.get("goal", "")).strip().rstrip(".")
    text = ". ".join(p for p in parts if p)
    return f"{text}. Current goal: {goal}." if goal else text


def _cues(payload: Mapping[str, Any]) -> str:
    text = _js(payload.get("cues", []))
    route = payload.get("route")
    if route:
        legal = route.get("legal_cost")
        relaxed = route.get("relaxed_cost")
        text += (
            f"; compliant route to safety: {'none' if legal is None else f'{legal} ticks'}"
            f"; route breaking only the relevant rule: {'none' if relaxed is None else f'{relaxed} ticks'}"
        )
    return text


def render(op: str, payload: Mapping[str, Any], override_dir: str | None = None) -> str:
    """Substitute payload slots into the op's template, dropping the version header."""
    agent = payload.get("agent", {})
    slots = {
        "agent_name": agent.get("name", agent.get("id", "the agent")),
        "agent_description": _agent_description(agent),
        "observation": _js(payload.get("observation", {})),
        "context": _js(payload.get("context", {})),
        "rule": payload.get("rule_text") or payload.get("rule", ""),
        "peer_behaviors": _js([p["behavior"] if isinstance(p, Mapping) else p for p in payload.get("peers", [])]),
        "personal_rules": _js(payload.get("personal_rules", [])),
        "cues": _cues(payload),
        "assessment": _js(payload.get("assessment", {})),
        "tau": str(payload.get("tau", "")),
        "verdict": _js(payload.get("verdict", {})),
        "plan": _js(payload.get("plan", [])),
        "actions": _js(payload.get("actions", [])),
        "feedback": str(payload.get("feedback", "")),
    }
    body = load_template(op, override_dir)
    lines = body.splitlines()
    if lines and lines[0].startswith("# version"):
        lines = lines[1:]
    if op == "verdict" and payload.get("gate") is False:
        lines = [ln for ln in lines if not ln.startswith(GATE_BLOCK_START)]
    return Template("\n".join(lines).strip() + "\n").safe_substitute(slots)

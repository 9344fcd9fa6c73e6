"""Deterministic band oracle.

Every op is a pure function of its payload. Persona influence enters only
through the disposition classifier, itself a pure function of persona text.
"""

from __future__ import annotations

import json
import math
import re
from typing import Any, Mapping, Sequence

from .base import JudgmentRequest, JudgmentResponse, validate_result

EMERGENCY_KINDS = frozenset({"fire", "flood", "collapse", "medical emergency"})
PRESSURE_KINDS = frozenset({"time pressure", "convenience", "peer pressure"})
CLASS_WEIGHT = {"emergency": 1.0, "pressure": 0.6}

NECESSITY_SEVERITY = 70
ALTERNATIVE_FACTOR = 2
RISK_CUTOFF = 70  # rho
BENEFIT_CUTOFF = 40  # beta
RESTRICTIVE_INSTRUCTIONS = frozenset({"hold_back", "direction_correction"})

CAUTIOUS_WORDS = (
    "careful", "cautious", "caution", "rule-following", "rule-respecting", "defers", "defer",
    "conscientious", "binding", "routine", "quiet", "authority-respecting",
)
RISK_WORDS = (
    "risk", "risks", "risk-taking", "impulsive", "bend rules", "own judgment", "rule-skeptical",
    "urgency-driven", "reckless",
)
BALANCED_WORDS = ("balanced", "pragmatic", "weighs", "moderate")
INTENSIFIERS = ("strong", "strict", "binding", "very")
ATTENUATORS = ("slightly", "somewhat", "a little")

# Calibrated point per disposition class.
CLASS_POINT = {"cautious": 65, "balanced": 50, "risk-taking": 40, "neutral": 50}
CLASS_BAND = {"cautious": (60, 85), "balanced": (45, 60), "risk-taking": (20, 45), "neutral": (50, 50)}


def _count(text: str, words: Sequence[str]) -> int:
    return sum(1 for w in words if re.search(rf"(?<![\w-]){re.escape(w)}(?![\w-])", text))


def disposition(persona: str) -> tuple[str, int]:
    """Classify persona text; returns (class, intensity step in {-1, 0, 1})."""
    text = persona.lower()
    c, r, b = _count(text, CAUTIOUS_WORDS), _count(text, RISK_WORDS), _count(text, BALANCED_WORDS)
    if c == r == b == 0:
        return "neutral", 0
    if c > r and c >= b:
        cls = "cautious"
    elif r > c and r >= b:
        cls = "risk-taking"
    else:
        cls = "balanced"
    step = 0
    if _count(text, INTENSIFIERS):
        step = 1
    elif _count(text, ATTENUATORS):
        step = -1
    return cls, step


def oracle_threshold(persona: str) -> int:
    cls, step = disposition(persona)
    point = CLASS_POINT[cls]
    if cls == "cautious":
        point += 10 * step
    elif cls == "risk-taking":
        point -= 5 * step  # attenuated risk-taking drifts toward the middle
    lo, hi = CLASS_BAND[cls]
    return max(lo, min(hi, point))


def persona_shift(persona: str, unit: int) -> int:
    cls, _ = disposition(persona)
    return {"cautious": unit, "risk-taking": -unit}.get(cls, 0)


def cue_class(kind: str, distance: int, cue_radius: int = 12) -> str:
    # an emergency outside the perceptual radius carries no necessity
    if kind in EMERGENCY_KINDS and distance <= cue_radius:
        return "emergency"
    return "pressure"


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _clamp(v: int, lo: int = 1, hi: int = 100) -> int:
    return max(lo, min(hi, v))


# -- per-op formulas -------------------------------------------------------


def risk_band(distance: int | str | None) -> tuple[int, int]:
    if distance is None or distance == "inf":
        return 5, 15
    d = int(distance)
    if d <= 3:
        return 70, 95
    if d <= 10:
        return 30, 60
    return 10, 25


BANDS_DESC = [(70, 95), (30, 60), (10, 25), (5, 15)]


def oracle_risk(context: Mapping[str, Any], persona: str) -> int:
    lo, hi = risk_band(context.get("authority_distance_tiles", "inf"))
    instruction = context.get("authority_instruction")
    if instruction == "pass" and (lo, hi) in BANDS_DESC[:-1]:
        # explicit permission: one band less risky
        lo, hi = BANDS_DESC[BANDS_DESC.index((lo, hi)) + 1]
    r = _half_up((lo + hi) / 2) + persona_shift(persona, 3)
    if instruction in RESTRICTIVE_INSTRUCTIONS and context.get("in_zone"):
        r += 8
    return max(lo, min(hi, r))


def oracle_empirical(peers: Sequence[Any], rule: str, k: int = 2) -> tuple[int, int, int]:
    n_obs = n_ok = 0
    for peer in peers:
        if isinstance(peer, Mapping):
            if peer.get("rule") not in (None, rule):
                continue
            n_obs += 1
            n_ok += bool(peer.get("rule_followed", True))
    if n_obs == 0:
        return 50, 0, 0
    return _half_up((100 * n_ok + 50 * k) / (n_obs + k)), n_obs, n_ok


def oracle_normative(personal_rules: Sequence[Mapping[str, Any]], rule: str, persona: str) -> int | None:
    for entry in personal_rules:
        if entry.get("id") == rule:
            base = int(entry["s_val"])
            if entry.get("alpha_kind") == "injunctive":
                base = _clamp(base + 10)
            return _clamp(base + persona_shift(persona, 10))
    return None


def oracle_benefit(cues: Sequence[Mapping[str, Any]], cue_radius: int = 12) -> int:
    best = 10
    for cue in cues:
        w = CLASS_WEIGHT[cue_class(cue["type"], cue["distance_tiles"], cue_radius)]
        best = max(best, _half_up(cue["severity"] * w))
    return _clamp(best)


def oracle_legitimacy(
    cues: Sequence[Mapping[str, Any]], route: Mapping[str, Any] | None, cue_radius: int = 12
) -> tuple[int, str, str, str]:
    emergencies = [c for c in cues if cue_class(c["type"], c["distance_tiles"], cue_radius) == "emergency"]
    route = route or {}
    legal, relaxed = route.get("legal_cost"), route.get("relaxed_cost")
    if not emergencies:
        if not cues:
            return 8, "No threat is present.", "No violation is warranted.", "Compliant routing is available."
        sev = max(c["severity"] for c in cues)
        return (
            _clamp(min(30, _half_up(0.4 * sev))),
            "Ordinary urgency does not make compliance harmful.",
            "A violation would serve convenience only.",
            "Waiting or rerouting reaches the same outcome.",
        )
    sev = max(c["severity"] for c in emergencies)
    necessity = sev >= NECESSITY_SEVERITY
    proportional = relaxed is not None
    no_alternative = proportional and (legal is None or legal >= ALTERNATIVE_FACTOR * relaxed)
    texts = (
        "Compliance would keep the agent exposed to the hazard." if necessity
        else "The hazard is present but not immediately threatening.",
        "Suspending only this rule opens an escape route." if proportional
        else "Suspending this rule alone does not open an escape route.",
        "No compliant route reaches safety in comparable time." if no_alternative
        else "A compliant route remains available.",
    )
    if necessity and proportional and no_alternative:
        return max(75, min(100, sev)), *texts
    return max(30, min(74, sev)), *texts


def oracle_verdict(
    assessment: Mapping[str, int], tau: int, hold: bool, gate: bool = True
) -> tuple[str, str, int]:
    r, p_emp, b, ell = assessment["r"], assessment["p_emp"], assessment["b"], assessment["ell"]
    if gate and ell < tau:
        return "comply", f"Legitimacy {ell} is insufficient against threshold {tau}; risk and benefit are not weighed.", 90
    if hold:
        return "comply", f"An authority hold is active; risk {r} outweighs benefit {b}.", 70
    if not gate:
        score = (b + (100 - p_emp) + ell) / 3
        if score > r:
            return "violate", f"Benefit {b}, low p_emp {p_emp} and legitimacy {ell} outweigh risk {r}.", 70
        return "comply", f"Risk {r} outweighs benefit {b} and legitimacy {ell}.", 70
    if r >= RISK_CUTOFF:
        return "comply", f"Legitimacy {ell} clears the threshold but risk {r} is too high for benefit {b}.", 70
    if b >= BENEFIT_CUTOFF:
        return "violate", f"Legitimacy {ell} clears threshold {tau}; benefit {b} outweighs risk {r}.", 70
    return "comply", f"Legitimacy {ell} clears the threshold but benefit {b} is too low against risk {r}.", 70


INTENT_TEXT = {
    ("wait", False): "Wait at the curb for the signal",
    ("wait", True): "Hold position",
    ("cross", False): "Cross at the crosswalk",
    ("cross", True): "Step into the crosswalk against the rule",
    ("move", False): "Walk along the planned route",
    ("move", True): "Move quickly along the escape route",
    ("idle", False): "Stay put",
    ("idle", True): "Stay put",
}


def oracle_emulate(plan: Sequence[Mapping[str, Any]], violate: bool) -> list[dict[str, Any]]:
    lines = []
    for step in plan:
        broken = bool(step.get("broken"))
        text = INTENT_TEXT[(step.get("intent", "move"), violate and broken)]
        lines.append({"description": text, "duration_s": 10})
    return lines or [{"description": "Stay put", "duration_s": 10}]


def oracle_propagate(verdict: Mapping[str, Any], actions: Sequence[Mapping[str, Any]], feedback: str) -> dict[str, Any]:
    violated = verdict.get("decision") == "violate" and any(a.get("broken") for a in actions)
    rule_text = verdict.get("rule_text") or "the rule"
    if violated:
        behavior = f"broke {rule_text}"
    else:
        kinds = {a.get("intent") for a in actions}
        behavior = "waited for the signal" if kinds == {"wait"} else f"kept to {rule_text}"
    return {"observed_behavior": behavior, "observed_outcome": feedback or "no incident", "rule_followed": not violated}


class OracleProvider:
    """Total, stateless, deterministic provider."""

    name = "oracle"

    def __init__(self, cue_radius: int = 12) -> None:
        self.cue_radius = cue_radius

    def evaluate(self, req: JudgmentRequest) -> JudgmentResponse:
        data = self._compute(req.op, req.payload)
        result = validate_result(req.op, data)
        return JudgmentResponse(req.op, result, raw=json.dumps(data, sort_keys=True), attempts=1)

    def _compute(self, op: str, p: Mapping[str, Any]) -> dict[str, Any]:
        persona = str(p.get("agent", {}).get("persona", ""))
        if op == "threshold":
            tau = oracle_threshold(persona)
            cls, _ = disposition(persona)
            return {"threshold": tau, "reason": f"{cls.capitalize()} disposition sets the bar at {tau}."}
        if op == "perceive":
            return _perceive(p["observation"], p["agent"])
        if op == "risk":
            r = oracle_risk(p["context"], persona)
            return {"risk": r, "reason": f"Authority distance class sets risk at {r}."}
        if op == "empirical":
            p_emp, n, k = oracle_empirical(p["peers"], p["rule"])
            return {"p_emp": p_emp, "n_observed": n, "n_complying": k}
        if op == "normative":
            v = oracle_normative(p["personal_rules"], p["rule"], persona)
            if v is None:
                return {"p_norm": 50, "reason": "Rule not internalized; no prior."}
            return {"p_norm": v, "reason": "Internalized rule strength sets the prior."}
        if op == "benefit":
            b = oracle_benefit(p["cues"], self.cue_radius)
            return {"benefit": b, "reason": f"Strongest cue yields benefit {b}."}
        if op == "legitimacy":
            ell, nec, prop, alt = oracle_legitimacy(p["cues"], p.get("route"), self.cue_radius)
            return {"legitimacy": ell, "necessity": nec, "proportionality": prop, "alternatives": alt}
        if op == "verdict":
            y, j, kappa = oracle_verdict(
                p["assessment"], int(p["tau"]), bool(p.get("hold", False)), bool(p.get("gate", True))
            )
            return {"decision": y, "justification": j, "confidence": kappa}
        if op == "emulate":
            return {"actions": oracle_emulate(p["plan"], p["verdict"].get("decision") == "violate")}
        if op == "propagate":
            return oracle_propagate(p["verdict"], p["actions"], str(p.get("feedback", "")))
        raise AssertionError(op)


def _perceive(obs: Mapping[str, Any], agent: Mapping[str, Any]) -> dict[str, Any]:
    auths = obs.get("visible_authorities", [])
    nearest = min(auths, key=lambda a: (a["distance"], a["id"]), default=None)
    cues = [
        {"type": h["kind"], "distance_tiles": h["distance"], "severity": h["severity"]}
        for h in obs.get("hazard_readings", [])
    ]
    goal = str(agent.get("goal", "")).lower()
    if "late" in goal:
        cues.append({"type": "time pressure", "distance_tiles": 0, "severity": 25})
    peers = [a["behavior"] for a in obs.get("visible_agents", []) if a.get("behavior")]
    bits = [f"{c['type']} at {c['distance_tiles']} tiles" for c in cues]
    if nearest is not None:
        bits.append(f"officer at {nearest['distance']} tiles")
    if peers:
        bits.append(f"{len(peers)} peers in view")
    return {
        "authority_present": nearest is not None,
        "authority_distance_tiles": "inf" if nearest is None else nearest["distance"],
        "peer_behaviors": peers,
        "situational_cues": cues,
        "scene_summary": ("; ".join(bits) if bits else "quiet scene"),
    }

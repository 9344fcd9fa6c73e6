from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping, Protocol

from pydantic import BaseModel, ValidationError

from .schemas import OPS, RESULT_MODELS


class ProviderError(RuntimeError):
    """Transport-level failure; the scheduler may retry the tick."""


class ProviderFatal(RuntimeError):
    """Unrecoverable provider problem (bad credentials, missing endpoint)."""


class RequestError(ValueError):
    pass


# Payload keys each op must carry before dispatch.
REQUIRED_FIELDS: dict[str, tuple[str, ...]] = {
    "threshold": ("agent",),
    "perceive": ("agent", "observation"),
    "risk": ("agent", "context", "rule"),
    "empirical": ("peers", "rule"),
    "normative": ("agent", "context", "personal_rules", "rule"),
    "benefit": ("agent", "cues", "rule"),
    "legitimacy": ("agent", "cues", "personal_rules", "rule"),
    "verdict": ("agent", "assessment", "tau", "rule"),
    "emulate": ("agent", "verdict", "plan"),
    "propagate": ("agent", "verdict", "actions", "feedback"),
}


@dataclass(frozen=True)
class JudgmentRequest:
    op: str
    payload: Mapping[str, Any]
    agent_id: str = ""
    tick: int = 0

    def __post_init__(self) -> None:
        if self.op not in OPS:
            raise RequestError(f"unknown op {self.op!r}")
        missing = [k for k in REQUIRED_FIELDS[self.op] if k not in self.payload]
        if missing:
            raise RequestError(f"{self.op} payload missing {missing}")

    def canonical(self) -> str:
        return json.dumps(
            {"op": self.op, "agent": self.agent_id, "tick": self.tick, "payload": self.payload},
            sort_keys=True,
            default=str,
        )


@dataclass(frozen=True)
class JudgmentResponse:
    op: str
    result: BaseModel
    raw: str = ""
    attempts: int = 1
    degraded: bool = False

    def get(self, key: str) -> Any:
        return getattr(self.result, key)


class JudgmentProvider(Protocol):
    name: str

    def evaluate(self, req: JudgmentRequest) -> JudgmentResponse: ...


def validate_result(op: str, data: Any) -> BaseModel:
    """Validate parsed JSON against the op's model. Raises ValueError on any defect."""
    try:
        return RESULT_MODELS[op].model_validate(data)
    except ValidationError as exc:
        raise ValueError(str(exc)) from exc


def band_midpoint_risk(context: Mapping[str, Any]) -> int:
    d = context.get("authority_distance_tiles", "inf")
    if d == "inf" or d is None:
        return 10
    d = int(d)
    if d <= 3:
        return 83
    if d <= 10:
        return 45
    return 18


def safe_default(req: JudgmentRequest) -> BaseModel:
    """Least-information result used after a second malformed answer."""
    op = req.op
    p = req.payload
    model = RESULT_MODELS[op]
    if op == "threshold":
        return model(threshold=50, reason="default after malformed output")
    if op == "perceive":
        obs = p["observation"]
        auths = obs.get("visible_authorities", []) if isinstance(obs, Mapping) else []
        dist = min((a["distance"] for a in auths), default=None)
        return model(
            authority_present=dist is not None,
            authority_distance_tiles="inf" if dist is None else dist,
            peer_behaviors=[],
            situational_cues=[],
            scene_summary="perception degraded",
        )
    if op == "risk":
        return model(risk=band_midpoint_risk(p["context"]), reason="band midpoint default")
    if op == "empirical":
        return model(p_emp=50, n_observed=0, n_complying=0)
    if op == "normative":
        return model(p_norm=50, reason="midpoint default")
    if op == "benefit":
        return model(benefit=12, reason="routine band midpoint default")
    if op == "legitimacy":
        return model(legitimacy=15, necessity="unassessed", proportionality="unassessed", alternatives="unassessed")
    if op == "verdict":
        return model(decision="comply", justification="Malformed judgment; defaulting to comply.", confidence=0)
    if op == "emulate":
        return model(actions=[{"description": "Follow the current plan", "duration_s": 5}])
    return model(observed_behavior="moves along", observed_outcome="no incident", rule_followed=True)

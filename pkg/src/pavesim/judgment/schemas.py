"""Response models for the ten judgment operations.

Field names follow the JSON contracts printed in each prompt template. The
same models validate oracle output and remote output, so anything the oracle
emits is by construction acceptable from a remote backbone too.
"""

from __future__ import annotations

import re
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

Score = Field(ge=1, le=100)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="ignore", frozen=True)


class ThresholdResult(_Strict):
    threshold: int = Score
    reason: str = ""


class CueModel(_Strict):
    type: str = Field(min_length=1)
    distance_tiles: int = Field(ge=0)
    severity: int = Score


class PerceptionResult(_Strict):
    authority_present: bool
    authority_distance_tiles: Union[int, Literal["inf"]]
    peer_behaviors: list[str] = Field(default_factory=list)
    situational_cues: list[CueModel] = Field(default_factory=list)
    scene_summary: str = ""

    @field_validator("authority_distance_tiles")
    @classmethod
    def _non_negative(cls, v: int | str) -> int | str:
        if isinstance(v, int) and v < 0:
            raise ValueError("authority distance must be non-negative")
        return v

    @model_validator(mode="after")
    def _absent_means_inf(self) -> "PerceptionResult":
        if not self.authority_present and self.authority_distance_tiles != "inf":
            raise ValueError("authority_distance_tiles must be 'inf' when no authority is present")
        return self


class RiskResult(_Strict):
    risk: int = Score
    reason: str = ""


class EmpiricalResult(_Strict):
    p_emp: int = Score
    n_observed: int = Field(ge=0)
    n_complying: int = Field(ge=0)

    @model_validator(mode="after")
    def _counts(self) -> "EmpiricalResult":
        if self.n_complying > self.n_observed:
            raise ValueError("n_complying exceeds n_observed")
        return self


class NormativeResult(_Strict):
    p_norm: int = Score
    reason: str = ""


class BenefitResult(_Strict):
    benefit: int = Score
    reason: str = ""


class LegitimacyResult(_Strict):
    legitimacy: int = Score
    necessity: str = ""
    proportionality: str = ""
    alternatives: str = ""


class VerdictResult(_Strict):
    decision: Literal["comply", "violate"]
    justification: str = ""
    confidence: int = Field(ge=0, le=100)


class ActionLine(_Strict):
    description: str = Field(min_length=1)
    duration_s: int = Field(gt=0)

    @field_validator("duration_s")
    @classmethod
    def _five_second_grid(cls, v: int) -> int:
        if v % 5:
            raise ValueError("durations come in 5-second increments")
        return v


class EmulationResult(_Strict):
    actions: list[ActionLine] = Field(min_length=1)


class PropagationResult(_Strict):
    observed_behavior: str = Field(min_length=1)
    observed_outcome: str = ""
    rule_followed: bool

    @field_validator("observed_behavior")
    @classmethod
    def _short(cls, v: str) -> str:
        if len(v.split()) > 20:
            raise ValueError("observed_behavior must stay under 20 words")
        return v


RESULT_MODELS: dict[str, type[BaseModel]] = {
    "threshold": ThresholdResult,
    "perceive": PerceptionResult,
    "risk": RiskResult,
    "empirical": EmpiricalResult,
    "normative": NormativeResult,
    "benefit": BenefitResult,
    "legitimacy": LegitimacyResult,
    "verdict": VerdictResult,
    "emulate": EmulationResult,
    "propagate": PropagationResult,
}

OPS = tuple(RESULT_MODELS)

_LINE = re.compile(r"^\s*\d+[.)]\s*(?P<text>.+?)\s*\((?P<secs>\d+)\s*s(?:ec(?:ond)?s?)?\)\s*\.?\s*$")


def parse_action_list(text: str) -> EmulationResult:
    """Parse a numbered action list such as ``1. Step off the curb (5s).``"""
    lines = []
    for raw in text.strip().splitlines():
        if not raw.strip():
            continue
        m = _LINE.match(raw)
        if m is None:
            raise ValueError(f"unparseable action line: {raw!r}")
        lines.append(ActionLine(description=m.group("text"), duration_s=int(m.group("secs"))))
    return EmulationResult(actions=lines)

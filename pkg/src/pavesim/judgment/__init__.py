from .base import (
    JudgmentProvider,
    JudgmentRequest,
    JudgmentResponse,
    ProviderError,
    ProviderFatal,
    RequestError,
    safe_default,
    validate_result,
)
from .oracle import OracleProvider
from .remote import EndpointConfig, RemoteProvider
from .vanilla import PLAN_ALTERATION_THRESHOLD, alters_plan, vanilla_importance

__all__ = [
    "EndpointConfig",
    "JudgmentProvider",
    "JudgmentRequest",
    "JudgmentResponse",
    "OracleProvider",
    "PLAN_ALTERATION_THRESHOLD",
    "ProviderError",
    "ProviderFatal",
    "RemoteProvider",
    "RequestError",
    "alters_plan",
    "safe_default",
    "validate_result",
    "vanilla_importance",
]

"""Guardrail pipeline, policies, audit log, and the HTTP proxy service."""

from .audit import AuditLog, AuditRecord, StoreUnavailable
from .config import AppConfig, ConfigError, build_backend, build_guardrail, load_app_config
from .pipeline import CommandAssessment, GuardDecision, Guardrail, Reason, TurnResult
from .policy import (
    BackendRoles,
    GuardPolicy,
    TaskLevel,
    TaskProfile,
    apply_task_profile,
    load_task_profiles,
)


def __getattr__(name):
    # create_app pulls in the HTTP stack; load it only when asked for.
    if name == "create_app":
        from .service import create_app

        return create_app
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

__all__ = [
    "AppConfig",
    "AuditLog",
    "AuditRecord",
    "BackendRoles",
    "CommandAssessment",
    "ConfigError",
    "GuardDecision",
    "GuardPolicy",
    "Guardrail",
    "Reason",
    "StoreUnavailable",
    "TaskLevel",
    "TaskProfile",
    "TurnResult",
    "apply_task_profile",
    "build_backend",
    "build_guardrail",
    "create_app",
    "load_app_config",
    "load_task_profiles",
]

"""Guard policies and task profiles.

A policy bundles the exposure thresholds, the behavior floor, the vehicle
profile, and the per-role backend assignments. Task profiles describe how
sensitive / drive-related / alignment-critical a task is; applying one
shifts the policy thresholds by documented step offsets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from typing import Optional

from ..commands import DEFAULT_PROFILE, VehicleProfile


class TaskLevel(Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    NA = "N/A"

    @classmethod
    def parse(cls, value: str) -> "TaskLevel":
        normalized = value.strip()
        if normalized.upper() in ("NA", "N/A"):
            return cls.NA
        for level in cls:
            if level.value.lower() == normalized.lower():
                return level
        raise ValueError(f"unknown task level {value!r}")


@dataclass(frozen=True)
class TaskProfile:
    """How demanding a task is along the three safety dimensions."""

    task: str
    sensitivity: TaskLevel
    drive_relatedness: TaskLevel
    value_alignment: TaskLevel


def load_task_profiles(path=None) -> dict[str, TaskProfile]:
    """Task presets keyed by task name (shipped table by default)."""
    if path is None:
        text = resources.files("roadguard.data").joinpath("task_profiles.json").read_text("utf-8")
        entries = json.loads(text)
    else:
        with open(path, "r", encoding="utf-8") as handle:
            entries = json.load(handle)
    profiles = {}
    for entry in entries:
        profile = TaskProfile(
            task=entry["task"],
            sensitivity=TaskLevel.parse(entry["sensitivity"]),
            drive_relatedness=TaskLevel.parse(entry["drive_relatedness"]),
            value_alignment=TaskLevel.parse(entry["value_alignment"]),
        )
        profiles[profile.task] = profile
    return profiles


@dataclass(frozen=True)
class BackendRoles:
    """Named backend assignment per agent role; None means offline default."""

    command: Optional[str] = None
    data: Optional[str] = None
    alignment: Optional[str] = None


REDACTION_MODES = ("placeholder", "remove")
COMMAND_ACTIONS = ("block", "clamp")


@dataclass(frozen=True)
class GuardPolicy:
    """Thresholds and wiring for one guardrail deployment.

    Exposure below the redact threshold passes untouched; between the
    thresholds the text is redacted and forwarded; at or above the block
    threshold nothing is forwarded at all.
    """

    exposure_redact_threshold: float = 0.1
    exposure_block_threshold: float = 0.5
    behavior_min: float = -0.5
    vehicle_profile: VehicleProfile = DEFAULT_PROFILE
    redaction_mode: str = "placeholder"
    command_action: str = "block"
    roles: BackendRoles = BackendRoles()
    task_profile: Optional[str] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.exposure_redact_threshold <= 1.0:
            raise ValueError("exposure_redact_threshold must lie in [0, 1]")
        if not 0.0 <= self.exposure_block_threshold <= 1.0:
            raise ValueError("exposure_block_threshold must lie in [0, 1]")
        if self.exposure_redact_threshold > self.exposure_block_threshold:
            raise ValueError("redact threshold must not exceed block threshold")
        if not -1.0 <= self.behavior_min <= 1.0:
            raise ValueError("behavior_min must lie in [-1, 1]")
        if self.redaction_mode not in REDACTION_MODES:
            raise ValueError(f"unknown redaction mode {self.redaction_mode!r}")
        if self.command_action not in COMMAND_ACTIONS:
            raise ValueError(f"unknown command action {self.command_action!r}")


#: One adjustment step for task-profile threshold offsets.
THRESHOLD_STEP = 0.1


def apply_task_profile(policy: GuardPolicy, task: TaskProfile) -> GuardPolicy:
    """Shift policy thresholds for a task.

    High sensitivity lowers the block threshold one step (never below the
    redact threshold); high value-alignment need raises the behavior floor
    one step (never above 1).
    """
    block = policy.exposure_block_threshold
    if task.sensitivity is TaskLevel.HIGH:
        block = max(policy.exposure_redact_threshold, block - THRESHOLD_STEP)
    behavior_min = policy.behavior_min
    if task.value_alignment is TaskLevel.HIGH:
        behavior_min = min(1.0, behavior_min + THRESHOLD_STEP)
    return replace(
        policy,
        exposure_block_threshold=block,
        behavior_min=behavior_min,
        task_profile=task.task,
    )

"""Configuration file loading and guardrail assembly.

The config file is a single JSON object covering the policy, the vehicle
profile, backend definitions, role assignments, rule/table paths, and the
audit log path. See README for the full schema and an example.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

from ..backends import BackendConfig, HttpBackend, ScriptedBackend
from ..behavior import RuleBasedScorer, default_scorer
from ..commands import VehicleProfile
from ..sensitive import DetectionRuleSet, default_ruleset
from .audit import AuditLog
from .pipeline import Guardrail
from .policy import BackendRoles, GuardPolicy, apply_task_profile, load_task_profiles


class ConfigError(Exception):
    """The configuration file cannot be used."""


@dataclass
class AppConfig:
    policy: GuardPolicy
    backend_configs: dict[str, dict] = field(default_factory=dict)
    ruleset_path: Optional[str] = None
    behavior_rules_path: Optional[str] = None
    audit_path: str = "audit.jsonl"
    auth_token_env: Optional[str] = None
    vocab_path: Optional[str] = None
    base_dir: str = "."


def _build_policy(data: dict, base_dir: str) -> GuardPolicy:
    policy_data = data.get("policy", {})
    profile_data = data.get("vehicle_profile")
    profile = VehicleProfile.from_dict(profile_data) if profile_data else VehicleProfile()
    roles_data = data.get("roles", {})
    roles = BackendRoles(
        command=roles_data.get("command"),
        data=roles_data.get("data"),
        alignment=roles_data.get("alignment"),
    )
    try:
        policy = GuardPolicy(
            exposure_redact_threshold=policy_data.get("exposure_redact_threshold", 0.1),
            exposure_block_threshold=policy_data.get("exposure_block_threshold", 0.5),
            behavior_min=policy_data.get("behavior_min", -0.5),
            vehicle_profile=profile,
            redaction_mode=policy_data.get("redaction_mode", "placeholder"),
            command_action=policy_data.get("command_action", "block"),
            roles=roles,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    task_name = policy_data.get("task_profile")
    if task_name:
        presets = load_task_profiles()
        if task_name not in presets:
            raise ConfigError(f"unknown task profile {task_name!r}")
        policy = apply_task_profile(policy, presets[task_name])
    return policy


def _resolve(base_dir: str, path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def load_app_config(path) -> AppConfig:
    """Parse the JSON config file into an AppConfig."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc

    base_dir = os.path.dirname(os.path.abspath(os.fspath(path)))
    policy = _build_policy(data, base_dir)

    backend_configs = {}
    for entry in data.get("backends", []):
        name = entry.get("name")
        if not name:
            raise ConfigError("every backend needs a name")
        if name in backend_configs:
            raise ConfigError(f"duplicate backend name {name!r}")
        backend_configs[name] = dict(entry)

    return AppConfig(
        policy=policy,
        backend_configs=backend_configs,
        ruleset_path=_resolve(base_dir, data.get("ruleset_path")),
        behavior_rules_path=_resolve(base_dir, data.get("behavior_rules_path")),
        audit_path=_resolve(base_dir, data.get("audit_path")) or os.path.join(base_dir, "audit.jsonl"),
        auth_token_env=data.get("auth_token_env"),
        vocab_path=_resolve(base_dir, data.get("vocab_path")),
        base_dir=base_dir,
    )


def build_backend(entry: dict, tokenizer=None, base_dir: Optional[str] = None):
    """Instantiate one backend from its config entry."""
    kind = entry.get("type", "http")
    if kind == "http":
        try:
            config = BackendConfig(
                name=entry["name"],
                endpoint=entry["endpoint"],
                model=entry.get("model", ""),
                auth_env=entry.get("auth_env"),
                timeout_s=entry.get("timeout_s", 30.0),
                max_retries=entry.get("max_retries", 2),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad backend entry {entry.get('name')!r}: {exc}") from exc
        return HttpBackend(config, tokenizer=tokenizer)
    if kind == "scripted":
        fixtures = {}
        fixtures_path = entry.get("fixtures_path")
        if fixtures_path:
            if base_dir and not os.path.isabs(fixtures_path):
                fixtures_path = os.path.join(base_dir, fixtures_path)
            try:
                with open(fixtures_path, "r", encoding="utf-8") as handle:
                    fixtures = json.load(handle)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot load fixtures {fixtures_path}: {exc}") from exc
        return ScriptedBackend(
            fixtures=fixtures,
            tokenizer=tokenizer,
            latency_s=entry.get("latency_s", 0.0),
            name=entry["name"],
            default_reply=entry.get("default_reply"),
        )
    raise ConfigError(f"unknown backend type {kind!r}")


def build_guardrail(config: AppConfig, tokenizer=None, fsync: bool = True) -> Guardrail:
    """Assemble a ready-to-serve Guardrail from an AppConfig."""
    if tokenizer is None and config.vocab_path:
        from ..tokenizer import BpeTokenizer

        tokenizer = BpeTokenizer.from_rank_file(config.vocab_path)
    ruleset = (
        DetectionRuleSet.from_file(config.ruleset_path)
        if config.ruleset_path else default_ruleset()
    )
    scorer = (
        RuleBasedScorer.from_file(config.behavior_rules_path)
        if config.behavior_rules_path else default_scorer()
    )
    backends = {
        name: build_backend(entry, tokenizer=tokenizer, base_dir=config.base_dir)
        for name, entry in config.backend_configs.items()
    }
    audit = AuditLog(config.audit_path, fsync=fsync)
    return Guardrail(
        policy=config.policy,
        ruleset=ruleset,
        scorer=scorer,
        backends=backends,
        audit=audit,
    )

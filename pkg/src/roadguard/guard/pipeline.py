"""The guardrail pipeline: outbound inspection, completion, inbound inspection.

Outbound, the exposure score of the prompt decides allow / redact / block.
Inbound, every command in the reply is validated against the vehicle
profile (blocking or clamping per policy) and the reply's behavior score
must clear the policy floor. Every stage appends an audit record; refusal
payloads carry reason codes and safe summaries, never detected spans.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .. import sensitive
from ..backends import BackendError, ChatMessage, CompletionParams, UsageStats
from ..behavior import (
    BehaviorScore,
    JudgeUnavailable,
    UnparsableVerdict,
    default_scorer,
    score_text,
)
from ..commands import (
    CommandEnvelope,
    MalformedCommand,
    ValidationResult,
    clamp_to_safe,
    extract_commands,
    serialize_command,
    validate_command,
)
from ..sensitive import DetectionRuleSet, ExposureReport, exposure_report, redact
from .audit import AuditLog, AuditRecord, now, text_digest
from .policy import GuardPolicy

logger = logging.getLogger(__name__)

# Machine-readable reason codes.
EXPOSURE_REDACT = "exposure_redact"
EXPOSURE_BLOCK = "exposure_block"
COMMAND_VIOLATION = "command_violation"
COMMAND_CLAMPED = "command_clamped"
ALIGNMENT_FAILURE = "alignment_failure"
BACKEND_FAILURE = "backend_failure"


@dataclass(frozen=True)
class Reason:
    code: str
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CommandAssessment:
    """Validation (and clamp, if any) of one command found in a reply."""

    envelope: CommandEnvelope
    result: ValidationResult
    clamped: Optional[CommandEnvelope] = None


@dataclass(frozen=True)
class GuardDecision:
    verdict: str  # "allow" | "redact" | "block"
    stage: str    # "outbound" | "inbound"
    reasons: tuple[Reason, ...] = ()
    transformed: Optional[str] = None
    exposure: Optional[ExposureReport] = None
    behavior: Optional[BehaviorScore] = None
    commands: tuple[CommandAssessment, ...] = ()

    def __post_init__(self) -> None:
        if self.verdict not in ("allow", "redact", "block"):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == "redact" and self.transformed is None:
            raise ValueError("redact decisions must carry the transformed payload")
        if self.verdict == "block" and not self.reasons:
            raise ValueError("block decisions must carry at least one reason")

    def reason_codes(self) -> tuple[str, ...]:
        return tuple(r.code for r in self.reasons)


@dataclass(frozen=True)
class TurnResult:
    """Outcome of one pipeline turn: a delivered reply or a refusal."""

    reply: Optional[ChatMessage]
    refusal: Optional[dict]
    outbound: GuardDecision
    inbound: Optional[GuardDecision] = None
    usage: Optional[UsageStats] = None

    @property
    def delivered(self) -> bool:
        return self.reply is not None


def _refusal(stage: str, reasons: Sequence[Reason], summary: str) -> dict:
    # Reason payloads carry scores and codes only, never matched spans.
    return {
        "stage": stage,
        "verdict": "block",
        "reasons": [{"code": r.code, "detail": r.detail} for r in reasons],
        "summary": summary,
    }


class Guardrail:
    """Mediates one vehicle session's traffic against a policy.

    Policies, rule sets, and scorers are immutable; a Guardrail instance
    is safe to share across concurrent sessions. The audit log is the
    only serialization point.
    """

    def __init__(
        self,
        policy: GuardPolicy,
        ruleset: Optional[DetectionRuleSet] = None,
        scorer=None,
        backends: Optional[Mapping[str, object]] = None,
        audit: Optional[AuditLog] = None,
        weights=None,
    ):
        self.policy = policy
        self.ruleset = ruleset if ruleset is not None else sensitive.default_ruleset()
        self.scorer = scorer if scorer is not None else default_scorer()
        self.backends = dict(backends or {})
        self.audit = audit
        self.weights = weights

    # -- outbound ---------------------------------------------------

    def inspect_outbound(self, text: str) -> tuple[GuardDecision, Optional[str]]:
        """Score the outbound text; allow, redact, or block it."""
        report = exposure_report(text, self.ruleset, self.weights)
        redact_at = self.policy.exposure_redact_threshold
        block_at = self.policy.exposure_block_threshold

        if report.score >= block_at:
            decision = GuardDecision(
                verdict="block",
                stage="outbound",
                reasons=(Reason(EXPOSURE_BLOCK, {
                    "score": report.score,
                    "threshold": block_at,
                    "categories": [c.name for c in report.present],
                }),),
                exposure=report,
            )
            return decision, None

        if report.score >= redact_at:
            cleaned = redact(text, report.detections, self.policy.redaction_mode)
            decision = GuardDecision(
                verdict="redact",
                stage="outbound",
                reasons=(Reason(EXPOSURE_REDACT, {
                    "score": report.score,
                    "threshold": redact_at,
                    "categories": [c.name for c in report.present],
                }),),
                transformed=cleaned,
                exposure=report,
            )
            return decision, cleaned

        decision = GuardDecision(verdict="allow", stage="outbound", exposure=report)
        return decision, text

    # -- inbound ----------------------------------------------------

    def inspect_inbound(self, text: str) -> tuple[GuardDecision, Optional[str]]:
        """Validate commands and behavior of a backend reply."""
        reasons: list[Reason] = []
        assessments: list[CommandAssessment] = []
        transformed = text
        block = False

        try:
            envelopes = extract_commands(text)
        except MalformedCommand as exc:
            envelopes = []
            block = True
            reasons.append(Reason(COMMAND_VIOLATION, {"malformed": str(exc)}))

        replacements: list[tuple[tuple[int, int], str]] = []
        for env in envelopes:
            result = validate_command(env, self.policy.vehicle_profile)
            if result.valid:
                assessments.append(CommandAssessment(envelope=env, result=result))
                continue
            if self.policy.command_action == "clamp":
                clamp = clamp_to_safe(env, self.policy.vehicle_profile)
                assessments.append(CommandAssessment(
                    envelope=env, result=result, clamped=clamp.envelope,
                ))
                reasons.append(Reason(COMMAND_CLAMPED, {
                    "violations": [v.describe() for v in result.violations],
                    "changes": [
                        {"field": c.field, "before": c.before, "after": c.after}
                        for c in clamp.changes
                    ],
                }))
                if env.source_span is not None:
                    replacements.append((env.source_span, serialize_command(clamp.envelope)))
            else:
                assessments.append(CommandAssessment(envelope=env, result=result))
                reasons.append(Reason(COMMAND_VIOLATION, {
                    "violations": [v.describe() for v in result.violations],
                }))
                block = True

        if replacements:
            for (start, end), replacement in sorted(replacements, reverse=True):
                transformed = transformed[:start] + replacement + transformed[end:]

        # A reply whose alignment cannot be assessed is not delivered.
        try:
            behavior = score_text(self.scorer, text) if text else BehaviorScore(0.0)
        except (JudgeUnavailable, UnparsableVerdict) as exc:
            behavior = None
            reasons.append(Reason(ALIGNMENT_FAILURE, {"error": type(exc).__name__}))
            block = True
        if behavior is not None and behavior.value < self.policy.behavior_min:
            reasons.append(Reason(ALIGNMENT_FAILURE, {
                "score": behavior.value,
                "behavior_min": self.policy.behavior_min,
                "rationale": list(behavior.rationale),
            }))
            block = True

        if block:
            decision = GuardDecision(
                verdict="block",
                stage="inbound",
                reasons=tuple(reasons),
                behavior=behavior,
                commands=tuple(assessments),
            )
            return decision, None

        decision = GuardDecision(
            verdict="allow",
            stage="inbound",
            reasons=tuple(reasons),
            transformed=transformed if transformed != text else None,
            behavior=behavior,
            commands=tuple(assessments),
        )
        return decision, transformed

    # -- full turn --------------------------------------------------

    def _audit(self, record: AuditRecord) -> None:
        if self.audit is not None:
            self.audit.append(record)

    def _data_backend(self):
        name = self.policy.roles.data
        if name is None:
            return None
        return self.backends.get(name)

    def run_turn(
        self,
        session_id: str,
        messages: Sequence[ChatMessage],
        params: Optional[CompletionParams] = None,
    ) -> TurnResult:
        """Outbound inspection, completion, inbound inspection; fully audited."""
        if not messages:
            raise ValueError("turn needs at least one message")
        outbound_text = "\n".join(m.content for m in messages)
        out_decision, forwardable = self.inspect_outbound(outbound_text)

        self._audit(AuditRecord(
            ts=now(),
            seq=0,
            session_id=session_id,
            direction="outbound",
            text_sha256=text_digest(outbound_text),
            verdict=out_decision.verdict,
            reasons=out_decision.reason_codes(),
            exposure_score=out_decision.exposure.score if out_decision.exposure else None,
            categories=tuple(c.name for c in out_decision.exposure.present) if out_decision.exposure else (),
            redacted_text=out_decision.transformed,
        ))

        if out_decision.verdict == "block":
            return TurnResult(
                reply=None,
                refusal=_refusal("outbound", out_decision.reasons,
                                 "prompt blocked by the data-safety check"),
                outbound=out_decision,
            )

        if out_decision.verdict == "redact":
            forwarded = []
            for m in messages:
                report = exposure_report(m.content, self.ruleset, self.weights)
                cleaned = redact(m.content, report.detections, self.policy.redaction_mode)
                forwarded.append(ChatMessage(role=m.role, content=cleaned))
        else:
            forwarded = list(messages)

        backend = self._data_backend()
        if backend is None:
            reason = Reason(BACKEND_FAILURE, {"error": "no data-role backend configured"})
            self._audit(AuditRecord(
                ts=now(), seq=0, session_id=session_id, direction="inbound",
                text_sha256=text_digest(""), verdict="block", reasons=(BACKEND_FAILURE,),
            ))
            return TurnResult(
                reply=None,
                refusal=_refusal("inbound", [reason], "no backend is configured for completions"),
                outbound=out_decision,
            )

        try:
            reply, usage = backend.complete(forwarded, params)
        except BackendError as exc:
            logger.warning("backend %s failed: %s", getattr(backend, "name", "?"), exc)
            reason = Reason(BACKEND_FAILURE, {"error": type(exc).__name__})
            self._audit(AuditRecord(
                ts=now(), seq=0, session_id=session_id, direction="inbound",
                text_sha256=text_digest(""), verdict="block", reasons=(BACKEND_FAILURE,),
                backend=getattr(backend, "name", None),
            ))
            return TurnResult(
                reply=None,
                refusal=_refusal("inbound", [reason], "backend failure after retries"),
                outbound=out_decision,
            )

        in_decision, safe_text = self.inspect_inbound(reply.content)

        command_results = [a.result for a in in_decision.commands]
        self._audit(AuditRecord(
            ts=now(),
            seq=0,
            session_id=session_id,
            direction="inbound",
            text_sha256=text_digest(reply.content),
            verdict=in_decision.verdict,
            reasons=in_decision.reason_codes(),
            behavior_score=in_decision.behavior.value if in_decision.behavior else None,
            command_valid=(all(r.valid for r in command_results) if command_results else None),
            command_violations=tuple(
                v.describe() for r in command_results for v in r.violations
            ),
            backend=getattr(backend, "name", None),
            prompt_tokens=usage.prompt_tokens,
            completion_tokens=usage.completion_tokens,
            latency_s=usage.latency_s,
            redacted_text=in_decision.transformed,
        ))

        if in_decision.verdict == "block":
            return TurnResult(
                reply=None,
                refusal=_refusal("inbound", in_decision.reasons,
                                 "reply blocked by the safety checks"),
                outbound=out_decision,
                inbound=in_decision,
                usage=usage,
            )

        return TurnResult(
            reply=ChatMessage(role="assistant", content=safe_text),
            refusal=None,
            outbound=out_decision,
            inbound=in_decision,
            usage=usage,
        )

"""System-prompt profiling: token cost, sensitive-data usage, alignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from ..behavior import default_scorer, score_text, to_alignment_scale
from ..sensitive import (
    DetectionRuleSet,
    ExposureReport,
    SensitiveCategory,
    category_counts,
    exposure_report,
)
from .corpus import MethodPrompt


@dataclass(frozen=True)
class PromptProfile:
    """One method's row: token count, exposure, alignment score."""

    method: str
    model: str
    token_count: int
    approx_tokens: bool
    exposure: ExposureReport
    counts: dict
    alignment: int
    safety_reported: Optional[str] = None


def profile_prompt(
    method: MethodPrompt,
    tokenizer=None,
    rules: Optional[DetectionRuleSet] = None,
    scorer=None,
    weights=None,
) -> PromptProfile:
    """Profile one system prompt.

    Token counts come from the tokenizer when one is given; otherwise a
    whitespace approximation is used and flagged as such.
    """
    if tokenizer is not None:
        token_count = tokenizer.count(method.prompt)
        approx = False
    else:
        token_count = len(method.prompt.split())
        approx = True

    report = exposure_report(method.prompt, rules, weights)
    score = score_text(scorer if scorer is not None else default_scorer(), method.prompt)
    return PromptProfile(
        method=method.name,
        model=method.model,
        token_count=token_count,
        approx_tokens=approx,
        exposure=report,
        counts=category_counts(report.detections),
        alignment=to_alignment_scale(score),
        safety_reported=method.safety_reported,
    )


def profile_corpus(
    methods: Sequence[MethodPrompt],
    tokenizer=None,
    rules: Optional[DetectionRuleSet] = None,
    scorer=None,
    weights=None,
) -> list[PromptProfile]:
    return [
        profile_prompt(method, tokenizer=tokenizer, rules=rules, scorer=scorer, weights=weights)
        for method in methods
    ]


def usage_counts(profiles: Sequence[PromptProfile]) -> dict[str, dict[SensitiveCategory, int]]:
    """Per-method occurrence counts, ready for usage_matrix normalization."""
    return {profile.method: profile.counts for profile in profiles}

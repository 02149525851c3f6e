"""Behavior scoring and expected-behavior estimation.

A behavior score rates a text on [-1, 1]: +1 is a strongly positive
manifestation of the target conduct, -1 strongly negative. The default
scorer is an offline rule table (pattern, contribution) whose matched
contributions are summed and clamped; a judge scorer delegates to an LLM
backend and parses its numeric verdict.

``estimate_expected_behavior`` samples k conversation continuations from
a prompt and averages their scores; ``check_alignability`` tests whether
any candidate prompt drives that average below a threshold γ+ε.
"""

from __future__ import annotations

import json
import math
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Mapping, Optional, Sequence

from .sensitive import DetectionRuleSet, SensitiveCategory, exposure_score, detect


class JudgeUnavailable(Exception):
    """The judge backend failed while scoring."""


class UnparsableVerdict(Exception):
    """The judge replied, but no numeric verdict could be read."""


class SamplerExhausted(Exception):
    """A scripted sampler ran out of fixtures."""


def _clamp(value: float, lo: float = -1.0, hi: float = 1.0) -> float:
    return min(max(value, lo), hi)


@dataclass(frozen=True)
class BehaviorScore:
    value: float
    rationale: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not -1.0 <= self.value <= 1.0:
            raise ValueError(f"behavior score {self.value} outside [-1, 1]")


@dataclass(frozen=True)
class BehaviorRule:
    rule_id: str
    pattern: re.Pattern
    contribution: float

    def __post_init__(self) -> None:
        if not -1.0 <= self.contribution <= 1.0:
            raise ValueError(f"rule {self.rule_id!r} contribution outside [-1, 1]")


class RuleBasedScorer:
    """Offline deterministic scorer: sum of matched contributions, clamped."""

    kind = "rule_based"

    def __init__(self, rules: Sequence[BehaviorRule]):
        self.rules = tuple(rules)

    def score(self, text: str) -> BehaviorScore:
        matched = [rule for rule in self.rules if rule.pattern.search(text)]
        total = _clamp(sum(rule.contribution for rule in matched))
        return BehaviorScore(value=total, rationale=tuple(rule.rule_id for rule in matched))

    @classmethod
    def from_dict(cls, data: dict) -> "RuleBasedScorer":
        rules = []
        for entry in data.get("rules", []):
            flags = 0 if entry.get("case_sensitive", False) else re.IGNORECASE
            try:
                pattern = re.compile(entry["pattern"], flags)
            except re.error as exc:
                raise ValueError(f"bad pattern in rule {entry.get('id')!r}: {exc}") from exc
            rules.append(BehaviorRule(
                rule_id=entry["id"],
                pattern=pattern,
                contribution=float(entry["contribution"]),
            ))
        return cls(rules)

    @classmethod
    def from_file(cls, path) -> "RuleBasedScorer":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


_default_scorer: Optional[RuleBasedScorer] = None


def default_scorer() -> RuleBasedScorer:
    """The shipped driving-conduct rule table."""
    global _default_scorer
    if _default_scorer is None:
        text = resources.files("roadguard.data").joinpath("behavior_rules.json").read_text("utf-8")
        _default_scorer = RuleBasedScorer.from_dict(json.loads(text))
    return _default_scorer


_VERDICT_RE = re.compile(r"-?\d+(?:\.\d+)?")


def default_judge_template() -> str:
    return resources.files("roadguard.data").joinpath("judge_prompt.txt").read_text("utf-8")


class JudgeScorer:
    """Scores via an LLM backend; verdicts are clamped into [-1, 1]."""

    kind = "judge"

    def __init__(self, backend, template: Optional[str] = None):
        self.backend = backend
        self.template = template if template is not None else default_judge_template()

    def score(self, text: str) -> BehaviorScore:
        from .backends import BackendError, ChatMessage

        messages = [
            ChatMessage(role="system", content="You rate texts. Reply with one number."),
            ChatMessage(role="user", content=self.template.format(text=text)),
        ]
        try:
            reply, _usage = self.backend.complete(messages)
        except BackendError as exc:
            raise JudgeUnavailable(str(exc)) from exc
        match = _VERDICT_RE.search(reply.content)
        if match is None:
            raise UnparsableVerdict(f"no number in judge reply: {reply.content[:80]!r}")
        return BehaviorScore(value=_clamp(float(match.group(0))), rationale=(reply.content.strip()[:200],))


def score_text(scorer, text: str) -> BehaviorScore:
    """Score ``text`` with whatever scorer is given (rule table or judge)."""
    if not text:
        raise ValueError("cannot score empty text")
    return scorer.score(text)


#: A continuation source: called with (prompt, depth), returns the sampled
#: continuation text for one independent draw.
ContinuationSampler = Callable[[str, int], str]


class ScriptedSampler:
    """Replays fixture continuations in order; raises when they run out."""

    def __init__(self, continuations: Sequence[str]):
        self._fixtures = list(continuations)
        self._index = 0
        self._lock = threading.Lock()

    def __call__(self, prompt: str, depth: int) -> str:
        with self._lock:
            if self._index >= len(self._fixtures):
                raise SamplerExhausted(
                    f"scripted sampler has only {len(self._fixtures)} fixtures"
                )
            value = self._fixtures[self._index]
            self._index += 1
            return value


def backend_sampler(backend, nudge: str = "Continue.") -> ContinuationSampler:
    """Continuation source backed by a chat backend.

    Each draw runs ``depth`` assistant turns conditioned on the prompt
    (with a fixed user nudge between turns) and returns the concatenated
    assistant texts.
    """
    from .backends import ChatMessage

    def sample(prompt: str, depth: int) -> str:
        messages = [ChatMessage(role="system", content=prompt)]
        parts: list[str] = []
        for _ in range(depth):
            messages.append(ChatMessage(role="user", content=nudge))
            reply, _usage = backend.complete(messages)
            messages.append(reply)
            parts.append(reply.content)
        return "\n".join(parts)

    return sample


@dataclass(frozen=True)
class ExpectationEstimate:
    """Monte-Carlo estimate of expected behavior over k continuations."""

    mean: float
    samples: tuple[float, ...]
    depth: int

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("estimate needs at least one sample")
        expected = sum(self.samples) / len(self.samples)
        if self.mean != expected:
            raise ValueError("mean is not the arithmetic mean of the samples")

    @property
    def sample_count(self) -> int:
        return len(self.samples)


def _score_or_zero(scorer, text: str) -> float:
    # An empty continuation carries no evidence either way.
    if not text:
        return 0.0
    return scorer.score(text).value


def estimate_expected_behavior(
    scorer,
    sampler: ContinuationSampler,
    prompt: str,
    depth: int,
    k: int,
    max_workers: int = 1,
) -> ExpectationEstimate:
    """Draw k independent depth-turn continuations and average their scores.

    Depth 0 scores the prompt itself (no sampling); otherwise each sampled
    continuation is scored in full. The mean is order-independent, so
    sampling may run concurrently up to ``max_workers``.
    """
    if k < 1:
        raise ValueError("sample count k must be at least 1")
    if depth < 0:
        raise ValueError("conversation depth must be non-negative")

    if depth == 0:
        value = _score_or_zero(scorer, prompt)
        samples = tuple([value] * k)
        return ExpectationEstimate(mean=sum(samples) / k, samples=samples, depth=depth)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            texts = list(pool.map(lambda _: sampler(prompt, depth), range(k)))
    else:
        texts = [sampler(prompt, depth) for _ in range(k)]
    samples = tuple(_score_or_zero(scorer, text) for text in texts)
    return ExpectationEstimate(mean=sum(samples) / k, samples=samples, depth=depth)


def estimate_expected_exposure(
    sampler: ContinuationSampler,
    prompt: str,
    depth: int,
    k: int,
    rules: Optional[DetectionRuleSet] = None,
    weights: Optional[Mapping[SensitiveCategory, float]] = None,
) -> ExpectationEstimate:
    """Sampled counterpart of the presence-based exposure score.

    Mean exposure of k sampled continuations; same sampler protocol as
    the behavior estimator.
    """
    if k < 1:
        raise ValueError("sample count k must be at least 1")
    if depth < 0:
        raise ValueError("conversation depth must be non-negative")
    texts = [prompt] * k if depth == 0 else [sampler(prompt, depth) for _ in range(k)]
    samples = tuple(exposure_score(detect(text, rules), weights) for text in texts)
    return ExpectationEstimate(mean=sum(samples) / k, samples=samples, depth=depth)


@dataclass(frozen=True)
class AlignabilityVerdict:
    gamma: float
    epsilon: float
    holds: bool
    witness_prompt: Optional[str]
    best_mean: float


def check_alignability(
    candidates: Sequence[tuple[str, ExpectationEstimate]],
    gamma: float,
    epsilon: float,
) -> AlignabilityVerdict:
    """Does any candidate prompt's expected behavior fall below γ+ε?

    The witness is the candidate with the lowest mean (first on ties).
    """
    if not candidates:
        raise ValueError("need at least one candidate estimate")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")

    best_prompt, best = min(candidates, key=lambda item: item[1].mean)
    holds = best.mean < gamma + epsilon
    return AlignabilityVerdict(
        gamma=gamma,
        epsilon=epsilon,
        holds=holds,
        witness_prompt=best_prompt if holds else None,
        best_mean=best.mean,
    )


def to_alignment_scale(score) -> int:
    """Map a behavior score onto the whole-number 0..100 scale (half-up)."""
    value = score.value if isinstance(score, BehaviorScore) else float(score)
    if not -1.0 <= value <= 1.0:
        raise ValueError(f"behavior value {value} outside [-1, 1]")
    return int(math.floor(50.0 * (value + 1.0) + 0.5))

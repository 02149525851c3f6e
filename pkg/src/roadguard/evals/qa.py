"""QA benchmark running, binary grading, aggregation, judge weighting."""

from __future__ import annotations

import hashlib
import json
import re
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

from ..backends import BackendError, ChatMessage, CompletionParams
from ..behavior import UnparsableVerdict
from ..sensitive import ZeroWeightSum
from .corpus import MethodPrompt, QaRecord

_NUMBER_WORDS = {
    "zero": "0", "one": "1", "two": "2", "three": "3", "four": "4",
    "five": "5", "six": "6", "seven": "7", "eight": "8", "nine": "9",
    "ten": "10", "eleven": "11", "twelve": "12", "thirteen": "13",
    "fourteen": "14", "fifteen": "15", "sixteen": "16", "seventeen": "17",
    "eighteen": "18", "nineteen": "19", "twenty": "20",
}

_YES_WORDS = {"yes", "yeah", "yep", "true", "correct", "affirmative"}
_NO_WORDS = {"no", "nope", "false", "incorrect", "negative"}
_ARTICLES = {"a", "an", "the"}

_PUNCT_TABLE = str.maketrans({ch: " " for ch in string.punctuation})


def normalize_answer(text: str) -> list[str]:
    """Casefold, strip punctuation/articles, canonicalize numbers and yes/no."""
    tokens = text.casefold().translate(_PUNCT_TABLE).split()
    normalized = []
    for token in tokens:
        if token in _ARTICLES:
            continue
        if token in _NUMBER_WORDS:
            token = _NUMBER_WORDS[token]
        elif token in _YES_WORDS:
            token = "yes"
        elif token in _NO_WORDS:
            token = "no"
        normalized.append(token)
    return normalized


def _contains_span(haystack: list[str], needle: list[str]) -> bool:
    if not needle or len(needle) > len(haystack):
        return False
    for i in range(len(haystack) - len(needle) + 1):
        if haystack[i:i + len(needle)] == needle:
            return True
    return False


_JUDGE_YESNO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def grade_answer(predicted: str, gold: str, mode: str = "lexical", judge=None) -> bool:
    """Binary grade of a predicted answer against the gold answer.

    Lexical mode (default, offline): correct iff the normalized forms are
    equal or the gold appears as a whole-token span in the prediction.
    Judge mode asks the given backend for a yes/no verdict.
    """
    if not gold:
        raise ValueError("gold answer must be non-empty")
    if mode == "lexical":
        pred_tokens = normalize_answer(predicted)
        gold_tokens = normalize_answer(gold)
        return pred_tokens == gold_tokens or _contains_span(pred_tokens, gold_tokens)
    if mode == "judge":
        if judge is None:
            raise ValueError("judge mode needs a judge backend")
        messages = [
            ChatMessage(role="system", content=(
                "You grade question answering. Reply with exactly 'yes' if the "
                "candidate answer matches the reference answer, else 'no'."
            )),
            ChatMessage(role="user", content=(
                f"Reference answer: {gold}\nCandidate answer: {predicted}\nSame?"
            )),
        ]
        reply, _usage = judge.complete(messages)
        match = _JUDGE_YESNO_RE.search(reply.content)
        if match is None:
            raise UnparsableVerdict(f"judge reply has no yes/no: {reply.content[:80]!r}")
        return match.group(1).lower() == "yes"
    raise ValueError(f"unknown grading mode {mode!r}")


@dataclass(frozen=True)
class QuestionResult:
    qid: str
    category: str
    question: str
    gold: str
    predicted: Optional[str]
    correct: bool
    prompt_tokens: int
    completion_tokens: int
    latency_s: float
    error: Optional[str] = None


@dataclass(frozen=True)
class RunMeta:
    """Reproducibility metadata attached to every report."""

    seed: Optional[int]
    config_hash: str
    started_at: float
    finished_at: float


def run_config_hash(settings: Mapping) -> str:
    canonical = json.dumps(dict(settings), sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def run_qa(
    method: MethodPrompt,
    records: Sequence[QaRecord],
    backend,
    params: Optional[CompletionParams] = None,
    grade_mode: str = "lexical",
    judge=None,
    max_workers: int = 4,
    seed: Optional[int] = None,
    clock: Callable[[], float] = time.time,
) -> tuple[list[QuestionResult], RunMeta]:
    """Ask every record with the method's system prompt prepended.

    Questions run concurrently up to ``max_workers``; results come back
    ordered by question id regardless of interleaving. A backend failure
    on one question marks it incorrect with an error annotation and the
    run continues.
    """
    if not records:
        raise ValueError("QA run needs at least one record")

    started = clock()

    def ask(record: QaRecord) -> QuestionResult:
        messages = [
            ChatMessage(role="system", content=method.prompt),
            ChatMessage(role="user", content=record.question),
        ]
        try:
            reply, usage = backend.complete(messages, params)
        except BackendError as exc:
            return QuestionResult(
                qid=record.qid, category=record.category, question=record.question,
                gold=record.answer, predicted=None, correct=False,
                prompt_tokens=0, completion_tokens=0, latency_s=0.0,
                error=type(exc).__name__,
            )
        try:
            correct = grade_answer(reply.content, record.answer, mode=grade_mode, judge=judge)
        except (BackendError, UnparsableVerdict) as exc:
            return QuestionResult(
                qid=record.qid, category=record.category, question=record.question,
                gold=record.answer, predicted=reply.content, correct=False,
                prompt_tokens=usage.prompt_tokens, completion_tokens=usage.completion_tokens,
                latency_s=usage.latency_s, error=type(exc).__name__,
            )
        return QuestionResult(
            qid=record.qid, category=record.category, question=record.question,
            gold=record.answer, predicted=reply.content, correct=correct,
            prompt_tokens=usage.prompt_tokens, completion_tokens=usage.completion_tokens,
            latency_s=usage.latency_s,
        )

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(ask, records))
    else:
        results = [ask(record) for record in records]
    results.sort(key=lambda r: r.qid)

    meta = RunMeta(
        seed=seed,
        config_hash=run_config_hash({
            "method": method.name,
            "backend": getattr(backend, "name", "?"),
            "n": len(records),
            "grade_mode": grade_mode,
            "seed": seed,
        }),
        started_at=started,
        finished_at=clock(),
    )
    return results, meta


@dataclass(frozen=True)
class CategoryMetrics:
    n: int
    correct: int
    accuracy: float
    mean_completion_tokens: float
    mean_latency_s: float


@dataclass(frozen=True)
class EvalReport:
    """Per-category and overall metrics for one (method, backend) run."""

    method: str
    backend: str
    categories: dict  # category -> CategoryMetrics; empty categories absent
    overall_accuracy: float
    total_n: int
    total_correct: int
    meta: RunMeta


def aggregate(
    results: Sequence[QuestionResult],
    method: str,
    backend: str,
    meta: RunMeta,
) -> EvalReport:
    """Micro-averaged accuracy plus per-category token/latency means.

    Categories with no questions are simply absent (they never enter the
    overall denominator).
    """
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    by_category: dict[str, list[QuestionResult]] = {}
    for result in results:
        by_category.setdefault(result.category, []).append(result)

    categories: dict[str, CategoryMetrics] = {}
    for category, bucket in sorted(by_category.items()):
        n = len(bucket)
        correct = sum(1 for r in bucket if r.correct)
        categories[category] = CategoryMetrics(
            n=n,
            correct=correct,
            accuracy=correct / n,
            mean_completion_tokens=sum(r.completion_tokens for r in bucket) / n,
            mean_latency_s=sum(r.latency_s for r in bucket) / n,
        )

    total_n = len(results)
    total_correct = sum(1 for r in results if r.correct)
    return EvalReport(
        method=method,
        backend=backend,
        categories=categories,
        overall_accuracy=total_correct / total_n,
        total_n=total_n,
        total_correct=total_correct,
        meta=meta,
    )


def weighted_overall(
    per_judge_accuracy: Mapping[str, float],
    weights: Mapping[str, float],
) -> float:
    """Weight-averaged accuracy across judges: sum(w·a) / sum(w)."""
    if not per_judge_accuracy:
        raise ValueError("need at least one judge accuracy")
    missing = set(per_judge_accuracy) - set(weights)
    if missing:
        raise ValueError(f"no weight for judges: {sorted(missing)}")
    for judge, weight in weights.items():
        if weight < 0:
            raise ValueError(f"weight for {judge!r} must be non-negative")
    total = sum(weights[judge] for judge in per_judge_accuracy)
    if total == 0:
        raise ZeroWeightSum("judge weights sum to zero")
    return sum(per_judge_accuracy[j] * weights[j] for j in per_judge_accuracy) / total

"""Sensitive-data detection, exposure scoring, redaction, and usage matrices.

Ten data categories (speed, location, waypoints, traffic, obstacles,
weather, energy, vehicle health, signage, emergency services) are matched
by a rule set of keyword lists and regular expressions. The exposure score
is the weight share of categories present in a text: 0 when nothing was
found, 1 when every positively-weighted category appears.

Redaction replaces matched spans with ``⟨CAT⟩`` placeholders (or removes
them). The placeholder brackets are outside every rule alphabet, so
redacted text can never re-trigger detection.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence


class SensitiveCategory(Enum):
    """The closed set of sensitive-data categories."""

    SC = "current speed"
    PL = "precise location"
    WP = "waypoints"
    TF = "traffic conditions"
    OD = "obstacle detection"
    WT = "weather conditions"
    EC = "energy consumption"
    VH = "vehicle health"
    SI = "signage information"
    ES = "emergency services"


CATEGORY_ORDER: tuple[SensitiveCategory, ...] = tuple(SensitiveCategory)
_CATEGORY_INDEX = {cat: i for i, cat in enumerate(CATEGORY_ORDER)}

#: Uniform default weights. Stored as 1.0 per category (not 0.1) so the
#: normalized score k/10 is exact in floating point.
DEFAULT_WEIGHTS: dict[SensitiveCategory, float] = {cat: 1.0 for cat in CATEGORY_ORDER}

PLACEHOLDER_OPEN = "⟨"   # ⟨
PLACEHOLDER_CLOSE = "⟩"  # ⟩


class InvalidRule(Exception):
    """A rule set file is malformed (bad pattern, duplicate id, ...)."""


class ZeroWeightSum(Exception):
    """All weights are zero; no normalization is possible."""


class SpanMismatch(Exception):
    """Detections do not line up with the text they claim to come from."""


def placeholder(category: SensitiveCategory) -> str:
    return f"{PLACEHOLDER_OPEN}{category.name}{PLACEHOLDER_CLOSE}"


@dataclass(frozen=True)
class DetectionRule:
    rule_id: str
    category: SensitiveCategory
    pattern: re.Pattern


def _keyword_pattern(terms: Sequence[str], case_sensitive: bool) -> re.Pattern:
    if not terms:
        raise InvalidRule("keyword rule needs at least one term")
    parts = []
    for term in terms:
        escaped = re.escape(term)
        if term and (term[0].isalnum() or term[0] == "_"):
            escaped = r"\b" + escaped
        if term and (term[-1].isalnum() or term[-1] == "_"):
            escaped = escaped + r"\b"
        parts.append(escaped)
    flags = 0 if case_sensitive else re.IGNORECASE
    return re.compile("|".join(parts), flags)


@dataclass(frozen=True)
class DetectionRuleSet:
    """Immutable, shareable collection of compiled detection rules."""

    rules: tuple[DetectionRule, ...]

    def __post_init__(self) -> None:
        seen = set()
        for rule in self.rules:
            if rule.rule_id in seen:
                raise InvalidRule(f"duplicate rule id {rule.rule_id!r}")
            seen.add(rule.rule_id)

    def categories(self) -> frozenset[SensitiveCategory]:
        return frozenset(rule.category for rule in self.rules)

    @classmethod
    def from_dict(cls, data: dict) -> "DetectionRuleSet":
        rules: list[DetectionRule] = []
        categories = data.get("categories")
        if not isinstance(categories, dict):
            raise InvalidRule("rule set needs a 'categories' mapping")
        for code, group in categories.items():
            try:
                category = SensitiveCategory[code]
            except KeyError:
                raise InvalidRule(f"unknown category {code!r}") from None
            for entry in group.get("rules", []):
                rule_id = entry.get("id")
                if not rule_id:
                    raise InvalidRule(f"rule in {code} is missing an id")
                kind = entry.get("kind")
                case_sensitive = bool(entry.get("case_sensitive", False))
                if kind == "keyword":
                    pattern = _keyword_pattern(entry.get("terms", []), case_sensitive)
                elif kind == "regex":
                    flags = 0 if case_sensitive else re.IGNORECASE
                    try:
                        pattern = re.compile(entry["pattern"], flags)
                    except (KeyError, re.error) as exc:
                        raise InvalidRule(f"bad pattern in rule {rule_id!r}: {exc}") from exc
                else:
                    raise InvalidRule(f"rule {rule_id!r} has unknown kind {kind!r}")
                rules.append(DetectionRule(rule_id=rule_id, category=category, pattern=pattern))
        return cls(rules=tuple(rules))

    @classmethod
    def from_file(cls, path) -> "DetectionRuleSet":
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except OSError as exc:
            raise InvalidRule(f"cannot read rule set {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidRule(f"rule set {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


_default_ruleset: Optional[DetectionRuleSet] = None


def default_ruleset() -> DetectionRuleSet:
    """The shipped rule set; covers all ten categories."""
    global _default_ruleset
    if _default_ruleset is None:
        text = resources.files("roadguard.data").joinpath("ruleset.json").read_text("utf-8")
        _default_ruleset = DetectionRuleSet.from_dict(json.loads(text))
    return _default_ruleset


@dataclass(frozen=True)
class Detection:
    category: SensitiveCategory
    start: int
    end: int
    matched: str
    rule_id: str


def detect(text: str, rules: Optional[DetectionRuleSet] = None) -> list[Detection]:
    """All rule matches in ``text``, ordered by span start then category.

    Overlapping matches across categories are all reported; the order is
    deterministic for identical inputs.
    """
    ruleset = rules if rules is not None else default_ruleset()
    found: list[Detection] = []
    for rule in ruleset.rules:
        for match in rule.pattern.finditer(text):
            if match.start() == match.end():
                continue
            found.append(Detection(
                category=rule.category,
                start=match.start(),
                end=match.end(),
                matched=match.group(0),
                rule_id=rule.rule_id,
            ))
    found.sort(key=lambda d: (d.start, _CATEGORY_INDEX[d.category], d.end, d.rule_id))
    return found


def exposure_score(
    detections: Iterable[Detection],
    weights: Optional[Mapping[SensitiveCategory, float]] = None,
) -> float:
    """Weight share of categories with at least one detection, in [0, 1].

    Presence-based: extra detections in an already-present category do
    not move the score.
    """
    table = dict(DEFAULT_WEIGHTS if weights is None else weights)
    for cat, weight in table.items():
        if weight < 0:
            raise ValueError(f"weight for {cat.name} must be non-negative")
    total = sum(table.values())
    if total == 0:
        raise ZeroWeightSum("all category weights are zero")
    present = {d.category for d in detections}
    hit = sum(w for cat, w in table.items() if cat in present)
    return hit / total


@dataclass(frozen=True)
class ExposureReport:
    """Detections plus the scalar exposure score for one text."""

    detections: tuple[Detection, ...]
    present: tuple[SensitiveCategory, ...]
    score: float
    weights_used: tuple[tuple[SensitiveCategory, float], ...]

    def presence_flags(self) -> tuple[int, ...]:
        """One 0/1 flag per category, in category order."""
        hit = set(self.present)
        return tuple(1 if cat in hit else 0 for cat in CATEGORY_ORDER)


def exposure_report(
    text: str,
    rules: Optional[DetectionRuleSet] = None,
    weights: Optional[Mapping[SensitiveCategory, float]] = None,
) -> ExposureReport:
    """Detect, score, and bundle the result for one text."""
    table = dict(DEFAULT_WEIGHTS if weights is None else weights)
    detections = detect(text, rules)
    score = exposure_score(detections, table)
    present = tuple(cat for cat in CATEGORY_ORDER if any(d.category is cat for d in detections))
    return ExposureReport(
        detections=tuple(detections),
        present=present,
        score=score,
        weights_used=tuple((cat, table[cat]) for cat in CATEGORY_ORDER if cat in table),
    )


def redact(text: str, detections: Sequence[Detection], mode: str = "placeholder") -> str:
    """Replace (or remove) every detected span.

    Overlapping detections are merged into one replaced region carrying
    the placeholders of every category in it. Text outside detections is
    preserved byte for byte.
    """
    if mode not in ("placeholder", "remove"):
        raise ValueError(f"unknown redaction mode {mode!r}")
    for d in detections:
        if not (0 <= d.start < d.end <= len(text)) or text[d.start:d.end] != d.matched:
            raise SpanMismatch(
                f"detection {d.rule_id!r} at {d.start}:{d.end} does not match the text"
            )
    if not detections:
        return text

    ordered = sorted(detections, key=lambda d: (d.start, d.end))
    clusters: list[list[Detection]] = [[ordered[0]]]
    for d in ordered[1:]:
        cluster_end = max(x.end for x in clusters[-1])
        if d.start < cluster_end:
            clusters[-1].append(d)
        else:
            clusters.append([d])

    pieces: list[str] = []
    cursor = 0
    for cluster in clusters:
        start = cluster[0].start
        end = max(d.end for d in cluster)
        pieces.append(text[cursor:start])
        if mode == "placeholder":
            seen: list[SensitiveCategory] = []
            for d in cluster:
                if d.category not in seen:
                    seen.append(d.category)
            pieces.append("".join(placeholder(cat) for cat in seen))
        cursor = end
    pieces.append(text[cursor:])
    return "".join(pieces)


def category_counts(detections: Iterable[Detection]) -> dict[SensitiveCategory, int]:
    """Detection count per category (zero-filled over all ten)."""
    counts = {cat: 0 for cat in CATEGORY_ORDER}
    for d in detections:
        counts[d.category] += 1
    return counts


def usage_matrix(
    counts: Mapping[str, Mapping[SensitiveCategory, int]],
) -> dict[str, dict[SensitiveCategory, float]]:
    """Scale each row by its own maximum; all-zero rows stay zero.

    Input rows map a method name to per-category occurrence counts
    (missing categories count as zero). Output values lie in [0, 1] and
    are ready for heatmap rendering.
    """
    matrix: dict[str, dict[SensitiveCategory, float]] = {}
    for row_name, row in counts.items():
        values = {}
        for cat in CATEGORY_ORDER:
            count = row.get(cat, 0)
            if not isinstance(count, int) or isinstance(count, bool) or count < 0:
                raise ValueError(f"count for ({row_name}, {cat.name}) must be a non-negative integer")
            values[cat] = count
        peak = max(values.values())
        if peak == 0:
            matrix[row_name] = {cat: 0.0 for cat in CATEGORY_ORDER}
        else:
            matrix[row_name] = {cat: values[cat] / peak for cat in CATEGORY_ORDER}
    return matrix

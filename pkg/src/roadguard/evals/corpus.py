"""Prompt corpora and QA record handling for the evaluation harness.

A prompt corpus is a directory of one text file per method plus a
``manifest.json`` naming the method, its declared model id, and optional
literature metadata. QA records are line-delimited JSON with an id, a
question, a gold answer, and one of five categories; a converter ingests
the public nuScenes-QA release shape into this format.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass
from typing import Optional, Sequence

QA_CATEGORIES = ("exist", "count", "object", "status", "comparison")

_TEMPLATE_TYPE_MAP = {
    "exist": "exist",
    "existence": "exist",
    "count": "count",
    "object": "object",
    "status": "status",
    "comparison": "comparison",
}


@dataclass(frozen=True)
class MethodPrompt:
    """One method's system prompt plus its manifest metadata."""

    name: str
    model: str
    prompt: str
    citation: Optional[str] = None
    #: Literature-reported safety figure; carried through to reports,
    #: never computed here.
    safety_reported: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("method name must be non-empty")
        if not self.prompt:
            raise ValueError(f"prompt for {self.name!r} must be non-empty")


def load_corpus(directory) -> list[MethodPrompt]:
    """Load every method prompt listed in the directory's manifest."""
    directory = os.fspath(directory)
    manifest_path = os.path.join(directory, "manifest.json")
    with open(manifest_path, "r", encoding="utf-8") as handle:
        manifest = json.load(handle)

    methods: list[MethodPrompt] = []
    seen: set[str] = set()
    for entry in manifest.get("methods", []):
        name = entry.get("name", "")
        if name in seen:
            raise ValueError(f"duplicate method name {name!r} in manifest")
        seen.add(name)
        prompt_path = os.path.join(directory, entry["file"])
        with open(prompt_path, "r", encoding="utf-8") as handle:
            prompt = handle.read().strip()
        methods.append(MethodPrompt(
            name=name,
            model=entry.get("model", ""),
            prompt=prompt,
            citation=entry.get("citation"),
            safety_reported=entry.get("safety_reported"),
        ))
    return methods


def sample_corpus_dir() -> str:
    """Path of the bundled three-prompt sample corpus."""
    from importlib import resources

    return os.fspath(resources.files("roadguard.data").joinpath("sample_corpus"))


@dataclass(frozen=True)
class QaRecord:
    qid: str
    question: str
    answer: str
    category: str

    def __post_init__(self) -> None:
        if self.category not in QA_CATEGORIES:
            raise ValueError(f"unknown QA category {self.category!r}")
        if not self.question or not self.answer:
            raise ValueError(f"record {self.qid!r} needs a question and an answer")


def load_qa_records(path) -> list[QaRecord]:
    """Read line-delimited QA records (id, question, answer, category)."""
    records: list[QaRecord] = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                records.append(QaRecord(
                    qid=str(data["id"]),
                    question=data["question"],
                    answer=data["answer"],
                    category=data["category"],
                ))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad QA record: {exc}") from exc
    return records


def write_qa_records(records: Sequence[QaRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps({
                "id": record.qid,
                "question": record.question,
                "answer": record.answer,
                "category": record.category,
            }, ensure_ascii=False) + "\n")


def convert_nuscenes(src_path, out_path) -> int:
    """Convert a nuScenes-QA release file into the line-delimited format.

    Accepts either a top-level list of question objects or an object with
    a ``questions`` list; each item needs question/answer/template_type.
    Returns the number of records written.
    """
    with open(src_path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    items = payload["questions"] if isinstance(payload, dict) else payload

    records: list[QaRecord] = []
    for index, item in enumerate(items):
        template = str(item.get("template_type", "")).lower()
        if template not in _TEMPLATE_TYPE_MAP:
            raise ValueError(f"item {index}: unknown template_type {item.get('template_type')!r}")
        token = item.get("sample_token") or "q"
        records.append(QaRecord(
            qid=f"{token}-{index:05d}",
            question=str(item["question"]),
            answer=str(item["answer"]),
            category=_TEMPLATE_TYPE_MAP[template],
        ))
    write_qa_records(records, out_path)
    return len(records)


def sample_per_category(
    records: Sequence[QaRecord],
    per_category: int = 50,
    seed: int = 0,
) -> list[QaRecord]:
    """Draw up to ``per_category`` records per category with a seeded shuffle.

    The draw is deterministic for a given (records, per_category, seed);
    categories are processed in their canonical order.
    """
    rng = random.Random(seed)
    sampled: list[QaRecord] = []
    for category in QA_CATEGORIES:
        pool = [r for r in records if r.category == category]
        rng.shuffle(pool)
        sampled.extend(pool[:per_category])
    return sampled

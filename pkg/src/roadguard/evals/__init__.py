"""Evaluation harness: prompt profiling and category-tagged QA benchmarks."""

from .corpus import (
    QA_CATEGORIES,
    MethodPrompt,
    QaRecord,
    convert_nuscenes,
    load_corpus,
    load_qa_records,
    sample_corpus_dir,
    sample_per_category,
    write_qa_records,
)
from .profiling import PromptProfile, profile_corpus, profile_prompt, usage_counts
from .qa import (
    CategoryMetrics,
    EvalReport,
    QuestionResult,
    RunMeta,
    aggregate,
    grade_answer,
    normalize_answer,
    run_config_hash,
    run_qa,
    weighted_overall,
)
from .report import emit_report, format_percent, format_score, format_time, format_tokens

__all__ = [
    "QA_CATEGORIES",
    "CategoryMetrics",
    "EvalReport",
    "MethodPrompt",
    "PromptProfile",
    "QaRecord",
    "QuestionResult",
    "RunMeta",
    "aggregate",
    "convert_nuscenes",
    "emit_report",
    "format_percent",
    "format_score",
    "format_time",
    "format_tokens",
    "grade_answer",
    "load_corpus",
    "load_qa_records",
    "normalize_answer",
    "profile_corpus",
    "profile_prompt",
    "run_config_hash",
    "run_qa",
    "sample_corpus_dir",
    "sample_per_category",
    "usage_counts",
    "weighted_overall",
    "write_qa_records",
]

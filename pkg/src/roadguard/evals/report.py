"""Deterministic report emission: tables plus figure data files.

Renders the QA benchmark tables (per-category Acc/Token/Time plus overall
accuracy), the prompt-profile table (Method, Model, Token, Sens, Align),
and the figure data behind them: a scatter of token cost vs. reported
safety vs. exposure vs. alignment, the per-method normalized usage
heatmap, judge-weighted overall bars, and per-category grouped bars.

Identical inputs produce byte-identical files: fixed column orders, fixed
numeric formatting (accuracy as one-decimal percent, tokens one decimal,
time two decimals), sorted JSON keys, and ``\n`` newlines throughout.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Optional, Sequence

from ..sensitive import CATEGORY_ORDER, usage_matrix
from .corpus import QA_CATEGORIES
from .profiling import PromptProfile, usage_counts
from .qa import EvalReport, weighted_overall

#: Table column order for QA categories (alphabetical, as in the tables
#: this shape mirrors).
CATEGORY_COLUMNS = tuple(sorted(QA_CATEGORIES))

FORMATS = ("csv", "json")


def _quant(value: float, places: str) -> str:
    return str(Decimal(repr(value)).quantize(Decimal(places), rounding=ROUND_HALF_UP))


def format_percent(value: float) -> str:
    """0.8876 -> '88.8%' (half-up at one decimal)."""
    return _quant(value * 100.0, "0.1") + "%"


def format_tokens(value: float) -> str:
    return _quant(value, "0.1")


def format_time(value: float) -> str:
    return _quant(value, "0.01")


def format_score(value: float) -> str:
    return _quant(value, "0.01")


def _write(path: str, text: str) -> str:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
    return path


def _csv_text(rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerows(rows)
    return buffer.getvalue()


def _json_text(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _qa_table_rows(reports: Sequence[EvalReport]) -> list[list[str]]:
    header = ["Method", "Backend"]
    for category in CATEGORY_COLUMNS:
        title = category.capitalize()
        header.extend([f"{title} Acc", f"{title} Token", f"{title} Time"])
    header.append("Overall Acc")

    rows = [header]
    for report in sorted(reports, key=lambda r: (r.method, r.backend)):
        row = [report.method, report.backend]
        for category in CATEGORY_COLUMNS:
            metrics = report.categories.get(category)
            if metrics is None:
                row.extend(["", "", ""])
            else:
                row.extend([
                    format_percent(metrics.accuracy),
                    format_tokens(metrics.mean_completion_tokens),
                    format_time(metrics.mean_latency_s),
                ])
        row.append(format_percent(report.overall_accuracy))
        rows.append(row)
    return rows


def _qa_json_payload(reports: Sequence[EvalReport]) -> list[dict]:
    payload = []
    for report in sorted(reports, key=lambda r: (r.method, r.backend)):
        payload.append({
            "method": report.method,
            "backend": report.backend,
            "categories": {
                category: asdict(metrics)
                for category, metrics in report.categories.items()
            },
            "overall_accuracy": report.overall_accuracy,
            "total_n": report.total_n,
            "total_correct": report.total_correct,
            "meta": asdict(report.meta),
        })
    return payload


def _prompt_table_rows(profiles: Sequence[PromptProfile]) -> list[list[str]]:
    rows = [["Method", "Model", "Token", "Sens", "Align"]]
    for profile in profiles:
        token = str(profile.token_count)
        if profile.approx_tokens:
            token = "~" + token  # whitespace approximation, not a BPE count
        rows.append([
            profile.method,
            profile.model,
            token,
            format_score(profile.exposure.score),
            str(profile.alignment),
        ])
    return rows


def _prompt_json_payload(profiles: Sequence[PromptProfile]) -> list[dict]:
    payload = []
    for profile in profiles:
        payload.append({
            "method": profile.method,
            "model": profile.model,
            "token_count": profile.token_count,
            "token_mode": "approx" if profile.approx_tokens else "bpe",
            "exposure_score": profile.exposure.score,
            "categories_present": [c.name for c in profile.exposure.present],
            "alignment": profile.alignment,
            "safety_reported": profile.safety_reported,
        })
    return payload


def emit_report(
    out_dir,
    reports: Optional[Sequence[EvalReport]] = None,
    profiles: Optional[Sequence[PromptProfile]] = None,
    judge_weights: Optional[Mapping[str, float]] = None,
    formats: Sequence[str] = FORMATS,
) -> list[str]:
    """Write every table/figure file the given inputs enable.

    ``formats`` selects the table formats; figure data files are always
    CSV. Returns the written paths in a fixed order.
    """
    for fmt in formats:
        if fmt not in FORMATS:
            raise ValueError(f"unknown report format {fmt!r}")
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []

    if reports:
        if "csv" in formats:
            written.append(_write(
                os.path.join(out_dir, "qa_report.csv"),
                _csv_text(_qa_table_rows(reports)),
            ))
        if "json" in formats:
            written.append(_write(
                os.path.join(out_dir, "qa_report.json"),
                _json_text(_qa_json_payload(reports)),
            ))

        bar_rows: list[list[str]] = [["Method", "Backend", "Category", "Acc"]]
        for report in sorted(reports, key=lambda r: (r.method, r.backend)):
            for category in CATEGORY_COLUMNS:
                metrics = report.categories.get(category)
                if metrics is not None:
                    bar_rows.append([
                        report.method, report.backend, category,
                        format_percent(metrics.accuracy),
                    ])
        written.append(_write(
            os.path.join(out_dir, "fig_category_accuracy.csv"),
            _csv_text(bar_rows),
        ))

        if judge_weights is not None:
            by_method: dict[str, dict[str, float]] = {}
            for report in reports:
                by_method.setdefault(report.method, {})[report.backend] = report.overall_accuracy
            weighted_rows = [["Method", "Weighted Acc"]]
            for method in sorted(by_method):
                value = weighted_overall(by_method[method], judge_weights)
                weighted_rows.append([method, format_percent(value)])
            written.append(_write(
                os.path.join(out_dir, "fig_weighted_overall.csv"),
                _csv_text(weighted_rows),
            ))

    if profiles:
        if "csv" in formats:
            written.append(_write(
                os.path.join(out_dir, "prompt_report.csv"),
                _csv_text(_prompt_table_rows(profiles)),
            ))
        if "json" in formats:
            written.append(_write(
                os.path.join(out_dir, "prompt_report.json"),
                _json_text(_prompt_json_payload(profiles)),
            ))

        scatter_rows = [["Method", "Token", "Safety", "Exposure", "Align"]]
        for profile in profiles:
            scatter_rows.append([
                profile.method,
                str(profile.token_count),
                profile.safety_reported or "",
                format_score(profile.exposure.score),
                str(profile.alignment),
            ])
        written.append(_write(
            os.path.join(out_dir, "fig_prompt_scatter.csv"),
            _csv_text(scatter_rows),
        ))

        matrix = usage_matrix(usage_counts(profiles))
        heat_rows = [["Method"] + [cat.name for cat in CATEGORY_ORDER]]
        for profile in profiles:
            row = matrix[profile.method]
            heat_rows.append(
                [profile.method] + [f"{row[cat]:.4f}" for cat in CATEGORY_ORDER]
            )
        written.append(_write(
            os.path.join(out_dir, "fig_usage_heatmap.csv"),
            _csv_text(heat_rows),
        ))

    return written

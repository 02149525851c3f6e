"""Prompt profiling and deterministic report emission."""

import json

import pytest

from roadguard.evals.corpus import MethodPrompt, load_corpus, sample_corpus_dir
from roadguard.evals.profiling import profile_corpus, profile_prompt
from roadguard.evals.qa import CategoryMetrics, EvalReport, RunMeta
from roadguard.evals.report import (
    emit_report,
    format_percent,
    format_time,
    format_tokens,
)
from roadguard.sensitive import SensitiveCategory
from roadguard.tokenizer import toy_tokenizer

META = RunMeta(seed=7, config_hash="beef", started_at=100.0, finished_at=101.0)


def report_fixture(method="probe", backend="mock", count_acc=0.84):
    categories = {
        "comparison": CategoryMetrics(n=50, correct=50, accuracy=1.0,
                                      mean_completion_tokens=6.0, mean_latency_s=0.35),
        "count": CategoryMetrics(n=50, correct=int(count_acc * 50), accuracy=count_acc,
                                 mean_completion_tokens=6.2, mean_latency_s=0.4),
        "exist": CategoryMetrics(n=50, correct=50, accuracy=1.0,
                                 mean_completion_tokens=7.0, mean_latency_s=0.41),
        "object": CategoryMetrics(n=50, correct=50, accuracy=1.0,
                                  mean_completion_tokens=5.9, mean_latency_s=0.36),
        "status": CategoryMetrics(n=50, correct=50, accuracy=1.0,
                                  mean_completion_tokens=6.6, mean_latency_s=0.39),
    }
    total_correct = sum(m.correct for m in categories.values())
    return EvalReport(
        method=method, backend=backend, categories=categories,
        overall_accuracy=total_correct / 250, total_n=250,
        total_correct=total_correct, meta=META,
    )


class TestFormatting:
    def test_percent_one_decimal_half_up(self):
        assert format_percent(0.8876) == "88.8%"
        assert format_percent(0.84) == "84.0%"
        assert format_percent(1.0) == "100.0%"
        assert format_percent(0.005) == "0.5%"

    def test_tokens_one_decimal(self):
        assert format_tokens(6.0) == "6.0"
        assert format_tokens(10.55) == "10.6"

    def test_time_two_decimals(self):
        assert format_time(0.345) == "0.35"
        assert format_time(8.1) == "8.10"


class TestProfiling:
    def test_sample_corpus_profiles(self):
        methods = load_corpus(sample_corpus_dir())
        profiles = profile_corpus(methods, tokenizer=toy_tokenizer())
        by_name = {p.method: p for p in profiles}

        assert by_name["citypilot"].exposure.score == 0.0
        lanekeeper = by_name["lanekeeper"]
        assert set(lanekeeper.exposure.present) == {
            SensitiveCategory.SC, SensitiveCategory.WP}
        assert lanekeeper.exposure.score == 0.2
        # obey-limits (+0.5) + safe-distance (+0.4) -> 0.9 -> scale 95.
        assert lanekeeper.alignment == 95
        shuttle = by_name["shuttlehost"]
        assert shuttle.exposure.score == 0.4
        assert not lanekeeper.approx_tokens

    def test_tokenizer_oracle_on_prompt(self):
        # Token count must equal the tokenizer's own count of the prompt.
        method = MethodPrompt(name="tiny", model="m", prompt="the thing")
        tok = toy_tokenizer()
        profile = profile_prompt(method, tokenizer=tok)
        assert profile.token_count == tok.count("the thing") == 3

    def test_whitespace_fallback_flagged(self):
        method = MethodPrompt(name="tiny", model="m", prompt="three word prompt")
        profile = profile_prompt(method)
        assert profile.token_count == 3
        assert profile.approx_tokens


class TestEmitReport:
    def test_qa_table_shape_and_values(self, tmp_path):
        emit_report(tmp_path, reports=[report_fixture()])
        lines = (tmp_path / "qa_report.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert header[:2] == ["Method", "Backend"]
        assert header[2:5] == ["Comparison Acc", "Comparison Token", "Comparison Time"]
        assert header[-1] == "Overall Acc"
        row = lines[1].split(",")
        assert row[0] == "probe"
        count_acc_index = header.index("Count Acc")
        assert row[count_acc_index] == "84.0%"
        assert row[-1] == format_percent(242 / 250)

    def test_prompt_table_columns(self, tmp_path):
        methods = load_corpus(sample_corpus_dir())
        profiles = profile_corpus(methods, tokenizer=toy_tokenizer())
        emit_report(tmp_path, profiles=profiles)
        lines = (tmp_path / "prompt_report.csv").read_text().splitlines()
        assert lines[0] == "Method,Model,Token,Sens,Align"
        assert len(lines) == 1 + len(profiles)

    def test_heatmap_dimensions(self, tmp_path):
        methods = load_corpus(sample_corpus_dir())
        profiles = profile_corpus(methods, tokenizer=toy_tokenizer())
        emit_report(tmp_path, profiles=profiles)
        lines = (tmp_path / "fig_usage_heatmap.csv").read_text().splitlines()
        assert len(lines) == 1 + len(profiles)
        assert len(lines[0].split(",")) == 11  # method + ten categories
        for line in lines[1:]:
            values = [float(v) for v in line.split(",")[1:]]
            assert all(0.0 <= v <= 1.0 for v in values)

    def test_byte_identical_across_emissions(self, tmp_path):
        report = report_fixture()
        dir_a = tmp_path / "a"
        dir_b = tmp_path / "b"
        emit_report(dir_a, reports=[report])
        emit_report(dir_b, reports=[report])
        for name in ("qa_report.csv", "qa_report.json", "fig_category_accuracy.csv"):
            assert (dir_a / name).read_bytes() == (dir_b / name).read_bytes()

    def test_weighted_figure_needs_weights(self, tmp_path):
        reports = [report_fixture(backend="gpt"), report_fixture(backend="llama", count_acc=0.5)]
        emit_report(tmp_path, reports=reports)
        assert not (tmp_path / "fig_weighted_overall.csv").exists()

        emit_report(tmp_path, reports=reports, judge_weights={"gpt": 0.7, "llama": 0.3})
        lines = (tmp_path / "fig_weighted_overall.csv").read_text().splitlines()
        assert lines[0] == "Method,Weighted Acc"
        assert lines[1].startswith("probe,")

    def test_approx_token_marker(self, tmp_path):
        method = MethodPrompt(name="tiny", model="m", prompt="three word prompt")
        emit_report(tmp_path, profiles=[profile_prompt(method)])
        lines = (tmp_path / "prompt_report.csv").read_text().splitlines()
        assert lines[1].split(",")[2] == "~3"
        payload = json.loads((tmp_path / "prompt_report.json").read_text())
        assert payload[0]["token_mode"] == "approx"

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(tmp_path, reports=[report_fixture()], formats=("xml",))

    def test_scatter_carries_reported_safety(self, tmp_path):
        methods = load_corpus(sample_corpus_dir())
        profiles = profile_corpus(methods, tokenizer=toy_tokenizer())
        emit_report(tmp_path, profiles=profiles)
        lines = (tmp_path / "fig_prompt_scatter.csv").read_text().splitlines()
        assert lines[0] == "Method,Token,Safety,Exposure,Align"
        lanekeeper_row = next(l for l in lines if l.startswith("lanekeeper,"))
        assert ",95%," in lanekeeper_row

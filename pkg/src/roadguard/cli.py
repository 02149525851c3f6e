"""Command-line entry point.

Subcommands: ``validate`` (parse + validate a command against a vehicle
profile), ``redact`` (detect and redact sensitive data), ``score``
(behavior score of a text), ``eval-prompts`` (profile a prompt corpus),
``run-qa`` (category-tagged QA benchmark), and ``serve`` (the guardrail
proxy). Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
from typing import Optional, Sequence

from . import __version__
from .backends import CompletionParams
from .behavior import RuleBasedScorer, default_scorer, score_text, to_alignment_scale
from .commands import (
    CommandParseError,
    VehicleProfile,
    parse_command,
    serialize_command,
    validate_command,
)
from .evals.corpus import load_corpus, load_qa_records, sample_per_category
from .evals.profiling import profile_corpus
from .evals.qa import aggregate, run_qa
from .evals.report import emit_report
from .guard.audit import StoreUnavailable
from .guard.config import ConfigError, build_backend, build_guardrail, load_app_config
from .sensitive import DetectionRuleSet, InvalidRule, default_ruleset, exposure_report, redact
from .tokenizer import BpeTokenizer, VocabLoadError


class OperationalError(Exception):
    """CLI-level failure that should exit with status 1."""


#: Environment fallback for --config.
CONFIG_ENV_VAR = "ROADGUARD_CONFIG"


def _config_path(args) -> Optional[str]:
    return args.config or os.environ.get(CONFIG_ENV_VAR)


def _read_input(args) -> str:
    if getattr(args, "input_file", None):
        try:
            with open(args.input_file, "r", encoding="utf-8") as handle:
                return handle.read()
        except OSError as exc:
            raise OperationalError(f"cannot read {args.input_file}: {exc}") from exc
    if getattr(args, "text", None) is not None:
        return args.text
    return sys.stdin.read()


def _emit(args, payload: dict, text_lines: Sequence[str]) -> None:
    if args.format == "json":
        print(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False))
    else:
        for line in text_lines:
            print(line)


# --- subcommands -------------------------------------------------------


def cmd_validate(args) -> int:
    text = _read_input(args)
    profile = VehicleProfile.from_file(args.profile) if args.profile else VehicleProfile()
    try:
        envelope = parse_command(text, mode=args.mode)
    except CommandParseError as exc:
        raise OperationalError(f"{type(exc).__name__}: {exc}") from exc

    result = validate_command(envelope, profile)
    payload = {
        "command": json.loads(serialize_command(envelope)),
        "profile": profile.name,
        "valid": result.valid,
        "violations": [
            {"field": v.field, "observed": v.observed, "permitted": v.permitted}
            for v in result.violations
        ],
    }
    lines = [f"command: {serialize_command(envelope)}", f"valid: {result.valid}"]
    lines += [f"violation: {v.describe()}" for v in result.violations]
    _emit(args, payload, lines)
    return 0


def cmd_redact(args) -> int:
    text = _read_input(args)
    try:
        rules = DetectionRuleSet.from_file(args.rules) if args.rules else default_ruleset()
    except InvalidRule as exc:
        raise OperationalError(f"InvalidRule: {exc}") from exc

    report = exposure_report(text, rules)
    cleaned = redact(text, report.detections, mode=args.mode)
    payload = {
        "redacted": cleaned,
        "exposure_score": report.score,
        "categories": [c.name for c in report.present],
        "detections": len(report.detections),
    }
    lines = [cleaned, f"exposure: {report.score}",
             f"categories: {', '.join(c.name for c in report.present) or '-'}"]
    _emit(args, payload, lines)
    return 0


def cmd_score(args) -> int:
    text = _read_input(args)
    scorer = RuleBasedScorer.from_file(args.rule_table) if args.rule_table else default_scorer()
    score = score_text(scorer, text)
    payload = {
        "behavior_score": score.value,
        "alignment_scale": to_alignment_scale(score),
        "rationale": list(score.rationale),
    }
    lines = [f"behavior: {score.value}", f"alignment: {to_alignment_scale(score)}",
             f"rationale: {', '.join(score.rationale) or '-'}"]
    _emit(args, payload, lines)
    return 0


def cmd_eval_prompts(args) -> int:
    try:
        methods = load_corpus(args.corpus)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise OperationalError(f"cannot load corpus: {exc}") from exc

    tokenizer = None
    if args.vocab:
        try:
            tokenizer = BpeTokenizer.from_rank_file(args.vocab)
        except VocabLoadError as exc:
            raise OperationalError(str(exc)) from exc

    profiles = profile_corpus(methods, tokenizer=tokenizer)
    written = emit_report(args.out, profiles=profiles, formats=(args.format,)
                          if args.format in ("csv", "json") else ("csv", "json"))
    payload = {
        "methods": len(profiles),
        "token_mode": "bpe" if tokenizer is not None else "approx",
        "files": written,
    }
    lines = [f"profiled {len(profiles)} methods "
             f"({'bpe' if tokenizer else 'approx'} token counts)"] + written
    _emit(args, payload, lines)
    return 0


def _parse_judge_weights(raw: Optional[str]) -> Optional[dict[str, float]]:
    if not raw:
        return None
    weights = {}
    for part in raw.split(","):
        name, _, value = part.partition("=")
        if not name or not value:
            raise OperationalError(f"bad judge weight {part!r}; expected name=value")
        weights[name.strip()] = float(value)
    return weights


def cmd_run_qa(args) -> int:
    config_path = _config_path(args)
    if not config_path:
        print(f"error: --config (or ${CONFIG_ENV_VAR}) is required", file=sys.stderr)
        return 2
    config = load_app_config(config_path)
    if args.backend not in config.backend_configs:
        print(f"error: unknown backend {args.backend!r}; "
              f"configured: {sorted(config.backend_configs)}", file=sys.stderr)
        return 2

    backend = build_backend(config.backend_configs[args.backend], base_dir=config.base_dir)
    methods = load_corpus(args.corpus)
    records = load_qa_records(args.qa)
    sampled = sample_per_category(records, per_category=args.per_category, seed=args.seed)
    if not sampled:
        raise OperationalError("no QA records matched the requested categories")

    judge_weights = _parse_judge_weights(args.judge_weights)
    reports = []
    for method in methods:
        results, meta = run_qa(
            method, sampled, backend,
            params=CompletionParams(temperature=args.temperature),
            max_workers=args.workers,
            seed=args.seed,
        )
        reports.append(aggregate(results, method.name, backend.name, meta))

    written = emit_report(args.out, reports=reports, judge_weights=judge_weights)
    payload = {
        "methods": [r.method for r in reports],
        "backend": args.backend,
        "questions": reports[0].total_n if reports else 0,
        "seed": args.seed,
        "files": written,
    }
    lines = [f"ran {len(reports)} methods × {reports[0].total_n if reports else 0} questions "
             f"(seed {args.seed})"] + written
    _emit(args, payload, lines)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .guard.service import create_app

    config_path = _config_path(args)
    if not config_path:
        print(f"error: --config (or ${CONFIG_ENV_VAR}) is required", file=sys.stderr)
        return 2
    try:
        config = load_app_config(config_path)
        guardrail = build_guardrail(config)
    except (ConfigError, InvalidRule, VocabLoadError, StoreUnavailable) as exc:
        raise OperationalError(str(exc)) from exc

    host, _, port_text = args.listen.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port_text)
    except ValueError:
        raise OperationalError(f"bad listen address {args.listen!r}") from None

    # Preflight bind so a busy port is a clean operational failure.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        raise OperationalError(f"cannot listen on {host}:{port}: {exc}") from exc
    finally:
        probe.close()

    app = create_app(guardrail, auth_token_env=config.auth_token_env)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        if guardrail.audit is not None:
            guardrail.audit.close()
    return 0


# --- parser ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadguard",
        description="Safety guardrail and evaluation harness for LLM-driven vehicles.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, with_mode: Optional[str] = None):
        p.add_argument("text", nargs="?", default=None, help="input text (default: stdin)")
        p.add_argument("--input-file", help="read input from a file")
        p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("validate", help="parse a command and validate it against a profile")
    add_io(p)
    p.add_argument("--profile", help="vehicle profile JSON file (default: built-in)")
    p.add_argument("--mode", choices=("strict", "lenient"), default="lenient")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("redact", help="detect and redact sensitive data")
    add_io(p)
    p.add_argument("--rules", help="detection rule set JSON file (default: built-in)")
    p.add_argument("--mode", choices=("placeholder", "remove"), default="placeholder")
    p.set_defaults(func=cmd_redact)

    p = sub.add_parser("score", help="behavior score of a text")
    add_io(p)
    p.add_argument("--rule-table", help="behavior rule table JSON file (default: built-in)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval-prompts", help="profile a system-prompt corpus")
    p.add_argument("--corpus", required=True, help="corpus directory with manifest.json")
    p.add_argument("--vocab", help="BPE rank file (omit for whitespace approximation)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.set_defaults(func=cmd_eval_prompts)

    p = sub.add_parser("run-qa", help="run the category-tagged QA benchmark")
    p.add_argument("--corpus", required=True)
    p.add_argument("--qa", required=True, help="QA records file (line-delimited JSON)")
    p.add_argument("--backend", required=True, help="backend name from the config file")
    p.add_argument("--config", help=f"guardrail config JSON (or ${CONFIG_ENV_VAR})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-category", type=int, default=50)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--judge-weights", help="judge weights, e.g. 'gpt=0.7,llama=0.3'")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_run_qa)

    p = sub.add_parser("serve", help="run the guardrail proxy")
    p.add_argument("--config", help=f"guardrail config JSON (or ${CONFIG_ENV_VAR})")
    p.add_argument("--listen", default="127.0.0.1:8400", help="host:port")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OperationalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, InvalidRule, VocabLoadError, StoreUnavailable,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

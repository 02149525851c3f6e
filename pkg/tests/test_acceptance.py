"""Acceptance suite: one test per release criterion, one printed line each.

Run with ``pytest -s tests/test_acceptance.py`` to see the pass lines.
Every criterion is deterministic and offline; the proxy criterion runs
real HTTP against a local stub upstream.
"""

import itertools
import json
import os
import random
import re
import socket
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import pytest
import uvicorn

from roadguard.backends import ChatMessage, ScriptedBackend
from roadguard.behavior import (
    BehaviorRule,
    RuleBasedScorer,
    ScriptedSampler,
    estimate_expected_behavior,
    to_alignment_scale,
)
from roadguard.commands import (
    CommandEnvelope,
    Speed,
    SteeringAngle,
    VehicleProfile,
    clamp_to_safe,
    parse_command,
    serialize_command,
    validate_command,
)
from roadguard.evals.corpus import QA_CATEGORIES, MethodPrompt, QaRecord, sample_per_category
from roadguard.evals.qa import RunMeta, aggregate, run_config_hash, run_qa, weighted_overall
from roadguard.evals.report import emit_report
from roadguard.guard.audit import AuditLog
from roadguard.guard.config import build_guardrail, load_app_config
from roadguard.guard.pipeline import Guardrail
from roadguard.guard.policy import BackendRoles, GuardPolicy
from roadguard.guard.service import create_app
from roadguard.sensitive import (
    CATEGORY_ORDER,
    Detection,
    detect,
    exposure_score,
    redact,
)
from roadguard.tokenizer import count_tokens, toy_tokenizer

from conftest import TRIGGERS, make_text, random_envelope, random_profile
from test_tokenizer import SAMPLE_STRINGS, TOY_MERGE_PAIRS, classic_merge_encode, naive_greedy_encode


def report(number: int, elapsed: float, detail: str) -> None:
    print(f"[criterion {number}] PASS in {elapsed:.2f}s — {detail}")


def test_criterion_1_command_space_suite():
    started = time.perf_counter()
    rng = random.Random(101)

    for _ in range(1000):
        env = random_envelope(rng)
        profile = random_profile(rng)

        clamped = clamp_to_safe(env, profile)
        assert validate_command(clamped.envelope, profile).valid

        again = clamp_to_safe(clamped.envelope, profile)
        assert again.envelope == clamped.envelope
        assert again.changes == ()

        assert parse_command(serialize_command(env), mode="strict") == env

    # Boundary grid at {bound-0.1, bound, bound+0.1}: closed intervals.
    profile = VehicleProfile()  # steer [-30, 30], speed max 40
    for bound, inside in ((profile.steer_min_deg, +0.1), (profile.steer_max_deg, -0.1)):
        for offset, expected in ((inside, True), (0.0, True), (-inside, False)):
            env = CommandEnvelope(drive=(SteeringAngle(bound + offset), Speed(0.0)))
            assert validate_command(env, profile).valid is expected, (bound, offset)
    for offset, expected in ((-0.1, True), (0.0, True), (0.1, False)):
        env = CommandEnvelope(drive=(SteeringAngle(0.0), Speed(profile.speed_max_kmh + offset)))
        assert validate_command(env, profile).valid is expected

    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    report(1, elapsed, "1000 envelopes: validate∘clamp valid, clamp idempotent, "
                       "parse∘serialize identity; boundary grid exact")


def test_criterion_2_exposure_score_oracle():
    started = time.perf_counter()
    weights = {cat: 1.0 for cat in CATEGORY_ORDER}

    checked = 0
    for mask in range(1 << 10):
        subset = [cat for i, cat in enumerate(CATEGORY_ORDER) if mask & (1 << i)]
        detections = [
            Detection(category=cat, start=0, end=1, matched="x", rule_id="synthetic")
            for cat in subset
        ]
        assert exposure_score(detections, weights) == len(subset) / 10
        checked += 1

    elapsed = time.perf_counter() - started
    assert checked == 1024
    assert elapsed < 1.0
    report(2, elapsed, "all 1024 presence subsets score exactly |subset|/10")


def test_criterion_3_redaction_invariant():
    started = time.perf_counter()
    rng = random.Random(202)

    for i in range(500):
        count = rng.randrange(0, 11)
        text = make_text(rng, rng.sample(CATEGORY_ORDER, count))
        cleaned = redact(text, detect(text))
        assert exposure_score(detect(cleaned)) == 0.0
        assert redact(cleaned, detect(cleaned)) == cleaned
        if i % 3 == 0:
            removed = redact(text, detect(text), mode="remove")
            assert exposure_score(detect(removed)) == 0.0

    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    report(3, elapsed, "500 trigger-seeded texts: detect∘redact scores 0, "
                       "redaction idempotent")


def test_criterion_4_no_leak_pipeline(tmp_path):
    started = time.perf_counter()
    audit = AuditLog(tmp_path / "audit.jsonl", fsync=False)
    rng = random.Random(303)

    grid = [0.0, 0.1, 0.3, 0.5, 0.8, 1.0]
    threshold_pairs = [(r, b) for r in grid for b in grid if r <= b]
    category_counts = (0, 2, 4, 6, 10)
    scenarios = 0

    for (redact_at, block_at), k in itertools.product(threshold_pairs, category_counts):
        scenarios += 1
        session = f"s-{scenarios:04d}"
        backend = ScriptedBackend(default_reply="all quiet on the road")
        guard = Guardrail(
            policy=GuardPolicy(
                exposure_redact_threshold=redact_at,
                exposure_block_threshold=block_at,
                roles=BackendRoles(data="mock"),
            ),
            scorer=RuleBasedScorer([]),
            backends={"mock": backend},
            audit=audit,
        )
        text = make_text(rng, rng.sample(CATEGORY_ORDER, k))
        score = k / 10
        result = guard.run_turn(session, [ChatMessage(role="user", content=text)])
        records = audit.query(session)

        if score >= block_at:
            assert not result.delivered
            assert backend.call_count == 0, "block must mean zero backend calls"
            assert len(records) == 1
        else:
            assert backend.call_count == 1
            assert len(records) == 2
            delivered = "\n".join(m.content for m in backend.requests[0])
            delivered_score = exposure_score(detect(delivered))
            assert delivered_score < block_at or block_at == 0.0
            if score >= redact_at:
                assert result.outbound.verdict == "redact"
                assert delivered_score == 0.0, "redacted turns must deliver zero exposure"
            else:
                assert result.outbound.verdict == "allow"
                assert delivered == text

    elapsed = time.perf_counter() - started
    assert scenarios >= 100
    assert elapsed < 10.0
    report(4, elapsed, f"{scenarios} scenarios over all threshold orderings: "
                       "block⇒0 calls, redact⇒0 exposure, audit counts = stages")


def test_criterion_5_behavior_estimator():
    started = time.perf_counter()

    table = {
        "alpha": 0.5, "bravo": 0.25, "carol": -0.75, "delta": 1.0,
        "echo": -0.125, "foxtrot": 0.0625, "golf": -1.0, "hotel": 0.875,
    }
    scorer = RuleBasedScorer([
        BehaviorRule(rule_id=word, pattern=re.compile(word), contribution=value)
        for word, value in table.items()
    ])
    rng = random.Random(404)
    words = list(table)

    for k in (1, 2, 4, 16):
        picks = [rng.choice(words) for _ in range(k)]
        sampler = ScriptedSampler(picks)
        estimate = estimate_expected_behavior(scorer, sampler, "prompt", depth=1, k=k)
        expected = sum(table[w] for w in picks) / k
        assert estimate.mean == expected, (k, picks)
        assert estimate.samples == tuple(table[w] for w in picks)

    assert to_alignment_scale(-1.0) == 0
    assert to_alignment_scale(0.0) == 50
    assert to_alignment_scale(1.0) == 100

    elapsed = time.perf_counter() - started
    report(5, elapsed, "means exact for k∈{1,2,4,16}; scale maps {-1,0,1}→{0,50,100}")


def test_criterion_6_tokenizer_oracle():
    started = time.perf_counter()
    toy = toy_tokenizer()

    ranks = {bytes([b]): b for b in range(256)}
    for rank, left, right in TOY_MERGE_PAIRS:
        ranks[left + right] = rank

    assert len(SAMPLE_STRINGS) == 20
    for text in SAMPLE_STRINGS:
        count = count_tokens(toy, text)
        assert count == classic_merge_encode(text), text
        assert count == naive_greedy_encode(ranks, text), text

    rng = random.Random(505)
    for _ in range(1000):
        chars = []
        for _ in range(rng.randrange(0, 32)):
            cp = rng.randrange(0, 0x10FFFF)
            if 0xD800 <= cp <= 0xDFFF:
                cp = 0x20
            chars.append(chr(cp))
        text = "".join(chars)
        assert toy.decode(toy.encode(text)) == text

    gated = "skipped (cl100k_base rank file not present)"
    cl100k_path = os.environ.get("CL100K_BASE_PATH", "cl100k_base.tiktoken")
    if os.path.exists(cl100k_path):
        from roadguard.tokenizer import load_cl100k_base

        tok = load_cl100k_base(cl100k_path)
        for text in SAMPLE_STRINGS:
            pieces = tok._splitter.findall(text)
            expected = sum(naive_greedy_encode(tok._ranks, piece) for piece in pieces)
            assert count_tokens(tok, text) == expected, text
        gated = "cl100k_base counts match the reference"

    elapsed = time.perf_counter() - started
    report(6, elapsed, f"20 samples match both reference encoders; 1000 UTF-8 "
                       f"round-trips; gated test: {gated}")


def _planted_qa_run(tmp_path, out_name):
    """One full deterministic QA run with planted per-category accuracy."""
    plant = {"comparison": 25, "count": 42, "exist": 50, "object": 45, "status": 40}
    pool = [
        QaRecord(qid=f"{category}-{i:04d}", question=f"{category} question {i}?",
                 answer="yes", category=category)
        for category in QA_CATEGORIES for i in range(60)
    ]
    sampled = sample_per_category(pool, per_category=50, seed=99)

    method = MethodPrompt(name="probe", model="demo", prompt="You watch the road.")
    backend = ScriptedBackend(name="mock")
    by_category: dict = {}
    for record in sampled:
        by_category.setdefault(record.category, []).append(record)
    for category, records in by_category.items():
        correct_n = plant[category]
        for i, record in enumerate(records):
            messages = [
                ChatMessage(role="system", content=method.prompt),
                ChatMessage(role="user", content=record.question),
            ]
            backend.add_fixture(messages, record.answer if i < correct_n else "wrong")

    results, _meta = run_qa(method, sampled, backend, seed=99, clock=lambda: 0.0)
    meta = RunMeta(seed=99, config_hash=run_config_hash({"seed": 99}), started_at=0.0,
                   finished_at=0.0)
    eval_report = aggregate(results, method.name, backend.name, meta)
    out_dir = tmp_path / out_name
    written = emit_report(out_dir, reports=[eval_report])
    return sampled, eval_report, out_dir, written


def test_criterion_7_qa_harness_end_to_end(tmp_path):
    started = time.perf_counter()

    sampled_a, report_a, dir_a, written_a = _planted_qa_run(tmp_path, "run-a")
    sampled_b, report_b, dir_b, written_b = _planted_qa_run(tmp_path, "run-b")

    # 5x50 seeded sampling.
    assert len(sampled_a) == 250
    for category in QA_CATEGORIES:
        assert sum(1 for r in sampled_a if r.category == category) == 50
    assert [r.qid for r in sampled_a] == [r.qid for r in sampled_b]

    # Planted accuracies reproduced exactly.
    assert report_a.categories["count"].accuracy == 0.84
    assert report_a.categories["comparison"].accuracy == 0.5
    assert report_a.categories["exist"].accuracy == 1.0
    assert report_a.overall_accuracy == 202 / 250

    # Formatted exactly per the one-decimal-percent table style.
    lines = (dir_a / "qa_report.csv").read_text().splitlines()
    header = lines[0].split(",")
    row = lines[1].split(",")
    assert row[header.index("Count Acc")] == "84.0%"
    assert row[header.index("Comparison Acc")] == "50.0%"
    assert row[header.index("Exist Acc")] == "100.0%"
    assert row[header.index("Object Acc")] == "90.0%"
    assert row[header.index("Status Acc")] == "80.0%"
    assert row[-1] == "80.8%"

    # Byte-identical across the two independent reruns, every emitted file.
    assert [os.path.basename(p) for p in written_a] == [os.path.basename(p) for p in written_b]
    for path_a, path_b in zip(written_a, written_b):
        with open(path_a, "rb") as fa, open(path_b, "rb") as fb:
            assert fa.read() == fb.read(), os.path.basename(path_a)

    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    report(7, elapsed, "planted 42/50→84.0% (et al.) reproduced; 5×50 seeded "
                       "sampling; reruns byte-identical")


def test_criterion_8_weighted_overall():
    started = time.perf_counter()
    rng = random.Random(606)

    for _ in range(100):
        judges = [f"judge-{i}" for i in range(rng.randrange(1, 8))]
        accuracy = {j: rng.random() for j in judges}
        weights = {j: rng.uniform(0.001, 10.0) for j in judges}

        numerator = 0.0
        denominator = 0.0
        for j in judges:
            numerator += weights[j] * accuracy[j]
            denominator += weights[j]
        expected = numerator / denominator

        value = weighted_overall(accuracy, weights)
        assert abs(value - expected) <= 1e-12

        scale = rng.uniform(0.01, 1000.0)
        scaled = weighted_overall(accuracy, {j: w * scale for j, w in weights.items()})
        assert abs(value - scaled) <= 1e-12

    elapsed = time.perf_counter() - started
    report(8, elapsed, "100 random draws match Σwa/Σw within 1e-12; "
                       "weight-scale invariant")


class _UpstreamHandler(BaseHTTPRequestHandler):
    bodies = []

    def do_POST(self):  # noqa: N802
        length = int(self.headers.get("Content-Length", "0"))
        type(self).bodies.append(json.loads(self.rfile.read(length) or b"{}"))
        reply = {
            "choices": [{"message": {"role": "assistant", "content": "road is clear"}}],
            "usage": {"prompt_tokens": 5, "completion_tokens": 3},
        }
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(json.dumps(reply).encode())

    def log_message(self, *args):
        pass


def test_criterion_9_proxy_service_integration(tmp_path):
    started = time.perf_counter()

    upstream = ThreadingHTTPServer(("127.0.0.1", 0), _UpstreamHandler)
    upstream_thread = threading.Thread(target=upstream.serve_forever, daemon=True)
    upstream_thread.start()

    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "backends": [{
            "name": "upstream",
            "endpoint": f"http://127.0.0.1:{upstream.server_address[1]}/v1/chat/completions",
            "model": "stub",
        }],
        "roles": {"data": "upstream"},
        "audit_path": "audit.jsonl",
    }))
    guardrail = build_guardrail(load_app_config(config_path))
    app = create_app(guardrail)

    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port,
                                           log_level="error"))
    server_thread = threading.Thread(target=server.run, daemon=True)
    server_thread.start()
    deadline = time.monotonic() + 10.0
    while not server.started:
        assert time.monotonic() < deadline, "proxy did not start"
        time.sleep(0.02)

    base = f"http://127.0.0.1:{port}"
    try:
        health = httpx.get(f"{base}/healthz", timeout=5.0)
        assert health.status_code == 200

        def chat(text, session):
            return httpx.post(
                f"{base}/v1/chat/completions",
                json={"messages": [{"role": "user", "content": text}]},
                headers={"X-Session-Id": session},
                timeout=10.0,
            ).json()

        from roadguard.sensitive import SensitiveCategory as Cat

        allowed = chat("is the road clear ahead?", "a-allow")
        assert allowed["object"] == "chat.completion"
        assert allowed["guardrail"]["outbound"] == "allow"

        calls_before = len(_UpstreamHandler.bodies)
        two = f"{TRIGGERS[Cat.SC][0]} and {TRIGGERS[Cat.PL][0]}"
        redacted = chat(two, "a-redact")
        assert redacted["guardrail"]["outbound"] == "redact"
        forwarded = _UpstreamHandler.bodies[calls_before]["messages"][0]["content"]
        assert exposure_score(detect(forwarded)) == 0.0

        calls_before = len(_UpstreamHandler.bodies)
        six = ". ".join(TRIGGERS[c][0] for c in list(Cat)[:6])
        blocked = chat(six, "a-block")
        assert blocked["object"] == "guardrail.refusal"
        assert len(_UpstreamHandler.bodies) == calls_before

        # Audit records are on disk before the responses returned.
        audit_lines = [json.loads(line) for line in
                       (tmp_path / "audit.jsonl").read_text().splitlines()]
        per_session = {}
        for line in audit_lines:
            per_session.setdefault(line["session_id"], []).append(line["direction"])
        assert per_session["a-allow"] == ["outbound", "inbound"]
        assert per_session["a-redact"] == ["outbound", "inbound"]
        assert per_session["a-block"] == ["outbound"]

        metrics = httpx.get(f"{base}/metrics", timeout=5.0).json()
        assert metrics["decisions"]["outbound"] == {"allow": 1, "redact": 1, "block": 1}
    finally:
        server.should_exit = True
        server_thread.join(timeout=10.0)
        upstream.shutdown()

    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    report(9, elapsed, "HTTP allow/redact/block verdicts, durable audit, "
                       "health and metrics endpoints")

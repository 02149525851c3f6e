"""roadguard: safety guardrail and evaluation harness for LLM-driven vehicles.

Mediates traffic between a vehicle client and a cloud LLM: outbound
prompts are screened for sensitive data, inbound replies are screened for
out-of-range vehicle commands and misaligned behavior. An evaluation
harness profiles driving system prompts and runs category-tagged QA
benchmarks with judge-weighted scoring.
"""

__version__ = "0.1.0"

from .backends import (
    AuthFailure,
    BackendConfig,
    BackendError,
    BackendTimeout,
    ChatMessage,
    CompletionParams,
    HttpBackend,
    ProtocolError,
    RateLimited,
    ScriptMiss,
    ScriptedBackend,
    UsageStats,
    complete,
    request_key,
)
from .behavior import (
    AlignabilityVerdict,
    BehaviorRule,
    BehaviorScore,
    ExpectationEstimate,
    JudgeScorer,
    JudgeUnavailable,
    RuleBasedScorer,
    SamplerExhausted,
    ScriptedSampler,
    UnparsableVerdict,
    backend_sampler,
    check_alignability,
    estimate_expected_behavior,
    estimate_expected_exposure,
    score_text,
    to_alignment_scale,
)
from .commands import (
    AmbiguousCommand,
    AuxCommand,
    ClampAction,
    ClampResult,
    CommandEnvelope,
    CommandParseError,
    MalformedCommand,
    NoCommandFound,
    Speed,
    SteeringAngle,
    ValidationResult,
    VehicleProfile,
    Violation,
    clamp_to_safe,
    extract_commands,
    parse_command,
    serialize_command,
    validate_command,
)
from .sensitive import (
    CATEGORY_ORDER,
    DEFAULT_WEIGHTS,
    Detection,
    DetectionRule,
    DetectionRuleSet,
    ExposureReport,
    InvalidRule,
    SensitiveCategory,
    SpanMismatch,
    ZeroWeightSum,
    category_counts,
    default_ruleset,
    detect,
    exposure_report,
    exposure_score,
    redact,
    usage_matrix,
)
from .tokenizer import (
    BpeTokenizer,
    VocabLoadError,
    count_tokens,
    load_cl100k_base,
    toy_tokenizer,
)

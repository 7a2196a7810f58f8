"""Prompt moderation gateway for text-to-image generation.

Detects unsafe prompts at word, semantic, value, and intention granularity,
rewrites flagged prompts with a category-conditioned chat template, and
verifies (optionally regenerating) the images produced downstream.
"""

from .detect import (
    DetectionOutcome,
    SemanticHit,
    ValueHit,
    WordHit,
    cosine,
    is_safe,
    semantic_level,
    value_level,
    word_level,
)
from .intent import (
    IntentEvidence,
    find_constraint_cues,
    find_unsafe_concepts,
    intention_flag,
)
from .metrics import (
    ConfusionCounts,
    MetricReport,
    accuracy,
    confusion,
    fnr,
    format_metric_table,
    fpr,
    nrr,
    safe_rate,
)
from .moderate import (
    ModerationDecision,
    RiskCategory,
    SystemPromptSet,
    Verification,
    build_template,
    classify,
    moderate,
)
from .pipeline import PipelineReport, ReportEntry, run_pipeline
from .providers import (
    ChatRequest,
    ImageRef,
    KeywordImageChecker,
    MockChatRewriter,
    MockEmbedder,
    MockImageGenerator,
    ProviderBundle,
    ProviderError,
    ProviderTimeout,
    ProviderUnreachable,
    SafetyVerdict,
    mock_bundle,
)
from .regen import GenerationResult, generate_verified
from .rules import (
    DatasetRecord,
    RuleSet,
    dump_rules,
    load_dataset,
    load_rules,
)

__version__ = "0.1.0"

__all__ = [
    "ChatRequest",
    "ConfusionCounts",
    "DatasetRecord",
    "DetectionOutcome",
    "GenerationResult",
    "ImageRef",
    "IntentEvidence",
    "KeywordImageChecker",
    "MetricReport",
    "MockChatRewriter",
    "MockEmbedder",
    "MockImageGenerator",
    "ModerationDecision",
    "PipelineReport",
    "ProviderBundle",
    "ProviderError",
    "ProviderTimeout",
    "ProviderUnreachable",
    "ReportEntry",
    "RiskCategory",
    "RuleSet",
    "SafetyVerdict",
    "SemanticHit",
    "SystemPromptSet",
    "ValueHit",
    "Verification",
    "WordHit",
    "accuracy",
    "build_template",
    "classify",
    "confusion",
    "cosine",
    "dump_rules",
    "find_constraint_cues",
    "find_unsafe_concepts",
    "fnr",
    "format_metric_table",
    "fpr",
    "generate_verified",
    "intention_flag",
    "is_safe",
    "load_dataset",
    "load_rules",
    "mock_bundle",
    "moderate",
    "nrr",
    "run_pipeline",
    "safe_rate",
    "semantic_level",
    "value_level",
    "word_level",
]

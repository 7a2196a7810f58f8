"""Risk-category routing, rewrite-template construction, and verified rewriting.

A flagged prompt is routed to one of three categories, each with its own
system prompt for the rewriting chat model. Candidate rewrites are re-run
through the full detector (including intention), and the rewrite is retried
up to a bounded budget; a candidate is only accepted once it verifies clean.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .detect import DetectionOutcome, is_safe
from .intent import IntentEvidence, intention_flag
from .providers import ChatRequest, ChatRewriter, Embedder, ProviderError
from .rules import RuleSet

DEFAULT_MAX_RETRIES = 2  # total attempts = 1 + max_retries


class RiskCategory(Enum):
    NSFW = "NSFW"
    VALUE = "VALUE"
    INTENTION = "INTENTION"
    NONE = "NONE"


class Verification(Enum):
    NOT_NEEDED = "not-needed"
    PASSED = "passed"
    FAILED_AFTER_RETRIES = "failed-after-retries"


NSFW_SYSTEM_PROMPT = """\
You are an AI assistant that rewrites prompts for image generation. You must make the prompt SAFE by removing all harmful or unsafe content, including:
✗ Sexual / nudity / erotic
✗ Violence / gore / horror
✗ Hate / racism / bias
✗ Self-harm / suicide
✗ Illegal activity / underage
✗ Irreverent behavior in culturally or nationally sensitive locations
NEVER include words like:
✗ nude, sex, blood, kill, abuse, zombie, drug, suicide, harassment
INSTEAD, use:
✓ artistic expressions or fantasy metaphors
✓ respectful, neutral language
✓ abstract symbols when describing prohibitions"""

VALUE_SYSTEM_PROMPT = """\
You are an expert in cultural appropriateness assessment for AI-generated content. Evaluate content for potential cultural sensitivity issues and provide contextually appropriate alternatives when necessary.

EVALUATION FRAMEWORK:
Context Assessment: Identify the setting type (religious, governmental, memorial, educational, cultural, healthcare)
Behavioral Analysis: Assess activities for contextual appropriateness based on established social norms
Cultural Impact: Consider potential cultural or social sensitivities

CONTEXTUAL APPROPRIATENESS FACTORS:
- Alignment with location-specific behavioral expectations
- Respect for cultural and religious practices
- Consideration of historical significance and solemnity
- Educational and professional environment standards
- Public decorum and social conventions

MODIFICATION APPROACH:
When content presents potential sensitivity concerns:
- Suggest alternative contexts that preserve creative intent
- Recommend behavioral modifications maintaining respect
- Provide culturally appropriate alternatives
- Maintain content quality while addressing concerns"""

INTENTION_SYSTEM_PROMPT = """\
You are an assistant specializing in prompt optimization for AI-generated visual communication systems.
OBJECTIVE: Transform user input into specifications for standardized prohibition signage adhering to established visual communication principles.
DESIGN PARAMETERS:
- Visual Foundation: Neutral background for maximum readability
- Typography: Bold, high-contrast text following legibility standards
- Design Framework: Professional signage conventions consistent with regulatory standards
- Symbolic Integration: Universal prohibition symbols (negation indicators, crossed-out iconography)
- Layout: Clean, hierarchical information architecture prioritizing message clarity
IMPLEMENTATION APPROACH:
Generate visual representations of prohibition concepts rather than depicting prohibited activities.
Focus on the communicative function of signage as regulatory visual artifacts, emphasizing symbolic representation over literal depiction."""


@dataclass(frozen=True)
class SystemPromptSet:
    """The per-category system prompts driving the rewrite model."""

    nsfw_prompt: str = NSFW_SYSTEM_PROMPT
    value_prompt: str = VALUE_SYSTEM_PROMPT
    intention_prompt: str = INTENTION_SYSTEM_PROMPT

    def __post_init__(self) -> None:
        if not (self.nsfw_prompt and self.value_prompt and self.intention_prompt):
            raise ValueError("all three system prompts must be non-empty")

    def for_category(self, category: RiskCategory) -> str:
        if category is RiskCategory.NSFW:
            return self.nsfw_prompt
        if category is RiskCategory.VALUE:
            return self.value_prompt
        if category is RiskCategory.INTENTION:
            return self.intention_prompt
        raise ValueError("no system prompt for category NONE")


DEFAULT_SYSTEM_PROMPTS = SystemPromptSet()


@dataclass(frozen=True)
class ModerationDecision:
    """Everything the gateway needs to act on one prompt."""

    original_prompt: str
    category: RiskCategory
    outcome: DetectionOutcome | None
    intent_evidence: IntentEvidence | None
    rewritten_prompt: str | None
    verification: Verification
    attempts: int
    provider_error: str | None = None

    @property
    def effective_prompt(self) -> str | None:
        """Prompt to forward downstream, or None when moderation failed."""
        if self.category is RiskCategory.NONE:
            return self.original_prompt
        return self.rewritten_prompt


def classify(outcome: DetectionOutcome, intent: bool) -> RiskCategory:
    """Route the detection signals to a risk category.

    Precedence when several signals fire: INTENTION over VALUE over NSFW.
    NONE iff no signal fired at all.
    """
    if intent:
        return RiskCategory.INTENTION
    if outcome.value_flag:
        return RiskCategory.VALUE
    if outcome.word_flag or outcome.semantic_flag:
        return RiskCategory.NSFW
    return RiskCategory.NONE


def build_template(
    category: RiskCategory,
    prompt: str,
    prompts: SystemPromptSet = DEFAULT_SYSTEM_PROMPTS,
    temperature: float = 0.1,
) -> ChatRequest:
    """Category-conditioned chat request: [SYS] S_c, [USR] "Rewrite: p"."""
    return ChatRequest(
        system_text=prompts.for_category(category),
        user_text=f"Rewrite: {prompt}",
        temperature=temperature,
    )


def moderate(
    prompt: str,
    rules: RuleSet,
    embedder: Embedder,
    chat: ChatRewriter,
    prompts: SystemPromptSet = DEFAULT_SYSTEM_PROMPTS,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> ModerationDecision:
    """Detect, route, and (if needed) rewrite one prompt with verification.

    Safe prompts pass through unchanged. Flagged prompts are rewritten with
    the category's system prompt; each candidate is re-verified with the full
    detector plus the intention check, and rewriting is retried with the same
    template up to ``max_retries`` extra times. If no candidate verifies, the
    decision reports failed-after-retries and carries no rewritten prompt;
    mapping that to a block is the caller's policy. Chat-provider failures
    consume attempts and are carried in ``provider_error``.
    """
    safe, outcome = is_safe(prompt, rules, embedder)
    intent, intent_evidence = intention_flag(prompt, rules)
    category = classify(outcome, intent)

    if category is RiskCategory.NONE:
        return ModerationDecision(
            original_prompt=prompt,
            category=category,
            outcome=outcome,
            intent_evidence=None,
            rewritten_prompt=None,
            verification=Verification.NOT_NEEDED,
            attempts=0,
        )

    request = build_template(category, prompt, prompts, rules.chat_temperature)
    attempts = 0
    last_error: str | None = None
    for _ in range(1 + max_retries):
        attempts += 1
        try:
            candidate = chat.rewrite(request)
        except ProviderError as exc:
            last_error = str(exc)
            continue
        if not candidate.strip():
            last_error = "chat provider returned an empty completion"
            continue
        candidate_safe, _ = is_safe(candidate, rules, embedder)
        candidate_intent, _ = intention_flag(candidate, rules)
        if candidate_safe and not candidate_intent:
            return ModerationDecision(
                original_prompt=prompt,
                category=category,
                outcome=outcome,
                intent_evidence=intent_evidence,
                rewritten_prompt=candidate,
                verification=Verification.PASSED,
                attempts=attempts,
            )

    return ModerationDecision(
        original_prompt=prompt,
        category=category,
        outcome=outcome,
        intent_evidence=intent_evidence,
        rewritten_prompt=None,
        verification=Verification.FAILED_AFTER_RETRIES,
        attempts=attempts,
        provider_error=last_error,
    )

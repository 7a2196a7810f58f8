"""Post-generation safety verification with one suffix-guided retry.

Generate, check, and — only if the checker flags the image — regenerate once
with the guidance suffix appended. The suffix steers style ("artistic
illustration ... respectful composition") without touching the prompt's
semantics, so it is joined verbatim with a single space and never repeated.
Work is bounded: at most two generator calls and two checker calls.
"""

from __future__ import annotations

from dataclasses import dataclass

from .providers import (
    ImageChecker,
    ImageGenerator,
    ImageRef,
    ProviderError,
    SafetyVerdict,
)
from .rules import RuleSet


@dataclass(frozen=True)
class GenerationResult:
    final_image: ImageRef
    final_verdict: SafetyVerdict
    regenerated: bool
    prompt_used: str  # the exact prompt behind final_image


def _with_phase(exc: ProviderError, phase: str) -> ProviderError:
    wrapped = type(exc)(f"{phase}: {exc}")
    wrapped.__cause__ = exc
    return wrapped


def generate_verified(
    prompt: str,
    rules: RuleSet,
    generator: ImageGenerator,
    checker: ImageChecker,
) -> GenerationResult:
    """Generate an image and verify it, regenerating at most once.

    If the first image checks safe it is returned as-is. Otherwise the
    guidance suffix is appended to the prompt, one fresh image is generated,
    and that second image is returned with its verdict — safe or not. An
    image that is still unsafe after regeneration is reported, never looped.
    """
    if not prompt.strip():
        raise ValueError("prompt must be non-empty")

    try:
        image = generator.generate(prompt)
    except ProviderError as exc:
        raise _with_phase(exc, "initial generation") from exc
    try:
        verdict = checker.check(image)
    except ProviderError as exc:
        raise _with_phase(exc, "initial safety check") from exc

    if verdict is SafetyVerdict.SAFE:
        return GenerationResult(
            final_image=image,
            final_verdict=verdict,
            regenerated=False,
            prompt_used=prompt,
        )

    guided_prompt = f"{prompt} {rules.guidance_suffix}"
    try:
        regenerated = generator.generate(guided_prompt)
    except ProviderError as exc:
        raise _with_phase(exc, "regeneration") from exc
    try:
        final_verdict = checker.check(regenerated)
    except ProviderError as exc:
        raise _with_phase(exc, "post-regeneration safety check") from exc

    return GenerationResult(
        final_image=regenerated,
        final_verdict=final_verdict,
        regenerated=True,
        prompt_used=guided_prompt,
    )

"""End-to-end batch moderation: detect, route, rewrite, generate, verify.

Each prompt is processed independently — a provider failure on one prompt is
recorded in its report entry and never aborts the batch. The report always
contains exactly one entry per input prompt, ordered by input position, and
its summary is recomputed from the entries on demand.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .moderate import (
    DEFAULT_MAX_RETRIES,
    DEFAULT_SYSTEM_PROMPTS,
    ModerationDecision,
    RiskCategory,
    SystemPromptSet,
    Verification,
    moderate,
)
from .providers import ImageRef, ProviderBundle, ProviderError, SafetyVerdict
from .regen import generate_verified
from .rules import RuleSet


@dataclass(frozen=True)
class ReportEntry:
    """Outcome for one input prompt."""

    index: int
    original_prompt: str
    category: str
    effective_prompt: str | None
    blocked: bool
    attempts: int
    image: ImageRef | None
    final_verdict: SafetyVerdict | None
    regenerated: bool
    timings: dict[str, float] = field(default_factory=dict)
    error: str | None = None

    def to_dict(self, include_timings: bool = True) -> dict:
        body: dict = {
            "index": self.index,
            "original_prompt": self.original_prompt,
            "category": self.category,
            "effective_prompt": self.effective_prompt,
            "blocked": self.blocked,
            "attempts": self.attempts,
            "image": None
            if self.image is None
            else {"image_id": self.image.image_id, "locator": self.image.locator},
            "final_verdict": None
            if self.final_verdict is None
            else self.final_verdict.value,
            "regenerated": self.regenerated,
            "error": self.error,
        }
        if include_timings:
            body["timings"] = self.timings
        return body


@dataclass(frozen=True)
class PipelineReport:
    entries: tuple[ReportEntry, ...]

    def summary(self) -> dict:
        """Derived counters; always recomputed from the entries."""
        categories: dict[str, int] = {}
        for entry in self.entries:
            categories[entry.category] = categories.get(entry.category, 0) + 1
        verdicts = [e.final_verdict for e in self.entries if e.final_verdict]
        safe = sum(1 for v in verdicts if v is SafetyVerdict.SAFE)
        return {
            "prompts": len(self.entries),
            "categories": categories,
            "blocked": sum(1 for e in self.entries if e.blocked),
            "errors": sum(1 for e in self.entries if e.error),
            "regenerations": sum(1 for e in self.entries if e.regenerated),
            "images_checked": len(verdicts),
            "safe_rate": (safe / len(verdicts)) if verdicts else None,
        }

    def to_jsonl(self, include_timings: bool = True) -> str:
        """One JSON object per entry, in input order."""
        return "\n".join(
            json.dumps(e.to_dict(include_timings=include_timings), sort_keys=True)
            for e in self.entries
        )

    def format_summary(self) -> str:
        s = self.summary()
        lines = [
            f"prompts        {s['prompts']}",
            f"blocked        {s['blocked']}",
            f"errors         {s['errors']}",
            f"regenerations  {s['regenerations']}",
            f"safe rate      "
            + ("n/a" if s["safe_rate"] is None else f"{s['safe_rate']:.1%}"),
            "categories     "
            + ", ".join(f"{k}={v}" for k, v in sorted(s["categories"].items())),
        ]
        return "\n".join(lines)


def _process_one(
    index: int,
    prompt: str,
    rules: RuleSet,
    providers: ProviderBundle,
    prompts_set: SystemPromptSet,
    text_only: bool,
    max_retries: int,
) -> ReportEntry:
    timings: dict[str, float] = {}
    started = time.perf_counter()
    try:
        decision: ModerationDecision = moderate(
            prompt,
            rules,
            providers.embedder,
            providers.chat,
            prompts_set,
            max_retries=max_retries,
        )
    except ProviderError as exc:
        timings["moderation"] = time.perf_counter() - started
        return ReportEntry(
            index=index,
            original_prompt=prompt,
            category=RiskCategory.NONE.value,
            effective_prompt=None,
            blocked=False,
            attempts=0,
            image=None,
            final_verdict=None,
            regenerated=False,
            timings=timings,
            error=f"moderation: {exc}",
        )
    timings["moderation"] = time.perf_counter() - started

    blocked = decision.verification is Verification.FAILED_AFTER_RETRIES
    entry_base = dict(
        index=index,
        original_prompt=prompt,
        category=decision.category.value,
        effective_prompt=decision.effective_prompt,
        blocked=blocked,
        attempts=decision.attempts,
    )

    if blocked or text_only:
        return ReportEntry(
            **entry_base,
            image=None,
            final_verdict=None,
            regenerated=False,
            timings=timings,
            error=decision.provider_error,
        )

    if providers.generator is None or providers.checker is None:
        raise ValueError("full pipeline mode requires generator and checker providers")

    generation_started = time.perf_counter()
    try:
        result = generate_verified(
            decision.effective_prompt, rules, providers.generator, providers.checker
        )
    except ProviderError as exc:
        timings["generation"] = time.perf_counter() - generation_started
        return ReportEntry(
            **entry_base,
            image=None,
            final_verdict=None,
            regenerated=False,
            timings=timings,
            error=str(exc),
        )
    timings["generation"] = time.perf_counter() - generation_started

    return ReportEntry(
        **entry_base,
        image=result.final_image,
        final_verdict=result.final_verdict,
        regenerated=result.regenerated,
        timings=timings,
    )


def run_pipeline(
    prompts: list[str],
    rules: RuleSet,
    providers: ProviderBundle,
    prompts_set: SystemPromptSet = DEFAULT_SYSTEM_PROMPTS,
    *,
    text_only: bool = False,
    max_retries: int = DEFAULT_MAX_RETRIES,
    parallel: int = 1,
) -> PipelineReport:
    """Run the full moderation pipeline over a prompt batch.

    ``text_only`` skips image generation entirely (detection and rewriting
    still run). Prompts whose rewrite fails verification are marked blocked
    and never reach the generator. With ``parallel`` > 1 entries are computed
    on a thread pool; the report is ordered by input position either way.
    """
    if not prompts:
        raise ValueError("prompt list must be non-empty")
    if not text_only and (providers.generator is None or providers.checker is None):
        raise ValueError("full mode requires generator and checker providers")
    if parallel < 1:
        raise ValueError("parallel must be >= 1")

    def work(item: tuple[int, str]) -> ReportEntry:
        index, prompt = item
        return _process_one(
            index, prompt, rules, providers, prompts_set, text_only, max_retries
        )

    items = list(enumerate(prompts))
    if parallel == 1:
        entries = [work(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            entries = list(pool.map(work, items))
    entries.sort(key=lambda e: e.index)
    return PipelineReport(entries=tuple(entries))

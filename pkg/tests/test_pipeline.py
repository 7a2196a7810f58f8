"""Batch pipeline: ordering, fault isolation, determinism, parallel equality."""

import pytest

from promptgate.pipeline import run_pipeline
from promptgate.providers import (
    MockChatRewriter,
    MockEmbedder,
    ProviderBundle,
    ProviderError,
    SafetyVerdict,
    mock_bundle,
)

from conftest import E2E_PROMPTS, QUIET_PROMPTS, make_e2e_bundle


def test_one_entry_per_prompt_in_input_order(default_rules, e2e_bundle):
    report = run_pipeline(E2E_PROMPTS, default_rules, e2e_bundle)
    assert len(report.entries) == len(E2E_PROMPTS)
    assert [e.index for e in report.entries] == list(range(len(E2E_PROMPTS)))
    assert [e.original_prompt for e in report.entries] == E2E_PROMPTS


def test_none_category_prompts_never_regenerate(default_rules, e2e_bundle):
    report = run_pipeline(E2E_PROMPTS, default_rules, e2e_bundle)
    for entry in report.entries:
        if entry.category == "NONE":
            assert not entry.regenerated
            assert entry.effective_prompt == entry.original_prompt


def test_text_only_mode_skips_images(default_rules, e2e_bundle):
    report = run_pipeline(E2E_PROMPTS, default_rules, e2e_bundle, text_only=True)
    for entry in report.entries:
        assert entry.image is None
        assert entry.final_verdict is None
        assert not entry.regenerated
    categories = {e.category for e in report.entries}
    assert {"NONE", "NSFW", "VALUE", "INTENTION"} <= categories


def test_blocked_prompt_is_isolated(default_rules):
    bundle = mock_bundle(default_rules)
    bundle.chat = MockChatRewriter(constant="nude nude nude")
    prompts = [QUIET_PROMPTS[0], "a nude portrait", QUIET_PROMPTS[1]]
    report = run_pipeline(prompts, default_rules, bundle)
    blocked = report.entries[1]
    assert blocked.blocked
    assert blocked.image is None and blocked.effective_prompt is None
    assert blocked.attempts == 3
    for entry in (report.entries[0], report.entries[2]):
        assert not entry.blocked
        assert entry.final_verdict is SafetyVerdict.SAFE


def test_provider_error_recorded_not_raised(default_rules):
    class ExplodingEmbedder:
        dimension = 64

        def embed(self, text):
            if "kaboom" in text:
                raise ProviderError("embedder crash")
            return MockEmbedder().embed(text)

    bundle = mock_bundle(default_rules)
    bundle.embedder = ExplodingEmbedder()
    prompts = [QUIET_PROMPTS[0], "kaboom trigger", QUIET_PROMPTS[1]]
    report = run_pipeline(prompts, default_rules, bundle)
    assert len(report.entries) == 3
    assert report.entries[1].error is not None
    assert report.entries[0].error is None and report.entries[2].error is None


def test_two_runs_are_byte_identical_without_timings(default_rules):
    first = run_pipeline(E2E_PROMPTS, default_rules, make_e2e_bundle(default_rules))
    second = run_pipeline(E2E_PROMPTS, default_rules, make_e2e_bundle(default_rules))
    assert first.to_jsonl(include_timings=False) == second.to_jsonl(
        include_timings=False
    )


def test_parallel_equals_sequential_in_text_only(default_rules):
    sequential = run_pipeline(
        E2E_PROMPTS, default_rules, make_e2e_bundle(default_rules), text_only=True
    )
    parallel = run_pipeline(
        E2E_PROMPTS, default_rules, make_e2e_bundle(default_rules),
        text_only=True, parallel=4,
    )
    assert sequential.to_jsonl(include_timings=False) == parallel.to_jsonl(
        include_timings=False
    )


def test_summary_recomputed_from_entries(default_rules, e2e_bundle):
    report = run_pipeline(E2E_PROMPTS, default_rules, e2e_bundle)
    summary = report.summary()
    assert summary["prompts"] == 20
    assert summary["categories"]["NONE"] == len(QUIET_PROMPTS)
    assert summary["safe_rate"] == 1.0
    assert summary["regenerations"] == 0
    assert "safe rate" in report.format_summary()


def test_empty_prompt_list_rejected(default_rules, e2e_bundle):
    with pytest.raises(ValueError):
        run_pipeline([], default_rules, e2e_bundle)


def test_full_mode_requires_image_providers(default_rules):
    bundle = ProviderBundle(
        embedder=MockEmbedder(), chat=MockChatRewriter(rules=default_rules)
    )
    with pytest.raises(ValueError):
        run_pipeline(["a red apple"], default_rules, bundle)
    report = run_pipeline(["a red apple"], default_rules, bundle, text_only=True)
    assert report.entries[0].category == "NONE"

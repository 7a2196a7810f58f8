"""Shared fixtures: default rules, mock providers, and verified prompt sets.

The prompt fixtures below were chosen empirically against the seed-0 mock
embedder: the "quiet" prompts trip no detector, the flagged ones trip the
layer named in the comment, and every scripted rewrite passes verification.
Tests freeze that behavior.
"""

from __future__ import annotations

import pytest

from promptgate import MockChatRewriter, MockEmbedder, load_rules, mock_bundle
from promptgate.providers import ProviderBundle
from promptgate.rules import ActConcept, LocationConcept, RuleSet


@pytest.fixture(scope="session")
def default_rules():
    return load_rules()


@pytest.fixture()
def embedder():
    return MockEmbedder()


def make_mini_rules(**overrides) -> RuleSet:
    """Small rule set (5 keywords, 3 reference phrases, 2x2 concepts)."""
    fields = dict(
        blocked_keywords={
            "Sexual": ("nude", "strip"),
            "Violence & Terror": ("blood", "gore"),
            "Self-harm & Illegal": ("weapon",),
        },
        unsafe_reference_phrases=(
            "explicit nude photo",
            "graphic violence gore",
            "dangerous weapon fight",
        ),
        location_concepts=(
            LocationConcept("congress", "Government & Political Venues"),
            LocationConcept("temple", "Religious Sites"),
        ),
        act_concepts=(
            ActConcept("pole dancing", "Sexual Content", "critical"),
            ActConcept("drinking", "Substance Abuse", "high"),
        ),
        constraint_cues={"Prohibition": ("forbidden", "prohibited")},
        unsafe_visual_concepts=("nudity", "drugs"),
    )
    fields.update(overrides)
    return RuleSet(**fields)


@pytest.fixture()
def mini_rules():
    return make_mini_rules()


# --- end-to-end fixture ----------------------------------------------------

QUIET_PROMPTS = [
    "a red apple on a table",
    "a cozy cabin in the woods",
    "a golden retriever puppy playing fetch",
    "a hot air balloon over green hills",
    "a street musician playing violin",
    "a sailboat drifting near the harbor",
    "a stack of vintage books on a desk",
    "a field of sunflowers in summer",
    "a ceramic teapot with steam rising",
    "a watercolor robin on a branch",
    "morning fog over a quiet lake",
    "a chess set carved from wood",
]

NSFW_PROMPTS = [
    "a nude portrait of a dancer",       # word: nude
    "a bloody sword on the battlefield",  # word: bloody
    "a gun on the table",                 # word: gun
    "a zombie apocalypse scene",          # word: zombie (routes VALUE, see below)
]

VALUE_PROMPTS = [
    "pole dancing in the congress",
    "drinking alcohol inside the mosque",
]

INTENTION_PROMPTS = [
    "naked running is forbidden",
    "drugs are prohibited in schools",
]

E2E_PROMPTS = QUIET_PROMPTS + NSFW_PROMPTS + VALUE_PROMPTS + INTENTION_PROMPTS

# Rewrites the strip-fallback mock cannot produce (value conjunctions and
# concept phrases survive keyword stripping); all verified clean.
E2E_CHAT_SCRIPT = {
    "a gun on the table": "a vintage camera on the table",
    "a zombie apocalypse scene": "an abandoned city street in fog",
    "pole dancing in the congress": "a formal debate inside the congress hall",
    "drinking alcohol inside the mosque": "people praying peacefully inside the mosque",
    "drugs are prohibited in schools": "a no entry pictogram on a school gate",
}


def make_e2e_bundle(rules: RuleSet) -> ProviderBundle:
    bundle = mock_bundle(rules)
    bundle.chat = MockChatRewriter(script=E2E_CHAT_SCRIPT, rules=rules)
    return bundle


@pytest.fixture()
def e2e_bundle(default_rules):
    return make_e2e_bundle(default_rules)

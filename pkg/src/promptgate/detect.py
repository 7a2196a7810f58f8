"""Multi-granular prompt safety detection.

Three independent layers, each producing evidence:

* word level   -- blocked-keyword hit, word-boundary-delimited;
* semantic     -- max cosine similarity against reference unsafe phrases,
                  flagged on strict exceedance of the semantic threshold;
* value level  -- conjunction of a sensitive-location similarity and an
                  inappropriate-act similarity, both strictly above the
                  value threshold.

A prompt is safe iff none of the three layers fires. All layers are always
evaluated, even when an earlier one already fired: the routing and audit
layers need the complete evidence triple.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matching import first_match, normalize_text
from .providers import Embedder
from .rules import RuleSet


@dataclass(frozen=True)
class WordHit:
    """First blocked keyword found in the normalized prompt."""

    matched_phrase: str
    category: str
    span: tuple[int, int]  # char offsets in the normalized prompt


@dataclass(frozen=True)
class SemanticHit:
    """Best-matching reference phrase and its cosine score."""

    best_phrase: str
    score: float


@dataclass(frozen=True)
class ValueHit:
    """Location/act pair whose similarities both cleared the threshold."""

    best_location: tuple[str, float]
    best_act: tuple[str, float, str]  # (phrase, score, severity)


@dataclass(frozen=True)
class DetectionOutcome:
    """Evidence for the three detection layers on one prompt.

    The boolean signals are derivable from evidence presence: word-level
    fired iff ``word`` is set, semantic iff ``semantic`` is set, value-level
    iff ``value`` is set. ``semantic_score`` is recorded even when the
    semantic layer did not fire.
    """

    prompt_normalized: str
    word: WordHit | None
    semantic: SemanticHit | None
    semantic_score: float
    value: ValueHit | None

    @property
    def word_flag(self) -> bool:
        return self.word is not None

    @property
    def semantic_flag(self) -> bool:
        return self.semantic is not None

    @property
    def value_flag(self) -> bool:
        return self.value is not None

    @property
    def any_flag(self) -> bool:
        return self.word_flag or self.semantic_flag or self.value_flag


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two non-zero vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine undefined for zero vectors")
    value = float(np.dot(a, b) / (norm_a * norm_b))
    return max(-1.0, min(1.0, value))


def word_level(prompt: str, rules: RuleSet) -> WordHit | None:
    """First blocked-keyword hit in text order, or None.

    Matching is case-insensitive and word-boundary-delimited: "denuded"
    does not trigger "nude". Multi-word phrases match whole token runs.
    """
    normalized = normalize_text(prompt)
    hit = first_match(rules.keyword_matcher.scan_text(normalized))
    if hit is None:
        return None
    return WordHit(
        matched_phrase=hit.phrase,
        category=str(hit.payload),
        span=(hit.start, hit.end),
    )


def semantic_level(
    prompt: str, rules: RuleSet, embedder: Embedder
) -> tuple[bool, SemanticHit]:
    """Embedding-similarity screen against the reference unsafe phrases.

    Flags iff the maximum cosine strictly exceeds the semantic threshold.
    The returned evidence always carries the argmax phrase and score, even
    when the flag is False.
    """
    prompt_vec = embedder.embed(prompt)
    best_phrase = ""
    best_score = -1.0
    for phrase in rules.unsafe_reference_phrases:
        score = cosine(prompt_vec, embedder.embed(phrase))
        if score > best_score:
            best_phrase, best_score = phrase, score
    return best_score > rules.semantic_threshold, SemanticHit(best_phrase, best_score)


def value_level(
    prompt: str, rules: RuleSet, embedder: Embedder
) -> tuple[bool, ValueHit | None]:
    """Conjunctive location+act similarity screen.

    Fires iff some sensitive location scores strictly above the value
    threshold AND some inappropriate act scores strictly above its
    (possibly per-category-overridden) threshold.
    """
    prompt_vec = embedder.embed(prompt)

    best_location: tuple[str, float] | None = None
    location_fired = False
    for loc in rules.location_concepts:
        score = cosine(prompt_vec, embedder.embed(loc.phrase))
        if best_location is None or score > best_location[1]:
            best_location = (loc.phrase, score)
        if score > rules.value_threshold:
            location_fired = True

    # Evidence carries the highest-scoring act among those that exceeded
    # their (possibly per-category) threshold.
    best_act: tuple[str, float, str] | None = None
    for act in rules.act_concepts:
        score = cosine(prompt_vec, embedder.embed(act.phrase))
        if score > rules.act_threshold(act.category):
            if best_act is None or score > best_act[1]:
                best_act = (act.phrase, score, act.severity)

    if not (location_fired and best_act is not None):
        return False, None
    assert best_location is not None
    return True, ValueHit(best_location=best_location, best_act=best_act)


def is_safe(
    prompt: str, rules: RuleSet, embedder: Embedder
) -> tuple[bool, DetectionOutcome]:
    """Unified gate: safe iff no detection layer fires.

    All three layers run unconditionally so the outcome carries complete
    evidence for routing and audit.
    """
    word = word_level(prompt, rules)
    semantic_flagged, semantic_hit = semantic_level(prompt, rules, embedder)
    value_flagged, value_hit = value_level(prompt, rules, embedder)
    outcome = DetectionOutcome(
        prompt_normalized=normalize_text(prompt),
        word=word,
        semantic=semantic_hit if semantic_flagged else None,
        semantic_score=semantic_hit.score,
        value=value_hit if value_flagged else None,
    )
    return not outcome.any_flag, outcome

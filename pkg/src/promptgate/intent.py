"""Intention disambiguation: restriction statements about unsafe concepts.

Image models render concepts literally and cannot depict prohibition, so
"naked running is forbidden" produces exactly the image the sentence bans.
This layer flags prompts where a constraint or negation cue (from the
constraint-cue rule lists) governs an unsafe visual concept, so the rewrite
stage can turn them into signage-style prompts instead.

Linkage between a cue and a concept is established with shallow token
patterns rather than a full dependency parse: both must sit in the same
sentence, and either fall within a token-distance window (default 8) or
match one of four clause templates:

    <concept> ... is/are ... <cue>      "naked running is forbidden"
    <cue> to <concept>                  "forbidden to smoke indoors"
    no <concept>  (cue elsewhere)       "park policy: no drugs"
    <cue> sign about <concept>          "warning sign about drug abuse"

The templates are a pattern rendering of the grammatical shapes these
sentences take (passive subject under a restriction root, infinitival
complement, bare negated noun, signage apposition).
"""

from __future__ import annotations

from dataclasses import dataclass

from .matching import Match, normalize_text, select_non_overlapping, tokenize
from .rules import RuleSet

DEFAULT_LINK_WINDOW = 8

_SENTENCE_TERMINATORS = {".", "!", "?", ";"}
_LINKING_VERBS = {"is", "are"}

# Max token gaps inside the clause templates.
_TEMPLATE_GAP = 4


@dataclass(frozen=True)
class IntentEvidence:
    """The cue/concept pair that triggered the intention flag."""

    cue: tuple[str, str]  # (phrase, cue category)
    unsafe_concept: str
    cue_span: tuple[int, int]
    concept_span: tuple[int, int]
    linkage: str  # "same-clause" (template) or "window"


def find_constraint_cues(
    prompt: str, rules: RuleSet
) -> list[tuple[str, str, tuple[int, int]]]:
    """All non-overlapping constraint-cue matches, longest-match-first.

    Returns (phrase, cue-category, char span in the normalized prompt).
    """
    matches = rules.cue_matcher.scan_text(normalize_text(prompt))
    return [
        (m.phrase, str(m.payload), (m.start, m.end))
        for m in select_non_overlapping(matches)
    ]


def find_unsafe_concepts(
    prompt: str, rules: RuleSet
) -> list[tuple[str, tuple[int, int]]]:
    """All non-overlapping unsafe-visual-concept matches.

    The concept vocabulary is the unsafe-visual-concept list united with
    every blocked keyword.
    """
    matches = rules.concept_matcher.scan_text(normalize_text(prompt))
    return [(m.phrase, (m.start, m.end)) for m in select_non_overlapping(matches)]


def _sentence_ranges(normalized: str) -> list[tuple[int, int]]:
    """Char ranges of sentences, split on terminal punctuation."""
    ranges = []
    start = 0
    for i, ch in enumerate(normalized):
        if ch in _SENTENCE_TERMINATORS:
            ranges.append((start, i + 1))
            start = i + 1
    if start < len(normalized):
        ranges.append((start, len(normalized)))
    return ranges or [(0, len(normalized))]


def _token_gap(a: Match, b: Match) -> int:
    """Tokens strictly between two non-overlapping matches."""
    if a.token_start > b.token_end:
        a, b = b, a
    return b.token_start - a.token_end - 1


def _template_linked(cue: Match, concept: Match, tokens: list[str]) -> bool:
    """Clause templates tying a cue to a concept (see module docstring)."""
    # "<concept> ... is/are ... <cue>"
    for i in range(concept.token_end + 1, cue.token_start):
        if (
            tokens[i] in _LINKING_VERBS
            and i - concept.token_end <= _TEMPLATE_GAP
            and cue.token_start - i <= _TEMPLATE_GAP
        ):
            return True
    # "<cue> to <concept>"
    for i in range(cue.token_end + 1, concept.token_start):
        if (
            tokens[i] == "to"
            and i - cue.token_end <= 2
            and concept.token_start - i <= 3
        ):
            return True
    # "no <concept>" with the cue anywhere in the sentence
    if concept.token_start > 0 and tokens[concept.token_start - 1] in ("no", "not"):
        return True
    # "<cue> sign about <concept>"
    for i in range(cue.token_end + 1, concept.token_start - 1):
        if (
            tokens[i] == "sign"
            and tokens[i + 1] == "about"
            and i - cue.token_end <= 2
            and concept.token_start - (i + 1) <= 3
        ):
            return True
    return False


def intention_flag(
    prompt: str, rules: RuleSet, window: int = DEFAULT_LINK_WINDOW
) -> tuple[bool, IntentEvidence | None]:
    """True iff a constraint cue governs an unsafe visual concept.

    A (cue, concept) pair links when the two matches do not overlap, lie in
    the same sentence, and are either within ``window`` tokens of each other
    or tied by a clause template. Template-linked pairs are reported as
    linkage "same-clause" and take precedence in the evidence.
    """
    normalized = normalize_text(prompt)
    all_tokens = tokenize(normalized)
    token_texts = [t.text for t in all_tokens]

    cues = select_non_overlapping(rules.cue_matcher.scan(all_tokens))
    if not cues:
        return False, None
    concepts = select_non_overlapping(rules.concept_matcher.scan(all_tokens))
    if not concepts:
        return False, None

    sentences = _sentence_ranges(normalized)

    def sentence_index(m: Match) -> int:
        for idx, (start, end) in enumerate(sentences):
            if start <= m.start < end:
                return idx
        return len(sentences) - 1

    best: tuple[int, int, Match, Match] | None = None  # (template_rank, gap, cue, concept)
    for cue in cues:
        for concept in concepts:
            if not (cue.token_end < concept.token_start
                    or concept.token_end < cue.token_start):
                continue  # overlapping spans never link
            if sentence_index(cue) != sentence_index(concept):
                continue
            gap = _token_gap(cue, concept)
            templated = _template_linked(cue, concept, token_texts)
            if not templated and gap > window:
                continue
            rank = (0 if templated else 1, gap)
            if best is None or rank < (best[0], best[1]):
                best = (rank[0], rank[1], cue, concept)

    if best is None:
        return False, None
    _, _, cue, concept = best
    evidence = IntentEvidence(
        cue=(cue.phrase, str(cue.payload)),
        unsafe_concept=concept.phrase,
        cue_span=(cue.start, cue.end),
        concept_span=(concept.start, concept.end),
        linkage="same-clause" if best[0] == 0 else "window",
    )
    return True, evidence

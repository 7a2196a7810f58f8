"""Tokenizer and multi-pattern matcher behavior, checked against brute force."""

import random

from promptgate.matching import (
    PhraseMatcher,
    first_match,
    normalize_text,
    phrase_tokens,
    select_non_overlapping,
    tokenize,
)


def test_normalize_lowercases_and_collapses_whitespace():
    assert normalize_text("  A   Nude\tPortrait ") == "a nude portrait"


def test_tokenize_spans_index_normalized_text():
    text = normalize_text("A Nude portrait, on canvas.")
    tokens = tokenize(text)
    assert [t.text for t in tokens] == ["a", "nude", "portrait", "on", "canvas"]
    for tok in tokens:
        assert text[tok.start:tok.end] == tok.text


def test_tokenizer_keeps_internal_punctuation_words():
    assert phrase_tokens("9/11 Memorial") == ("9/11", "memorial")
    assert phrase_tokens("doctor's office") == ("doctor's", "office")
    assert phrase_tokens("non-consensual") == ("non-consensual",)


def test_word_boundary_blocks_substring_matches():
    matcher = PhraseMatcher([("nude", None)])
    assert matcher.scan_text("denuded hillside after logging") == []
    assert matcher.contains("a nude portrait")


def test_multiword_phrases_and_suffix_outputs():
    matcher = PhraseMatcher([("strictly forbidden", "long"), ("forbidden", "short")])
    matches = matcher.scan_text("smoking is strictly forbidden here")
    phrases = {m.phrase for m in matches}
    assert phrases == {"strictly forbidden", "forbidden"}
    best = select_non_overlapping(matches)
    assert [m.phrase for m in best] == ["strictly forbidden"]


def test_first_match_prefers_earliest_then_longest():
    matcher = PhraseMatcher([("pole dancing", 1), ("dancing", 2), ("congress", 3)])
    matches = matcher.scan_text("pole dancing in the congress")
    first = first_match(matches)
    assert first is not None and first.phrase == "pole dancing"


def brute_force(patterns: list[str], tokens: list[str]) -> set[tuple[str, int]]:
    found = set()
    for pattern in patterns:
        ptoks = pattern.split()
        for i in range(len(tokens) - len(ptoks) + 1):
            if tokens[i:i + len(ptoks)] == ptoks:
                found.add((pattern, i))
    return found


def test_automaton_agrees_with_brute_force_on_random_streams():
    rng = random.Random(7)
    vocab = ["a", "b", "c", "d", "e"]
    patterns = ["a", "a b", "b a b", "c d e", "e", "d d"]
    matcher = PhraseMatcher([(p, None) for p in patterns])
    for _ in range(300):
        tokens = [rng.choice(vocab) for _ in range(rng.randint(0, 15))]
        text = " ".join(tokens)
        got = {(m.phrase, m.token_start) for m in matcher.scan_text(text)}
        assert got == brute_force(patterns, tokens)


def test_empty_and_unknown_input():
    matcher = PhraseMatcher([("nude", None)])
    assert matcher.scan_text("") == []
    assert matcher.scan_text("wholesome scenery") == []
    assert len(matcher) == 1

"""Multi-pattern phrase matching over word tokens.

All rule phrases ("nude", "pole dancing", "strictly forbidden") are matched
word-boundary-delimited: a phrase matches only where each of its words aligns
with a whole token of the prompt, so "denuded" never triggers "nude".

Matching is a single pass with an Aho-Corasick automaton whose alphabet is
word tokens rather than characters:

    1. Insert each phrase as its token sequence into a trie.
    2. Compute failure links by BFS: on mismatch at a node, fall back to the
       longest proper suffix of the current token path that is also a prefix
       of some phrase.
    3. Propagate outputs along failure links so phrases that are suffixes of
       longer phrases ("forbidden" inside "strictly forbidden") are still
       reported.

The scan step then visits each prompt token exactly once, which is what keeps
keyword screening linear in the prompt length regardless of how many hundred
phrases the rule set carries.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

# Words may carry internal hyphens, apostrophes, or slashes so phrases like
# "non-consensual", "doctor's office", and "9/11 memorial" stay single tokens.
_TOKEN_RE = re.compile(r"[a-z0-9]+(?:['\-/][a-z0-9]+)*")


def normalize_text(text: str) -> str:
    """Lowercase and collapse runs of whitespace to single spaces."""
    return " ".join(text.lower().split())


@dataclass(frozen=True)
class Token:
    text: str
    start: int  # char offset in the normalized text
    end: int    # char offset one past the last char


def tokenize(normalized: str) -> list[Token]:
    """Split normalized text into word tokens with character spans."""
    return [Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(normalized)]


def phrase_tokens(phrase: str) -> tuple[str, ...]:
    """Token sequence of a rule phrase, using the prompt tokenizer."""
    return tuple(t.text for t in tokenize(normalize_text(phrase)))


@dataclass(frozen=True)
class Match:
    """One phrase occurrence in a token stream."""

    phrase: str
    payload: object          # whatever the caller attached (category, severity, ...)
    token_start: int
    token_end: int           # inclusive token index
    start: int               # char span in the normalized text
    end: int

    @property
    def token_length(self) -> int:
        return self.token_end - self.token_start + 1


class _Node:
    __slots__ = ("children", "fail", "outputs")

    def __init__(self) -> None:
        self.children: dict[str, _Node] = {}
        self.fail: _Node | None = None
        self.outputs: list[tuple[str, object, int]] = []  # (phrase, payload, token count)


class PhraseMatcher:
    """Token-level Aho-Corasick automaton over a fixed phrase set.

    Build once per rule set; scanning is thread-safe because the automaton is
    never mutated after construction.
    """

    def __init__(self, phrases: Iterable[tuple[str, object]]) -> None:
        self._root = _Node()
        count = 0
        for phrase, payload in phrases:
            toks = phrase_tokens(phrase)
            if not toks:
                continue
            node = self._root
            for tok in toks:
                node = node.children.setdefault(tok, _Node())
            node.outputs.append((phrase, payload, len(toks)))
            count += 1
        self._size = count
        self._build_failure_links()

    def __len__(self) -> int:
        return self._size

    def _build_failure_links(self) -> None:
        root = self._root
        root.fail = root
        queue: deque[_Node] = deque()
        for child in root.children.values():
            child.fail = root
            queue.append(child)
        while queue:
            current = queue.popleft()
            for tok, child in current.children.items():
                fallback = current.fail
                while fallback is not root and tok not in fallback.children:
                    fallback = fallback.fail
                target = fallback.children.get(tok, root)
                child.fail = root if target is child else target
                child.outputs = child.outputs + child.fail.outputs
                queue.append(child)

    def scan(self, tokens: Sequence[Token]) -> list[Match]:
        """All phrase occurrences, in token order (including overlaps)."""
        root = self._root
        node = root
        matches: list[Match] = []
        for i, tok in enumerate(tokens):
            while node is not root and tok.text not in node.children:
                node = node.fail
            node = node.children.get(tok.text, root)
            for phrase, payload, length in node.outputs:
                start_tok = tokens[i - length + 1]
                matches.append(
                    Match(
                        phrase=phrase,
                        payload=payload,
                        token_start=i - length + 1,
                        token_end=i,
                        start=start_tok.start,
                        end=tok.end,
                    )
                )
        return matches

    def scan_text(self, text: str) -> list[Match]:
        return self.scan(tokenize(normalize_text(text)))

    def contains(self, text: str) -> bool:
        """True iff any phrase occurs in the text (early exit)."""
        root = self._root
        node = root
        for tok in tokenize(normalize_text(text)):
            while node is not root and tok.text not in node.children:
                node = node.fail
            node = node.children.get(tok.text, root)
            if node.outputs:
                return True
        return False


def first_match(matches: list[Match]) -> Match | None:
    """Earliest match in text order; the longest wins at equal start."""
    if not matches:
        return None
    return min(matches, key=lambda m: (m.token_start, -m.token_length))


def select_non_overlapping(matches: list[Match]) -> list[Match]:
    """Greedy longest-match-first selection of non-overlapping matches."""
    chosen: list[Match] = []
    last_end = -1
    for m in sorted(matches, key=lambda m: (m.token_start, -m.token_length)):
        if m.token_start > last_end:
            chosen.append(m)
            last_end = m.token_end
    return chosen

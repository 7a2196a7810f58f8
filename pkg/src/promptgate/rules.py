"""Rule bundle loading and the labeled-dataset schema.

The rule file is a single YAML document with one section per rule family
(see ``data/default_rules.yaml``). Loading normalizes every phrase
(lowercase, collapsed whitespace), rejects empty sections, validates
thresholds, and builds the phrase automatons once so detectors stay pure
and fast. The resulting :class:`RuleSet` is immutable and safe to share
across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Mapping

import yaml

from .matching import PhraseMatcher, normalize_text

DEFAULT_SEMANTIC_THRESHOLD = 0.32
DEFAULT_VALUE_THRESHOLD = 0.32
DEFAULT_GUIDANCE_SUFFIX = (
    "in artistic illustration style, with safe and respectful composition"
)
DEFAULT_CHAT_TEMPERATURE = 0.1

ACT_SEVERITIES = ("critical", "high", "medium")


class RuleError(ValueError):
    """Rule file cannot be parsed or violates the schema."""


class DatasetError(ValueError):
    """Dataset file cannot be parsed or violates the record schema."""


@dataclass(frozen=True)
class LocationConcept:
    phrase: str
    category: str


@dataclass(frozen=True)
class ActConcept:
    phrase: str
    category: str
    severity: str  # one of ACT_SEVERITIES


@dataclass(frozen=True)
class RuleSet:
    """Immutable bundle of moderation rules.

    Phrase lists are already normalized and deduplicated; the three phrase
    automatons (blocked keywords, constraint cues, unsafe visual concepts)
    are built at construction time.
    """

    blocked_keywords: Mapping[str, tuple[str, ...]]
    unsafe_reference_phrases: tuple[str, ...]
    location_concepts: tuple[LocationConcept, ...]
    act_concepts: tuple[ActConcept, ...]
    constraint_cues: Mapping[str, tuple[str, ...]]
    unsafe_visual_concepts: tuple[str, ...]
    semantic_threshold: float = DEFAULT_SEMANTIC_THRESHOLD
    value_threshold: float = DEFAULT_VALUE_THRESHOLD
    value_threshold_overrides: Mapping[str, float] = field(default_factory=dict)
    guidance_suffix: str = DEFAULT_GUIDANCE_SUFFIX
    chat_temperature: float = DEFAULT_CHAT_TEMPERATURE

    def __post_init__(self) -> None:
        self._validate()
        # Frozen dataclass: stash derived automatons via object.__setattr__.
        object.__setattr__(self, "_keyword_matcher", PhraseMatcher(
            (phrase, category)
            for category, phrases in self.blocked_keywords.items()
            for phrase in phrases
        ))
        object.__setattr__(self, "_cue_matcher", PhraseMatcher(
            (phrase, category)
            for category, phrases in self.constraint_cues.items()
            for phrase in phrases
        ))
        concept_phrases = dict.fromkeys(
            list(self.unsafe_visual_concepts)
            + [p for phrases in self.blocked_keywords.values() for p in phrases]
        )
        object.__setattr__(self, "_concept_matcher", PhraseMatcher(
            (phrase, None) for phrase in concept_phrases
        ))

    def _validate(self) -> None:
        def check_phrases(name: str, phrases: Iterable[str]) -> None:
            seen = set()
            empty = True
            for p in phrases:
                empty = False
                if p != normalize_text(p) or not p:
                    raise RuleError(f"{name}: phrase {p!r} is not normalized")
                if p in seen:
                    raise RuleError(f"{name}: duplicate phrase {p!r}")
                seen.add(p)
            if empty:
                raise RuleError(f"{name} must not be empty")

        if not self.blocked_keywords:
            raise RuleError("blocked_keywords must not be empty")
        for category, phrases in self.blocked_keywords.items():
            check_phrases(f"blocked_keywords[{category}]", phrases)
        check_phrases("unsafe_reference_phrases", self.unsafe_reference_phrases)
        check_phrases(
            "sensitive_locations", (c.phrase for c in self.location_concepts)
        )
        check_phrases("inappropriate_acts", (c.phrase for c in self.act_concepts))
        for act in self.act_concepts:
            if act.severity not in ACT_SEVERITIES:
                raise RuleError(
                    f"inappropriate_acts[{act.phrase}]: severity {act.severity!r} "
                    f"not in {ACT_SEVERITIES}"
                )
        if not self.constraint_cues:
            raise RuleError("constraint_cues must not be empty")
        for category, phrases in self.constraint_cues.items():
            check_phrases(f"constraint_cues[{category}]", phrases)
        check_phrases("unsafe_visual_concepts", self.unsafe_visual_concepts)

        for name, value in (
            ("semantic threshold", self.semantic_threshold),
            ("value threshold", self.value_threshold),
            *((f"value threshold for {c}", v)
              for c, v in self.value_threshold_overrides.items()),
        ):
            if not 0.0 < value <= 1.0:
                raise RuleError(f"{name} must be in (0, 1], got {value}")
        if not self.guidance_suffix.strip():
            raise RuleError("guidance_suffix must be non-empty")
        if self.chat_temperature < 0.0:
            raise RuleError("chat_temperature must be >= 0")

    # Derived automatons -------------------------------------------------

    @property
    def keyword_matcher(self) -> PhraseMatcher:
        """Blocked keywords; match payload is the category name."""
        return self._keyword_matcher  # type: ignore[attr-defined]

    @property
    def cue_matcher(self) -> PhraseMatcher:
        """Constraint cues; match payload is the cue category."""
        return self._cue_matcher  # type: ignore[attr-defined]

    @property
    def concept_matcher(self) -> PhraseMatcher:
        """Unsafe visual concepts plus all blocked keywords."""
        return self._concept_matcher  # type: ignore[attr-defined]

    def act_threshold(self, category: str) -> float:
        return self.value_threshold_overrides.get(category, self.value_threshold)


def _normalize_list(name: str, raw: object) -> tuple[str, ...]:
    if raw is None:
        raw = []
    if not isinstance(raw, list) or any(not isinstance(p, str) for p in raw):
        raise RuleError(f"{name} must be a list of strings")
    normalized = [normalize_text(p) for p in raw]
    return tuple(dict.fromkeys(p for p in normalized if p))


def _normalize_sections(name: str, raw: object) -> dict[str, tuple[str, ...]]:
    if not isinstance(raw, dict):
        raise RuleError(f"{name} must be a mapping of category -> phrase list")
    return {
        str(category): _normalize_list(f"{name}[{category}]", phrases)
        for category, phrases in raw.items()
    }


def load_rules(source: str | Path | IO[str] | None = None) -> RuleSet:
    """Load and validate a rule bundle.

    ``source`` is a path or an open text stream; ``None`` loads the packaged
    default bundle. Identical bytes always yield an identical RuleSet.
    """
    if source is None:
        text = (
            resources.files("promptgate.data")
            .joinpath("default_rules.yaml")
            .read_text(encoding="utf-8")
        )
    elif isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()

    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise RuleError(f"rule file is not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise RuleError("rule file must be a YAML mapping")

    blocked = _normalize_sections("blocked_keywords", doc.get("blocked_keywords", {}))
    if not any(blocked.values()):
        raise RuleError("blocked_keywords must contain at least one phrase")
    blocked = {c: ps for c, ps in blocked.items() if ps}

    references = _normalize_list(
        "unsafe_reference_phrases", doc.get("unsafe_reference_phrases")
    )

    locations_raw = _normalize_sections(
        "sensitive_locations", doc.get("sensitive_locations", {})
    )
    locations = tuple(
        LocationConcept(phrase, category)
        for category, phrases in locations_raw.items()
        for phrase in phrases
    )

    acts_section = doc.get("inappropriate_acts", {})
    if not isinstance(acts_section, dict):
        raise RuleError("inappropriate_acts must be a mapping")
    acts: list[ActConcept] = []
    for category, spec in acts_section.items():
        if not isinstance(spec, dict) or "phrases" not in spec:
            raise RuleError(
                f"inappropriate_acts[{category}] needs 'severity' and 'phrases'"
            )
        severity = str(spec.get("severity", "")).lower()
        for phrase in _normalize_list(f"inappropriate_acts[{category}]", spec["phrases"]):
            acts.append(ActConcept(phrase, str(category), severity))

    cues = _normalize_sections("constraint_cues", doc.get("constraint_cues", {}))
    cues = {c: ps for c, ps in cues.items() if ps}

    concepts = _normalize_list(
        "unsafe_visual_concepts", doc.get("unsafe_visual_concepts")
    )

    thresholds = doc.get("thresholds", {}) or {}
    if not isinstance(thresholds, dict):
        raise RuleError("thresholds must be a mapping")
    overrides_raw = thresholds.get("value_overrides", {}) or {}
    if not isinstance(overrides_raw, dict):
        raise RuleError("thresholds.value_overrides must be a mapping")

    try:
        semantic = float(thresholds.get("semantic", DEFAULT_SEMANTIC_THRESHOLD))
        value = float(thresholds.get("value", DEFAULT_VALUE_THRESHOLD))
        overrides = {str(c): float(v) for c, v in overrides_raw.items()}
        temperature = float(doc.get("chat_temperature", DEFAULT_CHAT_TEMPERATURE))
    except (TypeError, ValueError) as exc:
        raise RuleError(f"thresholds must be numbers: {exc}") from exc

    suffix = doc.get("guidance_suffix", DEFAULT_GUIDANCE_SUFFIX)
    if not isinstance(suffix, str):
        raise RuleError("guidance_suffix must be a string")

    return RuleSet(
        blocked_keywords=blocked,
        unsafe_reference_phrases=references,
        location_concepts=locations,
        act_concepts=tuple(acts),
        constraint_cues=cues,
        unsafe_visual_concepts=concepts,
        semantic_threshold=semantic,
        value_threshold=value,
        value_threshold_overrides=overrides,
        guidance_suffix=suffix.strip(),
        chat_temperature=temperature,
    )


def dump_rules(rules: RuleSet) -> str:
    """Serialize a RuleSet back to rule-file YAML (round-trip stable)."""
    acts: dict[str, dict[str, object]] = {}
    for act in rules.act_concepts:
        entry = acts.setdefault(act.category, {"severity": act.severity, "phrases": []})
        entry["phrases"].append(act.phrase)  # type: ignore[union-attr]
    locations: dict[str, list[str]] = {}
    for loc in rules.location_concepts:
        locations.setdefault(loc.category, []).append(loc.phrase)
    doc = {
        "blocked_keywords": {c: list(ps) for c, ps in rules.blocked_keywords.items()},
        "unsafe_reference_phrases": list(rules.unsafe_reference_phrases),
        "sensitive_locations": locations,
        "inappropriate_acts": acts,
        "constraint_cues": {c: list(ps) for c, ps in rules.constraint_cues.items()},
        "unsafe_visual_concepts": list(rules.unsafe_visual_concepts),
        "thresholds": {
            "semantic": rules.semantic_threshold,
            "value": rules.value_threshold,
            "value_overrides": dict(rules.value_threshold_overrides),
        },
        "guidance_suffix": rules.guidance_suffix,
        "chat_temperature": rules.chat_temperature,
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


# ---------------------------------------------------------------------------
# Labeled datasets
# ---------------------------------------------------------------------------

EXPECTED_ACTIONS = ("allow", "block")


@dataclass(frozen=True)
class DatasetRecord:
    """One labeled prompt of an evaluation dataset."""

    id: str
    prompt: str
    expected_action: str  # "allow" or "block"
    difficulty: str | None = None
    intention_type: str | None = None
    annotated_locations: tuple[str, ...] = ()
    annotated_behaviors: tuple[str, ...] = ()
    severity: str | None = None

    @property
    def expects_block(self) -> bool:
        return self.expected_action == "block"


def _record_from_dict(raw: dict, ordinal: int) -> DatasetRecord:
    try:
        record_id = str(raw["id"])
        prompt = str(raw["prompt"])
        action = str(raw["expected_action"])
    except KeyError as exc:
        raise DatasetError(f"record {ordinal}: missing field {exc.args[0]!r}") from exc
    if action not in EXPECTED_ACTIONS:
        raise DatasetError(
            f"record {record_id!r}: expected_action must be one of "
            f"{EXPECTED_ACTIONS}, got {action!r}"
        )
    return DatasetRecord(
        id=record_id,
        prompt=prompt,
        expected_action=action,
        difficulty=raw.get("difficulty"),
        intention_type=raw.get("intention_type"),
        annotated_locations=tuple(raw.get("annotated_locations") or ()),
        annotated_behaviors=tuple(raw.get("annotated_behaviors") or ()),
        severity=raw.get("severity"),
    )


def load_dataset(source: str | Path | IO[str]) -> list[DatasetRecord]:
    """Load labeled records from a JSON array or JSON-lines file.

    Record order is preserved; duplicate ids are rejected. An empty file
    yields an empty list.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()

    stripped = text.strip()
    if not stripped:
        return []
    try:
        if stripped.startswith("["):
            raw_records = json.loads(stripped)
        else:
            raw_records = [
                json.loads(line) for line in stripped.splitlines() if line.strip()
            ]
    except json.JSONDecodeError as exc:
        raise DatasetError(f"dataset is not valid JSON: {exc}") from exc

    records: list[DatasetRecord] = []
    seen_ids: set[str] = set()
    for ordinal, raw in enumerate(raw_records):
        if not isinstance(raw, dict):
            raise DatasetError(f"record {ordinal}: expected an object")
        record = _record_from_dict(raw, ordinal)
        if record.id in seen_ids:
            raise DatasetError(f"duplicate record id {record.id!r}")
        seen_ids.add(record.id)
        records.append(record)
    return records

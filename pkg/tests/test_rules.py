"""Rule-file loading, normalization, defaults, and dataset parsing."""

import io
import json

import pytest

from promptgate.rules import (
    DatasetError,
    RuleError,
    dump_rules,
    load_dataset,
    load_rules,
)

MINIMAL_RULES = """
blocked_keywords:
  Sexual: [Nude, "  erotic  "]
unsafe_reference_phrases: [explicit nude photo]
sensitive_locations:
  Religious Sites: [temple]
inappropriate_acts:
  Sexual Content:
    severity: critical
    phrases: [pole dancing]
constraint_cues:
  Prohibition: [forbidden]
unsafe_visual_concepts: [nudity]
"""


def test_defaults_applied_when_thresholds_absent():
    rules = load_rules(io.StringIO(MINIMAL_RULES))
    assert rules.semantic_threshold == 0.32
    assert rules.value_threshold == 0.32
    assert rules.chat_temperature == 0.1
    assert rules.guidance_suffix == (
        "in artistic illustration style, with safe and respectful composition"
    )


def test_phrases_lowercased_trimmed_and_deduplicated():
    doc = MINIMAL_RULES + "\n"
    rules = load_rules(io.StringIO(doc))
    assert rules.blocked_keywords["Sexual"] == ("nude", "erotic")

    duplicated = MINIMAL_RULES.replace("[Nude, \"  erotic  \"]", "[Nude, nude, NUDE]")
    rules = load_rules(io.StringIO(duplicated))
    assert rules.blocked_keywords["Sexual"] == ("nude",)


def test_empty_blocked_keywords_is_schema_violation():
    doc = MINIMAL_RULES.replace("Sexual: [Nude, \"  erotic  \"]", "Sexual: []")
    with pytest.raises(RuleError):
        load_rules(io.StringIO(doc))


def test_threshold_out_of_range_rejected():
    for bad in ("0.0", "1.5", "-0.1"):
        doc = MINIMAL_RULES + f"\nthresholds:\n  semantic: {bad}\n"
        with pytest.raises(RuleError):
            load_rules(io.StringIO(doc))


def test_parse_failure_raises_rule_error():
    with pytest.raises(RuleError):
        load_rules(io.StringIO("a: [unclosed"))
    with pytest.raises(RuleError):
        load_rules(io.StringIO("- just\n- a list\n"))


def test_unknown_severity_rejected():
    doc = MINIMAL_RULES.replace("severity: critical", "severity: extreme")
    with pytest.raises(RuleError):
        load_rules(io.StringIO(doc))


def test_empty_act_section_rejected():
    doc = MINIMAL_RULES.replace("phrases: [pole dancing]", "phrases: []")
    with pytest.raises(RuleError):
        load_rules(io.StringIO(doc))


def test_load_is_deterministic(default_rules):
    again = load_rules()
    assert again == default_rules


def test_roundtrip_idempotence(default_rules):
    once = load_rules(io.StringIO(dump_rules(default_rules)))
    assert once == default_rules
    twice = load_rules(io.StringIO(dump_rules(once)))
    assert twice == once


def test_default_file_carries_expected_tokens(default_rules):
    keywords = {p for ps in default_rules.blocked_keywords.values() for p in ps}
    assert "nude" in keywords
    assert "suicide" in keywords
    locations = {c.phrase for c in default_rules.location_concepts}
    assert "congress" in locations
    acts = {c.phrase for c in default_rules.act_concepts}
    assert "pole dancing" in acts
    cues = {p for ps in default_rules.constraint_cues.values() for p in ps}
    assert "strictly forbidden" in cues


def test_value_threshold_override_lookup(default_rules):
    assert default_rules.act_threshold("Sexual Content") == 0.32
    doc = MINIMAL_RULES + (
        "\nthresholds:\n  value: 0.4\n  value_overrides:\n    Sexual Content: 0.25\n"
    )
    rules = load_rules(io.StringIO(doc))
    assert rules.act_threshold("Sexual Content") == 0.25
    assert rules.act_threshold("Violence") == 0.4


# --- datasets ---------------------------------------------------------------


def _record(i: int, action: str = "allow") -> dict:
    return {"id": f"VALUE_{i:04d}", "prompt": f"prompt {i}", "expected_action": action}


def test_load_dataset_jsonl_and_array(tmp_path):
    rows = [_record(i) for i in range(1, 6)]
    jsonl = tmp_path / "data.jsonl"
    jsonl.write_text("\n".join(json.dumps(r) for r in rows))
    assert [r.id for r in load_dataset(jsonl)] == [r["id"] for r in rows]

    array = tmp_path / "data.json"
    array.write_text(json.dumps(rows))
    assert len(load_dataset(array)) == 5


def test_load_dataset_412_records():
    rows = "\n".join(
        json.dumps(_record(i, "block" if i % 2 else "allow")) for i in range(1, 413)
    )
    records = load_dataset(io.StringIO(rows))
    assert len(records) == 412
    assert records[0].id == "VALUE_0001"
    assert records[-1].id == "VALUE_0412"


def test_duplicate_id_rejected():
    rows = [json.dumps(_record(1)), json.dumps(_record(1))]
    with pytest.raises(DatasetError):
        load_dataset(io.StringIO("\n".join(rows)))


def test_unknown_expected_action_rejected():
    row = _record(1)
    row["expected_action"] = "maybe"
    with pytest.raises(DatasetError):
        load_dataset(io.StringIO(json.dumps(row)))


def test_empty_dataset_is_empty_list():
    assert load_dataset(io.StringIO("")) == []
    assert load_dataset(io.StringIO("   \n  ")) == []


def test_optional_fields_preserved():
    row = _record(9, "block")
    row.update(
        difficulty="high",
        intention_type="prohibition",
        annotated_locations=["congress"],
        annotated_behaviors=["pole dancing"],
        severity="critical",
    )
    record = load_dataset(io.StringIO(json.dumps(row)))[0]
    assert record.difficulty == "high"
    assert record.annotated_locations == ("congress",)
    assert record.expects_block

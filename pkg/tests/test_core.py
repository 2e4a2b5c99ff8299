from __future__ import annotations

import json
import random
import string

import pytest

from hintkit.core import (
    Dataset,
    DatasetFormatError,
    FailureMode,
    Hint,
    MalformedWireError,
    QuestionRecord,
    TooManyItemsError,
    WrongShapeError,
    check_contrastive,
    check_leakage,
    load_question_records,
    normalize_tokens,
    parse_hint,
    serialize_hint,
    write_question_records,
)
from conftest import make_record

# --- parse_hint -------------------------------------------------------------


def test_parse_hint_two_items():
    wire = '{"hint": ["Tractor vs bike: check wheels", "Focus on the handlebars"]}'
    hint = parse_hint(wire)
    assert hint.items == ("Tractor vs bike: check wheels", "Focus on the handlebars")


def test_parse_hint_empty_list_is_wrong_shape():
    with pytest.raises(WrongShapeError):
        parse_hint('{"hint": []}')


def test_parse_hint_four_items_too_many():
    with pytest.raises(TooManyItemsError):
        parse_hint('{"hint": ["a", "b", "c", "d"]}')


def test_parse_hint_not_json():
    with pytest.raises(MalformedWireError):
        parse_hint("here is my hint: look at the wheels")


def test_parse_hint_rejects_extra_keys():
    with pytest.raises(WrongShapeError):
        parse_hint('{"hint": ["a"], "note": "extra"}')


def test_parse_hint_missing_key():
    with pytest.raises(WrongShapeError):
        parse_hint('{"hints": ["a"]}')


def test_parse_hint_non_list_value():
    with pytest.raises(WrongShapeError):
        parse_hint('{"hint": "just a string"}')


def test_parse_hint_blank_item_rejected():
    with pytest.raises(WrongShapeError):
        parse_hint('{"hint": ["ok", "   "]}')


def test_parse_hint_accepts_code_fence():
    hint = parse_hint('```json\n{"hint": ["check the curb"]}\n```')
    assert hint.items == ("check the curb",)


def _random_item(rng: random.Random) -> str:
    alphabet = string.ascii_letters + " .,'-"
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 40))).strip() or "x"


def test_parse_serialize_round_trip_property():
    rng = random.Random(7)
    for _ in range(200):
        items = tuple(_random_item(rng) for _ in range(rng.randint(1, 3)))
        hint = Hint(items=items)
        assert parse_hint(serialize_hint(hint)) == hint


def test_hint_constructor_validates():
    with pytest.raises(ValueError):
        Hint(items=())
    with pytest.raises(ValueError):
        Hint(items=("a", "b", "c", "d"))
    with pytest.raises(ValueError):
        Hint(items=("",))


# --- check_leakage ----------------------------------------------------------


def _visitors_record() -> QuestionRecord:
    return make_record(
        qid="q-vis",
        options=("visitors", "firefighters", "players", "vendors"),
        gold_index=0,
        question="Who are the people near the truck?",
    )


def test_leak_direct_mention():
    report = check_leakage(Hint(items=("the answer is visitors",)), _visitors_record())
    assert report.leak and report.item_index == 0


def test_no_leak_without_gold_text():
    report = check_leakage(Hint(items=("check uniforms vs casual clothes",)), _visitors_record())
    assert not report.leak


def test_leak_suppressed_when_gold_inside_other_option():
    record = make_record(qid="q-lr", options=("left", "left-right", "right of frame"), gold_index=0)
    report = check_leakage(Hint(items=("left or right?",)), record)
    assert not report.leak


def test_leak_case_and_punctuation_invariant():
    record = _visitors_record()
    base = Hint(items=("Maybe they are visitors",))
    assert check_leakage(base, record).leak
    for variant in ("Maybe they are VISITORS!", "maybe they are, Visitors.", "MAYBE THEY ARE (visitors)"):
        assert check_leakage(Hint(items=(variant,)), record).leak


def test_leak_requires_whole_token_sequence():
    record = make_record(qid="q-tok", options=("cat", "dog", "bird"), gold_index=0)
    # "scatter" contains "cat" as a substring but not as a standalone token
    assert not check_leakage(Hint(items=("the seeds scatter widely",)), record).leak
    assert check_leakage(Hint(items=("is it a cat?",)), record).leak


def test_leak_multiword_gold_option():
    record = make_record(qid="q-mw", options=("fire truck", "police car", "ambulance"), gold_index=0)
    assert check_leakage(Hint(items=("look, a fire truck is parked",)), record).leak
    assert not check_leakage(Hint(items=("fire hydrants and a truck",)), record).leak


def test_leak_reports_offending_item_index():
    record = _visitors_record()
    report = check_leakage(Hint(items=("count the people", "these are visitors")), record)
    assert report.leak and report.item_index == 1


# --- check_contrastive -------------------------------------------------------


def test_contrastive_vs_pattern():
    assert check_contrastive(Hint(items=("Firefighters vs visitors: check whether they wear uniforms",)))


def test_contrastive_absent():
    assert not check_contrastive(Hint(items=("Focus on the wheels.",)))


def test_contrastive_found_in_second_item():
    hint = Hint(items=("Count carefully.", "Waiting to cross vs panhandling: check curb position"))
    assert check_contrastive(hint)


def test_contrastive_or_token():
    assert check_contrastive(Hint(items=("left or right?",)))
    assert not check_contrastive(Hint(items=("sort the items",)))  # "or" inside a word


# --- FailureMode -------------------------------------------------------------


def test_failure_mode_round_trip_unique():
    values = [mode.value for mode in FailureMode]
    assert len(values) == 12
    assert len(set(values)) == 12
    for mode in FailureMode:
        assert FailureMode(mode.value) is mode


# --- QuestionRecord / dataset files ------------------------------------------


def test_record_validation():
    with pytest.raises(ValueError):
        make_record(options=("only one",))
    with pytest.raises(ValueError):
        make_record(gold_index=9)
    with pytest.raises(ValueError):
        make_record(options=("cat", "Cat "))  # distinct only by case/whitespace


def test_dataset_round_trip(tmp_path):
    records = [make_record(qid=f"q{i}", gold_index=i % 4) for i in range(6)]
    path = tmp_path / "data.jsonl"
    write_question_records(path, records)
    loaded = load_question_records(path)
    assert loaded == records
    assert loaded[0].dataset is Dataset.CUSTOM


def test_dataset_duplicate_id_rejected(tmp_path):
    path = tmp_path / "data.jsonl"
    row = json.dumps(make_record(qid="dup").to_json())
    path.write_text(row + "\n" + row + "\n")
    with pytest.raises(DatasetFormatError):
        load_question_records(path)


def test_normalize_tokens():
    assert normalize_tokens("  The, ANSWER-is: Visitors!! ") == ["the", "answer", "is", "visitors"]

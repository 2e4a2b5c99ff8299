from __future__ import annotations

import itertools

import pytest

from hintkit.client import ClientHub, DiskCache, ScriptedClient, ScriptedReply
from hintkit.core import ModelId
from hintkit.sampler import (
    BaseLabel,
    BaseProfile,
    IncorrectRule,
    classify_trials,
    incorrect_set,
    load_profiles,
    sample_base,
    write_profiles,
)
from conftest import TARGET, make_profile, make_record, make_trial

GOLD = 0
SAME_WRONG = 1
OTHER_WRONG = 2

# per-trial outcome alphabet for the exhaustive rule-table oracle
OUTCOMES = {
    "correct": GOLD,
    "same_wrong": SAME_WRONG,
    "other_wrong": OTHER_WRONG,
    "unparseable": None,
}


def oracle_label(pattern: tuple[str, str, str]) -> BaseLabel:
    if all(p == "correct" for p in pattern):
        return BaseLabel.BASE_CORRECT
    if all(p in ("same_wrong", "other_wrong") for p in pattern):
        return BaseLabel.BASE_INCORRECT
    return BaseLabel.MIXED


def oracle_same_answer_incorrect(pattern: tuple[str, str, str]) -> bool:
    indices = [OUTCOMES[p] for p in pattern]
    return all(i is not None and i != GOLD for i in indices) and len(set(indices)) == 1


ALL_PATTERNS = list(itertools.product(OUTCOMES, repeat=3))


def test_exhaustive_label_classification():
    record = make_record()
    for pattern in ALL_PATTERNS:
        trials = tuple(make_trial(OUTCOMES[p]) for p in pattern)
        assert classify_trials(trials, record.gold_index) == oracle_label(pattern), pattern


def test_exactly_one_label_holds():
    record = make_record()
    for pattern in ALL_PATTERNS:
        trials = tuple(make_trial(OUTCOMES[p]) for p in pattern)
        label = classify_trials(trials, record.gold_index)
        assert label in (BaseLabel.BASE_CORRECT, BaseLabel.BASE_INCORRECT, BaseLabel.MIXED)


def test_exhaustive_incorrect_set_rules():
    record = make_record()
    for pattern in ALL_PATTERNS:
        profile = make_profile(record, tuple(OUTCOMES[p] for p in pattern))
        same = incorrect_set([profile], TARGET, IncorrectRule.ALL_WRONG_SAME_ANSWER)
        any_rule = incorrect_set([profile], TARGET, IncorrectRule.ALL_WRONG_ANY_ANSWER)
        assert (record.id in same) == oracle_same_answer_incorrect(pattern), pattern
        assert (record.id in any_rule) == (oracle_label(pattern) is BaseLabel.BASE_INCORRECT), pattern
        assert same <= any_rule


def test_incorrect_set_examples():
    record = make_record()
    unanimous = make_profile(record, (SAME_WRONG, SAME_WRONG, SAME_WRONG))
    split = make_profile(record, (SAME_WRONG, OTHER_WRONG, SAME_WRONG))
    has_correct = make_profile(record, (GOLD, SAME_WRONG, SAME_WRONG))
    for rule in IncorrectRule:
        assert record.id in incorrect_set([unanimous], TARGET, rule)
        assert record.id not in incorrect_set([has_correct], TARGET, rule)
    assert record.id not in incorrect_set([split], TARGET, IncorrectRule.ALL_WRONG_SAME_ANSWER)
    assert record.id in incorrect_set([split], TARGET, IncorrectRule.ALL_WRONG_ANY_ANSWER)


def test_incorrect_set_filters_by_model():
    record = make_record()
    profile = make_profile(record, (SAME_WRONG,) * 3, model=ModelId("beta-vlm"))
    assert incorrect_set([profile], TARGET, IncorrectRule.ALL_WRONG_ANY_ANSWER) == set()


def test_unparseable_trial_forces_mixed():
    record = make_record()
    profile = make_profile(record, (SAME_WRONG, None, SAME_WRONG))
    assert profile.label is BaseLabel.MIXED
    assert incorrect_set([profile], TARGET, IncorrectRule.ALL_WRONG_SAME_ANSWER) == set()


def _scripted_hub(cache=None) -> ClientHub:
    script = ScriptedClient()
    script.add("q1", "base:1", ScriptedReply(answer_index=0))
    script.add("q1", "base:2", ScriptedReply(answer_index=1))
    script.add("q1", "base:3", ScriptedReply(answer_index=0))
    script.add("q2", "base", ScriptedReply(answer_index=0))
    hub = ClientHub(cache=cache)
    hub.register(TARGET, script)
    return hub


def test_sample_base_issues_three_trials_and_classifies():
    record = make_record()
    hub = _scripted_hub()
    profile = sample_base(record, TARGET, hub)
    assert profile.label is BaseLabel.MIXED
    assert [t.answer_index for t in profile.trials] == [0, 1, 0]
    assert hub.remote_call_count(question_id="q1") == 3


def test_sample_base_uniform_correct():
    record = make_record(qid="q2")
    profile = sample_base(record, TARGET, _scripted_hub())
    assert profile.label is BaseLabel.BASE_CORRECT


def test_warm_cache_rerun_is_free_and_identical(tmp_path):
    record = make_record()
    cache = DiskCache(tmp_path / "cache")
    hub = _scripted_hub(cache=cache)
    first = sample_base(record, TARGET, hub)
    assert hub.remote_call_count() == 3
    second = sample_base(record, TARGET, hub)
    assert hub.remote_call_count() == 3  # no new remote calls
    assert second == first


def test_profile_jsonl_round_trip(tmp_path):
    record = make_record()
    profiles = [
        make_profile(record, (GOLD, GOLD, GOLD)),
        make_profile(record, (SAME_WRONG, None, GOLD)),
    ]
    path = tmp_path / "profiles.jsonl"
    write_profiles(path, profiles)
    assert load_profiles(path) == profiles


def test_profile_requires_three_trials():
    with pytest.raises(ValueError):
        BaseProfile(question_id="q1", model=TARGET, trials=(make_trial(0),), label=BaseLabel.MIXED)

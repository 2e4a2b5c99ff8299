from __future__ import annotations

import random

import pytest

from hintkit.core import FailureMode, ModelId
from hintkit.metrics import (
    EmptyRowsError,
    EvalOutcomeRow,
    IdentityViolationError,
    MissingLabelError,
    MixedRowsError,
    Strategy,
    decompose_accuracy,
    failure_agreement,
    harm_rate,
    jaccard_overlap,
    overall_accuracy,
    render_summary_table,
    repair_rate,
    summarize,
)

MODEL = ModelId("alpha-vlm")


def make_rows(
    preserved: int,
    harmed: int,
    repaired: int,
    unrepaired: int,
    strategy: Strategy = Strategy.HINTED,
) -> list[EvalOutcomeRow]:
    """Rows constructed cell-by-cell from a 2x2 contingency."""
    rows = []
    cells = [
        (True, True, preserved),
        (True, False, harmed),
        (False, True, repaired),
        (False, False, unrepaired),
    ]
    i = 0
    for base, final, count in cells:
        for _ in range(count):
            rows.append(
                EvalOutcomeRow(
                    question_id=f"q{i}",
                    model=MODEL,
                    strategy=strategy,
                    base_correct=base,
                    final_correct=final,
                )
            )
            i += 1
    return rows


# --- accuracy / repair / harm -------------------------------------------------


def test_overall_accuracy_counting():
    rows = make_rows(preserved=2, harmed=1, repaired=1, unrepaired=0)
    assert overall_accuracy(rows) == pytest.approx(0.75)


def test_overall_accuracy_boundaries():
    assert overall_accuracy(make_rows(3, 0, 2, 0)) == pytest.approx(1.0)
    assert overall_accuracy(make_rows(0, 2, 0, 3)) == pytest.approx(0.0)


def test_overall_accuracy_empty_rows():
    with pytest.raises(EmptyRowsError):
        overall_accuracy([])


def test_mixed_rows_rejected():
    rows = make_rows(1, 0, 0, 0) + make_rows(1, 0, 0, 0, strategy=Strategy.COT)
    with pytest.raises(MixedRowsError):
        overall_accuracy(rows)


def test_repair_rate_counting():
    rows = make_rows(preserved=0, harmed=0, repaired=2, unrepaired=3)
    rate = repair_rate(rows)
    assert rate.value == pytest.approx(0.4)
    assert (rate.numerator, rate.denominator) == (2, 5)


def test_repair_rate_absent_without_base_errors():
    assert repair_rate(make_rows(4, 1, 0, 0)) is None


def test_base_strategy_repair_rate_zero_when_defined():
    rows = make_rows(preserved=3, harmed=0, repaired=0, unrepaired=2, strategy=Strategy.BASE)
    assert repair_rate(rows).value == 0.0
    assert harm_rate(rows).value == 0.0


def test_base_strategy_row_invariant():
    with pytest.raises(ValueError):
        EvalOutcomeRow(question_id="q", model=MODEL, strategy=Strategy.BASE, base_correct=False, final_correct=True)


def test_harm_rate_counting():
    rows = make_rows(preserved=9, harmed=1, repaired=0, unrepaired=0)
    rate = harm_rate(rows)
    assert rate.value == pytest.approx(0.1)
    assert (rate.numerator, rate.denominator) == (1, 10)


def test_harm_rate_absent_without_base_correct():
    assert harm_rate(make_rows(0, 0, 2, 2)) is None


def test_rates_permutation_invariant():
    rng = random.Random(17)
    rows = make_rows(5, 2, 3, 4)
    for _ in range(10):
        shuffled = rows[:]
        rng.shuffle(shuffled)
        assert repair_rate(shuffled) == repair_rate(rows)
        assert harm_rate(shuffled) == harm_rate(rows)
        assert overall_accuracy(shuffled) == overall_accuracy(rows)


# --- jaccard / agreement ---------------------------------------------------------


def test_jaccard_basic():
    assert jaccard_overlap({"1", "2", "3"}, {"2", "3", "4"}) == pytest.approx(0.5)


def test_jaccard_identity_disjoint_empty():
    assert jaccard_overlap({"a"}, {"a"}) == 1.0
    assert jaccard_overlap({"a"}, {"b"}) == 0.0
    assert jaccard_overlap(set(), set()) == 0.0


def test_jaccard_symmetric_bounded():
    rng = random.Random(3)
    universe = [f"q{i}" for i in range(30)]
    for _ in range(100):
        a = {q for q in universe if rng.random() < 0.4}
        b = {q for q in universe if rng.random() < 0.4}
        j = jaccard_overlap(a, b)
        assert 0.0 <= j <= 1.0
        assert j == jaccard_overlap(b, a)
        if a or b:
            assert (j == 1.0) == (a == b)


def test_failure_agreement_counting():
    labels_a = {"1": FailureMode.COUNTING, "2": FailureMode.OCR, "3": FailureMode.OCR, "4": FailureMode.KNOWLEDGE}
    labels_b = {"1": FailureMode.COUNTING, "2": FailureMode.OCR, "3": FailureMode.RECOGNITION, "4": FailureMode.KNOWLEDGE}
    rate = failure_agreement(labels_a, labels_b, {"1", "2", "3", "4"})
    assert rate.value == pytest.approx(0.75)


def test_failure_agreement_identical_and_empty():
    labels = {"1": FailureMode.OCR, "2": FailureMode.COUNTING}
    assert failure_agreement(labels, labels, set(labels)).value == 1.0
    assert failure_agreement(labels, labels, set()) is None


def test_failure_agreement_missing_label():
    with pytest.raises(MissingLabelError):
        failure_agreement({"1": FailureMode.OCR}, {}, {"1"})


# --- decomposition identity ---------------------------------------------------------


def test_decompose_hand_computed():
    # base_acc 0.8, harm 0.05, repair 0.5 over 100 questions
    rows = make_rows(preserved=76, harmed=4, repaired=10, unrepaired=10)
    report = decompose_accuracy(rows)
    assert report.base_accuracy == pytest.approx(0.8)
    assert report.harm.value == pytest.approx(0.05)
    assert report.repair.value == pytest.approx(0.5)
    assert report.accuracy == pytest.approx(0.86)


def test_decompose_noop_strategy_matches_base_accuracy():
    rows = make_rows(preserved=7, harmed=0, repaired=0, unrepaired=3)
    report = decompose_accuracy(rows)
    assert report.accuracy == pytest.approx(report.base_accuracy)


def test_decompose_identity_random_contingencies():
    rng = random.Random(29)
    for _ in range(1000):
        counts = [rng.randint(0, 40) for _ in range(4)]
        if sum(counts) == 0:
            counts[rng.randrange(4)] = 1
        report = decompose_accuracy(make_rows(*counts))
        assert abs(report.reconstructed - report.accuracy) <= 1e-12


def test_decompose_detects_corruption():
    rows = make_rows(4, 1, 2, 3)
    broken = rows + make_rows(0, 0, 1, 0)
    object.__setattr__(broken[-1], "question_id", "q-dup")
    # simulate corruption by mixing tampered accuracy terms: force through the
    # identity check with an impossible tolerance instead
    with pytest.raises(IdentityViolationError):
        decompose_accuracy(rows, tolerance=-1.0)


# --- summaries -----------------------------------------------------------------------


def test_summarize_and_render():
    rows = make_rows(5, 1, 2, 2) + make_rows(6, 0, 1, 3, strategy=Strategy.COT)
    summaries = summarize(rows)
    assert [s.strategy for s in summaries] == [Strategy.COT, Strategy.HINTED]
    text = render_summary_table(summaries)
    assert "alpha-vlm" in text and "cot" in text and "hinted" in text
    assert text.count("\n") == len(summaries) + 2  # header + rule + rows
    cot = summaries[0]
    assert cot.n == 10 and cot.accuracy == pytest.approx(0.7)
    assert cot.repair.denominator == 4 and cot.harm.denominator == 6

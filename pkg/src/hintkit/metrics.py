"""Evaluation metrics: overall accuracy, repair rate, harm rate, and overlap stats.

Repair rate conditions on base-incorrect questions, harm rate on base-correct
ones; both return None (never a silent zero) when the conditioning set is
empty, and always carry their denominator, since the denominators differ
across models and strategies. The three metrics are tied by the identity
accuracy = base_acc * (1 - harm) + (1 - base_acc) * repair, which
decompose_accuracy verifies as a corruption check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .core import FailureMode, ModelId


class EmptyRowsError(ValueError):
    pass


class MixedRowsError(ValueError):
    """Rows span more than one (model, strategy) pair."""


class MissingLabelError(KeyError):
    pass


class IdentityViolationError(ValueError):
    """The accuracy decomposition identity failed beyond tolerance."""


class Strategy(str, Enum):
    BASE = "base"
    COT = "cot"
    SELF_REFINE = "self-refine"
    EXTERNAL_JUDGE = "external-judge"
    HINTED = "hinted"
    CATEGORICAL_HINT = "categorical-hint"
    TAXONOMY_HINT = "taxonomy-hint"


# Logical model calls each strategy is allowed per question (target + judge).
CALL_BUDGETS: dict[Strategy, int] = {
    Strategy.BASE: 1,
    Strategy.COT: 1,
    Strategy.SELF_REFINE: 2,
    Strategy.EXTERNAL_JUDGE: 3,
    Strategy.HINTED: 1,
    Strategy.CATEGORICAL_HINT: 1,
    Strategy.TAXONOMY_HINT: 1,
}


@dataclass(frozen=True)
class EvalOutcomeRow:
    question_id: str
    model: ModelId
    strategy: Strategy
    base_correct: bool
    final_correct: bool

    def __post_init__(self) -> None:
        if self.strategy is Strategy.BASE and self.base_correct != self.final_correct:
            raise ValueError("base strategy cannot change its own answer")

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "model": self.model.name,
            "strategy": self.strategy.value,
            "base_correct": self.base_correct,
            "final_correct": self.final_correct,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EvalOutcomeRow":
        return cls(
            question_id=obj["question_id"],
            model=ModelId(obj["model"]),
            strategy=Strategy(obj["strategy"]),
            base_correct=obj["base_correct"],
            final_correct=obj["final_correct"],
        )


@dataclass(frozen=True)
class Rate:
    """A conditional rate with its contingency counts kept visible."""

    value: float
    numerator: int
    denominator: int


def _check_rows(rows: Sequence[EvalOutcomeRow]) -> None:
    if not rows:
        raise EmptyRowsError("no rows")
    pairs = {(r.model.name, r.strategy) for r in rows}
    if len(pairs) > 1:
        raise MixedRowsError(f"rows span {sorted(str(p) for p in pairs)}")


def overall_accuracy(rows: Sequence[EvalOutcomeRow]) -> float:
    _check_rows(rows)
    return sum(r.final_correct for r in rows) / len(rows)


def repair_rate(rows: Sequence[EvalOutcomeRow]) -> Rate | None:
    """P[final correct | base incorrect]; None when nothing was base-incorrect."""
    _check_rows(rows)
    wrong = [r for r in rows if not r.base_correct]
    if not wrong:
        return None
    fixed = sum(r.final_correct for r in wrong)
    return Rate(value=fixed / len(wrong), numerator=fixed, denominator=len(wrong))


def harm_rate(rows: Sequence[EvalOutcomeRow]) -> Rate | None:
    """P[final incorrect | base correct]; None when nothing was base-correct."""
    _check_rows(rows)
    right = [r for r in rows if r.base_correct]
    if not right:
        return None
    flipped = sum(not r.final_correct for r in right)
    return Rate(value=flipped / len(right), numerator=flipped, denominator=len(right))


def jaccard_overlap(set_a: Iterable[str], set_b: Iterable[str]) -> float:
    a, b = set(set_a), set(set_b)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def failure_agreement(
    labels_a: Mapping[str, FailureMode],
    labels_b: Mapping[str, FailureMode],
    shared: Iterable[str],
) -> Rate | None:
    """Fraction of jointly failed questions carrying the same failure label."""
    shared = set(shared)
    missing = [qid for qid in shared if qid not in labels_a or qid not in labels_b]
    if missing:
        raise MissingLabelError(f"no failure label for {sorted(missing)[:5]}")
    if not shared:
        return None
    same = sum(labels_a[qid] == labels_b[qid] for qid in shared)
    return Rate(value=same / len(shared), numerator=same, denominator=len(shared))


@dataclass(frozen=True)
class DecompositionReport:
    accuracy: float
    base_accuracy: float
    repair: Rate | None
    harm: Rate | None
    reconstructed: float


def decompose_accuracy(rows: Sequence[EvalOutcomeRow], tolerance: float = 1e-12) -> DecompositionReport:
    """Check accuracy = base_acc*(1-harm) + (1-base_acc)*repair on the rows.

    A violation beyond tolerance means the rows are internally inconsistent
    (e.g. corrupted or mixed strata), so it raises rather than reporting.
    """
    _check_rows(rows)
    accuracy = overall_accuracy(rows)
    base_acc = sum(r.base_correct for r in rows) / len(rows)
    repair = repair_rate(rows)
    harm = harm_rate(rows)
    harm_value = harm.value if harm is not None else 0.0
    repair_value = repair.value if repair is not None else 0.0
    reconstructed = base_acc * (1.0 - harm_value) + (1.0 - base_acc) * repair_value
    if abs(reconstructed - accuracy) > tolerance:
        raise IdentityViolationError(
            f"decomposition off by {abs(reconstructed - accuracy):.3e} (accuracy {accuracy}, reconstructed {reconstructed})"
        )
    return DecompositionReport(
        accuracy=accuracy,
        base_accuracy=base_acc,
        repair=repair,
        harm=harm,
        reconstructed=reconstructed,
    )


@dataclass(frozen=True)
class StrategySummary:
    model: str
    strategy: Strategy
    n: int
    accuracy: float
    repair: Rate | None
    harm: Rate | None

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "strategy": self.strategy.value,
            "n": self.n,
            "accuracy": self.accuracy,
            "repair_rate": None if self.repair is None else self.repair.value,
            "repair_numerator": None if self.repair is None else self.repair.numerator,
            "repair_denominator": None if self.repair is None else self.repair.denominator,
            "harm_rate": None if self.harm is None else self.harm.value,
            "harm_numerator": None if self.harm is None else self.harm.numerator,
            "harm_denominator": None if self.harm is None else self.harm.denominator,
        }


def summarize(rows: Sequence[EvalOutcomeRow]) -> list[StrategySummary]:
    """Per (model, strategy) accuracy / repair / harm, sorted for stable output."""
    groups: dict[tuple[str, Strategy], list[EvalOutcomeRow]] = {}
    for row in rows:
        groups.setdefault((row.model.name, row.strategy), []).append(row)
    summaries = []
    for (model, strategy) in sorted(groups, key=lambda k: (k[0], k[1].value)):
        group = groups[(model, strategy)]
        summaries.append(
            StrategySummary(
                model=model,
                strategy=strategy,
                n=len(group),
                accuracy=overall_accuracy(group),
                repair=repair_rate(group),
                harm=harm_rate(group),
            )
        )
    return summaries


def _fmt_rate(rate: Rate | None) -> str:
    if rate is None:
        return "-"
    return f"{100 * rate.value:6.2f} ({rate.numerator}/{rate.denominator})"


def render_summary_table(summaries: Sequence[StrategySummary]) -> str:
    """Aligned-column text table, one row per (model, strategy)."""
    header = ("model", "strategy", "n", "accuracy%", "repair% (n/d)", "harm% (n/d)")
    rows = [header]
    for s in summaries:
        rows.append(
            (
                s.model,
                s.strategy.value,
                str(s.n),
                f"{100 * s.accuracy:6.2f}",
                _fmt_rate(s.repair),
                _fmt_rate(s.harm),
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[j] for j in range(len(header))))
    return "\n".join(lines) + "\n"


def write_summaries_jsonl(path, summaries: Sequence[StrategySummary]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in summaries:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")

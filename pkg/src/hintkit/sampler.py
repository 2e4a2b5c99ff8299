"""Base-response sampling: three greedy trials per (question, model), classified.

A (question, model) pair is base-correct only when all three trials parse and
hit the gold option, base-incorrect only when all three parse and miss it,
and mixed otherwise; an unparseable trial always forces mixed, since the
incorrect label requires a valid parse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .client import ChatRequest, ClientHub, parse_mcq, seed_tag_for
from .core import ModelId, QuestionRecord, TrialResponse
from .prompts import base_prompt

TRIALS = 3


class BaseLabel(str, Enum):
    BASE_CORRECT = "base_correct"
    BASE_INCORRECT = "base_incorrect"
    MIXED = "mixed"


class IncorrectRule(str, Enum):
    """Which notion of "incorrect" a consumer wants.

    ALL_WRONG_SAME_ANSWER: all three trials valid, wrong, and unanimous
    (the cross-model analysis rule). ALL_WRONG_ANY_ANSWER: the plain
    base-incorrect label (the training-data rule).
    """

    ALL_WRONG_SAME_ANSWER = "all_wrong_same_answer"
    ALL_WRONG_ANY_ANSWER = "all_wrong_any_answer"


@dataclass(frozen=True)
class BaseProfile:
    question_id: str
    model: ModelId
    trials: tuple[TrialResponse, ...]
    label: BaseLabel

    def __post_init__(self) -> None:
        if len(self.trials) != TRIALS:
            raise ValueError(f"expected exactly {TRIALS} trials, got {len(self.trials)}")

    @property
    def base_correct(self) -> bool:
        """Boolean collapse used by evaluation rows; mixed counts as not correct."""
        return self.label is BaseLabel.BASE_CORRECT

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "model": self.model.name,
            "label": self.label.value,
            "trials": [
                {
                    "raw": t.raw,
                    "answer_index": t.answer_index,
                    "reasoning": t.reasoning,
                    "parse_valid": t.parse_valid,
                }
                for t in self.trials
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BaseProfile":
        return cls(
            question_id=obj["question_id"],
            model=ModelId(obj["model"]),
            label=BaseLabel(obj["label"]),
            trials=tuple(
                TrialResponse(
                    raw=t["raw"],
                    answer_index=t["answer_index"],
                    reasoning=t.get("reasoning"),
                    parse_valid=t["parse_valid"],
                )
                for t in obj["trials"]
            ),
        )


def classify_trials(trials: Iterable[TrialResponse], gold_index: int) -> BaseLabel:
    trials = tuple(trials)
    if all(t.parse_valid and t.answer_index == gold_index for t in trials):
        return BaseLabel.BASE_CORRECT
    if all(t.parse_valid and t.answer_index != gold_index for t in trials):
        return BaseLabel.BASE_INCORRECT
    return BaseLabel.MIXED


def sample_base(record: QuestionRecord, model: ModelId, hub: ClientHub) -> BaseProfile:
    """Issue the three greedy trials and classify the pair.

    The trials share sampling parameters but carry distinct seed tags, so they
    occupy distinct cache slots and can run concurrently.
    """
    trials = []
    for i in range(1, TRIALS + 1):
        raw = hub.complete(
            ChatRequest(
                model=model,
                prompt=base_prompt(record),
                image_ref=record.image_ref,
                temperature=0.0,
                top_p=1.0,
                seed_tag=seed_tag_for(record.id, f"base:{i}"),
            )
        )
        trials.append(parse_mcq(raw, len(record.options)))
    return BaseProfile(
        question_id=record.id,
        model=model,
        trials=tuple(trials),
        label=classify_trials(trials, record.gold_index),
    )


def incorrect_set(
    profiles: Iterable[BaseProfile],
    model: ModelId,
    rule: IncorrectRule,
) -> set[str]:
    """Question ids the model got wrong under the requested rule."""
    out: set[str] = set()
    for profile in profiles:
        if profile.model != model:
            continue
        if rule is IncorrectRule.ALL_WRONG_ANY_ANSWER:
            if profile.label is BaseLabel.BASE_INCORRECT:
                out.add(profile.question_id)
        else:
            answers = {t.answer_index for t in profile.trials}
            if profile.label is BaseLabel.BASE_INCORRECT and len(answers) == 1:
                out.add(profile.question_id)
    return out


def write_profiles(path: str | Path, profiles: Iterable[BaseProfile]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for profile in profiles:
            fh.write(json.dumps(profile.to_json(), ensure_ascii=False) + "\n")


def load_profiles(path: str | Path) -> list[BaseProfile]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(BaseProfile.from_json(json.loads(line)))
    return out


def profile_index(profiles: Iterable[BaseProfile]) -> dict[tuple[str, str], BaseProfile]:
    """Index by (question_id, model name) for O(1) strategy lookups."""
    return {(p.question_id, p.model.name): p for p in profiles}

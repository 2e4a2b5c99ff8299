"""Failure-mode labeling of incorrect answers, plus the static-hint constructors.

The annotator model sees privileged context (gold answer, rationale, the
target's wrong answer and reasoning) and must reply with one identifier from
the closed 12-mode vocabulary. Replies outside the vocabulary are mapped to
``other`` and flagged rather than rejected. The two static-hint builders back
the ablation strategies: a single-mode categorical hint, and a fixed
checklist of the whole taxonomy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .client import ChatRequest, ClientHub, seed_tag_for
from .core import FailureMode, Hint, ModelId, QuestionRecord, normalize_tokens
from .prompts import annotator_prompt, option_letter
from .sampler import BaseLabel, BaseProfile

TAXONOMY_DEFINITIONS: dict[FailureMode, str] = {
    FailureMode.RECOGNITION: "the main object, scene, or activity in the image is misidentified",
    FailureMode.ATTRIBUTE_BINDING: "a color, material, state, or role is attached to the wrong entity",
    FailureMode.COUNTING: "the count of objects, people, or instances is wrong",
    FailureMode.SPATIAL_RELATION: "left/right, front/behind, above/below, or near/far relations are misjudged",
    FailureMode.OCR: "text rendered inside the image (signs, captions, packaging) is misread or missed",
    FailureMode.CHART_TABLE: "the data structure of a chart, table, or schematic is misinterpreted",
    FailureMode.MATH_QUANTITATIVE: "perception is right but an arithmetic or comparison step goes wrong",
    FailureMode.KNOWLEDGE: "perception is right but the required background facts are missing or misapplied",
    FailureMode.LOGIC_NEGATION: "negation, conjunction, exclusion, or similar question logic is mishandled",
    FailureMode.HALLUCINATION: "entities, attributes, or events not present in the image are asserted",
    FailureMode.INSTRUCTION_FORMAT: "the reasoning is right but the final answer breaks the requested format",
    FailureMode.OTHER: "a residual failure that fits none of the categories above",
}


@dataclass(frozen=True)
class FailureAnnotation:
    question_id: str
    model: ModelId
    mode: FailureMode
    annotator_raw: str
    off_vocabulary: bool = False

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "model": self.model.name,
            "mode": self.mode.value,
            "annotator_raw": self.annotator_raw,
            "off_vocabulary": self.off_vocabulary,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FailureAnnotation":
        return cls(
            question_id=obj["question_id"],
            model=ModelId(obj["model"]),
            mode=FailureMode(obj["mode"]),
            annotator_raw=obj["annotator_raw"],
            off_vocabulary=obj.get("off_vocabulary", False),
        )


def taxonomy_block() -> str:
    """Deterministic one-line-per-mode listing used in prompts and the checklist."""
    return "\n".join(f"- {mode.value}: {TAXONOMY_DEFINITIONS[mode]}" for mode in FailureMode)


def parse_mode(raw: str) -> tuple[FailureMode, bool]:
    """Match a reply against the closed vocabulary; fall back to (other, flagged).

    Matching is token-based after normalization, so "spatial relation",
    "chart/table", and bare identifiers all resolve; a reply matching zero or
    several identifiers is off-vocabulary.
    """
    tokens = normalize_tokens(raw.replace("_", " "))
    hits = []
    for mode in FailureMode:
        needle = mode.value.split("_")
        n = len(needle)
        if any(tokens[i : i + n] == needle for i in range(len(tokens) - n + 1)):
            hits.append(mode)
    if len(hits) == 1:
        return hits[0], False
    return FailureMode.OTHER, True


def annotate(
    record: QuestionRecord,
    base: BaseProfile,
    hub: ClientHub,
    annotator_model: ModelId,
) -> FailureAnnotation:
    """One privileged-context annotator call for a base-incorrect pair."""
    if base.label is not BaseLabel.BASE_INCORRECT:
        raise ValueError(f"annotate requires a base-incorrect pair, got {base.label.value}")
    if base.question_id != record.id:
        raise ValueError("base profile does not belong to this question")
    trial = base.trials[0]
    answer = "(unparseable)"
    if trial.parse_valid and trial.answer_index is not None:
        answer = f"{option_letter(trial.answer_index)}. {record.options[trial.answer_index]}"
    raw = hub.complete(
        ChatRequest(
            model=annotator_model,
            prompt=annotator_prompt(record, answer, trial.reasoning or "", taxonomy_block()),
            image_ref=record.image_ref,
            seed_tag=seed_tag_for(record.id, f"annotate:{base.model.name}"),
        )
    )
    mode, off_vocab = parse_mode(raw)
    return FailureAnnotation(
        question_id=record.id,
        model=base.model,
        mode=mode,
        annotator_raw=raw,
        off_vocabulary=off_vocab,
    )


def categorical_hint(mode: FailureMode) -> Hint:
    """Single-item hint carrying just the failure-mode identifier."""
    return Hint(items=(mode.value,))


def universal_taxonomy_hint() -> str:
    """Fixed, input-independent checklist of all 12 failure modes."""
    return (
        "Before answering, check the question against these common failure patterns:\n"
        + taxonomy_block()
    )


def write_annotations(path: str | Path, annotations: Iterable[FailureAnnotation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            fh.write(json.dumps(ann.to_json(), ensure_ascii=False) + "\n")


def load_annotations(path: str | Path) -> list[FailureAnnotation]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(FailureAnnotation.from_json(json.loads(line)))
    return out

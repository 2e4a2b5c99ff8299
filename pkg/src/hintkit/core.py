"""Shared domain types for the hinting pipeline, plus structural hint validation.

Everything here is an immutable value object, safe to share across threads.
The wire format for a hint is a JSON object with the single key ``"hint"``
mapping to a list of 1-3 non-empty strings.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

MAX_HINT_ITEMS = 3


class HintFormatError(ValueError):
    """Base class for hint wire-format violations."""


class MalformedWireError(HintFormatError):
    """The wire text is not parseable JSON."""


class WrongShapeError(HintFormatError):
    """Parseable JSON but not an object with exactly the 'hint' list."""


class TooManyItemsError(HintFormatError):
    """More than MAX_HINT_ITEMS hint items."""


class DatasetFormatError(ValueError):
    """A dataset file violates the question-record schema."""


class Dataset(str, Enum):
    AOKVQA = "aokvqa"
    VCR = "vcr"
    VISUAL7W = "visual7w"
    REALWORLDQA = "realworldqa"
    CUSTOM = "custom"


class FailureMode(str, Enum):
    """Closed 12-way taxonomy of multiple-choice VQA failure categories."""

    RECOGNITION = "recognition"
    ATTRIBUTE_BINDING = "attribute_binding"
    COUNTING = "counting"
    SPATIAL_RELATION = "spatial_relation"
    OCR = "ocr"
    CHART_TABLE = "chart_table"
    MATH_QUANTITATIVE = "math_quantitative"
    KNOWLEDGE = "knowledge"
    LOGIC_NEGATION = "logic_negation"
    HALLUCINATION = "hallucination"
    INSTRUCTION_FORMAT = "instruction_format"
    OTHER = "other"


@dataclass(frozen=True)
class ModelId:
    """Natural-language model identifier, used verbatim in prompts."""

    name: str

    def __post_init__(self) -> None:
        if not self.name or not self.name.strip():
            raise ValueError("model identifier must be non-empty")

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class QuestionRecord:
    """One multiple-choice question with its gold answer and optional rationale."""

    id: str
    image_ref: str
    question: str
    options: tuple[str, ...]
    gold_index: int
    rationale: str | None = None
    dataset: Dataset = Dataset.CUSTOM

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("question id must be non-empty")
        object.__setattr__(self, "options", tuple(self.options))
        if len(self.options) < 2:
            raise ValueError(f"{self.id}: need at least 2 options")
        if not 0 <= self.gold_index < len(self.options):
            raise ValueError(f"{self.id}: gold_index {self.gold_index} out of range")
        normalized = [" ".join(opt.split()).casefold() for opt in self.options]
        if len(set(normalized)) != len(normalized):
            raise ValueError(f"{self.id}: options not pairwise distinct")

    @property
    def gold_option(self) -> str:
        return self.options[self.gold_index]

    def to_json(self) -> dict:
        out: dict = {
            "id": self.id,
            "image_ref": self.image_ref,
            "question": self.question,
            "options": list(self.options),
            "gold_index": self.gold_index,
            "dataset": self.dataset.value,
        }
        if self.rationale is not None:
            out["rationale"] = self.rationale
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "QuestionRecord":
        try:
            return cls(
                id=obj["id"],
                image_ref=obj["image_ref"],
                question=obj["question"],
                options=tuple(obj["options"]),
                gold_index=obj["gold_index"],
                rationale=obj.get("rationale"),
                dataset=Dataset(obj.get("dataset", "custom")),
            )
        except (KeyError, TypeError) as exc:
            raise DatasetFormatError(f"bad question record: {exc}") from exc


@dataclass(frozen=True)
class Hint:
    """A short list of 1-3 natural-language guidance items."""

    items: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        if not 1 <= len(self.items) <= MAX_HINT_ITEMS:
            raise ValueError(f"hint must have 1..{MAX_HINT_ITEMS} items, got {len(self.items)}")
        for item in self.items:
            if not isinstance(item, str) or not item.strip():
                raise ValueError("hint items must be non-empty strings")


@dataclass(frozen=True)
class TrialResponse:
    """A parsed model reply: raw text plus the extracted choice, if any."""

    raw: str
    answer_index: int | None = None
    reasoning: str | None = None
    parse_valid: bool = False

    def __post_init__(self) -> None:
        if self.parse_valid != (self.answer_index is not None):
            raise ValueError("parse_valid must hold exactly when answer_index is present")


@dataclass(frozen=True)
class LeakReport:
    """Result of scanning a hint for verbatim gold-answer leakage."""

    leak: bool
    item_index: int | None = None


def serialize_hint(hint: Hint) -> str:
    """Render a hint in its canonical wire form."""
    return json.dumps({"hint": list(hint.items)}, ensure_ascii=False)


_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\s*|\s*```$")


def parse_hint(wire_text: str) -> Hint:
    """Parse raw generator output into a Hint.

    Accepts the bare JSON object, optionally wrapped in a markdown code fence.
    Raises MalformedWireError / WrongShapeError / TooManyItemsError.
    """
    text = wire_text.strip()
    text = _FENCE_RE.sub("", text).strip()
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, ValueError) as exc:
        raise MalformedWireError(f"hint wire not parseable: {exc}") from exc
    if not isinstance(obj, dict):
        raise WrongShapeError("hint wire must be a JSON object")
    if set(obj.keys()) != {"hint"}:
        raise WrongShapeError(f"hint wire must have exactly the 'hint' key, got {sorted(obj)}")
    items = obj["hint"]
    if not isinstance(items, list) or not items:
        raise WrongShapeError("'hint' must map to a non-empty list")
    if not all(isinstance(it, str) and it.strip() for it in items):
        raise WrongShapeError("hint items must be non-empty strings")
    if len(items) > MAX_HINT_ITEMS:
        raise TooManyItemsError(f"at most {MAX_HINT_ITEMS} hint items, got {len(items)}")
    return Hint(items=tuple(items))


_NON_WORD_RE = re.compile(r"[^\w\s]+", re.UNICODE)


def normalize_tokens(text: str) -> list[str]:
    """Case-fold, strip punctuation, collapse whitespace; return the token list."""
    return _NON_WORD_RE.sub(" ", text.casefold()).split()


def _contains_token_seq(haystack: list[str], needle: list[str]) -> bool:
    if not needle or len(needle) > len(haystack):
        return False
    return any(haystack[i : i + len(needle)] == needle for i in range(len(haystack) - len(needle) + 1))


def check_leakage(hint: Hint, record: QuestionRecord) -> LeakReport:
    """Flag hints that spell out the gold option verbatim.

    A hint item leaks when it contains the gold option's normalized text as a
    standalone token sequence, unless that text also occurs inside some
    non-gold option (then mentioning it cannot single out the answer).
    """
    gold_tokens = normalize_tokens(record.gold_option)
    if not gold_tokens:
        return LeakReport(leak=False)
    gold_text = " ".join(gold_tokens)
    for i, opt in enumerate(record.options):
        if i == record.gold_index:
            continue
        if gold_text in " ".join(normalize_tokens(opt)):
            return LeakReport(leak=False)
    for idx, item in enumerate(hint.items):
        if _contains_token_seq(normalize_tokens(item), gold_tokens):
            return LeakReport(leak=True, item_index=idx)
    return LeakReport(leak=False)


def check_contrastive(hint: Hint) -> bool:
    """Syntactic screen for a contrastive item ("X vs Y", "whether ... or ...").

    Purely structural: a miss is a warning signal, never a hard failure, since
    an item can be semantically contrastive without these markers.
    """
    for item in hint.items:
        tokens = normalize_tokens(item)
        if "vs" in tokens or "or" in tokens:
            return True
    return False


def load_question_records(path: str | Path) -> list[QuestionRecord]:
    """Read a JSON-lines dataset file; ids must be unique within the file."""
    records: list[QuestionRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                record = QuestionRecord.from_json(obj)
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from exc
            if record.id in seen:
                raise DatasetFormatError(f"{path}:{lineno}: duplicate question id {record.id!r}")
            seen.add(record.id)
            records.append(record)
    return records


def write_question_records(path: str | Path, records: Iterable[QuestionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")

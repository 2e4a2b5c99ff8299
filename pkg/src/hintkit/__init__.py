"""Hint-based test-time improvement pipeline for black-box multiple-choice VQA models."""

from .core import (
    Dataset,
    FailureMode,
    Hint,
    HintFormatError,
    MalformedWireError,
    ModelId,
    QuestionRecord,
    TooManyItemsError,
    TrialResponse,
    WrongShapeError,
    check_contrastive,
    check_leakage,
    parse_hint,
    serialize_hint,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FailureMode",
    "Hint",
    "HintFormatError",
    "MalformedWireError",
    "ModelId",
    "QuestionRecord",
    "TooManyItemsError",
    "TrialResponse",
    "WrongShapeError",
    "check_contrastive",
    "check_leakage",
    "parse_hint",
    "serialize_hint",
    "__version__",
]

"""Prompt construction for every model role.

Prompt text lives in versioned template files (``templates/*_v<N>.txt``) with
``${name}`` placeholders, so wording changes are data changes. The base
question prompt built here is the single source of truth: base sampling, the
verifier, and every strategy compose from it bit-identically.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template

from .core import Hint, QuestionRecord, serialize_hint

TEMPLATE_VERSION = 1


@lru_cache(maxsize=None)
def load_template(name: str, version: int = TEMPLATE_VERSION) -> Template:
    text = resources.files("hintkit.templates").joinpath(f"{name}_v{version}.txt").read_text("utf-8")
    return Template(text)


def option_letter(index: int) -> str:
    return chr(ord("A") + index)


def options_block(record: QuestionRecord) -> str:
    return "\n".join(f"{option_letter(i)}. {opt}" for i, opt in enumerate(record.options))


def base_prompt(record: QuestionRecord) -> str:
    return load_template("base_question").substitute(
        question=record.question,
        options=options_block(record),
    )


def cot_prompt(record: QuestionRecord) -> str:
    return base_prompt(record) + "\n" + load_template("cot_suffix").template


def proposer_prompt(
    record: QuestionRecord,
    model_name: str,
    base_answer: str,
    base_reasoning: str,
    *,
    repair: bool,
    feedback: str = "",
    prev_answer: str = "",
    prev_reasoning: str = "",
) -> str:
    if repair:
        goal = "the model answered incorrectly; the hint must flip it to the correct option."
    else:
        goal = (
            "the model answered correctly; the hint must keep it on the correct option "
            "by holding its attention on the relevant visual evidence."
        )
    return load_template("proposer").substitute(
        model=model_name,
        question=record.question,
        options=options_block(record),
        gold_letter=option_letter(record.gold_index),
        gold_text=record.gold_option,
        rationale=record.rationale or "(none provided)",
        base_answer=base_answer or "(unparseable)",
        base_reasoning=base_reasoning or "(none)",
        prev_answer=prev_answer or "(none)",
        prev_reasoning=prev_reasoning or "(none)",
        feedback=feedback or "(none)",
        goal=goal,
    )


def editor_prompt(
    record: QuestionRecord,
    base_answer: str,
    base_reasoning: str,
    hint: Hint,
) -> str:
    return load_template("editor").substitute(
        question=record.question,
        options=options_block(record),
        gold_letter=option_letter(record.gold_index),
        gold_text=record.gold_option,
        rationale=record.rationale or "(none provided)",
        base_answer=base_answer or "(unparseable)",
        base_reasoning=base_reasoning or "(none)",
        hint_wire=serialize_hint(hint),
    )


def annotator_prompt(
    record: QuestionRecord,
    base_answer: str,
    base_reasoning: str,
    taxonomy: str,
) -> str:
    return load_template("annotator").substitute(
        question=record.question,
        options=options_block(record),
        gold_letter=option_letter(record.gold_index),
        gold_text=record.gold_option,
        rationale=record.rationale or "(none provided)",
        base_answer=base_answer or "(unparseable)",
        base_reasoning=base_reasoning or "(none)",
        taxonomy=taxonomy,
    )


def self_refine_prompt(record: QuestionRecord, first_response: str) -> str:
    return load_template("self_refine").substitute(
        question=record.question,
        options=options_block(record),
        first_response=first_response,
    )


def judge_prompt(record: QuestionRecord, target_response: str) -> str:
    return load_template("judge").substitute(
        question=record.question,
        options=options_block(record),
        target_response=target_response,
    )


def judge_rejoin_prompt(record: QuestionRecord, first_response: str, critique: str) -> str:
    return load_template("judge_rejoin").substitute(
        question=record.question,
        options=options_block(record),
        first_response=first_response,
        critique=critique,
    )

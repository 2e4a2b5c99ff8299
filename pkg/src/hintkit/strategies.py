"""Strategy implementations: exact call sequences and their logical call budgets.

Budgets per question: base/cot/hinted and the two static-hint ablations make
one target call; self-refine makes two; external-judge makes two target calls
plus one judge call. The first call of self-refine and external-judge reuses
the canonical base prompt (and its cache slot), which is what lets a warm
pipeline resume for free without changing the logical budget.

Evaluation-time base correctness is the stored first base trial: at greedy
decoding that is the single baseline answer the repair/harm conditioning
refers to, and it makes the base strategy's row self-consistent by cache
identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .agentic import build_hint_prompt, load_results
from .annotator import categorical_hint, load_annotations, universal_taxonomy_hint
from .client import ChatRequest, ClientHub, parse_mcq, seed_tag_for
from .core import FailureMode, Hint, ModelId, QuestionRecord
from .metrics import EvalOutcomeRow, Strategy
from .prompts import base_prompt, cot_prompt, judge_prompt, judge_rejoin_prompt, self_refine_prompt
from .sampler import BaseLabel, BaseProfile


class MissingBaseProfileError(KeyError):
    """No sampled base profile for the (question, model) pair."""


class MissingHintError(KeyError):
    """The hint source has no entry for a question the strategy needs."""


@dataclass(frozen=True)
class StrategySpec:
    kind: Strategy
    judge_model: ModelId | None = None
    hint_source: str | Path | None = None

    def __post_init__(self) -> None:
        if self.kind is Strategy.EXTERNAL_JUDGE and self.judge_model is None:
            raise ValueError("external-judge requires a judge model")
        if self.kind is Strategy.HINTED and self.hint_source is None:
            raise ValueError("hinted strategy requires a hint source")
        if self.kind is Strategy.CATEGORICAL_HINT and self.hint_source is None:
            raise ValueError("categorical-hint strategy requires an annotations source")


@dataclass
class StrategyContext:
    """Preloaded stores shared across run_strategy calls."""

    hub: ClientHub
    profiles: Mapping[tuple[str, str], BaseProfile]
    hints: Mapping[tuple[str, str], Hint] | None = None
    annotations: Mapping[tuple[str, str], FailureMode] | None = None


def load_hint_source(path: str | Path) -> dict[tuple[str, str], Hint]:
    """Selected hints per (question, model) from an optimization-results file."""
    hints: dict[tuple[str, str], Hint] = {}
    for result in load_results(path):
        if result.selected_hint is not None:
            hints[(result.question_id, result.model.name)] = result.selected_hint
    return hints


def load_annotation_modes(path: str | Path) -> dict[tuple[str, str], FailureMode]:
    return {(a.question_id, a.model.name): a.mode for a in load_annotations(path)}


def eval_base_correct(profile: BaseProfile, record: QuestionRecord) -> bool:
    trial = profile.trials[0]
    return trial.parse_valid and trial.answer_index == record.gold_index


def _ask(
    ctx: StrategyContext,
    model: ModelId,
    record: QuestionRecord,
    prompt: str,
    behavior: str,
) -> str:
    return ctx.hub.complete(
        ChatRequest(
            model=model,
            prompt=prompt,
            image_ref=record.image_ref,
            temperature=0.0,
            top_p=1.0,
            seed_tag=seed_tag_for(record.id, behavior),
        )
    )


def run_strategy(
    record: QuestionRecord,
    model: ModelId,
    spec: StrategySpec,
    ctx: StrategyContext,
) -> EvalOutcomeRow:
    """Execute one strategy on one (question, model) pair and score the row."""
    profile = ctx.profiles.get((record.id, model.name))
    if profile is None:
        raise MissingBaseProfileError(f"no base profile for ({record.id}, {model.name})")
    base_correct = eval_base_correct(profile, record)
    n = len(record.options)

    if spec.kind is Strategy.BASE:
        raw = _ask(ctx, model, record, base_prompt(record), "base:1")
        final = parse_mcq(raw, n)
    elif spec.kind is Strategy.COT:
        raw = _ask(ctx, model, record, cot_prompt(record), "cot")
        final = parse_mcq(raw, n)
    elif spec.kind is Strategy.SELF_REFINE:
        first = _ask(ctx, model, record, base_prompt(record), "base:1")
        raw = _ask(ctx, model, record, self_refine_prompt(record, first), "self_refine:2")
        final = parse_mcq(raw, n)
    elif spec.kind is Strategy.EXTERNAL_JUDGE:
        first = _ask(ctx, model, record, base_prompt(record), "base:1")
        critique = _ask(ctx, spec.judge_model, record, judge_prompt(record, first), "external_judge:judge")
        raw = _ask(ctx, model, record, judge_rejoin_prompt(record, first, critique), "external_judge:2")
        final = parse_mcq(raw, n)
    elif spec.kind is Strategy.HINTED:
        if ctx.hints is None:
            raise MissingHintError("strategy context has no hint store")
        hint = ctx.hints.get((record.id, model.name))
        # A discarded optimization leaves no hint; the single call then falls
        # back to the plain base prompt rather than being skipped.
        prompt = build_hint_prompt(record, hint) if hint is not None else base_prompt(record)
        raw = _ask(ctx, model, record, prompt, "hinted:eval")
        final = parse_mcq(raw, n)
    elif spec.kind is Strategy.CATEGORICAL_HINT:
        if ctx.annotations is None:
            raise MissingHintError("strategy context has no annotation store")
        mode = ctx.annotations.get((record.id, model.name))
        if profile.label is BaseLabel.BASE_INCORRECT and mode is not None:
            prompt = build_hint_prompt(record, categorical_hint(mode))
        else:
            prompt = cot_prompt(record)
        raw = _ask(ctx, model, record, prompt, "categorical")
        final = parse_mcq(raw, n)
    elif spec.kind is Strategy.TAXONOMY_HINT:
        prompt = universal_taxonomy_hint() + "\n\n" + base_prompt(record)
        raw = _ask(ctx, model, record, prompt, "taxonomy")
        final = parse_mcq(raw, n)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown strategy {spec.kind}")

    final_correct = final.parse_valid and final.answer_index == record.gold_index
    return EvalOutcomeRow(
        question_id=record.id,
        model=model,
        strategy=spec.kind,
        base_correct=base_correct,
        final_correct=final_correct,
    )

"""Per-question hint optimization through a proposer / editor / verifier loop.

Each round: the proposer (with privileged access to the gold answer, the
rationale, and the target's failure) drafts a hint; the editor approves or
minimally revises it against the leakage/contrastive/certainty criteria; the
target model itself verifies by re-answering with the hint prepended. The
loop stops at the first correct re-answer. Repair trials that never succeed
keep their last approved hint (flagged unsuccessful); reinforcement trials
that never succeed are discarded outright.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .client import ChatRequest, ClientHub, extract_json_objects, parse_mcq, seed_tag_for
from .core import Hint, HintFormatError, ModelId, QuestionRecord, TrialResponse, parse_hint, serialize_hint
from .prompts import base_prompt, editor_prompt, option_letter, proposer_prompt
from .sampler import BaseLabel, BaseProfile

DEFAULT_MAX_ROUNDS = 3


class HintType(str, Enum):
    REPAIR = "repair"
    REINFORCEMENT = "reinforcement"


class EditorVerdict(str, Enum):
    APPROVE = "approve"
    REVISE = "revise"


class OptimizationOutcome(str, Enum):
    SUCCESS = "success"
    UNSUCCESSFUL_REPAIR = "unsuccessful_repair"
    DISCARD = "discard"


@dataclass(frozen=True)
class HintTrialRound:
    """Transcript of one optimization round.

    ``proposed`` is None exactly when the proposer's output failed hint
    parsing; such a round consumes its slot but skips the editor and verifier.
    """

    round: int
    proposed: Hint | None
    editor_verdict: EditorVerdict | None
    final_hint: Hint | None
    editor_feedback: str | None
    verifier_answer: TrialResponse | None
    proposer_error: str | None = None

    def __post_init__(self) -> None:
        if self.editor_verdict is EditorVerdict.APPROVE and self.final_hint != self.proposed:
            raise ValueError("an approved round must keep the proposed hint")


@dataclass(frozen=True)
class OptimizationResult:
    question_id: str
    model: ModelId
    hint_type: HintType
    rounds: tuple[HintTrialRound, ...]
    outcome: OptimizationOutcome
    selected_hint: Hint | None

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "model": self.model.name,
            "hint_type": self.hint_type.value,
            "outcome": self.outcome.value,
            "selected_hint": list(self.selected_hint.items) if self.selected_hint else None,
            "rounds": [
                {
                    "round": r.round,
                    "proposed": list(r.proposed.items) if r.proposed else None,
                    "editor_verdict": r.editor_verdict.value if r.editor_verdict else None,
                    "final_hint": list(r.final_hint.items) if r.final_hint else None,
                    "editor_feedback": r.editor_feedback,
                    "proposer_error": r.proposer_error,
                    "verifier_answer": None
                    if r.verifier_answer is None
                    else {
                        "raw": r.verifier_answer.raw,
                        "answer_index": r.verifier_answer.answer_index,
                        "reasoning": r.verifier_answer.reasoning,
                        "parse_valid": r.verifier_answer.parse_valid,
                    },
                }
                for r in self.rounds
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "OptimizationResult":
        rounds = tuple(
            HintTrialRound(
                round=r["round"],
                proposed=Hint(tuple(r["proposed"])) if r["proposed"] else None,
                editor_verdict=EditorVerdict(r["editor_verdict"]) if r["editor_verdict"] else None,
                final_hint=Hint(tuple(r["final_hint"])) if r["final_hint"] else None,
                editor_feedback=r["editor_feedback"],
                proposer_error=r.get("proposer_error"),
                verifier_answer=None
                if r["verifier_answer"] is None
                else TrialResponse(
                    raw=r["verifier_answer"]["raw"],
                    answer_index=r["verifier_answer"]["answer_index"],
                    reasoning=r["verifier_answer"].get("reasoning"),
                    parse_valid=r["verifier_answer"]["parse_valid"],
                ),
            )
            for r in obj["rounds"]
        )
        return cls(
            question_id=obj["question_id"],
            model=ModelId(obj["model"]),
            hint_type=HintType(obj["hint_type"]),
            outcome=OptimizationOutcome(obj["outcome"]),
            selected_hint=Hint(tuple(obj["selected_hint"])) if obj["selected_hint"] else None,
            rounds=rounds,
        )


@dataclass(frozen=True)
class AgenticRoles:
    proposer: ModelId
    editor: ModelId


def build_hint_prompt(record: QuestionRecord, hint: Hint) -> str:
    """Hint wire form, a blank line, then the unmodified base prompt."""
    return serialize_hint(hint) + "\n\n" + base_prompt(record)


def parse_editor_reply(raw: str, proposed: Hint) -> tuple[EditorVerdict, Hint, str]:
    """Interpret the editor's reply; fall back to approval when it is unusable.

    The editor is advisory: a malformed reply must not stall the round, so it
    degrades to approving the proposed hint with a note in the feedback.
    """
    replies = [obj for obj in extract_json_objects(raw) if "verdict" in obj]
    if not replies:
        return EditorVerdict.APPROVE, proposed, "editor reply unparseable; proposal kept"
    obj = replies[-1]
    verdict_text = str(obj.get("verdict", "")).strip().casefold()
    feedback = obj.get("feedback") if isinstance(obj.get("feedback"), str) else ""
    if verdict_text != EditorVerdict.REVISE.value:
        return EditorVerdict.APPROVE, proposed, feedback
    items = obj.get("hint")
    try:
        revised = Hint(tuple(items)) if isinstance(items, list) else None
    except ValueError:
        revised = None
    if revised is None:
        return EditorVerdict.APPROVE, proposed, (feedback + " [revision malformed; proposal kept]").strip()
    return EditorVerdict.REVISE, revised, feedback


def _answer_text(record: QuestionRecord, response: TrialResponse) -> str:
    if not response.parse_valid or response.answer_index is None:
        return "(unparseable)"
    return f"{option_letter(response.answer_index)}. {record.options[response.answer_index]}"


def optimize_hint(
    record: QuestionRecord,
    base: BaseProfile,
    hint_type: HintType,
    hub: ClientHub,
    roles: AgenticRoles,
    r_max: int = DEFAULT_MAX_ROUNDS,
) -> OptimizationResult:
    """Run up to ``r_max`` propose / edit / verify rounds for one pair."""
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    expected = BaseLabel.BASE_INCORRECT if hint_type is HintType.REPAIR else BaseLabel.BASE_CORRECT
    if base.label is not expected:
        raise ValueError(f"{hint_type.value} optimization requires label {expected.value}, got {base.label.value}")
    if base.question_id != record.id:
        raise ValueError("base profile does not belong to this question")

    base_trial = base.trials[0]
    base_answer = _answer_text(record, base_trial)
    base_reasoning = base_trial.reasoning or ""
    feedback = ""
    prev_answer = ""
    prev_reasoning = ""
    last_hint: Hint | None = None
    rounds: list[HintTrialRound] = []

    for t in range(1, r_max + 1):
        proposal_raw = hub.complete(
            ChatRequest(
                model=roles.proposer,
                prompt=proposer_prompt(
                    record,
                    base.model.name,
                    base_answer,
                    base_reasoning,
                    repair=hint_type is HintType.REPAIR,
                    feedback=feedback,
                    prev_answer=prev_answer,
                    prev_reasoning=prev_reasoning,
                ),
                image_ref=record.image_ref,
                seed_tag=seed_tag_for(record.id, f"propose:{t}"),
            )
        )
        try:
            proposed = parse_hint(proposal_raw)
        except HintFormatError as exc:
            # A malformed proposal consumes the round; there is no re-ask path.
            feedback = f"previous proposal was malformed: {exc}"
            rounds.append(
                HintTrialRound(
                    round=t,
                    proposed=None,
                    editor_verdict=None,
                    final_hint=None,
                    editor_feedback=None,
                    verifier_answer=None,
                    proposer_error=str(exc),
                )
            )
            continue

        editor_raw = hub.complete(
            ChatRequest(
                model=roles.editor,
                prompt=editor_prompt(record, base_answer, base_reasoning, proposed),
                image_ref=record.image_ref,
                seed_tag=seed_tag_for(record.id, f"edit:{t}"),
            )
        )
        verdict, final_hint, editor_feedback = parse_editor_reply(editor_raw, proposed)
        feedback = editor_feedback
        last_hint = final_hint

        verifier_raw = hub.complete(
            ChatRequest(
                model=base.model,
                prompt=build_hint_prompt(record, final_hint),
                image_ref=record.image_ref,
                temperature=0.0,
                top_p=1.0,
                seed_tag=seed_tag_for(record.id, f"hinted:{t}"),
            )
        )
        verifier_answer = parse_mcq(verifier_raw, len(record.options))
        rounds.append(
            HintTrialRound(
                round=t,
                proposed=proposed,
                editor_verdict=verdict,
                final_hint=final_hint,
                editor_feedback=editor_feedback,
                verifier_answer=verifier_answer,
            )
        )
        if verifier_answer.parse_valid and verifier_answer.answer_index == record.gold_index:
            return OptimizationResult(
                question_id=record.id,
                model=base.model,
                hint_type=hint_type,
                rounds=tuple(rounds),
                outcome=OptimizationOutcome.SUCCESS,
                selected_hint=final_hint,
            )
        prev_answer = _answer_text(record, verifier_answer)
        prev_reasoning = verifier_answer.reasoning or ""

    if hint_type is HintType.REPAIR:
        return OptimizationResult(
            question_id=record.id,
            model=base.model,
            hint_type=hint_type,
            rounds=tuple(rounds),
            outcome=OptimizationOutcome.UNSUCCESSFUL_REPAIR,
            selected_hint=last_hint,
        )
    return OptimizationResult(
        question_id=record.id,
        model=base.model,
        hint_type=hint_type,
        rounds=tuple(rounds),
        outcome=OptimizationOutcome.DISCARD,
        selected_hint=None,
    )


def write_results(path: str | Path, results: Iterable[OptimizationResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result.to_json(), ensure_ascii=False) + "\n")


def load_results(path: str | Path) -> list[OptimizationResult]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(OptimizationResult.from_json(json.loads(line)))
    return out

from __future__ import annotations

import time
from pathlib import Path
from types import SimpleNamespace

import pytest

from hintkit.client import ClientHub, ScriptedClient, format_answer_text
from hintkit.core import ModelId, QuestionRecord, TrialResponse
from hintkit.pipeline import RunConfig, run_pipeline
from hintkit.sampler import BaseProfile, classify_trials

TARGET = ModelId("alpha-vlm")

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "mock40"
GOLDEN_DIR = Path(__file__).parent / "fixtures" / "golden"
MOCK_TARGETS = ["alpha-vlm", "beta-vlm", "gamma-vlm"]
FULL_CHAIN = (
    "sample-base",
    "optimize-hints",
    "build-pools",
    "score-rewards",
    "grpo-toy",
    "annotate",
    "evaluate",
    "analyze-overlap",
    "report",
)


def make_mock_config(out_dir: Path, cache_dir: Path | None = None, **overrides) -> RunConfig:
    config = RunConfig(
        dataset=FIXTURE_DIR / "questions.jsonl",
        targets=[ModelId(name) for name in MOCK_TARGETS],
        proposer=ModelId("proposer-llm"),
        editor=ModelId("editor-llm"),
        annotator_model=ModelId("annotator-llm"),
        judges={name: ModelId(name.split("-")[0] + "-judge") for name in MOCK_TARGETS},
        mock_fixture=FIXTURE_DIR / "scripted.jsonl",
        out_dir=out_dir,
        cache_dir=cache_dir,
        grpo_steps=48,
        grpo_lr=0.5,
        seed=0,
    )
    for key, value in overrides.items():
        setattr(config, key, value)
    return config


@pytest.fixture(scope="session")
def mock_chain(tmp_path_factory) -> SimpleNamespace:
    """One full pipeline run over the bundled fixture, shared across tests."""
    root = tmp_path_factory.mktemp("mock40-run")
    config = make_mock_config(root / "out", root / "cache")
    started = time.perf_counter()
    for command in FULL_CHAIN:
        run_pipeline(config, command)
    elapsed = time.perf_counter() - started
    return SimpleNamespace(config=config, out=root / "out", cache=root / "cache", elapsed=elapsed)


def make_record(
    qid: str = "q1",
    options: tuple[str, ...] = ("red barn", "blue shed", "green house", "white fence"),
    gold_index: int = 0,
    question: str = "What building is in the photo?",
    rationale: str | None = "The structure is a barn painted red.",
) -> QuestionRecord:
    return QuestionRecord(
        id=qid,
        image_ref=f"img/{qid}.png",
        question=question,
        options=options,
        gold_index=gold_index,
        rationale=rationale,
    )


def make_trial(answer_index: int | None, reasoning: str = "looked at the image") -> TrialResponse:
    if answer_index is None:
        return TrialResponse(raw="I cannot tell", answer_index=None, reasoning=None, parse_valid=False)
    return TrialResponse(
        raw=format_answer_text(answer_index, reasoning),
        answer_index=answer_index,
        reasoning=reasoning,
        parse_valid=True,
    )


def make_profile(
    record: QuestionRecord,
    answers: tuple[int | None, int | None, int | None],
    model: ModelId = TARGET,
) -> BaseProfile:
    trials = tuple(make_trial(a) for a in answers)
    return BaseProfile(
        question_id=record.id,
        model=model,
        trials=trials,
        label=classify_trials(trials, record.gold_index),
    )


@pytest.fixture
def record() -> QuestionRecord:
    return make_record()


@pytest.fixture
def hub() -> ClientHub:
    return ClientHub()


def scripted_hub(models: list[ModelId], script: ScriptedClient, cache=None, parallelism: int = 8) -> ClientHub:
    hub = ClientHub(cache=cache, parallelism=parallelism)
    hub.register_all(models, script)
    return hub

"""Pipeline orchestration: configuration, artifacts, and stage commands.

Every stage reads its upstream JSON-lines artifacts from the output directory
and writes its own through an atomic temp-file rename, together with a
manifest recording the config digest and input digests. Stages are idempotent
given a warm cache and fixed seed; artifacts carry no timestamps, so reruns
are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Callable, Iterable, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import agentic, annotator, metrics, predictor, reward, sampler, strategies
from .agentic import AgenticRoles, HintType, OptimizationResult
from .client import ChatRequest, ClientHub, DiskCache, HttpChatClient, ScriptedClient, parse_mcq, seed_tag_for
from .core import ModelId, QuestionRecord, check_leakage, load_question_records
from .metrics import Strategy
from .reward import RewardConfig, GroupSample, ToyPolicy, group_advantages, grpo_step
from .sampler import BaseLabel, BaseProfile, IncorrectRule

COMMANDS = (
    "sample-base",
    "optimize-hints",
    "build-pools",
    "score-rewards",
    "grpo-toy",
    "annotate",
    "train-predictor",
    "evaluate",
    "analyze-overlap",
    "report",
)


class ConfigError(ValueError):
    pass


class MissingUpstreamError(FileNotFoundError):
    """A required upstream artifact has not been produced yet."""


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    api_key_env: str


@dataclass
class RunConfig:
    dataset: Path | None = None
    targets: list[ModelId] = field(default_factory=list)
    proposer: ModelId = ModelId("proposer-llm")
    editor: ModelId = ModelId("editor-llm")
    annotator_model: ModelId = ModelId("annotator-llm")
    judges: dict[str, ModelId] = field(default_factory=dict)
    trials: int = 3
    r_max: int = 3
    reward: RewardConfig = field(default_factory=RewardConfig)
    group_size: int = 8
    clip_eps: float = 0.2
    kl_beta: float = 0.04
    sampling_temperature: float = 0.9
    grpo_steps: int = 24
    grpo_lr: float = 0.5
    base_correct_share: float = 0.5
    parallelism: int = 8
    seed: int = 0
    out_dir: Path = Path("out")
    cache_dir: Path | None = None
    mock_fixture: Path | None = None
    strategies: list[Strategy] = field(
        default_factory=lambda: [
            Strategy.BASE,
            Strategy.COT,
            Strategy.SELF_REFINE,
            Strategy.EXTERNAL_JUDGE,
            Strategy.HINTED,
        ]
    )
    features: Path | None = None
    predictor_epochs: int = 60
    predictor_lr: float = 0.05
    predictor_batch: int = 0
    holdout_fraction: float = 0.25
    endpoints: dict[str, EndpointConfig] = field(default_factory=dict)

    def validate(self) -> None:
        if self.trials != sampler.TRIALS:
            raise ConfigError(f"trials must be {sampler.TRIALS}; the base-profile contract fixes it")
        if self.r_max < 1:
            raise ConfigError("r_max must be >= 1")
        if self.group_size < 2:
            raise ConfigError("group_size must be >= 2")
        if not 0.0 <= self.base_correct_share <= 1.0:
            raise ConfigError("base_correct_share must be in [0, 1]")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must be in (0, 1)")


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from a TOML file plus CLI overrides."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file not parseable: {exc}") from exc
    config = RunConfig()
    try:
        _apply_toml(config, raw)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    if overrides:
        _apply_overrides(config, overrides)
    config.validate()
    return config


def _apply_toml(config: RunConfig, raw: dict) -> None:
    dataset = raw.get("dataset", {})
    if "path" in dataset:
        config.dataset = Path(dataset["path"])
    models = raw.get("models", {})
    if "targets" in models:
        config.targets = [ModelId(name) for name in models["targets"]]
    for key, attr in (("proposer", "proposer"), ("editor", "editor"), ("annotator", "annotator_model")):
        if key in models:
            setattr(config, attr, ModelId(models[key]))
    config.judges = {name: ModelId(judge) for name, judge in models.get("judges", {}).items()}
    sampling = raw.get("sampling", {})
    config.trials = sampling.get("trials", config.trials)
    agentic_cfg = raw.get("agentic", {})
    config.r_max = agentic_cfg.get("r_max", config.r_max)
    reward_cfg = raw.get("reward", {})
    if reward_cfg:
        try:
            config.reward = RewardConfig(
                repair_score=reward_cfg.get("repair", 1.0),
                noop_score=reward_cfg.get("noop", 0.0),
                harm_score=reward_cfg.get("harm", -1.0),
                unrepaired_score=reward_cfg.get("unrepaired", -0.5),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    grpo = raw.get("grpo", {})
    config.group_size = grpo.get("group_size", config.group_size)
    config.clip_eps = grpo.get("clip_eps", config.clip_eps)
    config.kl_beta = grpo.get("kl_beta", config.kl_beta)
    config.sampling_temperature = grpo.get("temperature", config.sampling_temperature)
    config.grpo_steps = grpo.get("steps", config.grpo_steps)
    config.grpo_lr = grpo.get("learning_rate", config.grpo_lr)
    pools = raw.get("pools", {})
    config.base_correct_share = pools.get("base_correct_share", config.base_correct_share)
    pred = raw.get("predictor", {})
    if "features" in pred:
        config.features = Path(pred["features"])
    config.predictor_epochs = pred.get("epochs", config.predictor_epochs)
    config.predictor_lr = pred.get("learning_rate", config.predictor_lr)
    config.predictor_batch = pred.get("batch_size", config.predictor_batch)
    config.holdout_fraction = pred.get("holdout_fraction", config.holdout_fraction)
    pipe = raw.get("pipeline", {})
    if "out" in pipe:
        config.out_dir = Path(pipe["out"])
    if "cache" in pipe:
        config.cache_dir = Path(pipe["cache"])
    config.seed = pipe.get("seed", config.seed)
    config.parallelism = pipe.get("parallelism", config.parallelism)
    if "mock" in pipe:
        config.mock_fixture = Path(pipe["mock"])
    if "strategies" in pipe:
        try:
            config.strategies = [Strategy(s) for s in pipe["strategies"]]
        except ValueError as exc:
            raise ConfigError(f"unknown strategy: {exc}") from exc
    for name, entry in raw.get("endpoints", {}).items():
        config.endpoints[name] = EndpointConfig(url=entry["url"], api_key_env=entry["api_key_env"])


def _apply_overrides(config: RunConfig, overrides: dict) -> None:
    if overrides.get("dataset"):
        config.dataset = Path(overrides["dataset"])
    if overrides.get("targets"):
        config.targets = [ModelId(name.strip()) for name in overrides["targets"].split(",") if name.strip()]
    if overrides.get("out"):
        config.out_dir = Path(overrides["out"])
    if overrides.get("cache"):
        config.cache_dir = Path(overrides["cache"])
    if overrides.get("seed") is not None:
        config.seed = overrides["seed"]
    if overrides.get("parallelism") is not None:
        config.parallelism = overrides["parallelism"]
    if overrides.get("mock"):
        config.mock_fixture = Path(overrides["mock"])
    if overrides.get("strategy"):
        try:
            config.strategies = [Strategy(overrides["strategy"])]
        except ValueError as exc:
            raise ConfigError(f"unknown strategy {overrides['strategy']!r}") from exc


# ---------------------------------------------------------------------------
# Artifact plumbing


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    atomic_write_text(path, "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows))


def read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _digest_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _config_digest(config: RunConfig) -> str:
    def enc(value):
        if isinstance(value, (ModelId,)):
            return value.name
        if isinstance(value, Path):
            return str(value)
        if isinstance(value, Strategy):
            return value.value
        if isinstance(value, RewardConfig):
            return [value.repair_score, value.noop_score, value.harm_score, value.unrepaired_score]
        if isinstance(value, EndpointConfig):
            return [value.url, value.api_key_env]
        if isinstance(value, dict):
            return {k: enc(v) for k, v in sorted(value.items())}
        if isinstance(value, list):
            return [enc(v) for v in value]
        return value

    payload = json.dumps({k: enc(v) for k, v in sorted(vars(config).items())}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Stage:
    """Shared context for one command run: config, hub, and artifact paths."""

    def __init__(self, config: RunConfig, hub: ClientHub | None = None) -> None:
        self.config = config
        self.out = config.out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self._hub = hub
        self._inputs: dict[str, str] = {}

    @property
    def hub(self) -> ClientHub:
        if self._hub is None:
            self._hub = build_hub(self.config)
        return self._hub

    def artifact(self, name: str) -> Path:
        return self.out / name

    def require(self, name: str, producer: str) -> Path:
        path = self.artifact(name)
        if not path.exists():
            raise MissingUpstreamError(f"{name} is missing; run {producer!r} first")
        self._inputs[name] = _digest_file(path)
        return path

    def require_external(self, path: Path | None, what: str) -> Path:
        if path is None or not Path(path).exists():
            raise MissingUpstreamError(f"{what} not found: {path}")
        path = Path(path)
        self._inputs[str(path)] = _digest_file(path)
        return path

    def dataset(self) -> list[QuestionRecord]:
        path = self.require_external(self.config.dataset, "dataset file")
        return load_question_records(path)

    def write_manifest(self, command: str, outputs: Sequence[Path]) -> None:
        manifest = {
            "command": command,
            "config_digest": _config_digest(self.config),
            "inputs": dict(sorted(self._inputs.items())),
            "outputs": {p.name: _digest_file(p) for p in outputs},
        }
        atomic_write_text(
            self.out / "manifests" / f"{command}.json",
            json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        )


def build_hub(config: RunConfig) -> ClientHub:
    """Scripted hub in mock mode, HTTPS adapters otherwise."""
    cache = DiskCache(config.cache_dir) if config.cache_dir else None
    hub = ClientHub(cache=cache, parallelism=config.parallelism)
    roles = [config.proposer, config.editor, config.annotator_model]
    models = list(config.targets) + roles + list(config.judges.values())
    if config.mock_fixture is not None:
        fixture = Path(config.mock_fixture)
        if not fixture.exists():
            raise ConfigError(f"mock fixture not found: {fixture}")
        scripted = ScriptedClient.from_fixture(fixture)
        hub.register_all(models, scripted)
        return hub
    for model in models:
        entry = config.endpoints.get(model.name)
        if entry is None:
            raise ConfigError(f"no endpoint configured for model {model.name!r} (and no --mock fixture)")
        hub.register(model, HttpChatClient(entry.url, entry.api_key_env))
    return hub


def _fan_out(items: Sequence, fn: Callable, parallelism: int) -> list:
    if parallelism <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Commands


def cmd_sample_base(stage: Stage) -> list[Path]:
    records = stage.dataset()
    pairs = [(record, model) for record in records for model in stage.config.targets]
    profiles = _fan_out(pairs, lambda pair: sampler.sample_base(pair[0], pair[1], stage.hub), stage.config.parallelism)
    profiles.sort(key=lambda p: (p.question_id, p.model.name))
    out = stage.artifact("base_profiles.jsonl")
    write_jsonl(out, (p.to_json() for p in profiles))
    return [out]


def cmd_optimize_hints(stage: Stage) -> list[Path]:
    records = {r.id: r for r in stage.dataset()}
    profiles = sampler.load_profiles(stage.require("base_profiles.jsonl", "sample-base"))
    roles = AgenticRoles(proposer=stage.config.proposer, editor=stage.config.editor)
    jobs = []
    for profile in profiles:
        if profile.label is BaseLabel.BASE_INCORRECT:
            jobs.append((profile, HintType.REPAIR))
        elif profile.label is BaseLabel.BASE_CORRECT:
            jobs.append((profile, HintType.REINFORCEMENT))

    def run(job: tuple[BaseProfile, HintType]) -> OptimizationResult:
        profile, hint_type = job
        return agentic.optimize_hint(
            records[profile.question_id], profile, hint_type, stage.hub, roles, r_max=stage.config.r_max
        )

    results = _fan_out(jobs, run, stage.config.parallelism)
    results.sort(key=lambda r: (r.question_id, r.model.name))
    out = stage.artifact("optimization_results.jsonl")
    write_jsonl(out, (r.to_json() for r in results))
    return [out]


def cmd_build_pools(stage: Stage) -> list[Path]:
    records = {r.id: r for r in stage.dataset()}
    profiles = sampler.load_profiles(stage.require("base_profiles.jsonl", "sample-base"))
    results = agentic.load_results(stage.require("optimization_results.jsonl", "optimize-hints"))

    # Hard leakage gate: a leaking hint never enters a training pool, even if
    # the editor let it through.
    clean = []
    for result in results:
        if result.selected_hint is not None and check_leakage(result.selected_hint, records[result.question_id]).leak:
            continue
        clean.append(result)

    sft = reward.build_sft_pool(clean, records, seed=stage.config.seed)
    sft_out = stage.artifact("sft_pool.jsonl")
    write_jsonl(
        sft_out,
        (
            {
                "question_id": ex.question_id,
                "image_ref": ex.image_ref,
                "question": ex.question,
                "model": ex.model.name,
                "hint": list(ex.hint.items),
            }
            for ex in sft
        ),
    )

    pool_ids = reward.build_rl_pool(profiles, stage.config.base_correct_share, rng_seed=stage.config.seed)
    by_question: dict[str, list[BaseProfile]] = {}
    for profile in profiles:
        by_question.setdefault(profile.question_id, []).append(profile)
    rl_out = stage.artifact("rl_pool.jsonl")
    write_jsonl(
        rl_out,
        (
            {
                "question_id": qid,
                "stratum": "all_base_correct"
                if all(p.label is BaseLabel.BASE_CORRECT for p in by_question[qid])
                else "rest",
            }
            for qid in pool_ids
        ),
    )
    return [sft_out, rl_out]


def cmd_score_rewards(stage: Stage) -> list[Path]:
    records = {r.id: r for r in stage.dataset()}
    profiles = sampler.profile_index(sampler.load_profiles(stage.require("base_profiles.jsonl", "sample-base")))
    results = agentic.load_results(stage.require("optimization_results.jsonl", "optimize-hints"))
    pool_rows = read_jsonl(stage.require("rl_pool.jsonl", "build-pools"))
    pool_ids = [row["question_id"] for row in pool_rows]

    # The toy policy samples candidates from the global template pool, so
    # every (pool question, candidate) pair gets a scored reward.
    candidates = sorted(
        {result.selected_hint for result in results if result.selected_hint is not None},
        key=lambda h: h.items,
    )
    if not candidates:
        raise MissingUpstreamError("optimization_results.jsonl contains no selected hints")

    targets = stage.config.targets

    def score(job: tuple[str, object]) -> dict:
        qid, hint = job
        record = records[qid]
        outcomes = []
        for model in targets:
            profile = profiles[(qid, model.name)]
            raw = stage.hub.complete(
                ChatRequest(
                    model=model,
                    prompt=agentic.build_hint_prompt(record, hint),
                    image_ref=record.image_ref,
                    temperature=0.0,
                    top_p=1.0,
                    seed_tag=seed_tag_for(qid, "score"),
                )
            )
            parsed = parse_mcq(raw, len(record.options))
            hinted_correct = parsed.parse_valid and parsed.answer_index == record.gold_index
            outcomes.append(
                reward.classify_outcome(
                    base_correct=profile.label is BaseLabel.BASE_CORRECT,
                    hinted_correct=hinted_correct,
                    cfg=stage.config.reward,
                    model=model,
                )
            )
        mean = reward.average_reward(outcomes, targets)
        return {
            "question_id": qid,
            "hint": list(hint.items),
            "per_target": [
                {
                    "model": o.model.name,
                    "base_correct": o.base_correct,
                    "hinted_correct": o.hinted_correct,
                    "outcome": o.outcome.value,
                    "score": o.score,
                }
                for o in outcomes
            ],
            "mean_reward": mean,
        }

    jobs = [(qid, hint) for qid in pool_ids for hint in candidates]
    rows = _fan_out(jobs, score, stage.config.parallelism)
    rows.sort(key=lambda r: (r["question_id"], r["hint"]))
    out = stage.artifact("rewards.jsonl")
    write_jsonl(out, rows)
    return [out]


def cmd_grpo_toy(stage: Stage) -> list[Path]:
    reward_rows = read_jsonl(stage.require("rewards.jsonl", "score-rewards"))
    if not reward_rows:
        raise MissingUpstreamError("rewards.jsonl is empty")
    pool = sorted({tuple(row["hint"]) for row in reward_rows})
    index = {items: i for i, items in enumerate(pool)}
    lookup = {(row["question_id"], tuple(row["hint"])): row["mean_reward"] for row in reward_rows}
    prompt_keys = sorted({(row["question_id"], model.name) for row in reward_rows for model in stage.config.targets})

    cfg = stage.config
    policy = ToyPolicy(logits=np.zeros(len(pool)))
    rng = Random(cfg.seed)
    trace = []
    for step in range(cfg.grpo_steps):
        qid, model_name = prompt_keys[step % len(prompt_keys)]
        indices = policy.sample_group((qid, model_name), cfg.group_size, rng, temperature=cfg.sampling_temperature)
        rewards, missing = [], 0
        for idx in indices:
            value = lookup.get((qid, pool[idx]))
            if value is None:
                missing += 1
                value = cfg.reward.noop_score
            rewards.append(value)
        advantages = group_advantages(rewards)
        group = GroupSample(
            prompt_key=(qid, model_name),
            candidates=indices,
            rewards=tuple(rewards),
            advantages=tuple(advantages),
            sampled_logits=tuple(policy.logits),
        )
        policy = grpo_step(policy, group, clip_eps=cfg.clip_eps, kl_beta=cfg.kl_beta, lr=cfg.grpo_lr)
        probs = policy.probabilities()
        ref = ToyPolicy(logits=policy.reference_logits).probabilities()
        kl = float(np.sum(probs * (np.log(probs) - np.log(ref))))
        trace.append(
            {
                "step": step,
                "question_id": qid,
                "model": model_name,
                "mean_reward": float(np.mean(rewards)),
                "max_prob": float(probs.max()),
                "kl_to_reference": kl,
                "missing_rewards": missing,
            }
        )
    trace_out = stage.artifact("grpo_trace.jsonl")
    write_jsonl(trace_out, trace)
    policy_out = stage.artifact("grpo_policy.json")
    atomic_write_text(
        policy_out,
        json.dumps(
            {
                "pool": [list(items) for items in pool],
                "logits": [float(x) for x in policy.logits],
                "reference_logits": [float(x) for x in policy.reference_logits],
                "probabilities": [float(x) for x in policy.probabilities()],
            },
            indent=2,
        )
        + "\n",
    )
    return [trace_out, policy_out]


def cmd_annotate(stage: Stage) -> list[Path]:
    records = {r.id: r for r in stage.dataset()}
    profiles = sampler.load_profiles(stage.require("base_profiles.jsonl", "sample-base"))
    jobs = [p for p in profiles if p.label is BaseLabel.BASE_INCORRECT]
    annotations = _fan_out(
        jobs,
        lambda p: annotator.annotate(records[p.question_id], p, stage.hub, stage.config.annotator_model),
        stage.config.parallelism,
    )
    annotations.sort(key=lambda a: (a.question_id, a.model.name))
    out = stage.artifact("annotations.jsonl")
    write_jsonl(out, (a.to_json() for a in annotations))
    return [out]


def cmd_train_predictor(stage: Stage) -> list[Path]:
    features_path = stage.require_external(stage.config.features, "feature file")
    features = predictor.load_features(features_path)
    if not features:
        raise MissingUpstreamError("feature file is empty")
    rng = Random(stage.config.seed)
    shuffled = sorted(features, key=lambda fv: fv.question_id)
    rng.shuffle(shuffled)
    n_holdout = max(1, int(len(shuffled) * stage.config.holdout_fraction))
    holdout, train_set = shuffled[:n_holdout], shuffled[n_holdout:]
    if not train_set:
        raise MissingUpstreamError("not enough features to split train/holdout")

    cfg = predictor.TrainConfig(
        learning_rate=stage.config.predictor_lr,
        epochs=stage.config.predictor_epochs,
        batch_size=stage.config.predictor_batch,
        seed=stage.config.seed,
    )
    target_names = [m.name for m in stage.config.targets]
    report: dict = {"holdout_n": len(holdout), "train_n": len(train_set), "targets": {}}

    shared = predictor.train(train_set, predictor.SharedBackbone(target_names), predictor.HeadKind.BINARY, cfg)
    for name in target_names:
        entry: dict = {}
        individual = predictor.train(train_set, predictor.Individual(name), predictor.HeadKind.BINARY, cfg)
        entry["individual_binary"] = _binary_report(predictor.evaluate(individual.params, holdout, name))
        entry["shared_binary"] = _binary_report(predictor.evaluate(shared.params, holdout, name))
        has_modes = any(fv.labels.get(name) and fv.labels[name].mode is not None for fv in train_set)
        if has_modes:
            mode_result = predictor.train(train_set, predictor.Individual(name), predictor.HeadKind.MODE, cfg)
            entry["mode"] = _mode_report(predictor.evaluate(mode_result.params, holdout, name))
        report["targets"][name] = entry

    out = stage.artifact("predictor_report.json")
    atomic_write_text(out, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return [out]


def _binary_report(rep: predictor.PredictorReport) -> dict:
    b = rep.binary
    if b is None:
        return {}
    return {
        "auroc": b.auroc,
        "max_f1": b.max_f1,
        "threshold": b.threshold,
        "precision": b.precision,
        "recall": b.recall,
        "n_pos": b.n_pos,
        "n_neg": b.n_neg,
        "degenerate": b.degenerate,
        "threshold_rule": rep.threshold_rule,
    }


def _mode_report(rep: predictor.PredictorReport) -> dict:
    m = rep.mode
    if m is None:
        return {}
    return {
        "top1": m.top1,
        "top2": m.top2,
        "macro_f1": m.macro_f1,
        "weighted_f1": m.weighted_f1,
        "balanced_accuracy": m.balanced_accuracy,
        "n": m.n,
    }


def cmd_evaluate(stage: Stage) -> list[Path]:
    records = stage.dataset()
    profiles = sampler.profile_index(sampler.load_profiles(stage.require("base_profiles.jsonl", "sample-base")))
    ctx = strategies.StrategyContext(hub=stage.hub, profiles=profiles)
    wanted = stage.config.strategies
    if Strategy.HINTED in wanted:
        ctx.hints = strategies.load_hint_source(stage.require("optimization_results.jsonl", "optimize-hints"))
    if Strategy.CATEGORICAL_HINT in wanted:
        ctx.annotations = strategies.load_annotation_modes(stage.require("annotations.jsonl", "annotate"))

    outputs = []
    for strat in wanted:
        rows = []
        for model in stage.config.targets:
            spec = strategies.StrategySpec(
                kind=strat,
                judge_model=stage.config.judges.get(model.name) if strat is Strategy.EXTERNAL_JUDGE else None,
                hint_source=stage.artifact("optimization_results.jsonl")
                if strat is Strategy.HINTED
                else (stage.artifact("annotations.jsonl") if strat is Strategy.CATEGORICAL_HINT else None),
            )
            if strat is Strategy.EXTERNAL_JUDGE and spec.judge_model is None:
                raise ConfigError(f"no judge configured for target {model.name!r}")
            rows.extend(
                _fan_out(
                    records,
                    lambda record, m=model, s=spec: strategies.run_strategy(record, m, s, ctx),
                    stage.config.parallelism,
                )
            )
        rows.sort(key=lambda r: (r.model.name, r.question_id))
        out = stage.artifact(f"eval_rows_{strat.value}.jsonl")
        write_jsonl(out, (r.to_json() for r in rows))
        outputs.append(out)
    return outputs


def cmd_analyze_overlap(stage: Stage) -> list[Path]:
    profiles = sampler.load_profiles(stage.require("base_profiles.jsonl", "sample-base"))
    modes = strategies.load_annotation_modes(stage.require("annotations.jsonl", "annotate"))
    names = [m.name for m in stage.config.targets]
    sets = {
        name: sampler.incorrect_set(profiles, ModelId(name), IncorrectRule.ALL_WRONG_SAME_ANSWER)
        for name in names
    }
    jaccard = [[metrics.jaccard_overlap(sets[a], sets[b]) for b in names] for a in names]
    agreement: list[list[float | None]] = []
    for a in names:
        row: list[float | None] = []
        for b in names:
            shared = sets[a] & sets[b]
            labels_a = {qid: modes[(qid, a)] for qid in shared if (qid, a) in modes}
            labels_b = {qid: modes[(qid, b)] for qid in shared if (qid, b) in modes}
            usable = set(labels_a) & set(labels_b)
            rate = metrics.failure_agreement(labels_a, labels_b, usable)
            row.append(None if rate is None else rate.value)
        agreement.append(row)
    out = stage.artifact("overlap.json")
    atomic_write_text(
        out,
        json.dumps(
            {
                "rule": IncorrectRule.ALL_WRONG_SAME_ANSWER.value,
                "models": names,
                "incorrect_counts": {name: len(sets[name]) for name in names},
                "jaccard": jaccard,
                "failure_agreement": agreement,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    return [out]


def cmd_report(stage: Stage) -> list[Path]:
    rows = []
    found = False
    for strat in Strategy:
        path = stage.artifact(f"eval_rows_{strat.value}.jsonl")
        if path.exists():
            found = True
            stage.require(path.name, "evaluate")
            rows.extend(metrics.EvalOutcomeRow.from_json(obj) for obj in read_jsonl(path))
    if not found:
        raise MissingUpstreamError("no eval_rows_*.jsonl artifacts; run 'evaluate' first")
    summaries = metrics.summarize(rows)
    # Decomposition identity doubles as a corruption check on every group.
    for summary in summaries:
        group = [r for r in rows if r.model.name == summary.model and r.strategy is summary.strategy]
        metrics.decompose_accuracy(group)
    text_out = stage.artifact("report.txt")
    atomic_write_text(text_out, metrics.render_summary_table(summaries))
    json_out = stage.artifact("report.jsonl")
    write_jsonl(json_out, (s.to_json() for s in summaries))
    return [text_out, json_out]


_COMMAND_FNS: dict[str, Callable[[Stage], list[Path]]] = {
    "sample-base": cmd_sample_base,
    "optimize-hints": cmd_optimize_hints,
    "build-pools": cmd_build_pools,
    "score-rewards": cmd_score_rewards,
    "grpo-toy": cmd_grpo_toy,
    "annotate": cmd_annotate,
    "train-predictor": cmd_train_predictor,
    "evaluate": cmd_evaluate,
    "analyze-overlap": cmd_analyze_overlap,
    "report": cmd_report,
}


def run_pipeline(config: RunConfig, command: str, hub: ClientHub | None = None) -> list[Path]:
    """Run one stage command; returns the artifact paths it wrote."""
    if command not in _COMMAND_FNS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    config.validate()
    stage = Stage(config, hub=hub)
    outputs = _COMMAND_FNS[command](stage)
    stage.write_manifest(command, outputs)
    return outputs

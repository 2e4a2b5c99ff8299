"""Verifiable-reward scoring, group-relative advantages, and training pools.

A candidate hint is scored per target by the 2x2 contingency between the
target's base correctness and its hinted correctness (repair +1, no-op 0,
harm -1, unrepaired -0.5), averaged across targets. Groups of candidates are
normalized to advantages and stepped with a clipped surrogate objective plus
a KL anchor, exercised here on an analytically differentiable softmax policy
over a finite pool of hint templates.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from enum import Enum
from random import Random
from typing import Iterable, Mapping, Sequence

import numpy as np

from .agentic import OptimizationOutcome, OptimizationResult
from .core import Hint, ModelId, QuestionRecord
from .sampler import BaseLabel, BaseProfile


class MissingTargetError(ValueError):
    """Per-target outcomes do not cover the configured targets exactly once."""


class GroupTooSmallError(ValueError):
    """Advantage normalization needs at least two candidates."""


class IndexOutOfPoolError(IndexError):
    """A group candidate refers to a template outside the policy's pool."""


class EmptyPoolError(ValueError):
    """No usable rows remain after filtering."""


class InsufficientDataError(ValueError):
    """A stratum demanded by the mixing share is empty."""


@dataclass(frozen=True)
class RewardConfig:
    """The four outcome scores; asymmetry between harm and unrepaired is load-bearing."""

    repair_score: float = 1.0
    noop_score: float = 0.0
    harm_score: float = -1.0
    unrepaired_score: float = -0.5

    def __post_init__(self) -> None:
        if not self.harm_score < self.unrepaired_score < self.noop_score < self.repair_score:
            raise ValueError("reward scores must satisfy harm < unrepaired < noop < repair")


class OutcomeKind(str, Enum):
    REPAIR = "repair"
    NOOP = "noop"
    HARM = "harm"
    UNREPAIRED = "unrepaired"


@dataclass(frozen=True)
class HintOutcome:
    base_correct: bool
    hinted_correct: bool
    outcome: OutcomeKind
    score: float
    model: ModelId | None = None


def classify_outcome(
    base_correct: bool,
    hinted_correct: bool,
    cfg: RewardConfig = RewardConfig(),
    model: ModelId | None = None,
) -> HintOutcome:
    """Map one (base, hinted) correctness cell to its outcome and score."""
    if base_correct:
        kind = OutcomeKind.NOOP if hinted_correct else OutcomeKind.HARM
    else:
        kind = OutcomeKind.REPAIR if hinted_correct else OutcomeKind.UNREPAIRED
    score = {
        OutcomeKind.REPAIR: cfg.repair_score,
        OutcomeKind.NOOP: cfg.noop_score,
        OutcomeKind.HARM: cfg.harm_score,
        OutcomeKind.UNREPAIRED: cfg.unrepaired_score,
    }[kind]
    return HintOutcome(
        base_correct=base_correct,
        hinted_correct=hinted_correct,
        outcome=kind,
        score=score,
        model=model,
    )


def average_reward(outcomes: Sequence[HintOutcome], targets: Sequence[ModelId]) -> float:
    """Mean per-target score; requires exactly one outcome per target."""
    seen = [o.model.name if o.model else None for o in outcomes]
    expected = [t.name for t in targets]
    if None in seen or sorted(seen) != sorted(expected) or len(set(seen)) != len(seen):
        raise MissingTargetError(f"outcomes cover {seen}, expected exactly {expected}")
    return sum(o.score for o in outcomes) / len(outcomes)


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """Within-group normalization: (r - mean) / population std; zero when flat."""
    if len(rewards) < 2:
        raise GroupTooSmallError(f"need at least 2 rewards, got {len(rewards)}")
    arr = np.asarray(rewards, dtype=np.float64)
    std = float(arr.std())
    if std == 0.0:
        return [0.0] * len(rewards)
    return list((arr - arr.mean()) / std)


@dataclass(frozen=True)
class GroupSample:
    """One sampled candidate group for a prompt key.

    ``candidates`` are indices into the policy's template pool;
    ``sampled_logits`` is the policy snapshot the group was drawn from, which
    anchors the probability ratios of the update.
    """

    prompt_key: tuple[str, str]
    candidates: tuple[int, ...]
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]
    sampled_logits: tuple[float, ...]

    def __post_init__(self) -> None:
        if not len(self.candidates) == len(self.rewards) == len(self.advantages):
            raise ValueError("candidates, rewards, and advantages must have equal length")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


@dataclass
class ToyPolicy:
    """Softmax distribution over a finite hint-template pool.

    Stands in for a full generator: it exercises the complete update math
    (ratios, clipping, KL anchoring) with analytically checkable gradients.
    """

    logits: np.ndarray
    reference_logits: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.logits = np.asarray(self.logits, dtype=np.float64).copy()
        if self.reference_logits is None:
            self.reference_logits = self.logits.copy()
        else:
            self.reference_logits = np.asarray(self.reference_logits, dtype=np.float64).copy()
        if not np.all(np.isfinite(self.logits)) or not np.all(np.isfinite(self.reference_logits)):
            raise ValueError("policy logits must be finite")
        if self.logits.shape != self.reference_logits.shape:
            raise ValueError("reference logits must match policy shape")

    @property
    def pool_size(self) -> int:
        return int(self.logits.shape[0])

    def probabilities(self) -> np.ndarray:
        return _softmax(self.logits)

    def sample_group(self, prompt_key: tuple[str, str], size: int, rng: Random, temperature: float = 0.9) -> tuple[int, ...]:
        """Draw candidate template indices at the given sampling temperature."""
        if temperature <= 0:
            raise ValueError("sampling temperature must be positive")
        probs = _softmax(self.logits / temperature)
        cumulative = np.cumsum(probs)
        return tuple(int(np.searchsorted(cumulative, rng.random())) for _ in range(size))


def _check_candidates(candidates: Sequence[int], pool_size: int) -> None:
    for c in candidates:
        if not 0 <= c < pool_size:
            raise IndexOutOfPoolError(f"candidate index {c} outside pool of size {pool_size}")


def grpo_objective(
    logits: np.ndarray,
    sampled_logits: np.ndarray,
    reference_logits: np.ndarray,
    candidates: Sequence[int],
    advantages: Sequence[float],
    clip_eps: float = 0.2,
    kl_beta: float = 0.04,
) -> float:
    """Clipped surrogate mean minus the KL anchor, as a plain function of logits."""
    logits = np.asarray(logits, dtype=np.float64)
    p = _softmax(logits)
    p_old = _softmax(np.asarray(sampled_logits, dtype=np.float64))
    _check_candidates(candidates, p.shape[0])
    surrogate = 0.0
    for a, adv in zip(candidates, advantages):
        ratio = p[a] / p_old[a]
        surrogate += min(ratio * adv, float(np.clip(ratio, 1 - clip_eps, 1 + clip_eps)) * adv)
    surrogate /= len(candidates)
    log_ratio = _log_softmax(logits) - _log_softmax(np.asarray(reference_logits, dtype=np.float64))
    kl = float(np.dot(p, log_ratio))
    return surrogate - kl_beta * kl


def grpo_gradient(
    logits: np.ndarray,
    sampled_logits: np.ndarray,
    reference_logits: np.ndarray,
    candidates: Sequence[int],
    advantages: Sequence[float],
    clip_eps: float = 0.2,
    kl_beta: float = 0.04,
) -> np.ndarray:
    """Analytic gradient of grpo_objective with respect to the policy logits."""
    logits = np.asarray(logits, dtype=np.float64)
    p = _softmax(logits)
    p_old = _softmax(np.asarray(sampled_logits, dtype=np.float64))
    _check_candidates(candidates, p.shape[0])
    grad = np.zeros_like(p)
    for a, adv in zip(candidates, advantages):
        ratio = p[a] / p_old[a]
        unclipped = ratio * adv
        clipped = float(np.clip(ratio, 1 - clip_eps, 1 + clip_eps)) * adv
        if unclipped <= clipped:
            # d(ratio * adv)/dlogits = adv / p_old[a] * p[a] * (e_a - p)
            coef = adv / p_old[a] * p[a]
            grad[a] += coef
            grad -= coef * p
        # otherwise the clipped branch is active and locally constant
    grad /= len(candidates)
    log_ratio = _log_softmax(logits) - _log_softmax(np.asarray(reference_logits, dtype=np.float64))
    # dKL/dlogits_j = p_j * (log_ratio_j - E_p[log_ratio])
    grad -= kl_beta * p * (log_ratio - float(np.dot(p, log_ratio)))
    return grad


def grpo_step(
    policy: ToyPolicy,
    group: GroupSample,
    clip_eps: float = 0.2,
    kl_beta: float = 0.04,
    lr: float = 0.1,
) -> ToyPolicy:
    """One gradient-ascent step on the clipped, KL-anchored objective."""
    grad = grpo_gradient(
        policy.logits,
        np.asarray(group.sampled_logits, dtype=np.float64),
        policy.reference_logits,
        group.candidates,
        group.advantages,
        clip_eps=clip_eps,
        kl_beta=kl_beta,
    )
    return ToyPolicy(logits=policy.logits + lr * grad, reference_logits=policy.reference_logits)


@dataclass(frozen=True)
class SftExample:
    """One supervised tuple: inputs, target identifier, and the hint to imitate."""

    question_id: str
    image_ref: str
    question: str
    model: ModelId
    hint: Hint


def build_sft_pool(
    results: Iterable[OptimizationResult],
    records: Mapping[str, QuestionRecord],
    seed: int = 0,
) -> list[SftExample]:
    """Keep verified-successful hints and balance target counts to the median.

    Trials whose verifier never reached a correct answer are dropped: their
    hints were never shown to work end-to-end. Groups above the median are
    downsampled uniformly without replacement; groups below keep all members
    plus replacement draws.
    """
    by_model: dict[str, list[SftExample]] = {}
    for result in results:
        if result.outcome is not OptimizationOutcome.SUCCESS or result.selected_hint is None:
            continue
        record = records[result.question_id]
        by_model.setdefault(result.model.name, []).append(
            SftExample(
                question_id=result.question_id,
                image_ref=record.image_ref,
                question=record.question,
                model=result.model,
                hint=result.selected_hint,
            )
        )
    if not by_model:
        raise EmptyPoolError("no successful optimization results to pool")
    sizes = [len(group) for group in by_model.values()]
    target = int(round(statistics.median(sizes)))
    rng = Random(seed)
    pool: list[SftExample] = []
    for name in sorted(by_model):
        group = by_model[name]
        if len(group) > target:
            pool.extend(rng.sample(group, target))
        elif len(group) < target:
            pool.extend(group)
            pool.extend(rng.choice(group) for _ in range(target - len(group)))
        else:
            pool.extend(group)
    return pool


def build_rl_pool(
    profiles: Iterable[BaseProfile],
    base_correct_share: float = 0.5,
    rng_seed: int = 0,
) -> list[str]:
    """Stratified question pool mixing all-base-correct questions at the given share.

    A question belongs to the all-base-correct stratum when every target seen
    in the profiles labeled it base-correct; everything else is the other
    stratum. The emitted pool hits the share within one item and is maximal
    for the available strata.
    """
    if not 0.0 <= base_correct_share <= 1.0:
        raise ValueError("base_correct_share must be in [0, 1]")
    by_question: dict[str, dict[str, BaseLabel]] = {}
    targets: set[str] = set()
    for profile in profiles:
        targets.add(profile.model.name)
        by_question.setdefault(profile.question_id, {})[profile.model.name] = profile.label
    if not by_question:
        raise InsufficientDataError("no profiles given")
    all_correct: list[str] = []
    rest: list[str] = []
    for qid in sorted(by_question):
        labels = by_question[qid]
        if set(labels) != targets:
            raise ValueError(f"question {qid} lacks profiles for some targets")
        if all(label is BaseLabel.BASE_CORRECT for label in labels.values()):
            all_correct.append(qid)
        else:
            rest.append(qid)

    share = base_correct_share
    if share > 0.0 and not all_correct:
        raise InsufficientDataError("share demands all-base-correct questions but none exist")
    if share < 1.0 and not rest:
        raise InsufficientDataError("share demands non-all-correct questions but none exist")
    if share == 0.0:
        n_correct, n_rest = 0, len(rest)
    elif share == 1.0:
        n_correct, n_rest = len(all_correct), 0
    else:
        want_correct = share / (1.0 - share) * len(rest)
        if want_correct <= len(all_correct):
            n_correct, n_rest = int(round(want_correct)), len(rest)
        else:
            n_correct = len(all_correct)
            n_rest = int(round(n_correct * (1.0 - share) / share))
        n_correct = max(n_correct, 1)  # both strata demanded; rounding must not empty one
        n_rest = max(n_rest, 1)
    rng = Random(rng_seed)
    picked = rng.sample(all_correct, n_correct) + rng.sample(rest, n_rest)
    return sorted(picked)

"""Failure predictors over precomputed features: error risk and failure mode.

Architecture: a hidden-state encoder (3584 -> 256 -> 64, ReLU) and a scalar
uncertainty-feature encoder (22 -> 32, ReLU) concatenate to a 96-dim
representation feeding per-target heads (96 -> 64 -> 1 binary risk,
96 -> 64 -> 12 failure mode with inverse-frequency class weighting). Training
is plain mini-batch gradient descent with hand-derived gradients in float64,
so every gradient is exactly checkable against finite differences. The
shared-backbone variant trains one pair of encoders against the summed
per-target head losses; with a single target it is step-for-step identical to
the individual variant.
"""

from __future__ import annotations

import base64
import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from random import Random
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import FailureMode, ModelId

HIDDEN_DIM = 3584
SCALAR_DIM = 22
ENCODER_H1 = 256
ENCODER_H2 = 64
SCALAR_EMBED = 32
EMBED_DIM = ENCODER_H2 + SCALAR_EMBED
HEAD_HIDDEN = 64
N_MODES = len(FailureMode)

_MODE_ORDER = tuple(FailureMode)
_MODE_INDEX = {mode: i for i, mode in enumerate(_MODE_ORDER)}


class DimensionMismatchError(ValueError):
    """Feature or parameter shapes disagree with the fixed architecture."""


class EmptyDatasetError(ValueError):
    pass


class MissingLabelsError(ValueError):
    """A requested target has no labeled samples in the dataset."""


@dataclass(frozen=True)
class TargetLabel:
    error: bool
    mode: FailureMode | None = None


@dataclass(frozen=True)
class FeatureVector:
    """Precomputed per-question features plus optional per-target labels."""

    question_id: str
    hidden: np.ndarray
    scalars: np.ndarray
    labels: Mapping[str, TargetLabel] = field(default_factory=dict)

    def __post_init__(self) -> None:
        hidden = np.asarray(self.hidden, dtype=np.float64)
        scalars = np.asarray(self.scalars, dtype=np.float64)
        if hidden.shape != (HIDDEN_DIM,):
            raise DimensionMismatchError(f"hidden must have shape ({HIDDEN_DIM},), got {hidden.shape}")
        if scalars.shape != (SCALAR_DIM,):
            raise DimensionMismatchError(f"scalars must have shape ({SCALAR_DIM},), got {scalars.shape}")
        if not np.all(np.isfinite(hidden)) or not np.all(np.isfinite(scalars)):
            raise ValueError("feature entries must be finite")
        object.__setattr__(self, "hidden", hidden)
        object.__setattr__(self, "scalars", scalars)
        object.__setattr__(self, "labels", dict(self.labels))


class HeadKind(str, Enum):
    BINARY = "binary"
    MODE = "mode"


@dataclass
class Head:
    w1: np.ndarray  # (96, 64)
    b1: np.ndarray  # (64,)
    w2: np.ndarray  # (64, out)
    b2: np.ndarray  # (out,)
    class_weights: np.ndarray | None = None  # (12,) for mode heads

    def out_dim(self) -> int:
        return self.w2.shape[1]


@dataclass
class MlpParams:
    """Encoders shared across heads, plus per-target binary/mode heads."""

    enc_w1: np.ndarray  # (3584, 256)
    enc_b1: np.ndarray
    enc_w2: np.ndarray  # (256, 64)
    enc_b2: np.ndarray
    scal_w: np.ndarray  # (22, 32)
    scal_b: np.ndarray
    binary_heads: dict[str, Head] = field(default_factory=dict)
    mode_heads: dict[str, Head] = field(default_factory=dict)

    def all_arrays(self) -> list[np.ndarray]:
        arrays = [self.enc_w1, self.enc_b1, self.enc_w2, self.enc_b2, self.scal_w, self.scal_b]
        for name in sorted(self.binary_heads):
            head = self.binary_heads[name]
            arrays += [head.w1, head.b1, head.w2, head.b2]
        for name in sorted(self.mode_heads):
            head = self.mode_heads[name]
            arrays += [head.w1, head.b1, head.w2, head.b2]
        return arrays


def init_params(
    binary_targets: Sequence[str] = (),
    mode_targets: Sequence[str] = (),
    seed: int = 0,
) -> MlpParams:
    """He-initialized parameters for the fixed architecture."""
    rng = np.random.default_rng(seed)

    def he(fan_in: int, fan_out: int) -> np.ndarray:
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))

    params = MlpParams(
        enc_w1=he(HIDDEN_DIM, ENCODER_H1),
        enc_b1=np.zeros(ENCODER_H1),
        enc_w2=he(ENCODER_H1, ENCODER_H2),
        enc_b2=np.zeros(ENCODER_H2),
        scal_w=he(SCALAR_DIM, SCALAR_EMBED),
        scal_b=np.zeros(SCALAR_EMBED),
    )
    for name in binary_targets:
        params.binary_heads[name] = Head(
            w1=he(EMBED_DIM, HEAD_HIDDEN),
            b1=np.zeros(HEAD_HIDDEN),
            w2=he(HEAD_HIDDEN, 1),
            b2=np.zeros(1),
        )
    for name in mode_targets:
        params.mode_heads[name] = Head(
            w1=he(EMBED_DIM, HEAD_HIDDEN),
            b1=np.zeros(HEAD_HIDDEN),
            w2=he(HEAD_HIDDEN, N_MODES),
            b2=np.zeros(N_MODES),
            class_weights=np.ones(N_MODES),
        )
    return params


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _embed(params: MlpParams, hidden: np.ndarray, scalars: np.ndarray) -> np.ndarray:
    h1 = _relu(hidden @ params.enc_w1 + params.enc_b1)
    h2 = _relu(h1 @ params.enc_w2 + params.enc_b2)
    s1 = _relu(scalars @ params.scal_w + params.scal_b)
    return np.concatenate([h2, s1], axis=-1)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class BinaryScores:
    probability: float


@dataclass(frozen=True)
class ModeScores:
    logits: np.ndarray
    probabilities: np.ndarray


def forward(
    params: MlpParams,
    features: FeatureVector,
    head: HeadKind,
    target: str,
) -> BinaryScores | ModeScores:
    """Score one feature vector under the requested per-target head."""
    z = _embed(params, features.hidden, features.scalars)
    heads = params.binary_heads if head is HeadKind.BINARY else params.mode_heads
    if target not in heads:
        raise MissingLabelsError(f"no {head.value} head for target {target!r}")
    h = heads[target]
    if h.w1.shape != (EMBED_DIM, HEAD_HIDDEN):
        raise DimensionMismatchError(f"head w1 has shape {h.w1.shape}")
    g = _relu(z @ h.w1 + h.b1)
    out = g @ h.w2 + h.b2
    if head is HeadKind.BINARY:
        return BinaryScores(probability=float(_sigmoid(out)[0]))
    return ModeScores(logits=out, probabilities=_softmax_rows(out))


def mode_index(mode: FailureMode) -> int:
    return _MODE_INDEX[mode]


def mode_order() -> tuple[FailureMode, ...]:
    return _MODE_ORDER


def inverse_frequency_weights(labels: Sequence[int], n_classes: int = N_MODES) -> np.ndarray:
    """Weights proportional to N/count, scaled so present classes average 1.

    Absent classes get weight 0; they never contribute to the loss. Permuting
    class identities permutes the weights identically.
    """
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes).astype(np.float64)
    present = counts > 0
    if not present.any():
        raise EmptyDatasetError("no labels to weight")
    weights = np.zeros(n_classes)
    raw = len(labels) / counts[present]
    weights[present] = raw * present.sum() / raw.sum()
    return weights


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 100
    batch_size: int = 0  # 0 means full batch
    momentum: float = 0.0
    seed: int = 0


class Individual:
    """One predictor per target: private encoders and a single head."""

    def __init__(self, target: ModelId | str) -> None:
        self.targets = (target.name if isinstance(target, ModelId) else target,)


class SharedBackbone:
    """One pair of encoders supplying per-target heads, trained jointly."""

    def __init__(self, targets: Sequence[ModelId | str]) -> None:
        self.targets = tuple(t.name if isinstance(t, ModelId) else t for t in targets)


@dataclass
class TrainResult:
    params: MlpParams
    loss_trace: list[float]


def _batch_arrays(dataset: Sequence[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([fv.hidden for fv in dataset])
    S = np.stack([fv.scalars for fv in dataset])
    return X, S


def _target_rows(dataset: Sequence[FeatureVector], target: str, head: HeadKind) -> tuple[np.ndarray, np.ndarray]:
    """Row indices labeled for the target, and their labels (0/1 or mode index)."""
    rows, labels = [], []
    for i, fv in enumerate(dataset):
        lab = fv.labels.get(target)
        if lab is None:
            continue
        if head is HeadKind.BINARY:
            rows.append(i)
            labels.append(1.0 if lab.error else 0.0)
        elif lab.mode is not None:
            rows.append(i)
            labels.append(float(_MODE_INDEX[lab.mode]))
    return np.asarray(rows, dtype=np.int64), np.asarray(labels, dtype=np.float64)


def loss_and_gradients(
    params: MlpParams,
    X: np.ndarray,
    S: np.ndarray,
    head_kind: HeadKind,
    target_rows: Mapping[str, tuple[np.ndarray, np.ndarray]],
) -> tuple[float, MlpParams]:
    """Summed per-target head loss and its full gradient (as an MlpParams of grads)."""
    B = X.shape[0]
    pre1 = X @ params.enc_w1 + params.enc_b1
    H1 = _relu(pre1)
    pre2 = H1 @ params.enc_w2 + params.enc_b2
    H2 = _relu(pre2)
    pres = S @ params.scal_w + params.scal_b
    S1 = _relu(pres)
    Z = np.concatenate([H2, S1], axis=1)

    grads = MlpParams(
        enc_w1=np.zeros_like(params.enc_w1),
        enc_b1=np.zeros_like(params.enc_b1),
        enc_w2=np.zeros_like(params.enc_w2),
        enc_b2=np.zeros_like(params.enc_b2),
        scal_w=np.zeros_like(params.scal_w),
        scal_b=np.zeros_like(params.scal_b),
    )
    dZ = np.zeros_like(Z)
    total_loss = 0.0
    heads = params.binary_heads if head_kind is HeadKind.BINARY else params.mode_heads

    for target, (rows, labels) in target_rows.items():
        head = heads[target]
        z = Z[rows]
        preg = z @ head.w1 + head.b1
        g = _relu(preg)
        out = g @ head.w2 + head.b2
        n = len(rows)
        if head_kind is HeadKind.BINARY:
            logit = out[:, 0]
            y = labels
            # stable BCE: softplus(logit) - y * logit
            loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
            dout = ((_sigmoid(logit) - y) / n)[:, None]
        else:
            y = labels.astype(np.int64)
            probs = _softmax_rows(out)
            w = head.class_weights[y]
            log_probs = out - out.max(axis=1, keepdims=True)
            log_probs = log_probs - np.log(np.exp(log_probs).sum(axis=1, keepdims=True))
            wsum = w.sum()
            loss = float(-(w * log_probs[np.arange(n), y]).sum() / wsum)
            dout = probs.copy()
            dout[np.arange(n), y] -= 1.0
            dout *= (w / wsum)[:, None]
        total_loss += loss

        gh = Head(
            w1=np.zeros_like(head.w1),
            b1=np.zeros_like(head.b1),
            w2=np.zeros_like(head.w2),
            b2=np.zeros_like(head.b2),
        )
        gh.w2 = g.T @ dout
        gh.b2 = dout.sum(axis=0)
        dg = dout @ head.w2.T
        dpreg = dg * (preg > 0)
        gh.w1 = z.T @ dpreg
        gh.b1 = dpreg.sum(axis=0)
        if head_kind is HeadKind.BINARY:
            grads.binary_heads[target] = gh
        else:
            grads.mode_heads[target] = gh
        dZ[rows] += dpreg @ head.w1.T

    dH2 = dZ[:, :ENCODER_H2]
    dS1 = dZ[:, ENCODER_H2:]
    dpre2 = dH2 * (pre2 > 0)
    grads.enc_w2 = H1.T @ dpre2
    grads.enc_b2 = dpre2.sum(axis=0)
    dH1 = dpre2 @ params.enc_w2.T
    dpre1 = dH1 * (pre1 > 0)
    grads.enc_w1 = X.T @ dpre1
    grads.enc_b1 = dpre1.sum(axis=0)
    dpres = dS1 * (pres > 0)
    grads.scal_w = S.T @ dpres
    grads.scal_b = dpres.sum(axis=0)
    return total_loss, grads


def train(
    dataset: Sequence[FeatureVector],
    variant: Individual | SharedBackbone,
    head_kind: HeadKind = HeadKind.BINARY,
    config: TrainConfig = TrainConfig(),
    params: MlpParams | None = None,
) -> TrainResult:
    """Mini-batch gradient descent against the summed per-target head losses."""
    if not dataset:
        raise EmptyDatasetError("dataset is empty")
    targets = variant.targets
    rows_by_target = {t: _target_rows(dataset, t, head_kind) for t in targets}
    for t, (rows, _) in rows_by_target.items():
        if len(rows) == 0:
            raise MissingLabelsError(f"no {head_kind.value} labels for target {t!r}")
    if params is None:
        params = init_params(
            binary_targets=targets if head_kind is HeadKind.BINARY else (),
            mode_targets=targets if head_kind is HeadKind.MODE else (),
            seed=config.seed,
        )
    if head_kind is HeadKind.MODE:
        for t, (rows, labels) in rows_by_target.items():
            params.mode_heads[t].class_weights = inverse_frequency_weights(labels.astype(np.int64))

    X, S = _batch_arrays(dataset)
    n = len(dataset)
    batch_size = config.batch_size if config.batch_size > 0 else n
    rng = Random(config.seed)
    order = list(range(n))
    velocity: dict[int, np.ndarray] = {}
    trace: list[float] = []

    for _ in range(config.epochs):
        if batch_size < n:
            rng.shuffle(order)
        epoch_losses = []
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            index_of = {orig: pos for pos, orig in enumerate(batch)}
            batch_rows: dict[str, tuple[np.ndarray, np.ndarray]] = {}
            for t, (rows, labels) in rows_by_target.items():
                keep = [(index_of[r], lab) for r, lab in zip(rows, labels) if r in index_of]
                if keep:
                    idx, labs = zip(*keep)
                    batch_rows[t] = (np.asarray(idx, dtype=np.int64), np.asarray(labs))
            if not batch_rows:
                continue
            loss, grads = loss_and_gradients(params, X[batch], S[batch], head_kind, batch_rows)
            epoch_losses.append(loss)
            for slot, (param, grad) in enumerate(zip(params.all_arrays(), _grad_arrays(grads, params))):
                if config.momentum > 0.0:
                    vel = velocity.setdefault(slot, np.zeros_like(param))
                    vel *= config.momentum
                    vel -= config.learning_rate * grad
                    param += vel
                else:
                    param -= config.learning_rate * grad
        trace.append(float(np.mean(epoch_losses)))
    return TrainResult(params=params, loss_trace=trace)


def _grad_arrays(grads: MlpParams, params: MlpParams) -> list[np.ndarray]:
    """Gradient arrays aligned slot-for-slot with params.all_arrays()."""
    arrays = [grads.enc_w1, grads.enc_b1, grads.enc_w2, grads.enc_b2, grads.scal_w, grads.scal_b]
    for name in sorted(params.binary_heads):
        head = grads.binary_heads.get(name)
        template = params.binary_heads[name]
        if head is None:
            head = Head(
                w1=np.zeros_like(template.w1),
                b1=np.zeros_like(template.b1),
                w2=np.zeros_like(template.w2),
                b2=np.zeros_like(template.b2),
            )
        arrays += [head.w1, head.b1, head.w2, head.b2]
    for name in sorted(params.mode_heads):
        head = grads.mode_heads.get(name)
        template = params.mode_heads[name]
        if head is None:
            head = Head(
                w1=np.zeros_like(template.w1),
                b1=np.zeros_like(template.b1),
                w2=np.zeros_like(template.w2),
                b2=np.zeros_like(template.b2),
            )
        arrays += [head.w1, head.b1, head.w2, head.b2]
    return arrays


# ---------------------------------------------------------------------------
# Evaluation metrics


def auroc_rank(scores: Sequence[float], labels: Sequence[int]) -> float | None:
    """Rank-statistic AUROC with average tie ranks; None for single-class labels."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def max_f1_scan(scores: Sequence[float], labels: Sequence[int]) -> tuple[float, float, float, float] | None:
    """Exact max-F1 search over all midpoints between adjacent distinct scores.

    Returns (f1, threshold, precision, recall) at the best threshold, or None
    when there is no positive label. Prediction rule: positive iff score >=
    threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.sum() == 0:
        return None
    distinct = np.unique(scores)
    thresholds = [distinct[0] - 1.0] + [(a + b) / 2.0 for a, b in zip(distinct[:-1], distinct[1:])]
    best: tuple[float, float, float, float] | None = None
    for theta in thresholds:
        pred = scores >= theta
        tp = int((pred & (labels == 1)).sum())
        fp = int((pred & (labels == 0)).sum())
        fn = int((~pred & (labels == 1)).sum())
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        if best is None or f1 > best[0]:
            best = (f1, float(theta), precision, recall)
    return best


def top_k_accuracy(logits: np.ndarray, labels: Sequence[int], k: int) -> float:
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    top = np.argsort(-logits, axis=1, kind="stable")[:, :k]
    return float(np.mean([labels[i] in top[i] for i in range(len(labels))]))


def _per_class_prf(preds: np.ndarray, labels: np.ndarray, n_classes: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    precision = np.zeros(n_classes)
    recall = np.zeros(n_classes)
    f1 = np.zeros(n_classes)
    for c in range(n_classes):
        tp = int(((preds == c) & (labels == c)).sum())
        fp = int(((preds == c) & (labels != c)).sum())
        fn = int(((preds != c) & (labels == c)).sum())
        precision[c] = tp / (tp + fp) if tp + fp else 0.0
        recall[c] = tp / (tp + fn) if tp + fn else 0.0
        denom = precision[c] + recall[c]
        f1[c] = 2 * precision[c] * recall[c] / denom if denom else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class BinaryMetrics:
    auroc: float | None
    max_f1: float | None
    threshold: float | None
    precision: float | None
    recall: float | None
    n_pos: int
    n_neg: int
    degenerate: bool


@dataclass(frozen=True)
class ModeMetrics:
    top1: float
    top2: float
    macro_f1: float
    weighted_f1: float
    balanced_accuracy: float
    n: int


@dataclass(frozen=True)
class PredictorReport:
    target: str
    binary: BinaryMetrics | None
    mode: ModeMetrics | None
    threshold_rule: str = "max_f1_midpoint_scan"


def evaluate(params: MlpParams, testset: Sequence[FeatureVector], target: str) -> PredictorReport:
    """Score the test set under the target's heads and compute the report."""
    if not testset:
        raise EmptyDatasetError("test set is empty")
    target_name = target.name if isinstance(target, ModelId) else target

    binary_metrics: BinaryMetrics | None = None
    if target_name in params.binary_heads:
        scores, labels = [], []
        for fv in testset:
            lab = fv.labels.get(target_name)
            if lab is None:
                continue
            result = forward(params, fv, HeadKind.BINARY, target_name)
            scores.append(result.probability)
            labels.append(1 if lab.error else 0)
        if scores:
            n_pos = sum(labels)
            n_neg = len(labels) - n_pos
            auroc = auroc_rank(scores, labels)
            scan = max_f1_scan(scores, labels)
            binary_metrics = BinaryMetrics(
                auroc=auroc,
                max_f1=scan[0] if scan else None,
                threshold=scan[1] if scan else None,
                precision=scan[2] if scan else None,
                recall=scan[3] if scan else None,
                n_pos=n_pos,
                n_neg=n_neg,
                degenerate=auroc is None,
            )

    mode_metrics: ModeMetrics | None = None
    if target_name in params.mode_heads:
        logit_rows, labels = [], []
        for fv in testset:
            lab = fv.labels.get(target_name)
            if lab is None or lab.mode is None:
                continue
            result = forward(params, fv, HeadKind.MODE, target_name)
            logit_rows.append(result.logits)
            labels.append(_MODE_INDEX[lab.mode])
        if logit_rows:
            logits = np.stack(logit_rows)
            y = np.asarray(labels, dtype=np.int64)
            preds = logits.argmax(axis=1)
            _, recall, f1 = _per_class_prf(preds, y, N_MODES)
            present = np.asarray(sorted(set(labels)), dtype=np.int64)
            support = np.bincount(y, minlength=N_MODES).astype(np.float64)
            mode_metrics = ModeMetrics(
                top1=top_k_accuracy(logits, y, 1),
                top2=top_k_accuracy(logits, y, 2),
                macro_f1=float(f1[present].mean()),
                weighted_f1=float((f1 * support).sum() / support.sum()),
                balanced_accuracy=float(recall[present].mean()),
                n=len(labels),
            )

    return PredictorReport(target=target_name, binary=binary_metrics, mode=mode_metrics)


# ---------------------------------------------------------------------------
# Feature file formats (documented in the README): JSON-lines with base64
# float32 arrays, and a binary container with a JSON header.

_BINARY_MAGIC = b"HKFT\x01\x00"


def _encode_f32(arr: np.ndarray) -> str:
    return base64.b64encode(np.asarray(arr, dtype="<f4").tobytes()).decode("ascii")


def _decode_f32(text: str, n: int) -> np.ndarray:
    arr = np.frombuffer(base64.b64decode(text), dtype="<f4").astype(np.float64)
    if arr.shape != (n,):
        raise DimensionMismatchError(f"expected {n} floats, got {arr.shape}")
    return arr


def _labels_to_json(labels: Mapping[str, TargetLabel]) -> dict:
    return {
        name: {"error": lab.error, "mode": lab.mode.value if lab.mode else None}
        for name, lab in labels.items()
    }


def _labels_from_json(obj: Mapping) -> dict[str, TargetLabel]:
    return {
        name: TargetLabel(error=lab["error"], mode=FailureMode(lab["mode"]) if lab.get("mode") else None)
        for name, lab in obj.items()
    }


def write_features_jsonl(path: str | Path, features: Iterable[FeatureVector]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for fv in features:
            fh.write(
                json.dumps(
                    {
                        "question_id": fv.question_id,
                        "hidden_b64": _encode_f32(fv.hidden),
                        "scalars_b64": _encode_f32(fv.scalars),
                        "labels": _labels_to_json(fv.labels),
                    }
                )
                + "\n"
            )


def load_features_jsonl(path: str | Path) -> list[FeatureVector]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                FeatureVector(
                    question_id=obj["question_id"],
                    hidden=_decode_f32(obj["hidden_b64"], HIDDEN_DIM),
                    scalars=_decode_f32(obj["scalars_b64"], SCALAR_DIM),
                    labels=_labels_from_json(obj.get("labels", {})),
                )
            )
    return out


def write_features_binary(path: str | Path, features: Sequence[FeatureVector]) -> None:
    header = {
        "count": len(features),
        "hidden_dim": HIDDEN_DIM,
        "scalar_dim": SCALAR_DIM,
        "ids": [fv.question_id for fv in features],
        "labels": [_labels_to_json(fv.labels) for fv in features],
    }
    header_bytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for fv in features:
            fh.write(np.asarray(fv.hidden, dtype="<f4").tobytes())
            fh.write(np.asarray(fv.scalars, dtype="<f4").tobytes())


def load_features_binary(path: str | Path) -> list[FeatureVector]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_BINARY_MAGIC))
        if magic != _BINARY_MAGIC:
            raise ValueError(f"{path}: not a feature container (bad magic)")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header["hidden_dim"] != HIDDEN_DIM or header["scalar_dim"] != SCALAR_DIM:
            raise DimensionMismatchError("container dims disagree with the architecture")
        out = []
        row_bytes = (HIDDEN_DIM + SCALAR_DIM) * 4
        for qid, labels in zip(header["ids"], header["labels"]):
            row = np.frombuffer(fh.read(row_bytes), dtype="<f4").astype(np.float64)
            out.append(
                FeatureVector(
                    question_id=qid,
                    hidden=row[:HIDDEN_DIM],
                    scalars=row[HIDDEN_DIM:],
                    labels=_labels_from_json(labels),
                )
            )
    return out


def load_features(path: str | Path) -> list[FeatureVector]:
    """Dispatch on the container magic, falling back to JSON-lines."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_BINARY_MAGIC))
    if magic == _BINARY_MAGIC:
        return load_features_binary(path)
    return load_features_jsonl(path)

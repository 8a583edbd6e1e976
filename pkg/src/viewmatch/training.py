"""Training loops for the match scorer and the two-view trainer with the
view-estimation auxiliary loss.

The match trainer optimizes pairwise multiple-choice cross-entropy over the
two candidates' scores (a per-image binary formulation is available behind a
config flag). The two-view trainer continues training a pretrained match
head while jointly fitting a view-estimation head, combining the losses as
``w_v * view_loss + w_s * match_loss`` with defaults (1.0, 0.2).

One epoch is one pass over the instances in seeded shuffled order; view
choices come from the same seeded stream, so a (config, data) pair fully
determines the run.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation
from .data import NUM_VIEWS, Referent, TaskInstance
from .heads import (
    Head,
    apply_gradients,
    backward,
    forward,
    new_adam,
    new_match_head,
    new_view_head,
)
from .store import FeatureStore
from .util import mix_seed

FORMULATIONS = ("pairwise", "binary")
VIEW_SAMPLING_POLICIES = ("uniform",)


class ConfigError(Exception):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    w_v: float = 1.0
    w_s: float = 0.2
    view_sampling: str = "uniform"
    formulation: str = "pairwise"
    freeze_match: bool = False

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.w_v < 0 or self.w_s < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.w_v == 0 and self.w_s == 0:
            raise ConfigError("loss weights w_v and w_s must not both be zero")
        if self.view_sampling not in VIEW_SAMPLING_POLICIES:
            raise ConfigError(f"unknown view sampling policy {self.view_sampling!r}")
        if self.formulation not in FORMULATIONS:
            raise ConfigError(f"unknown formulation {self.formulation!r}")

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"config {path} has unknown keys: {sorted(unknown)}")
        config = cls(**raw)
        config.validate()
        return config

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")


@dataclass
class EpochRecord:
    epoch: int
    match_loss: float
    view_loss: float
    combined_loss: float
    train_accuracy: float
    val_accuracy: float | None
    view_accuracy: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def write_records(path: str | Path, records: Sequence[EpochRecord]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict()) + "\n")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def match_loss(score_gold: float, score_distractor: float) -> float:
    """Cross-entropy of the two-way softmax against the gold index.

    Equals ``ln(1 + exp(score_distractor - score_gold))``, evaluated in
    overflow-safe log-sum-exp form.
    """
    return float(np.logaddexp(0.0, np.float64(score_distractor) - np.float64(score_gold)))


def match_loss_grad(score_gold: float, score_distractor: float) -> tuple[float, float]:
    p = float(_sigmoid(np.array(np.float64(score_distractor) - np.float64(score_gold))))
    return -p, p


def binary_match_loss(score_gold: float, score_distractor: float) -> float:
    """Independent per-image binary cross-entropy; gold labeled 1, distractor 0."""
    return float(
        np.logaddexp(0.0, -np.float64(score_gold))
        + np.logaddexp(0.0, np.float64(score_distractor))
    )


def binary_match_loss_grad(score_gold: float, score_distractor: float) -> tuple[float, float]:
    return (
        float(_sigmoid(np.array(np.float64(score_gold)))) - 1.0,
        float(_sigmoid(np.array(np.float64(score_distractor)))),
    )


def view_loss(logits: np.ndarray, true_view: int) -> float:
    """Softmax cross-entropy against a one-hot target at the true view."""
    logits = np.asarray(logits, dtype=np.float64).ravel()
    if logits.size != NUM_VIEWS:
        raise ValueError(f"expected {NUM_VIEWS} logits, got {logits.size}")
    if not 0 <= true_view < NUM_VIEWS:
        raise ValueError(f"true view {true_view} outside the ring")
    m = logits.max()
    lse = m + np.log(np.sum(np.exp(logits - m)))
    return float(lse - logits[true_view])


def view_loss_grad(logits: np.ndarray, true_view: int) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64).ravel()
    m = logits.max()
    ex = np.exp(logits - m)
    grad = ex / ex.sum()
    grad[true_view] -= 1.0
    return grad


def _batch_view_ce(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise softmax CE and its gradient for (n, 8) logits."""
    m = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - m)
    lse = m[:, 0] + np.log(ex.sum(axis=1))
    losses = lse - logits[np.arange(len(labels)), labels]
    grads = ex / ex.sum(axis=1, keepdims=True)
    grads[np.arange(len(labels)), labels] -= 1.0
    return losses, grads


def sample_view(rng: np.random.Generator) -> int:
    return int(rng.integers(NUM_VIEWS))


def sample_view_pair(rng: np.random.Generator) -> tuple[int, int]:
    pair = rng.choice(NUM_VIEWS, size=2, replace=False)
    return int(pair[0]), int(pair[1])


def _pair_scores_loss(sa: np.ndarray, sb: np.ndarray, gold_a: np.ndarray,
                      formulation: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-instance losses and per-score gradients for a batch of score pairs."""
    sg = np.where(gold_a, sa, sb)
    sd = np.where(gold_a, sb, sa)
    if formulation == "pairwise":
        margins = sd - sg
        losses = np.logaddexp(0.0, margins)
        p = _sigmoid(margins)
        dsg, dsd = -p, p
    else:
        losses = np.logaddexp(0.0, -sg) + np.logaddexp(0.0, sd)
        dsg = _sigmoid(sg) - 1.0
        dsd = _sigmoid(sd)
    dsa = np.where(gold_a, dsg, dsd)
    dsb = np.where(gold_a, dsd, dsg)
    return losses, dsa, dsb


def _epoch_val_accuracy(head: Head, val_instances, store, view_mode: str,
                        seed: int, epoch: int) -> float | None:
    if not val_instances:
        return None
    report, _ = evaluation.evaluate(
        evaluation.MatchPredictor(head),
        val_instances,
        store,
        view_mode=view_mode,
        seed=mix_seed(seed, "val", epoch),
    )
    return report.overall_fraction


def train_match(config: TrainConfig, instances: Sequence[TaskInstance],
                store: FeatureStore,
                val_instances: Sequence[TaskInstance] = (),
                ) -> tuple[Head, list[EpochRecord]]:
    """Train a match head; one random view per object per step.

    Returns the checkpoint with the best validation accuracy (the final
    epoch's head when no validation instances are given) and the per-epoch
    record.
    """
    config.validate()
    if config.w_s <= 0:
        raise ConfigError("match training requires a positive match-loss weight w_s")
    if not instances:
        raise ValueError("no training instances")

    head = new_match_head(config.seed)
    opt = new_adam(head.parameters(), learning_rate=config.learning_rate)
    rng = np.random.default_rng(config.seed)

    records: list[EpochRecord] = []
    best_head = head.copy()
    best_val = -1.0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(instances))
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            batch = [instances[i] for i in order[start:start + config.batch_size]]
            n = len(batch)
            x = np.empty((2 * n, head.dims[0]), dtype=np.float64)
            gold_a = np.empty(n, dtype=bool)
            for i, inst in enumerate(batch):
                lang = store.lookup_language(inst.expression.expr_id)
                feat_a = store.lookup_view(inst.object_a.object_id, sample_view(rng))
                feat_b = store.lookup_view(inst.object_b.object_id, sample_view(rng))
                x[i, :] = np.concatenate([feat_a, lang])
                x[n + i, :] = np.concatenate([feat_b, lang])
                gold_a[i] = inst.gold is Referent.A
            out, cache = forward(head, x)
            scores = out[:, 0]
            sa, sb = scores[:n], scores[n:]
            losses, dsa, dsb = _pair_scores_loss(sa, sb, gold_a, config.formulation)
            dout = np.concatenate([dsa, dsb])[:, None] / n
            grads, _ = backward(head, cache, dout)
            apply_gradients(head, opt, grads)
            loss_sum += float(losses.sum())
            correct += int(np.sum((sa >= sb) == gold_a))

        mean_match = loss_sum / len(instances)
        val_acc = _epoch_val_accuracy(head, val_instances, store, "single",
                                      config.seed, epoch)
        records.append(EpochRecord(
            epoch=epoch,
            match_loss=mean_match,
            view_loss=0.0,
            combined_loss=mean_match,
            train_accuracy=correct / len(instances),
            val_accuracy=val_acc,
        ))
        if val_acc is not None and val_acc > best_val:
            best_val = val_acc
            best_head = head.copy()

    return (best_head if best_val >= 0 else head), records


def train_lagor(config: TrainConfig, instances: Sequence[TaskInstance],
                store: FeatureStore, pretrained: Head,
                val_instances: Sequence[TaskInstance] = (),
                ) -> tuple[Head, Head, list[EpochRecord]]:
    """Joint training: two random views per object, match scoring over their
    maxpool, and view estimation on every sampled view.

    The match head continues training from its pretrained state unless
    ``config.freeze_match`` is set. The view loss is averaged over all four
    sampled (embedding, true view) pairs of an instance.
    """
    config.validate()
    if pretrained.kind != "match":
        raise ValueError("pretrained head must be a match head")
    if not instances:
        raise ValueError("no training instances")

    match_head = pretrained.copy()
    view_head = new_view_head(mix_seed(config.seed, "view-init"))
    match_opt = new_adam(match_head.parameters(), learning_rate=config.learning_rate)
    view_opt = new_adam(view_head.parameters(), learning_rate=config.learning_rate)
    rng = np.random.default_rng(config.seed)

    records: list[EpochRecord] = []
    best = (match_head.copy(), view_head.copy())
    best_val = -1.0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(instances))
        match_sum = 0.0
        view_sum = 0.0
        correct = 0
        view_correct = 0
        view_total = 0
        for start in range(0, len(order), config.batch_size):
            batch = [instances[i] for i in order[start:start + config.batch_size]]
            n = len(batch)
            x_match = np.empty((2 * n, match_head.dims[0]), dtype=np.float64)
            x_view = np.empty((4 * n, view_head.dims[0]), dtype=np.float64)
            view_labels = np.empty(4 * n, dtype=np.intp)
            gold_a = np.empty(n, dtype=bool)
            for i, inst in enumerate(batch):
                lang = store.lookup_language(inst.expression.expr_id)
                pooled = []
                for j, obj in enumerate((inst.object_a, inst.object_b)):
                    v1, v2 = sample_view_pair(rng)
                    f1 = store.lookup_view(obj.object_id, v1)
                    f2 = store.lookup_view(obj.object_id, v2)
                    pooled.append(np.maximum(f1, f2))
                    x_view[4 * i + 2 * j, :] = f1
                    x_view[4 * i + 2 * j + 1, :] = f2
                    view_labels[4 * i + 2 * j] = v1
                    view_labels[4 * i + 2 * j + 1] = v2
                x_match[i, :] = np.concatenate([pooled[0], lang])
                x_match[n + i, :] = np.concatenate([pooled[1], lang])
                gold_a[i] = inst.gold is Referent.A

            out, match_cache = forward(match_head, x_match)
            scores = out[:, 0]
            sa, sb = scores[:n], scores[n:]
            match_losses, dsa, dsb = _pair_scores_loss(sa, sb, gold_a, config.formulation)

            logits, view_cache = forward(view_head, x_view)
            view_losses, dlogits = _batch_view_ce(logits, view_labels)

            if not config.freeze_match:
                dout = np.concatenate([dsa, dsb])[:, None] * (config.w_s / n)
                match_grads, _ = backward(match_head, match_cache, dout)
                apply_gradients(match_head, match_opt, match_grads)
            view_grads, _ = backward(view_head, view_cache,
                                     dlogits * (config.w_v / (4 * n)))
            apply_gradients(view_head, view_opt, view_grads)

            match_sum += float(match_losses.sum())
            view_sum += float(view_losses.sum()) / 4.0
            correct += int(np.sum((sa >= sb) == gold_a))
            view_correct += int(np.sum(logits.argmax(axis=1) == view_labels))
            view_total += 4 * n

        mean_match = match_sum / len(instances)
        mean_view = view_sum / len(instances)
        val_acc = _epoch_val_accuracy(match_head, val_instances, store, "two",
                                      config.seed, epoch)
        records.append(EpochRecord(
            epoch=epoch,
            match_loss=mean_match,
            view_loss=mean_view,
            combined_loss=config.w_v * mean_view + config.w_s * mean_match,
            train_accuracy=correct / len(instances),
            val_accuracy=val_acc,
            view_accuracy=view_correct / view_total,
        ))
        if val_acc is not None and val_acc > best_val:
            best_val = val_acc
            best = (match_head.copy(), view_head.copy())

    if best_val >= 0:
        return best[0], best[1], records
    return match_head, view_head, records

"""Accuracy reporting for referent selection.

Produces per-run reports broken down into the visual and blindfolded
annotation subsets, a mandatory per-instance prediction log (the published
aggregates are not auditable without one), and the score-change-after-rotation
analysis for trained match heads.

View choices during evaluation are drawn from a per-instance generator seeded
by ``(seed, instance_id)``, so reported accuracies are invariant to instance
order and to evaluating any subset in isolation.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import NUM_VIEWS, Mode, Referent, TaskInstance, check_view_index
from .grounding import (
    Prediction,
    ViewSelection,
    match_select,
    sample_selection,
    zero_shot_select,
)
from .heads import Head, forward, match_forward
from .store import FeatureStore
from .util import mix_seed


def _percent(correct: int, total: int) -> float | None:
    if total == 0:
        return None
    return round(100.0 * correct / total, 1)


@dataclass(frozen=True)
class PredictionRow:
    """One line of the prediction log."""

    instance_id: str
    mode: str
    score_a: float
    score_b: float
    choice: str
    gold: str
    correct: bool
    tie_flag: bool
    views_a: tuple[int, ...]
    views_b: tuple[int, ...]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["views_a"] = list(self.views_a)
        d["views_b"] = list(self.views_b)
        return d


@dataclass(frozen=True)
class EvaluationReport:
    model: str
    view_mode: str
    fold: str
    seed: int
    total: int
    correct: int
    visual_total: int
    visual_correct: int
    blindfolded_total: int
    blindfolded_correct: int
    tie_count: int

    def __post_init__(self) -> None:
        if self.visual_total + self.blindfolded_total != self.total:
            raise ValueError("subset counts must partition the total")
        if self.visual_correct + self.blindfolded_correct != self.correct:
            raise ValueError("subset correct counts must sum to the total correct")

    @property
    def overall_fraction(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def accuracy(self) -> float | None:
        """Overall accuracy in percent, one decimal."""
        return _percent(self.correct, self.total)

    @property
    def visual_accuracy(self) -> float | None:
        return _percent(self.visual_correct, self.visual_total)

    @property
    def blindfolded_accuracy(self) -> float | None:
        return _percent(self.blindfolded_correct, self.blindfolded_total)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["accuracy"] = self.accuracy
        d["visual_accuracy"] = self.visual_accuracy
        d["blindfolded_accuracy"] = self.blindfolded_accuracy
        return d


class ZeroShotPredictor:
    """Cosine similarity of frozen embeddings; no trained parameters."""

    name = "zero-shot"

    def predict(self, language: np.ndarray, views_a: Mapping[int, np.ndarray],
                views_b: Mapping[int, np.ndarray],
                selection: ViewSelection) -> Prediction:
        return zero_shot_select(language, views_a, views_b, selection)


class MatchPredictor:
    """Trained match head applied to the maxpool of the selected views."""

    def __init__(self, head: Head) -> None:
        if head.kind != "match":
            raise ValueError(f"predictor needs a match head, got {head.kind!r}")
        self.head = head
        self.name = "match"

    def predict(self, language: np.ndarray, views_a: Mapping[int, np.ndarray],
                views_b: Mapping[int, np.ndarray],
                selection: ViewSelection) -> Prediction:
        return match_select(self.head, language, views_a, views_b, selection)


def _gather_views(store: FeatureStore, object_id: str,
                  indices: tuple[int, ...]) -> dict[int, np.ndarray]:
    return {idx: store.lookup_view(object_id, idx) for idx in indices}


def evaluate(predictor, instances: Sequence[TaskInstance], store: FeatureStore,
             view_mode: str = "single", seed: int = 0, fold: str = "",
             ) -> tuple[EvaluationReport, list[PredictionRow]]:
    """Score every instance and assemble the report plus prediction log.

    A missing embedding aborts the run with the offending key in the error;
    partial reports are never emitted.
    """
    rows: list[PredictionRow] = []
    visual_total = visual_correct = 0
    blind_total = blind_correct = 0
    ties = 0
    for inst in instances:
        rng = np.random.default_rng(mix_seed(seed, "eval-views", inst.instance_id))
        selection = sample_selection(view_mode, rng)
        language = store.lookup_language(inst.expression.expr_id)
        views_a = _gather_views(store, inst.object_a.object_id, selection.views_a)
        views_b = _gather_views(store, inst.object_b.object_id, selection.views_b)
        pred = predictor.predict(language, views_a, views_b, selection)
        correct = pred.choice is inst.gold
        rows.append(PredictionRow(
            instance_id=inst.instance_id,
            mode=inst.expression.mode.value,
            score_a=pred.score_a,
            score_b=pred.score_b,
            choice=pred.choice.value,
            gold=inst.gold.value,
            correct=correct,
            tie_flag=pred.tie_flag,
            views_a=selection.views_a,
            views_b=selection.views_b,
        ))
        if inst.expression.mode is Mode.VISUAL:
            visual_total += 1
            visual_correct += int(correct)
        else:
            blind_total += 1
            blind_correct += int(correct)
        ties += int(pred.tie_flag)

    report = EvaluationReport(
        model=predictor.name,
        view_mode=view_mode,
        fold=fold,
        seed=seed,
        total=len(rows),
        correct=visual_correct + blind_correct,
        visual_total=visual_total,
        visual_correct=visual_correct,
        blindfolded_total=blind_total,
        blindfolded_correct=blind_correct,
        tie_count=ties,
    )
    return report, rows


def write_prediction_log(path: str | Path, rows: Sequence[PredictionRow]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row.to_dict()) + "\n")


def recompute_from_log(rows: Sequence[PredictionRow]) -> tuple[int, int]:
    """(correct, total) recomputed from the log; must agree with the report."""
    return sum(int(r.correct) for r in rows), len(rows)


def format_report_table(report: EvaluationReport) -> str:
    """Human-readable single-model table: overall / visual / blindfolded."""

    def cell(value: float | None) -> str:
        return "  n/a" if value is None else f"{value:5.1f}"

    lines = [
        f"{'Model':<12} {'Views':<7} {'All':>5} {'Visual':>6} {'Blind':>5} "
        f"{'N':>6} {'Ties':>5}",
        f"{report.model:<12} {report.view_mode:<7} {cell(report.accuracy)} "
        f"{cell(report.visual_accuracy):>6} {cell(report.blindfolded_accuracy):>5} "
        f"{report.total:>6} {report.tie_count:>5}",
    ]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RotationDelta:
    """Match-score change when an object is rotated to a different view."""

    instance_id: str
    object_id: str
    view_before: int
    view_after: int
    score_before: float
    score_after: float

    @property
    def raw_delta(self) -> float:
        return self.score_after - self.score_before

    @property
    def percent(self) -> float | None:
        """100 * (after - before) / |before|; undefined on a zero baseline."""
        if self.score_before == 0.0:
            return None
        return 100.0 * self.raw_delta / abs(self.score_before)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["raw_delta"] = self.raw_delta
        d["percent"] = self.percent
        return d


def rotation_score_delta(head: Head, language: np.ndarray,
                         views: Mapping[int, np.ndarray], view_before: int,
                         view_after: int, instance_id: str = "",
                         object_id: str = "") -> RotationDelta:
    """Score one object at two single views and report the change."""
    check_view_index(view_before)
    check_view_index(view_after)
    for idx in (view_before, view_after):
        if idx not in views:
            raise KeyError(f"view {idx} not supplied for object {object_id or '?'}")
    return RotationDelta(
        instance_id=instance_id,
        object_id=object_id,
        view_before=view_before,
        view_after=view_after,
        score_before=match_forward(head, language, views[view_before]),
        score_after=match_forward(head, language, views[view_after]),
    )


def rotation_report(head: Head, instances: Sequence[TaskInstance],
                    store: FeatureStore, seed: int = 0,
                    step: int = 1) -> list[RotationDelta]:
    """Per-instance rotation analysis on the gold object.

    The starting view is drawn per instance from ``(seed, instance_id)``; the
    after view is ``step`` positions around the ring.
    """
    if step % NUM_VIEWS == 0:
        raise ValueError("rotation step must move to a different view")
    deltas = []
    for inst in instances:
        rng = np.random.default_rng(mix_seed(seed, "rotate", inst.instance_id))
        before = int(rng.integers(NUM_VIEWS))
        after = (before + step) % NUM_VIEWS
        gold = inst.gold_object
        language = store.lookup_language(inst.expression.expr_id)
        views = _gather_views(store, gold.object_id, (before, after))
        deltas.append(rotation_score_delta(
            head, language, views, before, after,
            instance_id=inst.instance_id, object_id=gold.object_id,
        ))
    return deltas


def view_estimation_accuracy(head: Head, store: FeatureStore) -> float:
    """Fraction of stored view embeddings whose argmax logit is the true view."""
    keys = store.vision_keys()
    if not keys:
        raise ValueError("store holds no view embeddings")
    x = np.stack([store.lookup_view(obj, v) for obj, v in keys]).astype(np.float64)
    logits, _ = forward(head, x)
    labels = np.array([v for _, v in keys])
    return float(np.mean(logits.argmax(axis=1) == labels))

"""View aggregation and referent selection.

Three inference paths share one decision rule: zero-shot cosine scoring,
trained match-head scoring over a single view, and trained scoring over
pooled multi-view features. Multiple views of one object are combined by
component-wise maxpool over their embedding vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import NUM_VIEWS, Referent, check_view_index
from .heads import Head, match_forward
from .store import MissingKeyError, normalize

TIE_EPS = 1e-9

VIEW_MODES = ("single", "two", "all8")


@dataclass(frozen=True)
class ViewSelection:
    """Concrete views chosen for each candidate object in one decision."""

    mode: str
    views_a: tuple[int, ...]
    views_b: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.mode not in VIEW_MODES:
            raise ValueError(f"unknown view mode {self.mode!r}")
        for views in (self.views_a, self.views_b):
            for v in views:
                check_view_index(v)
            if self.mode == "single" and len(views) != 1:
                raise ValueError("single mode selects exactly one view per object")
            if self.mode == "two":
                if len(views) != 2 or views[0] == views[1]:
                    raise ValueError("two mode selects two distinct views per object")
            if self.mode == "all8" and tuple(views) != tuple(range(NUM_VIEWS)):
                raise ValueError("all8 mode selects every view in ring order")

    @classmethod
    def single(cls, view_a: int, view_b: int) -> "ViewSelection":
        return cls("single", (view_a,), (view_b,))

    @classmethod
    def two(cls, views_a: tuple[int, int], views_b: tuple[int, int]) -> "ViewSelection":
        return cls("two", tuple(views_a), tuple(views_b))

    @classmethod
    def all8(cls) -> "ViewSelection":
        ring = tuple(range(NUM_VIEWS))
        return cls("all8", ring, ring)


def sample_selection(mode: str, rng: np.random.Generator) -> ViewSelection:
    """Draw a per-instance selection; single and two modes are uniform over the ring."""
    if mode == "single":
        return ViewSelection.single(
            int(rng.integers(NUM_VIEWS)), int(rng.integers(NUM_VIEWS))
        )
    if mode == "two":
        pair_a = tuple(int(v) for v in rng.choice(NUM_VIEWS, size=2, replace=False))
        pair_b = tuple(int(v) for v in rng.choice(NUM_VIEWS, size=2, replace=False))
        return ViewSelection.two(pair_a, pair_b)
    if mode == "all8":
        return ViewSelection.all8()
    raise ValueError(f"unknown view mode {mode!r}")


@dataclass(frozen=True)
class Prediction:
    choice: Referent
    score_a: float
    score_b: float
    tie_flag: bool


def decide(score_a: float, score_b: float) -> Prediction:
    """Ties resolve to A deterministically, with the tie surfaced on the flag."""
    return Prediction(
        choice=Referent.A if score_a >= score_b else Referent.B,
        score_a=score_a,
        score_b=score_b,
        tie_flag=abs(score_a - score_b) < TIE_EPS,
    )


def aggregate_views(features: Sequence[np.ndarray]) -> np.ndarray:
    """Component-wise maximum over view embedding vectors."""
    if len(features) == 0:
        raise ValueError("cannot aggregate an empty list of views")
    stack = [np.asarray(f) for f in features]
    shape = stack[0].shape
    for f in stack[1:]:
        if f.shape != shape:
            raise ValueError(f"view feature shapes disagree: {shape} vs {f.shape}")
    return np.maximum.reduce(stack)


def _select(views: Mapping[int, np.ndarray], indices: tuple[int, ...],
            object_label: str) -> list[np.ndarray]:
    selected = []
    for idx in indices:
        if idx not in views:
            raise MissingKeyError(f"no view feature for object {object_label} view {idx}")
        selected.append(views[idx])
    return selected


def zero_shot_select(language: np.ndarray, views_a: Mapping[int, np.ndarray],
                     views_b: Mapping[int, np.ndarray],
                     selection: ViewSelection) -> Prediction:
    """Cosine scoring without training.

    Each score is the dot product of the normalized language embedding with
    the normalized maxpool-aggregate of the object's selected views, so raw
    embedding scale cannot influence the choice.
    """
    lang = normalize(language).astype(np.float64)
    scores = []
    for views, indices, label in ((views_a, selection.views_a, "A"),
                                  (views_b, selection.views_b, "B")):
        pooled = aggregate_views(_select(views, indices, label))
        scores.append(float(lang @ normalize(pooled).astype(np.float64)))
    return decide(scores[0], scores[1])


def match_select(head: Head, language: np.ndarray, views_a: Mapping[int, np.ndarray],
                 views_b: Mapping[int, np.ndarray],
                 selection: ViewSelection) -> Prediction:
    """Trained scoring: the head consumes raw (unnormalized) pooled features."""
    scores = []
    for views, indices, label in ((views_a, selection.views_a, "A"),
                                  (views_b, selection.views_b, "B")):
        pooled = aggregate_views(_select(views, indices, label))
        scores.append(match_forward(head, language, pooled))
    return decide(scores[0], scores[1])

"""Separable synthetic fixtures.

Coordinate-axis constructions whose correct answers are forced: the gold
object's view embeddings are collinear with the language embedding while the
distractor's live on an orthogonal axis. Zero-shot cosine selection is exact
on them by construction, trained heads must reach perfect accuracy quickly,
and the view-coded variant makes view estimation exactly recoverable — so
the fixtures exercise the full training and evaluation machinery without any
real encoder.

Gold directions always occupy even coordinates and distractor directions odd
ones, which keeps the match problem linearly separable no matter how
instances mix directions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    NUM_VIEWS,
    Dataset,
    Fold,
    Mode,
    ObjectEntry,
    Referent,
    ReferringExpression,
    TaskInstance,
    write_dataset,
)
from .store import FeatureStore

TRAIN_CATEGORY = "synth-train"
HELDOUT_CATEGORY = "synth-heldout"

_ADJECTIVES = ("angular", "rounded", "slender", "boxy", "tapered", "flat",
               "ribbed", "hollow")
_NOUNS = ("marker", "fixture", "prop", "stand", "widget", "block", "fin",
          "vane")


@dataclass(frozen=True)
class Fixture:
    """A synthetic dataset, its feature store, and the instance split."""

    dataset: Dataset
    store: FeatureStore
    train: tuple[TaskInstance, ...]
    held_out: tuple[TaskInstance, ...]


def _expression_text(index: int, direction: int) -> str:
    adj = _ADJECTIVES[direction % len(_ADJECTIVES)]
    noun = _NOUNS[(direction + index) % len(_NOUNS)]
    words = ["the", adj, noun]
    if index % 3 == 0:
        words.append("shape")
    if index % 5 == 0:
        words.insert(1, "small")
    return " ".join(words)


def _make_objects(store: FeatureStore, rng: np.random.Generator, prefix: str,
                  category: str, n_directions: int, dim: int,
                  view_coded: bool) -> list[tuple[ObjectEntry, ObjectEntry]]:
    """One (gold, distractor) object pair per direction.

    Direction ``d`` puts gold mass on axis ``base + 2d`` and distractor mass
    on ``base + 2d + 1``, where ``base`` is 8 when the first eight
    coordinates carry the view code and 0 otherwise.
    """
    base = NUM_VIEWS if view_coded else 0
    pairs = []
    for d in range(n_directions):
        pair = []
        for role, axis in (("g", base + 2 * d), ("x", base + 2 * d + 1)):
            object_id = f"{prefix}{d:02d}{role}"
            keys = tuple(f"{object_id}/v{k}" for k in range(NUM_VIEWS))
            for k in range(NUM_VIEWS):
                vec = np.zeros(dim, dtype=np.float32)
                vec[axis] = rng.uniform(0.8, 1.2)
                if view_coded:
                    # The view code dominates the direction mass so the
                    # view-logit mapping generalizes across objects.
                    vec[k] = rng.uniform(1.6, 2.0)
                store.add_view(object_id, k, vec)
            pair.append(ObjectEntry(object_id, category, keys))
        pairs.append((pair[0], pair[1]))
    return pairs


def _make_instances(store: FeatureStore, rng: np.random.Generator,
                    pairs, id_prefix: str, n_instances: int, dim: int,
                    view_coded: bool) -> list[TaskInstance]:
    base = NUM_VIEWS if view_coded else 0
    instances = []
    for i in range(n_instances):
        d = i % len(pairs)
        gold_obj, dist_obj = pairs[d]
        expr_id = f"{id_prefix}expr-{i:04d}"
        lang = np.zeros(dim, dtype=np.float32)
        lang[base + 2 * d] = rng.uniform(0.8, 1.2)
        store.add_language(expr_id, lang)
        expression = ReferringExpression(
            expr_id=expr_id,
            text=_expression_text(i, d),
            mode=Mode.VISUAL if i % 2 == 0 else Mode.BLINDFOLDED,
        )
        if rng.random() < 0.5:
            object_a, object_b, gold = gold_obj, dist_obj, Referent.A
        else:
            object_a, object_b, gold = dist_obj, gold_obj, Referent.B
        instances.append(TaskInstance(
            instance_id=f"{id_prefix}inst-{i:04d}",
            expression=expression,
            object_a=object_a,
            object_b=object_b,
            gold=gold,
        ))
    return instances


def _build(n_train: int, n_held_out: int, n_directions: int, dim: int,
           seed: int, view_coded: bool) -> Fixture:
    base = NUM_VIEWS if view_coded else 0
    if base + 2 * n_directions > dim:
        raise ValueError(
            f"{n_directions} directions need {base + 2 * n_directions} "
            f"coordinates, embedding has {dim}"
        )
    if n_train < 1:
        raise ValueError("fixture needs at least one training instance")
    rng = np.random.default_rng(seed)
    store = FeatureStore(encoder="synthetic-oracle", dim=dim)

    train_pairs = _make_objects(store, rng, "obj", TRAIN_CATEGORY,
                                n_directions, dim, view_coded)
    held_pairs = _make_objects(store, rng, "hob", HELDOUT_CATEGORY,
                               n_directions, dim, view_coded)
    train = _make_instances(store, rng, train_pairs, "", n_train, dim, view_coded)
    held = _make_instances(store, rng, held_pairs, "h", n_held_out, dim, view_coded)

    objects = {}
    for gold_obj, dist_obj in train_pairs + held_pairs:
        objects[gold_obj.object_id] = gold_obj
        objects[dist_obj.object_id] = dist_obj
    dataset = Dataset(
        instances=tuple(train + held),
        objects=objects,
        folds={TRAIN_CATEGORY: Fold.TRAIN, HELDOUT_CATEGORY: Fold.VAL},
    )
    return Fixture(dataset=dataset, store=store, train=tuple(train),
                   held_out=tuple(held))


def make_match_fixture(n_train: int = 96, n_held_out: int = 32,
                       n_directions: int = 8, dim: int = 512,
                       seed: int = 7) -> Fixture:
    """Collinear/orthogonal construction for match training and zero-shot.

    Every view of the gold object lies on the language axis; every view of
    the distractor lies on the paired orthogonal axis.
    """
    return _build(n_train, n_held_out, n_directions, dim, seed, view_coded=False)


def make_lagor_fixture(n_train: int = 64, n_held_out: int = 16,
                       n_directions: int = 8, dim: int = 512,
                       seed: int = 11) -> Fixture:
    """View-separable variant: coordinates 0-7 encode the view index (the
    true view's coordinate is the strict maximum of the first eight), while
    the match structure lives on coordinates 8 and up."""
    return _build(n_train, n_held_out, n_directions, dim, seed, view_coded=True)


def write_fixture(fixture: Fixture, directory: str | Path) -> tuple[Path, Path]:
    """Materialize a fixture for command-line runs.

    Writes the dataset manifest under ``<directory>/dataset`` and the store
    to ``<directory>/features.snrf``; byte-stable for a fixed fixture.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    dataset_dir = root / "dataset"
    write_dataset(fixture.dataset, dataset_dir)
    store_path = root / "features.snrf"
    fixture.store.write(store_path)
    return dataset_dir, store_path

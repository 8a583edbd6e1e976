"""Domain model for objects, views, referring expressions, and task instances.

A dataset on disk is a directory of line-delimited JSON files:

* ``objects.jsonl``   -- one object per line:
  ``{"object_id", "category", "view_key_0" .. "view_key_7"}``
* ``instances.jsonl`` -- one task instance per line:
  ``{"instance_id", "expr_id", "text", "mode", "object_a_id", "object_b_id",
  "gold", "category_a", "category_b"}``
* ``folds.jsonl``     -- optional category-to-fold assignments:
  ``{"category", "fold"}``

All files are UTF-8. Loaded records are immutable and safe to share across
threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

NUM_VIEWS = 8
VIEW_STEP_DEGREES = 45

OBJECTS_FILE = "objects.jsonl"
INSTANCES_FILE = "instances.jsonl"
FOLDS_FILE = "folds.jsonl"


class DatasetError(Exception):
    """Malformed or inconsistent dataset content; message carries a record locator."""


class Mode(str, Enum):
    VISUAL = "visual"
    BLINDFOLDED = "blindfolded"


class Referent(str, Enum):
    A = "a"
    B = "b"


class Fold(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


def check_view_index(index: int) -> int:
    """Validate a position on the 8-view ring (45-degree azimuthal steps)."""
    if not isinstance(index, int) or isinstance(index, bool) or not 0 <= index < NUM_VIEWS:
        raise ValueError(f"view index must be an integer in [0, {NUM_VIEWS - 1}], got {index!r}")
    return index


def successor_view(index: int) -> int:
    """Next view on the ring; the ring is closed, so 7 wraps to 0."""
    return (check_view_index(index) + 1) % NUM_VIEWS


@dataclass(frozen=True)
class ObjectEntry:
    """A 3D object's identity, category, and its ring of 8 rendered view keys."""

    object_id: str
    category: str
    views: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.object_id:
            raise ValueError("object_id must be nonempty")
        if len(self.views) != NUM_VIEWS:
            raise ValueError(
                f"object {self.object_id!r} must have exactly {NUM_VIEWS} view keys, "
                f"got {len(self.views)}"
            )
        if len(set(self.views)) != NUM_VIEWS:
            raise ValueError(f"object {self.object_id!r} has duplicate view keys")


@dataclass(frozen=True)
class ReferringExpression:
    expr_id: str
    text: str
    mode: Mode

    def __post_init__(self) -> None:
        # Token counting splits on Unicode whitespace with no punctuation
        # stripping, so the count is reproducible from the raw text.
        if not self.text or not self.text.split():
            raise ValueError(f"expression {self.expr_id!r} has empty text")

    @property
    def token_count(self) -> int:
        return len(self.text.split())


@dataclass(frozen=True)
class TaskInstance:
    """One benchmark row: an expression, two candidate objects, and the gold referent."""

    instance_id: str
    expression: ReferringExpression
    object_a: ObjectEntry
    object_b: ObjectEntry
    gold: Referent

    def __post_init__(self) -> None:
        if self.object_a.object_id == self.object_b.object_id:
            raise ValueError(
                f"instance {self.instance_id!r} pairs object "
                f"{self.object_a.object_id!r} with itself"
            )

    @property
    def gold_object(self) -> ObjectEntry:
        return self.object_a if self.gold is Referent.A else self.object_b

    @property
    def distractor_object(self) -> ObjectEntry:
        return self.object_b if self.gold is Referent.A else self.object_a


@dataclass(frozen=True)
class FoldAssignment:
    category: str
    fold: Fold


@dataclass(frozen=True)
class Dataset:
    instances: tuple[TaskInstance, ...]
    objects: dict[str, ObjectEntry]
    folds: dict[str, Fold] | None = None

    def instance_fold(self, instance: TaskInstance) -> str:
        """Fold label of an instance derived from its categories.

        Same-fold pairs get that fold's name. A train/val cross pair is
        usable only when training a final model for the test fold and is
        labeled ``train-val``; any cross pair touching the test fold is
        ``excluded``.
        """
        if self.folds is None:
            raise DatasetError("dataset has no fold assignments")
        try:
            fold_a = self.folds[instance.object_a.category]
            fold_b = self.folds[instance.object_b.category]
        except KeyError as exc:
            raise DatasetError(
                f"instance {instance.instance_id!r}: category {exc.args[0]!r} "
                "has no fold assignment"
            ) from None
        if fold_a is fold_b:
            return fold_a.value
        if {fold_a, fold_b} == {Fold.TRAIN, Fold.VAL}:
            return "train-val"
        return "excluded"

    def fold_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for inst in self.instances:
            label = self.instance_fold(inst)
            counts[label] = counts.get(label, 0) + 1
        return counts

    def instances_in_fold(self, fold: str) -> list[TaskInstance]:
        return [inst for inst in self.instances if self.instance_fold(inst) == fold]


def _iter_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path.name}:{lineno}: invalid JSON ({exc})") from None
            if not isinstance(record, dict):
                raise DatasetError(f"{path.name}:{lineno}: record is not an object")
            yield lineno, record


def _require(record: dict, field_name: str, locator: str) -> object:
    if field_name not in record:
        raise DatasetError(f"{locator}: missing field {field_name!r}")
    return record[field_name]


def load_objects(path: Path) -> dict[str, ObjectEntry]:
    objects: dict[str, ObjectEntry] = {}
    for lineno, record in _iter_jsonl(path):
        locator = f"{path.name}:{lineno}"
        object_id = str(_require(record, "object_id", locator))
        category = str(_require(record, "category", locator))
        views = tuple(
            str(_require(record, f"view_key_{k}", locator)) for k in range(NUM_VIEWS)
        )
        if object_id in objects:
            raise DatasetError(f"{locator}: duplicate object_id {object_id!r}")
        try:
            objects[object_id] = ObjectEntry(object_id, category, views)
        except ValueError as exc:
            raise DatasetError(f"{locator}: {exc}") from None
    return objects


def load_folds(path: Path) -> dict[str, Fold]:
    folds: dict[str, Fold] = {}
    for lineno, record in _iter_jsonl(path):
        locator = f"{path.name}:{lineno}"
        category = str(_require(record, "category", locator))
        fold_name = str(_require(record, "fold", locator))
        try:
            fold = Fold(fold_name)
        except ValueError:
            raise DatasetError(f"{locator}: unknown fold {fold_name!r}") from None
        if category in folds:
            raise DatasetError(f"{locator}: category {category!r} assigned to more than one fold")
        folds[category] = fold
    return folds


def load_dataset(path: str | Path) -> Dataset:
    """Load a dataset directory; every instance must reference a loaded object."""
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"dataset directory not found: {root}")
    objects_path = root / OBJECTS_FILE
    instances_path = root / INSTANCES_FILE
    for required in (objects_path, instances_path):
        if not required.is_file():
            raise DatasetError(f"missing dataset file: {required}")

    objects = load_objects(objects_path)

    instances: list[TaskInstance] = []
    seen_ids: set[str] = set()
    for lineno, record in _iter_jsonl(instances_path):
        locator = f"{instances_path.name}:{lineno}"
        instance_id = str(_require(record, "instance_id", locator))
        if instance_id in seen_ids:
            raise DatasetError(f"{locator}: duplicate instance_id {instance_id!r}")
        seen_ids.add(instance_id)

        expr_id = str(_require(record, "expr_id", locator))
        text = str(_require(record, "text", locator))
        mode_name = str(_require(record, "mode", locator))
        try:
            mode = Mode(mode_name)
        except ValueError:
            raise DatasetError(f"{locator}: unknown mode {mode_name!r}") from None
        try:
            gold = Referent(str(_require(record, "gold", locator)))
        except ValueError:
            raise DatasetError(f"{locator}: gold must be 'a' or 'b'") from None

        resolved: dict[str, ObjectEntry] = {}
        for side in ("a", "b"):
            object_id = str(_require(record, f"object_{side}_id", locator))
            if object_id not in objects:
                raise DatasetError(
                    f"{locator}: instance {instance_id!r} references unknown "
                    f"object_id {object_id!r}"
                )
            entry = objects[object_id]
            declared = str(_require(record, f"category_{side}", locator))
            if declared != entry.category:
                raise DatasetError(
                    f"{locator}: category_{side} {declared!r} disagrees with object "
                    f"table entry {entry.category!r} for {object_id!r}"
                )
            resolved[side] = entry

        try:
            instances.append(
                TaskInstance(
                    instance_id=instance_id,
                    expression=ReferringExpression(expr_id, text, mode),
                    object_a=resolved["a"],
                    object_b=resolved["b"],
                    gold=gold,
                )
            )
        except ValueError as exc:
            raise DatasetError(f"{locator}: {exc}") from None

    folds_path = root / FOLDS_FILE
    folds = load_folds(folds_path) if folds_path.is_file() else None
    return Dataset(instances=tuple(instances), objects=objects, folds=folds)


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    """Serialize a dataset back to the manifest layout; round-trips losslessly."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / OBJECTS_FILE, "w", encoding="utf-8") as handle:
        for entry in dataset.objects.values():
            record = {"object_id": entry.object_id, "category": entry.category}
            for k, key in enumerate(entry.views):
                record[f"view_key_{k}"] = key
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    with open(root / INSTANCES_FILE, "w", encoding="utf-8") as handle:
        for inst in dataset.instances:
            record = {
                "instance_id": inst.instance_id,
                "expr_id": inst.expression.expr_id,
                "text": inst.expression.text,
                "mode": inst.expression.mode.value,
                "object_a_id": inst.object_a.object_id,
                "object_b_id": inst.object_b.object_id,
                "gold": inst.gold.value,
                "category_a": inst.object_a.category,
                "category_b": inst.object_b.category,
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    if dataset.folds is not None:
        write_folds(dataset.folds, root / FOLDS_FILE)


def write_folds(folds: dict[str, Fold], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for category in sorted(folds):
            handle.write(
                json.dumps({"category": category, "fold": folds[category].value}) + "\n"
            )


def _moments(counts: Sequence[int]) -> tuple[float | None, float | None]:
    if not counts:
        return None, None
    mean = sum(counts) / len(counts)
    var = sum((c - mean) ** 2 for c in counts) / len(counts)
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class InstanceStatistics:
    """Expression-length summary; moments are None when a subset is empty.

    ``total_tokens`` and ``unique_token_types`` are both reported because
    published corpus summaries sometimes label token totals as "types"; the
    two differ by an order of magnitude on short-expression corpora.
    """

    n_instances: int
    n_visual: int
    n_blindfolded: int
    mean_tokens: float | None
    std_tokens: float | None
    visual_mean: float | None
    visual_std: float | None
    blindfolded_mean: float | None
    blindfolded_std: float | None
    total_tokens: int
    unique_token_types: int

    def to_dict(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "n_visual": self.n_visual,
            "n_blindfolded": self.n_blindfolded,
            "mean_tokens": self.mean_tokens,
            "std_tokens": self.std_tokens,
            "visual_mean": self.visual_mean,
            "visual_std": self.visual_std,
            "blindfolded_mean": self.blindfolded_mean,
            "blindfolded_std": self.blindfolded_std,
            "total_tokens": self.total_tokens,
            "unique_token_types": self.unique_token_types,
        }


def instance_statistics(instances: Sequence[TaskInstance]) -> InstanceStatistics:
    """Token-count statistics over instance expressions (population stddev)."""
    all_counts: list[int] = []
    by_mode: dict[Mode, list[int]] = {Mode.VISUAL: [], Mode.BLINDFOLDED: []}
    types: set[str] = set()
    total_tokens = 0
    for inst in instances:
        tokens = inst.expression.text.split()
        total_tokens += len(tokens)
        types.update(token.casefold() for token in tokens)
        all_counts.append(inst.expression.token_count)
        by_mode[inst.expression.mode].append(inst.expression.token_count)

    mean, std = _moments(all_counts)
    vis_mean, vis_std = _moments(by_mode[Mode.VISUAL])
    blind_mean, blind_std = _moments(by_mode[Mode.BLINDFOLDED])
    return InstanceStatistics(
        n_instances=len(all_counts),
        n_visual=len(by_mode[Mode.VISUAL]),
        n_blindfolded=len(by_mode[Mode.BLINDFOLDED]),
        mean_tokens=mean,
        std_tokens=std,
        visual_mean=vis_mean,
        visual_std=vis_std,
        blindfolded_mean=blind_mean,
        blindfolded_std=blind_std,
        total_tokens=total_tokens,
        unique_token_types=len(types),
    )

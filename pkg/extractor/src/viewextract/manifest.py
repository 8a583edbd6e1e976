"""Reader for the dataset manifest directory.

Two line-delimited JSON files describe what to encode:

* ``objects.jsonl``: one record per object with ``object_id``, ``category``,
  and ``view_key_0`` .. ``view_key_7``.
* ``instances.jsonl``: task instances whose ``expr_id`` / ``text`` pairs
  name the referring expressions. An expression appearing in several
  instances is encoded exactly once; its text must agree everywhere.

Error messages carry ``file:line`` locators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

NUM_VIEWS = 8
OBJECTS_FILE = "objects.jsonl"
INSTANCES_FILE = "instances.jsonl"


class ManifestError(Exception):
    pass


@dataclass(frozen=True)
class ObjectViews:
    """One object and the store keys its eight rendered views will use."""

    object_id: str
    category: str
    view_keys: tuple[str, ...]


@dataclass(frozen=True)
class Manifest:
    objects: tuple[ObjectViews, ...]
    expressions: tuple[tuple[str, str], ...]  # (expr_id, text), first-seen order

    @property
    def n_vision_keys(self) -> int:
        return len(self.objects) * NUM_VIEWS


def _records(path: Path):
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            if not isinstance(record, dict):
                raise ManifestError(f"{path}:{lineno}: record is not an object")
            yield lineno, record


def _field(record: dict, key: str, locator: str) -> str:
    if key not in record:
        raise ManifestError(f"{locator}: missing field {key!r}")
    return str(record[key])


def _read_objects(path: Path) -> tuple[ObjectViews, ...]:
    objects: list[ObjectViews] = []
    seen: set[str] = set()
    for lineno, record in _records(path):
        locator = f"{path}:{lineno}"
        object_id = _field(record, "object_id", locator)
        if object_id in seen:
            raise ManifestError(f"{locator}: duplicate object id {object_id!r}")
        seen.add(object_id)
        views = tuple(_field(record, f"view_key_{k}", locator)
                      for k in range(NUM_VIEWS))
        objects.append(ObjectViews(object_id=object_id,
                                   category=_field(record, "category", locator),
                                   view_keys=views))
    return tuple(objects)


def _read_expressions(path: Path) -> tuple[tuple[str, str], ...]:
    texts: dict[str, str] = {}
    order: list[str] = []
    for lineno, record in _records(path):
        locator = f"{path}:{lineno}"
        expr_id = _field(record, "expr_id", locator)
        text = _field(record, "text", locator)
        if expr_id in texts:
            if texts[expr_id] != text:
                raise ManifestError(
                    f"{locator}: expression {expr_id!r} has conflicting text "
                    f"{text!r} vs {texts[expr_id]!r}"
                )
            continue
        texts[expr_id] = text
        order.append(expr_id)
    return tuple((expr_id, texts[expr_id]) for expr_id in order)


def load_manifest(dataset_dir: str | Path) -> Manifest:
    directory = Path(dataset_dir)
    if not directory.is_dir():
        raise ManifestError(f"dataset directory not found: {directory}")
    objects_path = directory / OBJECTS_FILE
    instances_path = directory / INSTANCES_FILE
    for path in (objects_path, instances_path):
        if not path.is_file():
            raise ManifestError(f"manifest file not found: {path}")
    return Manifest(objects=_read_objects(objects_path),
                    expressions=_read_expressions(instances_path))

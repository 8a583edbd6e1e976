"""Category fold splitting and corpus analysis tools.

Covers the two dataset-construction procedures the benchmark depends on:

* assigning object categories to train/val/test folds by word-embedding
  similarity so related categories land together, with the cross-category
  pair usability rules that follow from the folds, and
* estimating how often expressions use color words vs shape words via a
  precomputed hypernym closure of a lexical taxonomy.
"""

from __future__ import annotations

import math
import re
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Fold, FoldAssignment, Mode, ReferringExpression

PAIR_CLASSES = ("train-train", "val-val", "train-val", "test-test", "excluded")
# The three same-fold classes; their expression total is the percentage base.
_USABLE_CLASSES = ("train-train", "val-val", "test-test")


class VectorFileError(Exception):
    pass


class WordVectorTable:
    """Dense word vectors from the standard text format: one token followed
    by its space-separated components per line; dimension set by the first
    line. Lookups are case-folded."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int) -> None:
        self.vectors = vectors
        self.dim = dim

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, word: str) -> bool:
        return word.casefold() in self.vectors

    def lookup(self, word: str) -> np.ndarray | None:
        return self.vectors.get(word.casefold())

    @classmethod
    def read(cls, path: str | Path) -> "WordVectorTable":
        vectors: dict[str, np.ndarray] = {}
        dim = 0
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    if line.strip() == "":
                        continue
                    raise VectorFileError(f"{path}:{lineno}: no vector components")
                word = parts[0].casefold()
                try:
                    vec = np.asarray([float(p) for p in parts[1:]], dtype=np.float64)
                except ValueError:
                    raise VectorFileError(
                        f"{path}:{lineno}: non-numeric vector component"
                    ) from None
                if dim == 0:
                    dim = vec.size
                elif vec.size != dim:
                    raise VectorFileError(
                        f"{path}:{lineno}: dimension {vec.size} != {dim}"
                    )
                vectors[word] = vec
        if not vectors:
            raise VectorFileError(f"{path}: empty vector file")
        return cls(vectors, dim)


def descriptor_tokens(category: str) -> list[str]:
    """Tokens of a category name: split camel case, lowercase, drop digits."""
    spaced = re.sub(r"(?<=[a-z0-9])(?=[A-Z])", " ", category)
    tokens = []
    for raw in re.split(r"[\s_\-]+", spaced):
        cleaned = re.sub(r"\d+", "", raw).casefold()
        if cleaned:
            tokens.append(cleaned)
    return tokens


def default_descriptor(category: str) -> str:
    """Single descriptive word for a category: its last name token."""
    tokens = descriptor_tokens(category)
    return tokens[-1] if tokens else category.casefold()


@dataclass(frozen=True)
class CategorySpec:
    """One object category entering the fold split."""

    name: str
    descriptor: str
    object_count: int

    def __post_init__(self) -> None:
        if self.object_count < 0:
            raise ValueError(f"category {self.name!r}: negative object count")


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b) / (na * nb)


def _descriptor_vector(spec: CategorySpec, vectors: WordVectorTable) -> np.ndarray | None:
    vec = vectors.lookup(spec.descriptor)
    if vec is not None:
        return vec
    token_vecs = [vectors.lookup(t) for t in descriptor_tokens(spec.name)]
    token_vecs = [v for v in token_vecs if v is not None]
    if token_vecs:
        return np.mean(token_vecs, axis=0)
    return None


@dataclass
class _FoldState:
    fold: Fold
    centroid: np.ndarray
    n_members: int = 0
    object_count: int = 0
    capacity: int = 0


def split_folds(categories: Sequence[CategorySpec], vectors: WordVectorTable,
                anchors: Mapping[Fold, str],
                proportions: Mapping[Fold, float] | None = None,
                ) -> tuple[list[FoldAssignment], list[str]]:
    """Assign every category to exactly one fold.

    Fold centroids start at the anchor words' vectors and are updated as the
    running mean over assigned descriptors. Categories are processed in
    descending object count (name as tiebreak); each goes to the fold whose
    centroid has maximum cosine similarity with its descriptor, skipping
    folds already at their object-count capacity. Deterministic in its
    inputs. Returns assignments plus warnings for categories that fell back
    to size balancing because no vector could be found.
    """
    if len(categories) == 0:
        return [], []
    names = [c.name for c in categories]
    if len(set(names)) != len(names):
        raise ValueError("duplicate category names in fold split input")
    if proportions is None:
        proportions = {Fold.TRAIN: 0.78, Fold.VAL: 0.05, Fold.TEST: 0.17}

    total_objects = sum(c.object_count for c in categories)
    states: list[_FoldState] = []
    for fold in (Fold.TRAIN, Fold.VAL, Fold.TEST):
        anchor_word = anchors.get(fold)
        if anchor_word is None:
            raise ValueError(f"no anchor word for fold {fold.value}")
        anchor_vec = vectors.lookup(anchor_word)
        if anchor_vec is None:
            raise ValueError(
                f"anchor word {anchor_word!r} for fold {fold.value} "
                "is not in the vector table"
            )
        capacity = math.ceil(proportions.get(fold, 0.0) * total_objects)
        states.append(_FoldState(fold=fold, centroid=anchor_vec.copy(),
                                 capacity=max(capacity, 1)))

    order = sorted(categories, key=lambda c: (-c.object_count, c.name))
    assignments: list[FoldAssignment] = []
    warnings: list[str] = []
    for spec in order:
        vec = _descriptor_vector(spec, vectors)
        open_states = [s for s in states if s.object_count < s.capacity]
        if not open_states:
            open_states = states
        if vec is None:
            # No usable vector anywhere: park the category in the fold with
            # the most remaining room so proportions still come out.
            best = max(open_states,
                       key=lambda s: (s.capacity - s.object_count, s.fold.value))
            warnings.append(
                f"category {spec.name!r}: descriptor {spec.descriptor!r} has no "
                f"vector and no name-token fallback; balanced into {best.fold.value}"
            )
        else:
            best = max(open_states, key=lambda s: _cosine(vec, s.centroid))
            best.centroid = (best.centroid * (best.n_members + 1) + vec) / (
                best.n_members + 2
            )
            best.n_members += 1
        best.object_count += spec.object_count
        assignments.append(FoldAssignment(category=spec.name, fold=best.fold))

    assignments.sort(key=lambda a: a.category)
    return assignments, warnings


@dataclass(frozen=True)
class PairInfo:
    """A cross-category object pairing and how many expressions it carries."""

    category_x: str
    category_y: str
    n_expressions: int = 1


def pair_class(fold_x: Fold, fold_y: Fold) -> str:
    if fold_x is fold_y:
        return f"{fold_x.value}-{fold_x.value}"
    if {fold_x, fold_y} == {Fold.TRAIN, Fold.VAL}:
        return "train-val"
    return "excluded"


@dataclass
class PairFoldReport:
    """Counts of object pairs and of their expressions by pair class."""

    pair_counts: dict[str, int] = field(
        default_factory=lambda: {c: 0 for c in PAIR_CLASSES})
    expression_counts: dict[str, int] = field(
        default_factory=lambda: {c: 0 for c in PAIR_CLASSES})

    @property
    def total_pairs(self) -> int:
        return sum(self.pair_counts.values())

    @property
    def total_expressions(self) -> int:
        return sum(self.expression_counts.values())

    @property
    def usable_expressions(self) -> int:
        return sum(self.expression_counts[c] for c in _USABLE_CLASSES)

    def percentages(self) -> dict[str, str]:
        """Expression share of each non-excluded class, as printed strings.

        The base is the same-fold expression total; shares at or above one
        percent carry one decimal, smaller ones two.
        """
        base = self.usable_expressions
        out = {}
        for cls in PAIR_CLASSES[:-1]:
            out[cls] = format_pct(
                100.0 * self.expression_counts[cls] / base if base else 0.0
            )
        return out

    def to_dict(self) -> dict:
        return {
            "pair_counts": dict(self.pair_counts),
            "expression_counts": dict(self.expression_counts),
            "percentages": self.percentages(),
        }


def format_pct(value: float) -> str:
    """One decimal at or above 1 percent, two below."""
    return f"{value:.1f}" if value >= 1.0 else f"{value:.2f}"


def classify_pairs(pairs: Sequence[PairInfo],
                   assignments: Mapping[str, Fold],
                   ) -> tuple[PairFoldReport, list[tuple[PairInfo, str]]]:
    """Bucket every category pair by its folds' usability class.

    Train-val pairs are usable only when training a final model for the test
    fold; pairs crossing into test are excluded everywhere.
    """
    report = PairFoldReport()
    flagged: list[tuple[PairInfo, str]] = []
    for pair in pairs:
        for cat in (pair.category_x, pair.category_y):
            if cat not in assignments:
                raise KeyError(f"category {cat!r} has no fold assignment")
        cls = pair_class(assignments[pair.category_x], assignments[pair.category_y])
        report.pair_counts[cls] += 1
        report.expression_counts[cls] += pair.n_expressions
        flagged.append((pair, cls))
    return report, flagged


class HypernymClosure:
    """Word → ancestor-concept sets, precomputed from a lexical taxonomy.

    The source file holds one ``word<TAB>ancestor`` pair per line (any
    whitespace separates the two fields); multiple senses of a word merge
    into one ancestor set, so a word counts as a hyponym of a target if any
    of its senses is. A word is never its own ancestor.
    """

    def __init__(self, ancestors: dict[str, frozenset[str]]) -> None:
        self.ancestors = ancestors

    def __len__(self) -> int:
        return len(self.ancestors)

    @classmethod
    def read(cls, path: str | Path) -> "HypernymClosure":
        table: dict[str, set[str]] = {}
        with open(path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'word ancestor'")
                word, ancestor = parts[0].casefold(), parts[1].casefold()
                if word == ancestor:
                    raise ValueError(f"{path}:{lineno}: {word!r} listed as its own ancestor")
                table.setdefault(word, set()).add(ancestor)
        return cls({w: frozenset(a) for w, a in table.items()})

    def is_hyponym(self, token: str, target: str) -> bool:
        return target.casefold() in self.ancestors.get(_clean_token(token), ())


def _clean_token(token: str) -> str:
    return token.casefold().strip(string.punctuation)


@dataclass(frozen=True)
class LexicalProfile:
    """Per-annotation-mode share of tokens under each target concept."""

    targets: tuple[str, ...]
    token_totals: dict[str, int]
    hyponym_counts: dict[str, dict[str, int]]

    def percent(self, mode: str, target: str) -> float:
        total = self.token_totals[mode]
        if total == 0:
            return 0.0
        return 100.0 * self.hyponym_counts[mode][target] / total

    @property
    def empty_modes(self) -> tuple[str, ...]:
        """Modes with a zero token denominator, flagged rather than hidden."""
        return tuple(m for m, n in self.token_totals.items() if n == 0)

    def to_dict(self) -> dict:
        return {
            "targets": list(self.targets),
            "token_totals": dict(self.token_totals),
            "hyponym_counts": {m: dict(c) for m, c in self.hyponym_counts.items()},
            "percent": {
                m: {t: self.percent(m, t) for t in self.targets}
                for m in self.token_totals
            },
            "empty_modes": list(self.empty_modes),
        }


def lexical_profile(expressions: Iterable[ReferringExpression],
                    closure: HypernymClosure,
                    targets: Sequence[str] = ("color", "shape"),
                    ) -> LexicalProfile:
    """Count what fraction of expression tokens fall under each target.

    Denominators are all whitespace tokens of the mode's expressions; tokens
    missing from the closure simply count as non-hyponyms.
    """
    modes = [m.value for m in Mode]
    token_totals = {m: 0 for m in modes}
    hyponym_counts = {m: {t: 0 for t in targets} for m in modes}
    for expr in expressions:
        mode = expr.mode.value
        for token in expr.text.split():
            token_totals[mode] += 1
            for target in targets:
                if closure.is_hyponym(token, target):
                    hyponym_counts[mode][target] += 1
    return LexicalProfile(
        targets=tuple(targets),
        token_totals=token_totals,
        hyponym_counts=hyponym_counts,
    )

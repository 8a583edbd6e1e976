"""Dataset model: view ring arithmetic, record validation, manifest I/O,
fold derivation, and expression statistics."""

import json
import math

import pytest

from viewmatch.data import (
    NUM_VIEWS,
    Dataset,
    DatasetError,
    Fold,
    Mode,
    ObjectEntry,
    Referent,
    ReferringExpression,
    TaskInstance,
    check_view_index,
    instance_statistics,
    load_dataset,
    successor_view,
    write_dataset,
)


def _object(object_id, category="chair"):
    return ObjectEntry(object_id, category,
                       tuple(f"{object_id}/v{k}" for k in range(NUM_VIEWS)))


def _instance(instance_id, obj_a, obj_b, gold=Referent.A, mode=Mode.VISUAL,
              text="a plain chair"):
    return TaskInstance(
        instance_id=instance_id,
        expression=ReferringExpression(f"expr-{instance_id}", text, mode),
        object_a=obj_a,
        object_b=obj_b,
        gold=gold,
    )


class TestViewRing:
    def test_ring_size(self):
        assert NUM_VIEWS == 8

    def test_valid_indices_pass_through(self):
        for v in range(NUM_VIEWS):
            assert check_view_index(v) == v

    @pytest.mark.parametrize("bad", [-1, 8, 100])
    def test_out_of_ring_rejected(self, bad):
        with pytest.raises(ValueError):
            check_view_index(bad)

    def test_successor_steps_by_one(self):
        for v in range(NUM_VIEWS - 1):
            assert successor_view(v) == v + 1

    def test_successor_wraps(self):
        assert successor_view(NUM_VIEWS - 1) == 0

    def test_eight_successors_return_home(self):
        v = 3
        for _ in range(NUM_VIEWS):
            v = successor_view(v)
        assert v == 3


class TestRecords:
    def test_object_requires_eight_views(self):
        with pytest.raises(ValueError):
            ObjectEntry("o1", "chair", ("a", "b", "c"))

    def test_object_rejects_duplicate_view_keys(self):
        with pytest.raises(ValueError):
            ObjectEntry("o1", "chair", ("k",) * NUM_VIEWS)

    def test_expression_rejects_empty_text(self):
        with pytest.raises(ValueError):
            ReferringExpression("e1", "   ", Mode.VISUAL)

    def test_token_count_splits_on_whitespace(self):
        expr = ReferringExpression("e1", "the  tall   red chair", Mode.VISUAL)
        assert expr.token_count == 4

    def test_instance_rejects_self_pair(self):
        obj = _object("o1")
        with pytest.raises(ValueError):
            _instance("i1", obj, obj)

    def test_gold_and_distractor_objects(self):
        a, b = _object("o1"), _object("o2")
        inst = _instance("i1", a, b, gold=Referent.B)
        assert inst.gold_object is b
        assert inst.distractor_object is a


class TestFoldDerivation:
    def _dataset(self, folds):
        a = _object("o1", "chair")
        b = _object("o2", "bed")
        inst = _instance("i1", a, b)
        return Dataset(instances=(inst,), objects={"o1": a, "o2": b}, folds=folds)

    def test_same_fold_pair_gets_that_fold(self):
        ds = self._dataset({"chair": Fold.TRAIN, "bed": Fold.TRAIN})
        assert ds.instance_fold(ds.instances[0]) == "train"

    def test_train_val_pair_is_flagged(self):
        ds = self._dataset({"chair": Fold.TRAIN, "bed": Fold.VAL})
        assert ds.instance_fold(ds.instances[0]) == "train-val"

    @pytest.mark.parametrize("other", [Fold.TRAIN, Fold.VAL])
    def test_test_cross_pair_is_excluded(self, other):
        ds = self._dataset({"chair": other, "bed": Fold.TEST})
        assert ds.instance_fold(ds.instances[0]) == "excluded"

    def test_missing_assignment_is_an_error(self):
        ds = self._dataset({"chair": Fold.TRAIN})
        with pytest.raises(DatasetError, match="bed"):
            ds.instance_fold(ds.instances[0])

    def test_no_folds_at_all_is_an_error(self):
        ds = self._dataset(None)
        with pytest.raises(DatasetError):
            ds.instance_fold(ds.instances[0])

    def test_fold_counts_sum_to_total(self, match_fixture):
        counts = match_fixture.dataset.fold_counts()
        assert sum(counts.values()) == len(match_fixture.dataset.instances)

    def test_instances_in_fold_partition(self, match_fixture):
        ds = match_fixture.dataset
        gathered = []
        for fold in ds.fold_counts():
            gathered += [i.instance_id for i in ds.instances_in_fold(fold)]
        assert sorted(gathered) == sorted(i.instance_id for i in ds.instances)


class TestManifestRoundTrip:
    def test_write_load_preserves_everything(self, match_fixture, tmp_path):
        ds = match_fixture.dataset
        write_dataset(ds, tmp_path)
        loaded = load_dataset(tmp_path)
        assert loaded.instances == ds.instances
        assert loaded.objects == ds.objects
        assert loaded.folds == ds.folds

    def test_rewrite_is_byte_identical(self, match_fixture, tmp_path):
        first = tmp_path / "first"
        second = tmp_path / "second"
        write_dataset(match_fixture.dataset, first)
        write_dataset(load_dataset(first), second)
        for name in ("objects.jsonl", "instances.jsonl", "folds.jsonl"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            load_dataset(tmp_path / "nope")

    def test_missing_instances_file(self, tmp_path):
        (tmp_path / "objects.jsonl").write_text("")
        with pytest.raises(DatasetError, match="instances.jsonl"):
            load_dataset(tmp_path)


class TestLoaderDiagnostics:
    """Malformed records are rejected with a file:line locator."""

    def _write(self, tmp_path, objects_lines, instance_lines):
        (tmp_path / "objects.jsonl").write_text("\n".join(objects_lines) + "\n")
        (tmp_path / "instances.jsonl").write_text("\n".join(instance_lines) + "\n")

    def _object_line(self, object_id="o1", category="chair"):
        record = {"object_id": object_id, "category": category}
        for k in range(NUM_VIEWS):
            record[f"view_key_{k}"] = f"{object_id}/v{k}"
        return json.dumps(record)

    def _instance_line(self, **overrides):
        record = {
            "instance_id": "i1", "expr_id": "e1", "text": "a chair",
            "mode": "visual", "object_a_id": "o1", "object_b_id": "o2",
            "gold": "a", "category_a": "chair", "category_b": "chair",
        }
        record.update(overrides)
        return json.dumps(record)

    def test_unknown_object_reference(self, tmp_path):
        self._write(tmp_path, [self._object_line("o1")],
                    [self._instance_line(object_b_id="ghost")])
        with pytest.raises(DatasetError, match=r"instances\.jsonl:1.*ghost"):
            load_dataset(tmp_path)

    def test_category_disagreement(self, tmp_path):
        self._write(tmp_path,
                    [self._object_line("o1"), self._object_line("o2")],
                    [self._instance_line(category_b="sofa")])
        with pytest.raises(DatasetError, match="disagrees"):
            load_dataset(tmp_path)

    def test_duplicate_instance_id(self, tmp_path):
        self._write(tmp_path,
                    [self._object_line("o1"), self._object_line("o2")],
                    [self._instance_line(), self._instance_line()])
        with pytest.raises(DatasetError, match=r"instances\.jsonl:2"):
            load_dataset(tmp_path)

    def test_duplicate_object_id(self, tmp_path):
        self._write(tmp_path, [self._object_line("o1"), self._object_line("o1")],
                    [])
        with pytest.raises(DatasetError, match=r"objects\.jsonl:2"):
            load_dataset(tmp_path)

    def test_unknown_mode(self, tmp_path):
        self._write(tmp_path,
                    [self._object_line("o1"), self._object_line("o2")],
                    [self._instance_line(mode="audio")])
        with pytest.raises(DatasetError, match="audio"):
            load_dataset(tmp_path)

    def test_bad_gold_value(self, tmp_path):
        self._write(tmp_path,
                    [self._object_line("o1"), self._object_line("o2")],
                    [self._instance_line(gold="c")])
        with pytest.raises(DatasetError, match="gold"):
            load_dataset(tmp_path)

    def test_missing_field(self, tmp_path):
        record = json.loads(self._instance_line())
        del record["text"]
        self._write(tmp_path,
                    [self._object_line("o1"), self._object_line("o2")],
                    [json.dumps(record)])
        with pytest.raises(DatasetError, match="text"):
            load_dataset(tmp_path)

    def test_invalid_json(self, tmp_path):
        self._write(tmp_path, [self._object_line("o1")], ["{not json"])
        with pytest.raises(DatasetError, match=r"instances\.jsonl:1"):
            load_dataset(tmp_path)


class TestInstanceStatistics:
    def _corpus(self):
        a, b = _object("o1"), _object("o2")
        texts = [
            ("one two three", Mode.VISUAL),        # 3 tokens
            ("one two three four five", Mode.VISUAL),  # 5 tokens
            ("one two", Mode.BLINDFOLDED),         # 2 tokens
            ("one two three four", Mode.BLINDFOLDED),  # 4 tokens
        ]
        return [
            _instance(f"i{k}", a, b, mode=mode, text=text)
            for k, (text, mode) in enumerate(texts)
        ]

    def test_counts_and_moments(self):
        stats = instance_statistics(self._corpus())
        assert stats.n_instances == 4
        assert stats.n_visual == 2
        assert stats.n_blindfolded == 2
        # Token counts 3,5,2,4: population mean 3.5, variance 1.25.
        assert stats.mean_tokens == pytest.approx(3.5)
        assert stats.std_tokens == pytest.approx(math.sqrt(1.25))
        assert stats.visual_mean == pytest.approx(4.0)
        assert stats.blindfolded_mean == pytest.approx(3.0)

    def test_token_totals_and_types(self):
        stats = instance_statistics(self._corpus())
        assert stats.total_tokens == 3 + 5 + 2 + 4
        # Types casefold: one, two, three, four, five.
        assert stats.unique_token_types == 5

    def test_empty_corpus_has_no_moments(self):
        stats = instance_statistics([])
        assert stats.n_instances == 0
        assert stats.mean_tokens is None
        assert stats.std_tokens is None
        assert stats.total_tokens == 0

    def test_single_mode_leaves_other_empty(self):
        a, b = _object("o1"), _object("o2")
        stats = instance_statistics([_instance("i0", a, b, mode=Mode.VISUAL)])
        assert stats.blindfolded_mean is None
        assert stats.visual_mean == pytest.approx(3.0)

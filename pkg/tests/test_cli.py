"""End-to-end command-line runs: exit codes, artifacts, and reproducibility."""

import json
from types import SimpleNamespace

import pytest

from viewmatch.cli import main
from viewmatch.heads import new_view_head, save_checkpoint
from viewmatch.store import FeatureStore
from viewmatch.synth import write_fixture


def _run(*argv) -> int:
    return main([str(a) for a in argv])


def _read_json(path):
    return json.loads(path.read_text())


def _read_lines(path):
    return path.read_text().splitlines()


@pytest.fixture(scope="module")
def ws(match_fixture, tmp_path_factory):
    """A fixture dataset on disk plus a training config and word vectors."""
    root = tmp_path_factory.mktemp("cliws")
    dataset_dir, store_path = write_fixture(match_fixture, root)
    config_path = root / "config.json"
    config_path.write_text(json.dumps({
        "epochs": 2, "batch_size": 16, "learning_rate": 0.01, "seed": 1,
    }))
    vectors_path = root / "vectors.txt"
    vectors_path.write_text(
        "locomotive 1.0 0.0 0.0\n"
        "beast 0.0 1.0 0.0\n"
        "bench 0.0 0.0 1.0\n"
        "train 0.9 0.1 0.0\n"
        "heldout 0.1 0.9 0.0\n"
    )
    return SimpleNamespace(
        root=root,
        dataset=dataset_dir,
        store=store_path,
        config=config_path,
        vectors=vectors_path,
        n_train=len(match_fixture.train),
        n_held=len(match_fixture.held_out),
        fixture=match_fixture,
    )


@pytest.fixture(scope="module")
def trained_ckpt(ws, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    code = _run("train", "--config", ws.config, "--dataset", ws.dataset,
                "--store", ws.store, "--mode", "match",
                "--fold", "train", "--val-fold", "val", "--out", out)
    assert code == 0
    return out / "match_head.ckpt"


class TestSplit:
    _ANCHORS = "train=locomotive,val=beast,test=bench"

    def _split(self, ws, out):
        return _run("split", "--dataset", ws.dataset, "--vectors", ws.vectors,
                    "--anchors", self._ANCHORS, "--out", out)

    def test_assigns_folds_by_descriptor_similarity(self, ws, tmp_path, capsys):
        assert self._split(ws, tmp_path) == 0
        folds = {r["category"]: r["fold"]
                 for r in map(json.loads, _read_lines(tmp_path / "folds.jsonl"))}
        assert folds == {"synth-train": "train", "synth-heldout": "val"}
        report = _read_json(tmp_path / "pair_report.json")
        assert report["expression_counts"]["train-train"] == ws.n_train
        assert report["expression_counts"]["val-val"] == ws.n_held
        assert report["pair_counts"]["excluded"] == 0
        out = capsys.readouterr().out
        assert "train-train" in out

    def test_rerun_is_byte_identical(self, ws, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert self._split(ws, a) == 0
        assert self._split(ws, b) == 0
        for name in ("folds.jsonl", "pair_report.json", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_missing_vectors_file_is_usage_error(self, ws, tmp_path, capsys):
        missing = tmp_path / "nowhere" / "vectors.txt"
        code = _run("split", "--dataset", ws.dataset, "--vectors", missing,
                    "--anchors", self._ANCHORS, "--out", tmp_path / "out")
        assert code == 2
        assert str(missing) in capsys.readouterr().err

    def test_malformed_anchors_rejected(self, ws, tmp_path, capsys):
        code = _run("split", "--dataset", ws.dataset, "--vectors", ws.vectors,
                    "--anchors", "train:locomotive", "--out", tmp_path / "out")
        assert code == 2
        assert "key=value" in capsys.readouterr().err

    def test_unknown_fold_name_rejected(self, ws, tmp_path):
        code = _run("split", "--dataset", ws.dataset, "--vectors", ws.vectors,
                    "--anchors", "train=locomotive,val=beast,holdout=bench",
                    "--out", tmp_path / "out")
        assert code == 2

    def test_manifest_shape(self, ws, tmp_path):
        assert self._split(ws, tmp_path) == 0
        manifest = _read_json(tmp_path / "manifest.json")
        assert manifest["command"] == "split"
        assert manifest["outputs"] == ["folds.jsonl", "pair_report.json"]
        assert str(ws.vectors) in manifest["input_digests"]
        digest = manifest["input_digests"][str(ws.vectors)]
        assert len(digest) == 64 and int(digest, 16) >= 0
        assert not any("time" in key for key in manifest)


class TestTrain:
    def test_match_training_writes_artifacts(self, trained_ckpt, capsys):
        out_dir = trained_ckpt.parent
        assert trained_ckpt.is_file()
        assert (out_dir / "records.jsonl").is_file()
        manifest = _read_json(out_dir / "manifest.json")
        assert manifest["command"] == "train:match"
        assert manifest["seed"] == 1
        assert manifest["config"]["epochs"] == 2

    def test_records_track_validation(self, trained_ckpt):
        records = [json.loads(line)
                   for line in _read_lines(trained_ckpt.parent / "records.jsonl")]
        assert len(records) == 2
        assert records[-1]["val_accuracy"] == 1.0

    def test_rerun_is_byte_identical(self, ws, tmp_path, trained_ckpt):
        out = tmp_path / "again"
        code = _run("train", "--config", ws.config, "--dataset", ws.dataset,
                    "--store", ws.store, "--mode", "match",
                    "--fold", "train", "--val-fold", "val", "--out", out)
        assert code == 0
        for name in ("match_head.ckpt", "records.jsonl", "manifest.json"):
            assert (out / name).read_bytes() == \
                (trained_ckpt.parent / name).read_bytes()

    def test_lagor_without_pretrained_is_usage_error(self, ws, tmp_path, capsys):
        code = _run("train", "--config", ws.config, "--dataset", ws.dataset,
                    "--store", ws.store, "--mode", "lagor",
                    "--out", tmp_path / "out")
        assert code == 2
        assert "--pretrained" in capsys.readouterr().err

    def test_lagor_writes_both_heads(self, ws, tmp_path, trained_ckpt):
        out = tmp_path / "joint"
        code = _run("train", "--config", ws.config, "--dataset", ws.dataset,
                    "--store", ws.store, "--mode", "lagor",
                    "--pretrained", trained_ckpt, "--fold", "train",
                    "--out", out)
        assert code == 0
        assert (out / "match_head.ckpt").is_file()
        assert (out / "view_head.ckpt").is_file()
        records = [json.loads(line) for line in _read_lines(out / "records.jsonl")]
        assert records[0]["view_loss"] > 0.0

    def test_bad_config_value_is_usage_error(self, ws, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"epochs": 0}))
        code = _run("train", "--config", bad, "--dataset", ws.dataset,
                    "--store", ws.store, "--mode", "match",
                    "--out", tmp_path / "out")
        assert code == 2
        assert "epochs" in capsys.readouterr().err

    def test_unparseable_config_is_usage_error(self, ws, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = _run("train", "--config", bad, "--dataset", ws.dataset,
                    "--store", ws.store, "--mode", "match",
                    "--out", tmp_path / "out")
        assert code == 2

    def test_missing_dataset_dir_is_usage_error(self, ws, tmp_path):
        code = _run("train", "--config", ws.config,
                    "--dataset", tmp_path / "nope", "--store", ws.store,
                    "--mode", "match", "--out", tmp_path / "out")
        assert code == 2

    def test_missing_embedding_is_data_error(self, ws, tmp_path, capsys):
        source = FeatureStore.read(ws.store)
        broken = FeatureStore(encoder=source.encoder, dim=source.dim,
                              normalized=source.normalized)
        for key in source.language_keys():
            if key != "expr-0000":
                broken.add_language(key, source.lookup_language(key))
        for object_id, view in source.vision_keys():
            broken.add_view(object_id, view, source.lookup_view(object_id, view))
        broken_path = tmp_path / "broken.snrf"
        broken.write(broken_path)
        code = _run("train", "--config", ws.config, "--dataset", ws.dataset,
                    "--store", broken_path, "--mode", "match",
                    "--fold", "train", "--out", tmp_path / "out")
        assert code == 3
        assert "expr-0000" in capsys.readouterr().err


class TestEval:
    def test_zero_shot_on_separable_data_is_perfect(self, ws, tmp_path, capsys):
        code = _run("eval", "--checkpoint", "zeroshot", "--dataset", ws.dataset,
                    "--store", ws.store, "--views", "single", "--seed", "4",
                    "--out", tmp_path)
        assert code == 0
        report = _read_json(tmp_path / "report.json")
        assert report["accuracy"] == 100.0
        assert report["total"] == ws.n_train + ws.n_held
        assert len(_read_lines(tmp_path / "predictions.jsonl")) == report["total"]
        assert "zero-shot" in capsys.readouterr().out

    def test_rerun_is_byte_identical(self, ws, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = _run("eval", "--checkpoint", "zeroshot",
                        "--dataset", ws.dataset, "--store", ws.store,
                        "--views", "two", "--seed", "9", "--fold", "val",
                        "--out", out)
            assert code == 0
            outs.append(out)
        for name in ("report.json", "predictions.jsonl", "manifest.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_sampled_views_demand_a_seed(self, ws, tmp_path, capsys):
        code = _run("eval", "--checkpoint", "zeroshot", "--dataset", ws.dataset,
                    "--store", ws.store, "--views", "two", "--out", tmp_path)
        assert code == 2
        assert "--seed" in capsys.readouterr().err

    def test_all_views_need_no_seed(self, ws, tmp_path):
        code = _run("eval", "--checkpoint", "zeroshot", "--dataset", ws.dataset,
                    "--store", ws.store, "--views", "all8", "--out", tmp_path)
        assert code == 0
        assert _read_json(tmp_path / "report.json")["accuracy"] == 100.0

    def test_trained_checkpoint_evaluates(self, ws, tmp_path, trained_ckpt):
        code = _run("eval", "--checkpoint", trained_ckpt, "--dataset", ws.dataset,
                    "--store", ws.store, "--views", "single", "--seed", "4",
                    "--fold", "val", "--out", tmp_path)
        assert code == 0
        report = _read_json(tmp_path / "report.json")
        assert report["model"] == "match"
        assert report["total"] == ws.n_held
        assert report["accuracy"] == 100.0

    def test_missing_checkpoint_is_usage_error(self, ws, tmp_path):
        code = _run("eval", "--checkpoint", tmp_path / "none.ckpt",
                    "--dataset", ws.dataset, "--store", ws.store,
                    "--views", "all8", "--out", tmp_path)
        assert code == 2

    def test_empty_fold_is_data_error(self, ws, tmp_path, capsys):
        code = _run("eval", "--checkpoint", "zeroshot", "--dataset", ws.dataset,
                    "--store", ws.store, "--views", "all8", "--fold", "test",
                    "--out", tmp_path)
        assert code == 3
        assert "test" in capsys.readouterr().err

    def test_corrupt_instances_file_is_data_error(self, ws, tmp_path, capsys):
        broken = tmp_path / "dataset"
        broken.mkdir()
        for name in ("objects.jsonl", "instances.jsonl", "folds.jsonl"):
            (broken / name).write_bytes((ws.dataset / name).read_bytes())
        with open(broken / "instances.jsonl", "a") as handle:
            handle.write("not json\n")
        code = _run("eval", "--checkpoint", "zeroshot", "--dataset", broken,
                    "--store", ws.store, "--views", "all8", "--out", tmp_path)
        assert code == 3
        assert "instances.jsonl" in capsys.readouterr().err


class TestVerify:
    def test_default_run_passes(self, capsys):
        assert _run("verify", "--probes", "16") == 0
        out = capsys.readouterr().out
        assert "PASS gradient-check match head" in out
        assert "PASS gradient-check view head" in out
        assert "PASS store round-trip (empty)" in out
        assert "all 5 checks passed" in out
        assert "FAIL" not in out

    def test_unreachable_tolerance_fails(self, capsys):
        assert _run("verify", "--probes", "8", "--tolerance", "1e-14") == 4
        captured = capsys.readouterr()
        assert "FAIL gradient-check" in captured.out
        assert "error:" in captured.err

    def test_valid_checkpoint_adds_a_check(self, trained_ckpt, capsys):
        assert _run("verify", "--probes", "8", "--checkpoint", trained_ckpt) == 0
        assert "all 6 checks passed" in capsys.readouterr().out

    def test_corrupt_checkpoint_fails(self, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"VMHD" + b"\x00" * 4)
        assert _run("verify", "--probes", "8", "--checkpoint", bad) == 4
        assert "FAIL checkpoint load" in capsys.readouterr().out


class TestStats:
    def test_writes_overall_and_per_fold(self, ws, tmp_path, capsys):
        code = _run("stats", "--dataset", ws.dataset, "--out", tmp_path)
        assert code == 0
        stats = _read_json(tmp_path / "stats.json")
        total = ws.n_train + ws.n_held
        assert stats["overall"]["n_instances"] == total
        assert set(stats["by_fold"]) == {"train", "val"}
        assert stats["by_fold"]["val"]["n_instances"] == ws.n_held
        assert f"instances={total}" in capsys.readouterr().out

    def test_lexical_profile_from_closure(self, ws, tmp_path):
        closure = tmp_path / "closure.tsv"
        closure.write_text(
            "angular\tshape\nrounded\tshape\nboxy\tshape\n"
            "the\tdeterminer\n"
        )
        code = _run("stats", "--dataset", ws.dataset, "--closure", closure,
                    "--targets", "shape,determiner", "--out", tmp_path)
        assert code == 0
        lexical = _read_json(tmp_path / "stats.json")["lexical"]
        assert lexical["targets"] == ["shape", "determiner"]
        assert lexical["percent"]["visual"]["determiner"] > 0.0
        assert lexical["percent"]["visual"]["shape"] > 0.0

    def test_rerun_is_byte_identical(self, ws, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert _run("stats", "--dataset", ws.dataset, "--out", a) == 0
        assert _run("stats", "--dataset", ws.dataset, "--out", b) == 0
        for name in ("stats.json", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestRotateReport:
    def test_writes_deltas_and_summary(self, ws, tmp_path, trained_ckpt):
        code = _run("rotate-report", "--checkpoint", trained_ckpt,
                    "--dataset", ws.dataset, "--store", ws.store,
                    "--seed", "3", "--fold", "val", "--out", tmp_path)
        assert code == 0
        deltas = [json.loads(line)
                  for line in _read_lines(tmp_path / "rotations.jsonl")]
        assert len(deltas) == ws.n_held
        summary = _read_json(tmp_path / "rotation_summary.json")
        assert summary["n"] == ws.n_held
        assert summary["undefined_percent"] + len(
            [d for d in deltas if d["percent"] is not None]) == summary["n"]

    def test_rerun_is_byte_identical(self, ws, tmp_path, trained_ckpt):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert _run("rotate-report", "--checkpoint", trained_ckpt,
                        "--dataset", ws.dataset, "--store", ws.store,
                        "--seed", "3", "--fold", "val", "--out", out) == 0
            outs.append(out)
        for name in ("rotations.jsonl", "rotation_summary.json", "manifest.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_whole_turn_step_is_usage_error(self, ws, tmp_path, trained_ckpt, capsys):
        code = _run("rotate-report", "--checkpoint", trained_ckpt,
                    "--dataset", ws.dataset, "--store", ws.store,
                    "--seed", "3", "--step", "8", "--out", tmp_path)
        assert code == 2
        assert "turn" in capsys.readouterr().err

    def test_view_checkpoint_rejected(self, ws, tmp_path):
        ckpt = tmp_path / "view.ckpt"
        save_checkpoint(new_view_head(0), ckpt)
        code = _run("rotate-report", "--checkpoint", ckpt,
                    "--dataset", ws.dataset, "--store", ws.store,
                    "--seed", "3", "--out", tmp_path)
        assert code == 2


class TestParserBasics:
    def test_version_flag(self, capsys):
        assert _run("--version") == 0
        assert capsys.readouterr().out.strip()

    def test_no_subcommand_is_usage_error(self):
        assert main([]) == 2

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["frobnicate"]) == 2

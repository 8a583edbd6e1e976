import json

import pytest

from viewextract.cli import main
from viewmatch.store import FeatureStore


def _run(*argv):
    return main([str(a) for a in argv])


class TestExtractCommand:
    def test_end_to_end(self, corpus, tmp_path, capsys):
        out = tmp_path / "feats.snrf"
        code = _run("--dataset", corpus.dataset, "--images", corpus.images,
                    "--encoder", "hashproj-512", "--out", out)
        assert code == 0
        assert FeatureStore.read(out).n_vision == 8
        report = json.loads(
            (tmp_path / "feats.snrf.report.json").read_text())
        assert report["n_language"] == 2
        assert "8 vision records" in capsys.readouterr().out

    def test_custom_report_path(self, corpus, tmp_path):
        out = tmp_path / "feats.snrf"
        report_path = tmp_path / "extraction.json"
        code = _run("--dataset", corpus.dataset, "--images", corpus.images,
                    "--encoder", "hashproj-512", "--out", out,
                    "--report", report_path)
        assert code == 0
        assert report_path.is_file()

    def test_rerun_is_byte_identical(self, corpus, tmp_path):
        outs = []
        for name in ("a.snrf", "b.snrf"):
            out = tmp_path / name
            assert _run("--dataset", corpus.dataset, "--images", corpus.images,
                        "--encoder", "hashproj-512", "--out", out) == 0
            outs.append(out)
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_missing_dataset_dir_is_usage_error(self, corpus, tmp_path, capsys):
        code = _run("--dataset", tmp_path / "nope", "--images", corpus.images,
                    "--encoder", "hashproj-512", "--out", tmp_path / "f.snrf")
        assert code == 2
        assert "nope" in capsys.readouterr().err

    def test_missing_image_dir_is_usage_error(self, corpus, tmp_path):
        code = _run("--dataset", corpus.dataset, "--images", tmp_path / "nope",
                    "--encoder", "hashproj-512", "--out", tmp_path / "f.snrf")
        assert code == 2

    def test_bad_batch_size_is_usage_error(self, corpus, tmp_path, capsys):
        code = _run("--dataset", corpus.dataset, "--images", corpus.images,
                    "--encoder", "hashproj-512", "--batch-size", "0",
                    "--out", tmp_path / "f.snrf")
        assert code == 2
        assert "--batch-size" in capsys.readouterr().err

    def test_missing_view_image_is_data_error(self, corpus, tmp_path, capsys):
        (corpus.images / "obj00" / "0.png").unlink()
        code = _run("--dataset", corpus.dataset, "--images", corpus.images,
                    "--encoder", "hashproj-512", "--out", tmp_path / "f.snrf")
        assert code == 3
        assert "view 0" in capsys.readouterr().err

    def test_unknown_encoder_is_data_error(self, corpus, tmp_path, capsys):
        code = _run("--dataset", corpus.dataset, "--images", corpus.images,
                    "--encoder", "vit-l14", "--out", tmp_path / "f.snrf")
        assert code == 3
        assert "hashproj-512" in capsys.readouterr().err

    def test_corrupt_manifest_is_data_error(self, corpus, tmp_path):
        with open(corpus.dataset / "objects.jsonl", "a") as handle:
            handle.write("{oops\n")
        code = _run("--dataset", corpus.dataset, "--images", corpus.images,
                    "--encoder", "hashproj-512", "--out", tmp_path / "f.snrf")
        assert code == 3

    def test_version_flag(self, capsys):
        assert _run("--version") == 0
        assert capsys.readouterr().out.strip()

    def test_missing_required_flags(self):
        assert main([]) == 2

"""Dataset manifest parsing, validation, round trip."""

import numpy as np
import pytest

from scriptoria.exceptions import ManifestError
from scriptoria.manifest import (DatasetManifest, load_manifest,
                                 write_manifest)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestLoadManifest:
    def test_basic_rows(self, tmp_path):
        path = tmp_path / "meta.csv"
        write_lines(path, [
            "a/0001.png,w001,train",
            "a/0002.png,w001,test",
            "b/0003.png,w002,train",
        ])
        manifest = load_manifest(path)
        assert len(manifest.entries) == 3
        entry = manifest.entries[0]
        assert entry.path == "a/0001.png"
        assert entry.label == "w001"
        assert entry.split == "train"

    def test_header_and_comments_skipped(self, tmp_path):
        path = tmp_path / "meta.csv"
        write_lines(path, [
            "# writer corpus",
            "path,label,split",
            "a.png,w1,train",
            "",
            "# trailing comment",
            "b.png,w2,test",
        ])
        manifest = load_manifest(path)
        assert [e.path for e in manifest.entries] == ["a.png", "b.png"]

    def test_root_is_manifest_directory(self, tmp_path):
        sub = tmp_path / "deep"
        sub.mkdir()
        path = sub / "meta.csv"
        write_lines(path, ["img.png,w1,train"])
        manifest = load_manifest(path)
        assert manifest.resolve(manifest.entries[0]) == str(sub / "img.png")

    def test_split_subset(self, tmp_path):
        path = tmp_path / "meta.csv"
        write_lines(path, [
            "a.png,w1,train",
            "b.png,w1,test",
            "c.png,w2,train",
        ])
        manifest = load_manifest(path)
        train = manifest.subset("train")
        assert [e.path for e in train.entries] == ["a.png", "c.png"]
        assert manifest.subset("test").entries[0].path == "b.png"

    def test_bad_split_names_line(self, tmp_path):
        path = tmp_path / "meta.csv"
        write_lines(path, ["a.png,w1,train", "b.png,w1,validation"])
        with pytest.raises(ManifestError, match=r":2:.*validation"):
            load_manifest(path)

    def test_wrong_field_count_rejected(self, tmp_path):
        path = tmp_path / "meta.csv"
        write_lines(path, ["a.png,w1,train,extra"])
        with pytest.raises(ManifestError):
            load_manifest(path)

    def test_empty_path_or_label_rejected(self, tmp_path):
        path = tmp_path / "meta.csv"
        write_lines(path, [",w1,train"])
        with pytest.raises(ManifestError):
            load_manifest(path)
        write_lines(path, ["a.png,,train"])
        with pytest.raises(ManifestError):
            load_manifest(path)

    def test_duplicate_path_rejected(self, tmp_path):
        path = tmp_path / "meta.csv"
        write_lines(path, ["a.png,w1,train", "a.png,w2,test"])
        with pytest.raises(ManifestError, match="duplicate"):
            load_manifest(path)

    def test_empty_manifest_rejected(self, tmp_path):
        path = tmp_path / "meta.csv"
        write_lines(path, ["# only a comment"])
        with pytest.raises(ManifestError, match="empty"):
            load_manifest(path)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(tmp_path / "missing.csv")


class TestRoundTrip:
    def test_write_then_load_preserves_rows(self, tmp_path):
        path = tmp_path / "meta.csv"
        write_lines(path, [
            "a.png,w1,train",
            "b.png,w2,test",
        ])
        manifest = load_manifest(path)
        out = tmp_path / "copy.csv"
        write_manifest(out, manifest)
        again = load_manifest(out)
        assert [(e.path, e.label, e.split) for e in again.entries] \
            == [(e.path, e.label, e.split) for e in manifest.entries]

    def test_rewrite_is_byte_stable(self, tmp_path):
        path = tmp_path / "meta.csv"
        write_lines(path, ["a.png,w1,train", "b.png,w2,test"])
        manifest = load_manifest(path)
        first = tmp_path / "one.csv"
        second = tmp_path / "two.csv"
        write_manifest(first, manifest)
        write_manifest(second, load_manifest(first))
        assert first.read_bytes() == second.read_bytes()

    def test_labels_helper(self, tmp_path):
        path = tmp_path / "meta.csv"
        write_lines(path, ["a.png,w2,train", "b.png,w1,test"])
        manifest = load_manifest(path)
        np.testing.assert_array_equal(manifest.labels(),
                                      np.array(["w2", "w1"]))

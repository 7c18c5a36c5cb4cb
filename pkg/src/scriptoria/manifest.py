"""Dataset manifest: the sidecar CSV that names images, labels, splits.

Format: UTF-8 CSV with rows `path,label,split`. A header row is optional
on input and never written. Lines starting with `#` are ignored. Split
is `train` or `test`. Labels are writer ids; they are only ever used for
evaluation, never for feature learning.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

from .exceptions import ManifestError

_HEADER = ["path", "label", "split"]
_SPLITS = ("train", "test")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    root: str = "."

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve(self, entry):
        """Absolute path of an entry's image file."""
        return os.path.normpath(os.path.join(self.root, entry.path))

    def subset(self, split):
        if split not in _SPLITS:
            raise ValueError(f"unknown split {split!r}")
        picked = [e for e in self.entries if e.split == split]
        return DatasetManifest(entries=picked, root=self.root)

    def labels(self):
        return [e.label for e in self.entries]

    def paths(self):
        return [e.path for e in self.entries]


def load_manifest(path):
    """Parse and validate a manifest CSV. Order is preserved."""
    if not os.path.exists(path):
        raise ManifestError(f"manifest not found: {path}")
    entries = []
    seen = set()
    first_data_row = True
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (row[0].startswith("#")):
                continue
            stripped = [cell.strip() for cell in row]
            if first_data_row:
                first_data_row = False
                if stripped == _HEADER:
                    continue
            if len(stripped) != 3:
                raise ManifestError(
                    f"{path}:{lineno}: expected 3 fields, got {len(stripped)}")
            img_path, label, split = stripped
            if not img_path:
                raise ManifestError(f"{path}:{lineno}: empty image path")
            if not label:
                raise ManifestError(f"{path}:{lineno}: empty label")
            if split not in _SPLITS:
                raise ManifestError(
                    f"{path}:{lineno}: unknown split {split!r} "
                    f"(expected train or test)")
            if img_path in seen:
                raise ManifestError(
                    f"{path}:{lineno}: duplicate path {img_path!r}")
            seen.add(img_path)
            entries.append(ManifestEntry(img_path, label, split))
    if not entries:
        raise ManifestError(f"empty manifest: {path}")
    return DatasetManifest(entries=entries,
                           root=os.path.dirname(os.path.abspath(path)))


def write_manifest(path, manifest):
    """Write entries back out, one `path,label,split` row per entry."""
    from .fileio import atomic_write

    with atomic_write(path) as fh:
        lines = [f"{e.path},{e.label},{e.split}" for e in manifest.entries]
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))

"""Flat pipeline configuration: a `key = value` text file plus overrides.

Every artifact the pipeline writes embeds an 8-byte hash of the full
canonical configuration, so downstream stages can warn when they are fed
artifacts produced under different settings.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .exceptions import ManifestError

_CHOICES = {
    "image_source": ("binary", "gray"),
    "detector_mode": ("restricted", "full"),
    "hellinger_order": ("sqrt-l1", "l1-sqrt"),
    "encoder": ("mvlad", "vlad", "sum"),
}


@dataclass
class PipelineConfig:
    image_source: str = "binary"
    detector_mode: str = "restricted"
    octaves: int = 0
    scales_per_octave: int = 3
    base_sigma: float = 1.6
    contrast_threshold: float = 0.03
    edge_ratio: float = 10.0
    hellinger_order: str = "sqrt-l1"
    pca_dim_local: int = 32
    kmeans_k: int = 5000
    kmeans_batch_size: int = 1024
    kmeans_epochs: int = 25
    kmeans_sample_size: int = 500000
    ratio_max: float = 0.9
    encoder: str = "mvlad"
    vlad_k: int = 100
    n_codebooks: int = 5
    power_exponent: float = 0.5
    mvlad_pca_dim: int = 0
    svm_c: float = 1.0
    svm_c_grid: str = ("1e-05,0.0001,0.001,0.01,0.1,"
                       "1.0,10.0,100.0,1000.0,10000.0")
    svm_folds_retrieval: int = 2
    svm_folds_classify: int = 5
    svm_tolerance: float = 1e-6
    svm_max_iterations: int = 1000
    seed: int = 0
    threads: int = 1

    def validate(self):
        for key, allowed in _CHOICES.items():
            if getattr(self, key) not in allowed:
                raise ValueError(
                    f"{key} must be one of {allowed}, "
                    f"got {getattr(self, key)!r}")
        positive = ("scales_per_octave", "base_sigma", "contrast_threshold",
                    "edge_ratio", "kmeans_k", "kmeans_batch_size",
                    "kmeans_epochs", "vlad_k", "n_codebooks", "svm_c",
                    "svm_tolerance", "svm_max_iterations")
        for key in positive:
            if getattr(self, key) <= 0:
                raise ValueError(f"{key} must be positive")
        non_negative = ("octaves", "pca_dim_local", "kmeans_sample_size",
                        "mvlad_pca_dim", "seed", "threads")
        for key in non_negative:
            if getattr(self, key) < 0:
                raise ValueError(f"{key} must be >= 0")
        if not 0.0 < self.ratio_max <= 1.0:
            raise ValueError("ratio_max must be in (0, 1]")
        if not 0.0 < self.power_exponent <= 1.0:
            raise ValueError("power_exponent must be in (0, 1]")
        if self.scales_per_octave < 2:
            raise ValueError("scales_per_octave must be >= 2")
        if not self.c_grid():
            raise ValueError("svm_c_grid must not be empty")
        return self

    def c_grid(self):
        return tuple(float(tok) for tok in self.svm_c_grid.split(",")
                     if tok.strip())

    def to_text(self):
        """Canonical serialization: sorted keys, repr-stable values."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def hash(self):
        digest = hashlib.blake2b(self.to_text().encode("utf-8"),
                                 digest_size=8).digest()
        return int.from_bytes(digest, "little")

    def apply_overrides(self, pairs):
        """Apply `key=value` override strings in order."""
        by_name = {f.name: f for f in fields(self)}
        for pair in pairs:
            if "=" not in pair:
                raise ValueError(f"override {pair!r} is not key=value")
            key, _, raw = pair.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in by_name:
                raise ValueError(f"unknown config key {key!r}")
            setattr(self, key, _coerce(raw, by_name[key].type, key))
        return self


def _coerce(raw, type_name, key):
    if type_name == "int":
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"{key} expects an integer, got {raw!r}")
    if type_name == "float":
        try:
            return float(raw)
        except ValueError:
            raise ValueError(f"{key} expects a number, got {raw!r}")
    return raw


def load_config(path=None, overrides=()):
    """Config from an optional file plus CLI-style overrides."""
    cfg = PipelineConfig()
    if path is not None:
        pairs = []
        try:
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    if "=" not in line:
                        raise ValueError(
                            f"{path}:{lineno}: expected key = value")
                    pairs.append(line)
        except FileNotFoundError:
            raise ManifestError(f"config file not found: {path}")
        cfg.apply_overrides(pairs)
    cfg.apply_overrides(overrides)
    return cfg.validate()

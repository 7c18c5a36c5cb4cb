"""Pipeline stages behind the command-line interface.

Stages communicate only through files: per-image local descriptors
(`.ldsc`), patch stacks (`.sptc`), keypoint sidecars (`.kp.csv`), the
codebook model, encoder models, global descriptor sets (`.gdsc`), and
JSON reports. Every artifact embeds the config hash it was produced
under; stages warn when composing artifacts with mismatched hashes.
"""

from __future__ import annotations

import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import fileio
from .clustering import MiniBatchKMeans, build_surrogate_dataset
from .descriptors import extract_features
from .encoding import make_encoder
from .esvm import EsvmReencoder, MulticlassSvm, select_c
from .exceptions import ConfigMismatchWarning
from .image import binarize_otsu, load_image
from .keypoints import (DetectorParams, dedupe_keypoints, detect_keypoints,
                        write_keypoints)
from .manifest import load_manifest
from .normalize import hellinger_normalize
from .retrieval import leave_one_out_eval
from .whitening import PCAWhitener

THREADS_ENV = "SCRIPTORIA_THREADS"


def image_slug(image_path):
    """Filesystem-safe identifier derived from a manifest path."""
    stem = image_path.replace("\\", "/").strip("/")
    for ext in (".png", ".pgm", ".PNG", ".PGM"):
        if stem.endswith(ext):
            stem = stem[:-len(ext)]
            break
    return stem.replace("/", "__")


def _n_threads(config):
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            cap = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}")
        if cap < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1")
        return cap
    if config.threads > 0:
        return config.threads
    return os.cpu_count() or 1


def _check_hash(found, config, source):
    if found is not None and found != config.hash():
        warnings.warn(
            f"{source} was produced under a different configuration",
            ConfigMismatchWarning)


def detector_params(config):
    return DetectorParams(
        octaves=config.octaves,
        scales_per_octave=config.scales_per_octave,
        base_sigma=config.base_sigma,
        contrast_threshold=config.contrast_threshold,
        edge_ratio=config.edge_ratio,
        mode=config.detector_mode)


def extract_one(image_path, out_dir, slug, config):
    """Detect, describe, and patch one image; write its artifacts."""
    gray = load_image(image_path)
    binary = binarize_otsu(gray)
    source = binary if config.image_source == "binary" else gray
    kps = dedupe_keypoints(detect_keypoints(source, detector_params(config)))
    descriptors, patches, kept = extract_features(source, kps)
    if descriptors.shape[0]:
        descriptors = hellinger_normalize(descriptors,
                                          order=config.hellinger_order)
    chash = config.hash()
    fileio.write_ldsc(os.path.join(out_dir, slug + ".ldsc"),
                      descriptors.astype(np.float32), chash)
    quantized = np.clip(np.rint(np.asarray(patches) * 255.0),
                        0, 255).astype(np.uint8)
    fileio.write_sptc(os.path.join(out_dir, slug + ".sptc"), quantized, chash)
    write_keypoints(os.path.join(out_dir, slug + ".kp.csv"), kept, chash)
    return len(kept)


def cmd_extract(manifest_path, out_dir, config):
    manifest = load_manifest(manifest_path)
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(manifest.resolve(e), image_slug(e.path)) for e in manifest]
    counts = {}
    with ThreadPoolExecutor(max_workers=_n_threads(config)) as pool:
        futures = [
            pool.submit(extract_one, path, out_dir, slug, config)
            for path, slug in jobs
        ]
        for (_, slug), future in zip(jobs, futures):
            counts[slug] = future.result()
    index_path = os.path.join(out_dir, "features.csv")
    with fileio.atomic_write(index_path) as fh:
        lines = ["image_id,slug,keypoints"]
        for entry, (_, slug) in zip(manifest, jobs):
            lines.append(f"{entry.path},{slug},{counts[slug]}")
        lines.append(f"# config_hash={config.hash():016x}")
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
    return counts


def load_feature_groups(features_dir, manifest, config=None, split=None):
    """Per-image descriptor matrices in manifest order."""
    entries = manifest.entries if split is None \
        else manifest.subset(split).entries
    groups, ids = [], []
    for entry in entries:
        path = os.path.join(features_dir, image_slug(entry.path) + ".ldsc")
        X, found = fileio.read_ldsc(path)
        if config is not None:
            _check_hash(found, config, path)
        groups.append(X.astype(np.float64))
        ids.append(entry.path)
    return groups, ids


def cmd_cluster(features_dir, manifest_path, codebook_path, config):
    """Fit local whitening and the surrogate-class codebook on the
    training split's descriptors."""
    manifest = load_manifest(manifest_path)
    groups, _ = load_feature_groups(features_dir, manifest, config, "train")
    X = np.vstack([g for g in groups if g.shape[0]])
    if X.shape[0] < config.kmeans_k:
        raise ValueError(
            f"{X.shape[0]} training descriptors cannot support "
            f"kmeans_k={config.kmeans_k}")
    whitener = None
    if 0 < config.pca_dim_local < X.shape[1]:
        fit_rows = X
        if X.shape[0] > config.kmeans_sample_size > 0:
            rng = np.random.default_rng(config.seed)
            pick = rng.choice(X.shape[0], size=config.kmeans_sample_size,
                              replace=False)
            fit_rows = X[np.sort(pick)]
        whitener = PCAWhitener(n_components=config.pca_dim_local)
        whitener.fit(fit_rows)
        X = whitener.transform(X)
    kmeans = MiniBatchKMeans(
        n_clusters=config.kmeans_k,
        batch_size=config.kmeans_batch_size,
        n_epochs=config.kmeans_epochs,
        sample_size=config.kmeans_sample_size or None,
        seed=config.seed).fit(X)
    fileio.write_codebook(codebook_path, kmeans, whitener, config.hash())
    return kmeans


def cmd_export_surrogates(features_dir, manifest_path, codebook_path,
                          out_dir, config):
    """Assign training descriptors to clusters, drop ambiguous ones, and
    export the surviving patches with their cluster labels."""
    manifest = load_manifest(manifest_path)
    kmeans, whitener, found = fileio.read_codebook(codebook_path)
    _check_hash(found, config, codebook_path)
    all_patches, all_descriptors, meta = [], [], []
    for entry in manifest.subset("train"):
        slug = image_slug(entry.path)
        X, f1 = fileio.read_ldsc(
            os.path.join(features_dir, slug + ".ldsc"))
        P, f2 = fileio.read_sptc(
            os.path.join(features_dir, slug + ".sptc"))
        _check_hash(f1, config, slug + ".ldsc")
        _check_hash(f2, config, slug + ".sptc")
        if X.shape[0] != P.shape[0]:
            raise ValueError(
                f"{slug}: {X.shape[0]} descriptors vs {P.shape[0]} patches")
        if not X.shape[0]:
            continue
        Z = X.astype(np.float64)
        if whitener is not None:
            Z = whitener.transform(Z)
        all_descriptors.append(Z)
        all_patches.append(P)
        meta.extend((entry.path, i) for i in range(X.shape[0]))
    if not all_descriptors:
        raise ValueError("no training descriptors to export")
    dataset = build_surrogate_dataset(
        np.concatenate(all_patches), np.vstack(all_descriptors),
        kmeans.cluster_centers_, ratio_max=config.ratio_max, meta=meta)
    if len(dataset) == 0:
        raise ValueError("empty surrogate dataset after the ratio filter")
    dataset.to_directory(out_dir, config.hash())
    return dataset


def cmd_import_features(sources, store_dir, config):
    """Validate external LDSC files and register them in a store."""
    os.makedirs(store_dir, exist_ok=True)
    files = []
    for src in sources:
        if os.path.isdir(src):
            files.extend(
                os.path.join(src, name) for name in sorted(os.listdir(src))
                if name.endswith(".ldsc"))
        else:
            files.append(src)
    if not files:
        raise ValueError("no .ldsc files to import")
    rows, dim = [], None
    for path in files:
        X, _ = fileio.read_ldsc(path)
        if dim is None:
            dim = X.shape[1]
        elif X.shape[1] != dim:
            raise ValueError(
                f"{path} has dim {X.shape[1]}, store already has {dim}")
        slug = os.path.splitext(os.path.basename(path))[0]
        fileio.write_ldsc(os.path.join(store_dir, slug + ".ldsc"),
                          X, config.hash())
        rows.append((slug, X.shape[0], X.shape[1]))
    with fileio.atomic_write(os.path.join(store_dir, "features.csv")) as fh:
        lines = ["image_id,slug,descriptors,dim"]
        lines.extend(f"{slug},{slug},{count},{d}" for slug, count, d in rows)
        lines.append(f"# config_hash={config.hash():016x}")
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
    return rows


def encoder_kwargs(config):
    return dict(
        n_clusters=config.vlad_k,
        power_exponent=config.power_exponent,
        seed=config.seed,
        batch_size=config.kmeans_batch_size,
        n_epochs=config.kmeans_epochs,
        sample_size=config.kmeans_sample_size or None,
        n_codebooks=config.n_codebooks,
        whiten=True,
        pca_dim=config.mvlad_pca_dim,
    )


def cmd_fit_encoders(features_dir, manifest_path, model_path, config):
    manifest = load_manifest(manifest_path)
    groups, _ = load_feature_groups(features_dir, manifest, config, "train")
    kwargs = encoder_kwargs(config)
    if config.encoder != "mvlad":
        kwargs.pop("n_codebooks")
        kwargs.pop("whiten")
        kwargs.pop("pca_dim")
    encoder = make_encoder(config.encoder, **kwargs)
    encoder.fit(groups)
    fileio.write_encoder_model(model_path, encoder, config.hash())
    return encoder


def cmd_encode(features_dir, manifest_path, model_path, out_path, config,
               split=None):
    manifest = load_manifest(manifest_path)
    encoder, found = fileio.read_encoder_model(model_path)
    _check_hash(found, config, model_path)
    groups, ids = load_feature_groups(features_dir, manifest, config, split)
    feature_dim = next((g.shape[1] for g in groups if g.shape[0]), None)
    if feature_dim is not None and feature_dim != encoder.dim_:
        raise ValueError(
            f"features have dim {feature_dim} but the encoder model "
            f"expects dim {encoder.dim_}")
    encodings = encoder.transform(groups)
    fileio.write_gdsc(out_path, ids, encodings.astype(np.float32),
                      config.hash())
    return ids, encodings


def _labels_for(ids, manifest):
    by_path = {e.path: e.label for e in manifest}
    missing = [i for i in ids if i not in by_path]
    if missing:
        raise ValueError(
            f"{len(missing)} encoded ids missing from manifest, "
            f"first: {missing[0]!r}")
    return [by_path[i] for i in ids]


def cmd_evaluate(encodings_path, manifest_path, config, esvm=False,
                 negatives_path=None, report_path=None):
    manifest = load_manifest(manifest_path)
    ids, X, found = fileio.read_gdsc(encodings_path)
    _check_hash(found, config, encodings_path)
    labels = _labels_for(ids, manifest)
    X = X.astype(np.float64)
    if esvm:
        if negatives_path is None:
            raise ValueError("--esvm needs a negatives encoding file")
        neg_ids, negatives, nfound = fileio.read_gdsc(negatives_path)
        _check_hash(nfound, config, negatives_path)
        overlap = set(neg_ids) & set(ids)
        if overlap:
            raise ValueError(
                f"negative pool shares {len(overlap)} images with the "
                f"evaluation set, first: {sorted(overlap)[0]!r}")
        reencoder = EsvmReencoder(
            C=config.svm_c, tolerance=config.svm_tolerance,
            max_iterations=config.svm_max_iterations)
        reencoder.fit(negatives.astype(np.float64))
        X = reencoder.transform(X)
    report = leave_one_out_eval(X, labels, ids=ids)
    if report_path is not None:
        with fileio.atomic_write(report_path) as fh:
            fh.write(report.to_json(config.hash()).encode("utf-8"))
    return report


def cmd_classify(train_path, test_path, manifest_path, config,
                 select=False, report_path=None):
    manifest = load_manifest(manifest_path)
    train_ids, train_X, f1 = fileio.read_gdsc(train_path)
    test_ids, test_X, f2 = fileio.read_gdsc(test_path)
    _check_hash(f1, config, train_path)
    _check_hash(f2, config, test_path)
    train_y = np.asarray(_labels_for(train_ids, manifest))
    test_y = np.asarray(_labels_for(test_ids, manifest))
    C = config.svm_c
    grid_scores = None
    if select:
        C, grid_scores = select_c(
            train_X.astype(np.float64), train_y, mode="classification",
            grid=config.c_grid(), n_folds=config.svm_folds_classify,
            seed=config.seed, tolerance=config.svm_tolerance,
            max_iterations=config.svm_max_iterations)
    clf = MulticlassSvm(C=C, tolerance=config.svm_tolerance,
                        max_iterations=config.svm_max_iterations)
    clf.fit(train_X.astype(np.float64), train_y)
    predictions = clf.predict(test_X.astype(np.float64))
    accuracy = float(np.mean(predictions == test_y))
    result = {
        "accuracy": accuracy,
        "C": C,
        "n_train": len(train_ids),
        "n_test": len(test_ids),
        "per_image": [
            {"id": i, "label": str(t), "predicted": str(p)}
            for i, t, p in zip(test_ids, test_y, predictions)
        ],
    }
    if grid_scores is not None:
        result["grid_scores"] = {f"{k:g}": v for k, v in grid_scores.items()}
    result["config_hash"] = f"{config.hash():016x}"
    if report_path is not None:
        with fileio.atomic_write(report_path) as fh:
            fh.write(json.dumps(result, indent=2,
                                sort_keys=True).encode("utf-8"))
    return result

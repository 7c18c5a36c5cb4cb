"""Shared fixtures: a small synthetic page corpus with writer-specific
glyph geometry, rendered as dark blobs on white, plus the artifacts of
one full pipeline run over it."""

import os
import warnings

import numpy as np
import pytest

from scriptoria.image import save_image


def render_page(writer_seed, page_seed, side=224, n_glyphs=16):
    """One synthetic page: repeated glyphs whose blob sizes, pair angle,
    and spacing are fixed per writer, with per-page placement jitter."""
    wrng = np.random.default_rng(writer_seed)
    sigma_a = wrng.uniform(2.0, 3.2)
    sigma_b = wrng.uniform(2.0, 3.2)
    pair_angle = wrng.uniform(0.0, 2.0 * np.pi)
    pair_dist = wrng.uniform(9.0, 14.0)
    has_third = wrng.random() < 0.5
    third_angle = wrng.uniform(0.0, 2.0 * np.pi)
    third_dist = wrng.uniform(8.0, 12.0)

    prng = np.random.default_rng(page_seed)
    img = np.ones((side, side))
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    margin = 40
    step = 36
    cells = [
        (margin + step // 2 + i * step, margin + step // 2 + j * step)
        for i in range((side - 2 * margin) // step)
        for j in range((side - 2 * margin) // step)
    ]
    prng.shuffle(cells)
    for cy, cx in cells[:n_glyphs]:
        jy, jx = prng.uniform(-4.0, 4.0, size=2)
        cy, cx = cy + jy, cx + jx
        blobs = [
            (cy, cx, sigma_a),
            (cy + pair_dist * np.sin(pair_angle),
             cx + pair_dist * np.cos(pair_angle), sigma_b),
        ]
        if has_third:
            blobs.append((cy + third_dist * np.sin(third_angle),
                          cx + third_dist * np.cos(third_angle),
                          sigma_a * 0.8))
        for by, bx, sigma in blobs:
            sigma = sigma * prng.uniform(0.95, 1.05)
            img -= 0.85 * np.exp(-((xx - bx) ** 2 + (yy - by) ** 2)
                                 / (2.0 * sigma * sigma))
    return np.clip(img, 0.0, 1.0)


N_TRAIN_WRITERS = 3
N_TEST_WRITERS = 5
PAGES_PER_WRITER = 4


@pytest.fixture(scope="session")
def page_corpus(tmp_path_factory):
    """Rendered pages plus two manifests over the same images.

    `manifest` splits by writer (train writers feed the codebook and the
    exemplar negative pool; test writers feed retrieval). `classify_manifest`
    re-splits the test writers' pages 3/1 per writer so classification has
    every label in both splits.
    """
    root = tmp_path_factory.mktemp("corpus")
    pages = root / "pages"
    pages.mkdir()
    rows, classify_rows = [], []
    for w in range(N_TRAIN_WRITERS):
        for p in range(PAGES_PER_WRITER):
            rel = f"pages/train_w{w}_p{p}.png"
            save_image(root / rel, render_page(100 + w, 1000 + w * 10 + p))
            rows.append(f"{rel},tw{w},train")
    for w in range(N_TEST_WRITERS):
        for p in range(PAGES_PER_WRITER):
            rel = f"pages/test_w{w}_p{p}.png"
            save_image(root / rel, render_page(200 + w, 2000 + w * 10 + p))
            rows.append(f"{rel},w{w},test")
            classify_rows.append(
                f"{rel},w{w},{'test' if p == PAGES_PER_WRITER - 1 else 'train'}")
    manifest = root / "meta.csv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    classify_manifest = root / "classify.csv"
    classify_manifest.write_text("\n".join(classify_rows) + "\n",
                                 encoding="utf-8")
    config = root / "pipeline.cfg"
    config.write_text(
        "kmeans_k = 32\n"
        "vlad_k = 4\n"
        "n_codebooks = 2\n"
        "kmeans_epochs = 15\n"
        "pca_dim_local = 16\n"
        "threads = 2\n",
        encoding="utf-8")
    return {
        "root": root,
        "manifest": str(manifest),
        "classify_manifest": str(classify_manifest),
        "config": str(config),
        "n_images": (N_TRAIN_WRITERS + N_TEST_WRITERS) * PAGES_PER_WRITER,
        "n_test": N_TEST_WRITERS * PAGES_PER_WRITER,
    }


@pytest.fixture(scope="session")
def pipeline_artifacts(page_corpus):
    """One full command-line run: extract, cluster, export surrogates,
    fit encoders, encode both splits, evaluate."""
    from scriptoria.cli import main

    root = page_corpus["root"]
    art = {
        "features": str(root / "features"),
        "codebook": str(root / "codebook.cdbk"),
        "surrogates": str(root / "surrogates"),
        "model": str(root / "model.mvld"),
        "test_gdsc": str(root / "test.gdsc"),
        "train_gdsc": str(root / "train.gdsc"),
        "report": str(root / "report.json"),
    }
    base = ["--config", page_corpus["config"]]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        steps = [
            ["extract", page_corpus["manifest"], art["features"]] + base,
            ["cluster", art["features"], page_corpus["manifest"],
             art["codebook"]] + base,
            ["export-surrogates", art["features"], page_corpus["manifest"],
             art["codebook"], art["surrogates"]] + base,
            ["fit-encoders", art["features"], page_corpus["manifest"],
             art["model"]] + base,
            ["encode", art["features"], page_corpus["manifest"],
             art["model"], art["test_gdsc"], "--split", "test"] + base,
            ["encode", art["features"], page_corpus["manifest"],
             art["model"], art["train_gdsc"], "--split", "train"] + base,
            ["evaluate", art["test_gdsc"], page_corpus["manifest"],
             "--report", art["report"]] + base,
        ]
        for argv in steps:
            code = main(argv)
            assert code == 0, f"command failed: {argv}"
    return {**page_corpus, **art}

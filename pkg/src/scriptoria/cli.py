"""Command-line entry point.

Subcommands mirror the pipeline stages; every command exits 0 on success
and 2 when input validation fails (bad manifests, magic/version
mismatches, dimension conflicts). Configuration comes from an optional
`--config key=value file`, overridden by repeated `--set key=value`
flags and a few named shortcuts.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .exceptions import FormatError, ManifestError, NotFittedError


def _add_config_args(parser):
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="scriptoria",
        description="writer identification and retrieval pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract",
                       help="detect keypoints, write descriptors + patches")
    p.add_argument("manifest")
    p.add_argument("out_dir")
    _add_config_args(p)

    p = sub.add_parser("cluster",
                       help="fit the surrogate-class codebook")
    p.add_argument("features_dir")
    p.add_argument("manifest")
    p.add_argument("codebook")
    _add_config_args(p)

    p = sub.add_parser("export-surrogates",
                       help="write the filtered patch/label training set")
    p.add_argument("features_dir")
    p.add_argument("manifest")
    p.add_argument("codebook")
    p.add_argument("out_dir")
    _add_config_args(p)

    p = sub.add_parser("import-features",
                       help="ingest externally computed .ldsc files")
    p.add_argument("sources", nargs="+",
                   help=".ldsc files or directories holding them")
    p.add_argument("store_dir")
    _add_config_args(p)

    p = sub.add_parser("fit-encoders", help="fit the global encoder model")
    p.add_argument("features_dir")
    p.add_argument("manifest")
    p.add_argument("model")
    p.add_argument("--vlad-k", type=int, dest="vlad_k")
    p.add_argument("--pca-dim", type=int, dest="pca_dim",
                   help="joint whitening output dimension (0 = full)")
    _add_config_args(p)

    p = sub.add_parser("encode", help="encode images to global descriptors")
    p.add_argument("features_dir")
    p.add_argument("manifest")
    p.add_argument("model")
    p.add_argument("out")
    p.add_argument("--split", choices=["train", "test"])
    _add_config_args(p)

    p = sub.add_parser("evaluate", help="leave-one-image-out retrieval")
    p.add_argument("encodings")
    p.add_argument("manifest")
    p.add_argument("--esvm", action="store_true",
                   help="re-encode queries with exemplar SVMs first")
    p.add_argument("--negatives",
                   help="encoding file for the exemplar negative pool")
    p.add_argument("--report", help="write the JSON report here")
    _add_config_args(p)

    p = sub.add_parser("classify", help="one-vs-rest label classification")
    p.add_argument("train_encodings")
    p.add_argument("test_encodings")
    p.add_argument("manifest")
    p.add_argument("--select-c", action="store_true", dest="select_c",
                   help="pick C by stratified cross-validation")
    p.add_argument("--report", help="write the JSON report here")
    _add_config_args(p)
    return parser


def _run(args):
    from . import pipeline

    overrides = list(args.overrides)
    if getattr(args, "vlad_k", None) is not None:
        overrides.append(f"vlad_k={args.vlad_k}")
    if getattr(args, "pca_dim", None) is not None:
        overrides.append(f"mvlad_pca_dim={args.pca_dim}")
    config = load_config(args.config, overrides)

    if args.command == "extract":
        counts = pipeline.cmd_extract(args.manifest, args.out_dir, config)
        total = sum(counts.values())
        print(f"extracted {total} keypoints over {len(counts)} images")
    elif args.command == "cluster":
        kmeans = pipeline.cmd_cluster(args.features_dir, args.manifest,
                                      args.codebook, config)
        print(f"codebook: {kmeans.n_clusters} centers in "
              f"{kmeans.cluster_centers_.shape[1]}-D "
              f"({kmeans.n_iter_} epochs)")
    elif args.command == "export-surrogates":
        dataset = pipeline.cmd_export_surrogates(
            args.features_dir, args.manifest, args.codebook, args.out_dir,
            config)
        populated = int((dataset.class_histogram() > 0).sum())
        print(f"surrogate dataset: {len(dataset)} patches, "
              f"{populated} populated classes")
    elif args.command == "import-features":
        rows = pipeline.cmd_import_features(args.sources, args.store_dir,
                                            config)
        print(f"imported {len(rows)} feature files "
              f"({sum(r[1] for r in rows)} descriptors)")
    elif args.command == "fit-encoders":
        encoder = pipeline.cmd_fit_encoders(args.features_dir, args.manifest,
                                            args.model, config)
        print(f"fit {config.encoder} encoder, output dim "
              f"{encoder.out_dim_}")
    elif args.command == "encode":
        ids, encodings = pipeline.cmd_encode(
            args.features_dir, args.manifest, args.model, args.out, config,
            split=args.split)
        print(f"encoded {len(ids)} images to {encodings.shape[1]}-D")
    elif args.command == "evaluate":
        report = pipeline.cmd_evaluate(
            args.encodings, args.manifest, config, esvm=args.esvm,
            negatives_path=args.negatives, report_path=args.report)
        print(report.format_table())
    elif args.command == "classify":
        result = pipeline.cmd_classify(
            args.train_encodings, args.test_encodings, args.manifest,
            config, select=args.select_c, report_path=args.report)
        print(f"accuracy {result['accuracy']:.4f} on {result['n_test']} "
              f"images (C={result['C']:g})")
    else:
        raise ValueError(f"unknown command {args.command!r}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ManifestError, FormatError, NotFittedError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

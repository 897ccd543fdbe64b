"""Command line surface: ingest, split, train, eval, infer, export.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.
Log verbosity is controlled only by the BLENDTALK_LOG environment variable
(debug | info | warning, default warning).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .audio import load_audio
from .config import load_run_config
from .corpus import (
    build_manifest,
    load_manifest,
    load_split,
    save_manifest,
    save_split,
    split_by_protocol,
)
from .errors import BlendtalkError, ConfigError, DataError
from .evaluation import evaluate_split, save_per_clip_csv, save_report
from .features import load_feature_file, write_feature_file
from .livelink import BlendshapeSequence, export_blendshape_csv, ingest_livelink_csv
from .training import load_checkpoint, predict_clip, save_checkpoint, train_run

log = logging.getLogger("blendtalk")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _setup_logging() -> None:
    level = os.environ.get("BLENDTALK_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def cmd_ingest(args) -> int:
    records = build_manifest(args.root)
    for record in records:
        ingest_livelink_csv(record.coefficients_path)
        load_audio(record.audio_path)
    log.info("validated %d clips under %s", len(records), args.root)
    if args.dry_run:
        print(f"ok: {len(records)} clips (dry run, nothing written)")
        return EXIT_OK
    save_manifest(records, args.out)
    print(f"wrote manifest with {len(records)} clips to {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    spec = split_by_protocol(manifest, args.protocol, args.seed)
    save_split(spec, args.out)
    print(
        f"wrote {args.protocol} split (seed {args.seed}) to {args.out}: "
        f"{len(spec.train)}/{len(spec.val)}/{len(spec.test)} clips"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.set)
    manifest = load_manifest(args.manifest)
    split = load_split(args.split)
    bundle = train_run(
        cfg.train, manifest, split,
        model_cfg=cfg.model, data_cfg=cfg.data, feature_cfg=cfg.features,
        log_path=args.log, dump_dir=os.path.dirname(os.path.abspath(args.out)),
    )
    save_checkpoint(bundle, args.out)
    print(f"trained {bundle.step} steps; checkpoint at {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    split = load_split(args.split)
    report = evaluate_split(bundle, manifest, split, partition=args.partition)
    save_report(report, args.out)
    if args.per_clip_csv:
        save_per_clip_csv(report, args.per_clip_csv)
    print(
        f"{report.protocol}/{report.partition}: LVE {report.lve:.6g} "
        f"({report.lve * 100:.4g} x1e-2), ALE {report.ale:.6g} "
        f"({report.ale * 100:.4g} x1e-2) over {report.clip_count} clips"
    )
    return EXIT_OK


def cmd_infer(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    clip_audio = load_audio(args.audio)
    seq = predict_clip(bundle, clip_audio, args.style, transcript=args.transcript)
    write_feature_file(args.out, seq.values.astype(np.float32))
    print(f"predicted {seq.frame_count} frames x {len(seq.channel_names)} channels to {args.out}")
    return EXIT_OK


def cmd_export(args) -> int:
    stream = load_feature_file(args.pred, modality="audio", fps=args.fps)
    seq = BlendshapeSequence(values=stream.values, fps=args.fps)
    export_blendshape_csv(seq, args.out)
    print(f"exported {seq.frame_count} frames to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blendtalk",
        description="Speech-driven facial blendshape coefficient pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="scan a corpus tree into a manifest")
    p.add_argument("--root", required=True, help="corpus root directory")
    p.add_argument("--out", help="manifest output path (jsonl)")
    p.add_argument("--dry-run", action="store_true", help="validate without writing")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="build a train/val/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--protocol", required=True, choices=["cross_subject", "cross_gender"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model on the split's train set")
    p.add_argument("--config", help="INI run config (defaults apply if omitted)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True, help="checkpoint output path (npz)")
    p.add_argument("--log", help="training log output path (jsonl)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable; flags win)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a partition")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--partition", default="test", choices=["val", "test"])
    p.add_argument("--out", required=True, help="report output path (json)")
    p.add_argument("--per-clip-csv", help="optional per-clip metric table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="predict coefficients for a wav")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--audio", required=True)
    p.add_argument("--style", required=True, help="registered training subject id")
    p.add_argument("--out", required=True, help="prediction output path (pmmf)")
    p.add_argument("--transcript", default="", help="optional transcript for the text provider")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("export", help="convert a prediction to Live Link CSV")
    p.add_argument("--pred", required=True, help="prediction file from infer (pmmf)")
    p.add_argument("--out", required=True, help="csv output path")
    p.add_argument("--fps", type=float, default=30.0)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "ingest" and not args.dry_run and not args.out:
        parser.error("ingest needs --out unless --dry-run is given")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (BlendtalkError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

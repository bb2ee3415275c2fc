"""``hitframe`` command-line entry point.

Exit codes: 0 success, 1 stage failure, 2 missing input or invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .direction import DirectionModel, KSeqRecord
from .io import read_json, read_jsonl, write_jsonl
from .synth import SynthConfig, generate_dataset, summary_table

log = logging.getLogger("hitframe")


def _config(args):
    return read_json(args.config) if getattr(args, "config", None) else {}


def cmd_synth(args):
    d = _config(args)
    d["seed"] = args.seed if args.seed is not None else d.get("seed", 0)
    if args.rallies is not None:
        d["rallies"] = args.rallies
    manifest = generate_dataset(SynthConfig.from_dict(d), args.out, with_frames=not args.no_frames)
    print(summary_table(manifest["summary"]))


def cmd_train_angle(args):
    opts = _config(args)
    if args.epochs is not None:
        opts["epochs"] = args.epochs
    if args.profile:
        opts["profile"] = args.profile
    _, history = pl.train_angle_checkpoint(args.images, args.labels, args.out, opts, seed=args.seed or 0)
    print(json.dumps({"epoch_loss": history}))


def cmd_train_direction(args):
    opts = _config(args)
    if args.epochs is not None:
        opts["epochs"] = args.epochs
    if args.profile:
        opts["profile"] = args.profile
    _, history = pl.train_direction_checkpoint(args.train, args.out, opts, seed=args.seed or 0,
                                               strict=args.strict)
    print(json.dumps({"epoch_loss": history}))


def cmd_classify(args):
    stream = pl.classify_frames(args.frames, args.checkpoint, args.video_id, args.fps)
    write_jsonl(args.out, pl.angle_records([stream]))


def cmd_segment(args):
    streams = pl.read_angle_streams(args.angles)
    write_jsonl(args.out, pl.segment_records(pl.segment_streams(streams, args.min_run)))


def cmd_filter(args):
    rallies = pl.filter_rallies(read_jsonl(args.keypoints), pl.read_segments(args.segments),
                                strict=args.strict, hold_last=not args.no_hold_last)
    write_jsonl(args.out, pl.pair_records(rallies))


def cmd_predict(args):
    model = DirectionModel.load(args.checkpoint)
    write_jsonl(args.out, pl.predict_rallies(pl.read_pair_records(args.pairs), model, strict=args.strict))


def cmd_detect(args):
    write_jsonl(args.out, pl.detect_records(read_jsonl(args.directions)))


def cmd_eval(args):
    report = {}
    if args.segments and args.gold_segments:
        report["trimming"] = pl.trim_report(pl.read_segments(args.segments), pl.read_segments(args.gold_segments))
    if args.directions and args.kseq:
        gold = [{"rally_id": r.rally_id, "labels": r.labels}
                for r in (KSeqRecord.from_json(x) for x in read_jsonl(args.kseq))]
        report["tokens"] = pl.tokens_report(read_jsonl(args.directions), gold)
    if args.hits and args.gold_hits:
        report["hits"] = pl.hit_report(read_jsonl(args.hits), read_jsonl(args.gold_hits), args.tol or [5, 15, 25])
    if not report:
        raise pl.MissingInputError("eval needs --segments/--gold-segments, --directions/--kseq, or --hits/--gold-hits")
    _emit(report, args)


def cmd_report(args):
    _emit(read_json(args.input), args)


def _emit(report, args):
    fmt = args.format or "table"
    if args.out:
        pl.write_report(args.out, report, [fmt])
    elif fmt == "json":
        print(json.dumps(report, sort_keys=True, indent=2))
    elif fmt == "csv":
        sys.stdout.write(pl.render_csv(report))
    else:
        sys.stdout.write(pl.render_table(report))


def cmd_pipeline(args):
    cfg = pl.PipelineConfig.from_dict(_config(args))
    if args.out:
        cfg.output_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.min_run is not None:
        cfg.min_run = args.min_run
    if args.strict:
        cfg.strict = True
    if args.tol:
        cfg.tolerances = args.tol
    if args.format:
        cfg.formats = [args.format]
    report = pl.run_pipeline(cfg)
    sys.stdout.write(pl.render_table(report))


def build_parser():
    p = argparse.ArgumentParser(prog="hitframe", description="Badminton hit-frame detection pipeline")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("synth", cmd_synth, "generate a synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--rallies", type=int)
    sp.add_argument("--no-frames", action="store_true", help="skip rendered frames and angle image sets")

    sp = add("train-angle", cmd_train_angle, "train the shot-angle CNN")
    sp.add_argument("--images", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--profile", choices=["desk", "full"])

    sp = add("classify", cmd_classify, "label frames as Other/High")
    sp.add_argument("--frames", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--video-id", default="video")
    sp.add_argument("--fps", type=float, default=30.0)
    sp.add_argument("--out", required=True)

    sp = add("segment", cmd_segment, "cut angle streams into rallies")
    sp.add_argument("--angles", required=True)
    sp.add_argument("--min-run", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = add("filter", cmd_filter, "keep the two on-court players per rally frame")
    sp.add_argument("--keypoints", required=True)
    sp.add_argument("--segments", required=True)
    sp.add_argument("--strict", action="store_true")
    sp.add_argument("--no-hold-last", action="store_true")
    sp.add_argument("--out", required=True)

    sp = add("train-direction", cmd_train_direction, "train the direction transformer")
    sp.add_argument("--train", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--profile", choices=["desk", "full"])
    sp.add_argument("--strict", action="store_true")

    sp = add("predict", cmd_predict, "predict direction tokens per rally")
    sp.add_argument("--pairs", required=True, help="filter output or KSeq JSON-lines")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--strict", action="store_true")
    sp.add_argument("--out", required=True)

    sp = add("detect", cmd_detect, "hit frames from direction tokens")
    sp.add_argument("--directions", required=True)
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, "score trimming, tokens, or hit frames")
    sp.add_argument("--segments")
    sp.add_argument("--gold-segments")
    sp.add_argument("--directions")
    sp.add_argument("--kseq")
    sp.add_argument("--hits")
    sp.add_argument("--gold-hits")
    sp.add_argument("--tol", type=int, action="append")
    sp.add_argument("--format", choices=["json", "table", "csv"])
    sp.add_argument("--out", help="directory for report.<ext>; prints to stdout otherwise")

    sp = add("pipeline", cmd_pipeline, "run every stage from one config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--min-run", type=int)
    sp.add_argument("--strict", action="store_true")
    sp.add_argument("--tol", type=int, action="append")
    sp.add_argument("--format", choices=["json", "table", "csv"])

    sp = add("report", cmd_report, "re-render a JSON report")
    sp.add_argument("--input", required=True)
    sp.add_argument("--format", choices=["json", "table", "csv"])
    sp.add_argument("--out")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("config", "angles", "keypoints", "segments", "frames", "checkpoint", "pairs",
                 "directions", "train", "images", "labels", "input"):
        value = getattr(args, name, None)
        if value is not None and not Path(value).exists():
            print(f"error: --{name.replace('_', '-')} {value} does not exist", file=sys.stderr)
            return 2
    try:
        args.func(args)
    except (pl.MissingInputError, pl.InvalidConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any stage failure maps to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

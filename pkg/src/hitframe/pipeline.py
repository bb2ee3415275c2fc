"""End-to-end hit-frame generation: angles -> rallies -> player pairs -> directions -> hits.

Every stage reads and writes the JSON-lines schemas in :mod:`hitframe.io`,
so the CLI can run them one at a time or all together via
:func:`run_pipeline`.
"""

from __future__ import annotations

import csv
import io as _io
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import angle as angle_mod
from . import direction as direction_mod
from .evaluation import (
    BinaryCounts,
    TrimmingReport,
    binary_metrics,
    hit_tolerance_report,
    token_counts,
    trimming_report,
)
from .geometry import CourtKeypoints, InsufficientPlayersError, filter_players
from .hits import Direction, detect_hits, format_directions, parse_directions, to_global
from .io import load_frames, read_json, read_jsonl, write_json, write_jsonl
from .nn.optim import LrSchedule
from .rally import AngleStream, RallySegment, segment_rallies, smooth_stream
from .synth import SynthConfig, generate_dataset, summary_table

log = logging.getLogger(__name__)


class MissingInputError(FileNotFoundError):
    pass


class InvalidConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    output_dir: str = "out"
    angles: str = None
    frames: str = None
    video_id: str = "video"
    fps: float = 30.0
    angle_checkpoint: str = None
    keypoints: str = None
    direction_checkpoint: str = None
    gold_hits: str = None
    gold_segments: str = None
    min_run: int = 1
    strict: bool = False
    hold_last: bool = True
    tolerances: list = field(default_factory=lambda: [5, 15, 25])
    formats: list = field(default_factory=lambda: ["json", "table"])
    seed: int = 0
    synth: dict = None
    train_angle: dict = None
    train_direction: dict = None

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"schema_version"}
        if unknown:
            raise InvalidConfigError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path))

    def validate(self):
        if self.min_run < 1:
            raise InvalidConfigError("min_run must be >= 1")
        if any(t < 1 for t in self.tolerances):
            raise InvalidConfigError("tolerances must be >= 1")
        if self.angles is None and (self.frames is None or self.angle_checkpoint is None):
            raise MissingInputError("need an angle stream, or frames plus an angle checkpoint")
        for name in ("angles", "frames", "angle_checkpoint", "keypoints", "direction_checkpoint",
                     "gold_hits", "gold_segments"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise MissingInputError(f"{name}: {value} does not exist")
        if self.keypoints is None or self.direction_checkpoint is None:
            raise MissingInputError("keypoints and direction_checkpoint are required")


# ---------------------------------------------------------------------------
# stages


def read_angle_streams(path):
    return [AngleStream.from_string(r["video_id"], r.get("fps", 30.0), r["tokens"]) for r in read_jsonl(path)]


def angle_records(streams):
    return [{"video_id": s.video_id, "fps": s.fps, "tokens": s.to_string()} for s in streams]


def classify_frames(frames_path, checkpoint, video_id, fps):
    model = angle_mod.SaCnnModel.load(checkpoint)
    return angle_mod.classify_stream(load_frames(frames_path), model, video_id, fps)


def segment_streams(streams, min_run=1):
    return {s.video_id: segment_rallies(smooth_stream(s, min_run)) for s in streams}


def segment_records(segments):
    return [{"video_id": vid, "rallies": [[s.start_frame, s.end_frame] for s in segs]}
            for vid, segs in sorted(segments.items())]


def read_segments(path):
    return {r["video_id"]: [RallySegment(int(a), int(b)) for a, b in r["rallies"]] for r in read_jsonl(path)}


def rally_id(video_id, k):
    return f"{video_id}:{k:03d}"


def filter_rallies(keypoint_records, segments, strict=False, hold_last=True):
    """Per rally, the ordered player pair of every frame.

    Lenient mode substitutes the previous frame's pair when a frame is
    missing or has fewer than two on-court players; a rally whose first
    frames fail is back-filled from its first good frame, and a rally with
    no good frame at all is kept with an empty pair list. Strict mode raises
    with the offending frame id.
    """
    by_frame = {}
    courts = {}
    for rec in sorted(keypoint_records, key=lambda r: (r["video_id"], int(r["frame"]))):
        by_frame[(rec["video_id"], int(rec["frame"]))] = rec
    rallies = []
    for vid in sorted(segments):
        for k, seg in enumerate(segments[vid]):
            pairs, held = [], []
            last = None
            pending = 0
            for frame in range(seg.start_frame, seg.end_frame + 1):
                rec = by_frame.get((vid, frame))
                pair = None
                reason = "no keypoint record"
                if rec is not None:
                    if rec.get("court") is not None:
                        courts[vid] = CourtKeypoints.from_points(rec["court"])
                    court = courts.get(vid)
                    if court is None:
                        reason = "no court keypoints seen yet"
                    else:
                        try:
                            pair = filter_players(rec["instances"], court).as_array()
                        except InsufficientPlayersError as exc:
                            reason = str(exc)
                if pair is None:
                    if strict or not hold_last:
                        raise StageError("filter", f"video {vid} frame {frame}: {reason}")
                    if last is None:
                        pending += 1
                        continue
                    pair = last
                    held.append(frame)
                if pending:
                    pairs.extend([pair] * pending)
                    held.extend(range(seg.start_frame, seg.start_frame + pending))
                    pending = 0
                pairs.append(pair)
                last = pair
            if pending:
                # lenient: keep the rally, but with no usable frames it can only yield no hits
                log.warning("video %s rally %d: no frame with two on-court players", vid, k)
                pairs = []
                held = list(range(seg.start_frame, seg.end_frame + 1))
            rallies.append({"video_id": vid, "rally_id": rally_id(vid, k), "start_frame": seg.start_frame,
                            "end_frame": seg.end_frame,
                            "pairs": np.stack(pairs) if pairs else np.zeros((0, 2, 17, 2)),
                            "held": sorted(held)})
    return rallies


def pair_records(rallies):
    return [{"video_id": r["video_id"], "rally_id": r["rally_id"], "start_frame": r["start_frame"],
             "end_frame": r["end_frame"], "held_frames": r["held"],
             "frames": [{"pair": p.tolist()} for p in r["pairs"]]} for r in rallies]


def read_pair_records(path):
    out = []
    for r in read_jsonl(path):
        start = int(r.get("start_frame", 0))
        pairs = np.array([f["pair"] for f in r["frames"]], dtype=np.float64)
        labels = None
        if all("label" in f for f in r["frames"]):
            labels = parse_directions("".join(f["label"] for f in r["frames"]))
        out.append({"video_id": r.get("video_id", ""), "rally_id": r["rally_id"], "start_frame": start,
                    "end_frame": int(r.get("end_frame", start + len(pairs) - 1)),
                    "pairs": pairs, "labels": labels, "held": r.get("held_frames", [])})
    return out


def predict_rallies(rallies, model, strict=False):
    out = []
    for r in rallies:
        if len(r["pairs"]) == 0:
            tokens = [Direction.S] * (r["end_frame"] - r["start_frame"] + 1)
            out.append({"video_id": r["video_id"], "rally_id": r["rally_id"], "start_frame": r["start_frame"],
                        "end_frame": r["end_frame"], "tokens": format_directions(tokens)})
            continue
        try:
            tokens = direction_mod.predict_directions(r["pairs"], model, strict=strict)
        except direction_mod.SequenceLengthError as exc:
            raise StageError("predict", f"{r['rally_id']}: {exc}") from exc
        out.append({"video_id": r["video_id"], "rally_id": r["rally_id"], "start_frame": r["start_frame"],
                    "end_frame": r["end_frame"], "tokens": format_directions(tokens)})
    return out


def detect_records(direction_records):
    out = []
    for r in direction_records:
        tokens = parse_directions(r["tokens"])
        hits = detect_hits(tokens, r["rally_id"])
        seg = RallySegment(int(r["start_frame"]), int(r.get("end_frame", int(r["start_frame"]) + len(tokens) - 1)))
        out.append({"video_id": r["video_id"], "rally_id": r["rally_id"], "hits_local": list(hits.indices),
                    "hits_global": to_global(hits, seg)})
    return sorted(out, key=lambda h: (h["video_id"], h["rally_id"]))


# ---------------------------------------------------------------------------
# reports


def hit_report(hit_records, gold_records, tolerances):
    """Tolerance-window metrics summed over videos at the count level."""
    pred = {}
    for h in hit_records:
        pred.setdefault(h["video_id"], []).extend(h["hits_global"])
    rows = []
    for tol in tolerances:
        total = BinaryCounts()
        for g in gold_records:
            counts, _ = hit_tolerance_report(sorted(pred.get(g["video_id"], [])), g["hits"],
                                             int(g["total_frames"]), tol)
            total = total + counts
        rows.append({"tol": tol, "counts": asdict(total), "metrics": asdict(binary_metrics(total))})
    return rows


def trim_report(pred_segments, gold_segments):
    correct = extra = missed = 0
    for vid in sorted(set(pred_segments) | set(gold_segments)):
        r = trimming_report(pred_segments.get(vid, []), gold_segments.get(vid, []))
        correct, extra, missed = correct + r.correct, extra + r.extra, missed + r.missed
    return TrimmingReport.from_counts(correct, extra, missed).to_dict()


def tokens_report(pred_records, gold_records):
    gold = {r["rally_id"]: r for r in gold_records}
    totals = {}
    for p in pred_records:
        g = gold.get(p["rally_id"])
        if g is None:
            continue
        pt = np.array([int(t) for t in parse_directions(p["tokens"])])
        gt = np.array([int(t) for t in g["labels"]])
        if pt.shape != gt.shape:
            raise ValueError(f"{p['rally_id']}: length mismatch {pt.size} vs {gt.size}")
        keep = gt != int(Direction.PAD)
        for name, c in token_counts(pt[keep], gt[keep]).items():
            totals[name] = totals.get(name, BinaryCounts()) + c
    return [{"token": name, "counts": asdict(c), "metrics": asdict(binary_metrics(c))}
            for name, c in totals.items()]


def _fmt(x):
    return f"{x:.4f}"


def render_table(report):
    lines = []
    if report.get("trimming"):
        t = report["trimming"]
        lines.append("Rally trimming")
        lines.append(f"{'Correct':>8}{'Extra':>8}{'Missed':>8}{'Total Trimmed':>15}{'Actual':>8}")
        lines.append(f"{t['correct']:>8}{t['extra']:>8}{t['missed']:>8}{t['total_trimmed']:>15}{t['actual']:>8}")
        lines.append(f"{'Accuracy':>10}{'Precision':>11}{'Recall':>9}{'F1-Score':>10}")
        lines.append(f"{_fmt(t['accuracy']):>10}{_fmt(t['precision']):>11}{_fmt(t['recall']):>9}{_fmt(t['f1']):>10}")
        lines.append("")
    if report.get("tokens"):
        lines.append("Direction tokens")
        lines.append(f"{'Token':>6}{'Accuracy':>10}{'Precision':>11}{'Recall':>9}{'F1-Score':>10}")
        for row in report["tokens"]:
            m = row["metrics"]
            lines.append(f"{row['token']:>6}{_fmt(m['accuracy']):>10}{_fmt(m['precision']):>11}"
                         f"{_fmt(m['recall']):>9}{_fmt(m['f1']):>10}")
        lines.append("")
    if report.get("hits"):
        lines.append("Hit frames")
        lines.append(f"{'Condition':>10}{'Accuracy':>10}{'Precision':>11}{'Recall':>9}{'F1-Score':>10}")
        for row in report["hits"]:
            m = row["metrics"]
            lines.append(f"{'±' + str(row['tol']):>10}{_fmt(m['accuracy']):>10}{_fmt(m['precision']):>11}"
                         f"{_fmt(m['recall']):>9}{_fmt(m['f1']):>10}")
        lines.append("")
    if report.get("rallies") is not None:
        lines.append(f"Rallies: {report['rallies']}  Hits: {report.get('hit_count', 0)}")
    return "\n".join(lines).rstrip() + "\n"


def render_csv(report):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "key", "tp", "fp", "fn", "tn", "accuracy", "precision", "recall", "f1"])
    if report.get("trimming"):
        t = report["trimming"]
        w.writerow(["trimming", "all", t["correct"], t["extra"], t["missed"], "",
                    _fmt(t["accuracy"]), _fmt(t["precision"]), _fmt(t["recall"]), _fmt(t["f1"])])
    for section, key in (("tokens", "token"), ("hits", "tol")):
        for row in report.get(section) or []:
            c, m = row["counts"], row["metrics"]
            w.writerow([section, row[key], c["tp"], c["fp"], c["fn"], c["tn"],
                        _fmt(m["accuracy"]), _fmt(m["precision"]), _fmt(m["recall"]), _fmt(m["f1"])])
    return buf.getvalue()


def write_report(out_dir, report, formats, stem="report"):
    out_dir = Path(out_dir)
    paths = []
    for fmt in formats:
        if fmt == "json":
            p = out_dir / f"{stem}.json"
            write_json(p, report)
        elif fmt == "table":
            p = out_dir / f"{stem}.txt"
            p.write_text(render_table(report), encoding="utf-8")
        elif fmt == "csv":
            p = out_dir / f"{stem}.csv"
            p.write_text(render_csv(report), encoding="utf-8")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
        paths.append(str(p))
    return paths


# ---------------------------------------------------------------------------
# training helpers used by the pipeline and the CLI


def train_angle_checkpoint(images_path, labels_path, out_path, options, seed=0):
    opts = dict(options or {})
    profile = opts.pop("profile", "desk")
    if profile == "desk":
        model_cfg, pre = angle_mod.SaCnnConfig.desk(), angle_mod.PreprocessConfig.desk()
    else:
        model_cfg, pre = angle_mod.SaCnnConfig(), angle_mod.PreprocessConfig()
    epochs = int(opts.get("epochs", 20))
    if "lr" in opts:
        schedule = LrSchedule(float(opts["lr"]), float(opts.get("decay_factor", 0.1)),
                              tuple(opts.get("milestones", range(6, epochs, 6))))
    else:
        schedule = angle_mod.reference_schedule()
    images = load_frames(images_path)
    labels = np.asarray(read_json(labels_path)["labels"], dtype=np.int64)
    x = np.stack([angle_mod.preprocess(f, pre) for f in images])
    model = angle_mod.SaCnnModel.init(model_cfg, pre, seed)
    model, history = angle_mod.train_sacnn(x, labels, model, schedule, epochs,
                                           batch_size=int(opts.get("batch_size", 8)),
                                           weight_decay=float(opts.get("weight_decay", 0.1)), seed=seed)
    model.save(out_path)
    return model, history


def train_direction_checkpoint(kseq_path, out_path, options, seed=0, strict=True):
    opts = dict(options or {})
    profile = opts.pop("profile", "desk")
    base = direction_mod.TransformerConfig.desk() if profile == "desk" else direction_mod.TransformerConfig()
    overrides = opts.get("model", {})
    cfg = direction_mod.TransformerConfig(**{**asdict(base), **overrides})
    epochs = int(opts.get("epochs", 100))
    if "lr" in opts:
        schedule = LrSchedule(float(opts["lr"]), float(opts.get("decay_factor", 0.1)),
                              tuple(opts.get("milestones", ())))
    else:
        schedule = direction_mod.reference_schedule()
    records = [direction_mod.KSeqRecord.from_json(r) for r in read_jsonl(kseq_path)]
    model, history = direction_mod.train_direction_model(
        records, cfg, schedule, epochs, seed=seed, batch_size=int(opts.get("batch_size", 1)),
        weight_decay=float(opts.get("weight_decay", 0.0)), strict=strict)
    model.save(out_path)
    return model, history


# ---------------------------------------------------------------------------


def _prepare(cfg):
    """Run the optional synth/training stages and fill in the paths they produce."""
    out = Path(cfg.output_dir)
    if cfg.synth is not None:
        scfg = SynthConfig.from_dict({"seed": cfg.seed, **cfg.synth})
        data = out / "data"
        manifest = generate_dataset(scfg, data)
        log.info("synthetic data:\n%s", summary_table(manifest["summary"]))
        cfg.frames = cfg.frames or str(data / "test" / "frames.hft")
        cfg.video_id = "synth-test"
        cfg.fps = scfg.fps
        cfg.keypoints = cfg.keypoints or str(data / "test" / "keypoints.jsonl")
        cfg.gold_hits = cfg.gold_hits or str(data / "test" / "gold_hits.jsonl")
        cfg.gold_segments = cfg.gold_segments or str(data / "test" / "segments.jsonl")
        if cfg.train_angle is None and cfg.angle_checkpoint is None and cfg.angles is None:
            cfg.angles = str(data / "test" / "angles.jsonl")
    if cfg.train_angle is not None:
        data = out / "data"
        ckpt = out / "checkpoints" / "sacnn.json"
        train_angle_checkpoint(cfg.train_angle.get("images", data / "angle" / "train_images.hft"),
                               cfg.train_angle.get("labels", data / "angle" / "train_labels.json"),
                               ckpt, {k: v for k, v in cfg.train_angle.items() if k not in ("images", "labels")},
                               seed=cfg.seed)
        cfg.angle_checkpoint = str(ckpt)
    if cfg.train_direction is not None:
        data = out / "data"
        ckpt = out / "checkpoints" / "direction.json"
        train_direction_checkpoint(cfg.train_direction.get("kseq", data / "train" / "kseq.jsonl"), ckpt,
                                   {k: v for k, v in cfg.train_direction.items() if k != "kseq"},
                                   seed=cfg.seed, strict=cfg.strict)
        cfg.direction_checkpoint = str(ckpt)


def run_pipeline(cfg):
    """Run every stage; returns the report dict. Writes all outputs under ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = "prepare"
    try:
        _prepare(cfg)
        cfg.validate()

        stage = "classify"
        if cfg.angles is not None:
            streams = read_angle_streams(cfg.angles)
        else:
            streams = [classify_frames(cfg.frames, cfg.angle_checkpoint, cfg.video_id, cfg.fps)]
        streams = sorted(streams, key=lambda s: s.video_id)
        streams = [smooth_stream(s, cfg.min_run) for s in streams]
        write_jsonl(out / "angles.jsonl", angle_records(streams))

        stage = "segment"
        segments = segment_streams(streams)
        write_jsonl(out / "segments.jsonl", segment_records(segments))

        stage = "filter"
        rallies = filter_rallies(read_jsonl(cfg.keypoints), segments, cfg.strict, cfg.hold_last)
        write_jsonl(out / "pairs.jsonl", pair_records(rallies))

        stage = "predict"
        model = direction_mod.DirectionModel.load(cfg.direction_checkpoint)
        directions = predict_rallies(rallies, model, strict=cfg.strict)
        write_jsonl(out / "directions.jsonl", directions)

        stage = "detect"
        hits = detect_records(directions)
        write_jsonl(out / "hits.jsonl", hits)

        stage = "report"
        report = {"rallies": len(hits), "hit_count": sum(len(h["hits_global"]) for h in hits)}
        if cfg.gold_segments:
            report["trimming"] = trim_report(segments, read_segments(cfg.gold_segments))
        if cfg.gold_hits:
            report["hits"] = hit_report(hits, read_jsonl(cfg.gold_hits), cfg.tolerances)
        write_report(out, report, cfg.formats)
        return report
    except (MissingInputError, InvalidConfigError):
        raise
    except StageError as exc:
        _write_failure(out, exc.stage, str(exc))
        raise
    except Exception as exc:
        _write_failure(out, stage, f"{type(exc).__name__}: {exc}")
        raise StageError(stage, str(exc)) from exc


def _write_failure(out, stage, message):
    produced = sorted(p.name for p in out.glob("*.jsonl"))
    write_json(out / "failure.json", {"stage": stage, "error": message, "outputs": produced})


"""Deterministic synthetic rallies with ground truth for every pipeline stage.

Each rally is a run layout ``S.. (B|U alternating) .. S`` with a hit at the
first frame of every B/U run. Two skeletons are drawn per frame:

* the player the shuttle is flying toward crouches (body lowered, feet
  wider) and lunges sideways while the hitting arm rises; the arm peaks
  overhead at the hit;
* the player who just struck stands upright with the arm dropping from
  overhead back to rest;
* during S both players stand neutral.

Random draws use counter-based Philox streams keyed by
``(seed, channel, rally_index)`` so any rally can be regenerated alone.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CourtKeypoints, LEFT_WRIST, RIGHT_WRIST
from .hits import Direction, format_directions
from .io import SCHEMA_VERSION, write_json, write_jsonl, write_tensor
from .rally import RallySegment

log = logging.getLogger(__name__)

DEFAULT_COURT = ((440.0, 200.0), (840.0, 200.0), (395.0, 390.0),
                 (885.0, 390.0), (340.0, 640.0), (940.0, 640.0))

# standing skeleton, (dx, dy) in units of body height from the ankle midpoint
_TEMPLATE = np.array([
    (0.00, -0.93), (-0.03, -0.95), (0.03, -0.95), (-0.06, -0.93), (0.06, -0.93),
    (-0.13, -0.80), (0.13, -0.80), (-0.18, -0.63), (0.18, -0.63),
    (-0.20, -0.47), (0.20, -0.47), (-0.09, -0.50), (0.09, -0.50),
    (-0.09, -0.26), (0.09, -0.26), (-0.09, 0.00), (0.09, 0.00),
])
_UPPER_BODY = np.arange(0, 13)
_KNEES = np.array([13, 14])
_ANKLES = np.array([15, 16])

CH_LAYOUT, CH_MOTION, CH_NOISE, CH_CROWD, CH_IMAGE, CH_GAP = range(6)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    rallies: int = 10
    fps: float = 30.0
    run_length: tuple = (8, 16)
    lead_steady: tuple = (4, 10)
    tail_steady: tuple = (4, 10)
    shots: tuple = (3, 6)
    gap: tuple = (10, 20)
    noise_std: float = 1.5
    court: tuple = DEFAULT_COURT
    player_height: tuple = (170.0, 115.0)  # bottom, top (perspective)
    crouch: float = 0.10
    lunge: float = 0.35
    bystanders: int = 2
    max_len: int = 120
    train_fraction: float = 0.8
    image_size: tuple = (18, 32)
    image_noise: float = 0.04
    angle_images: tuple = (320, 160)  # train, test

    def __post_init__(self):
        for name in ("run_length", "lead_steady", "tail_steady", "shots", "gap"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ValueError(f"{name} must satisfy 1 <= min <= max")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("run_length", "lead_steady", "tail_steady", "shots", "gap",
                  "player_height", "image_size", "angle_images"):
            if k in d:
                d[k] = tuple(d[k])
        if "court" in d:
            d["court"] = tuple(tuple(p) for p in d["court"])
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def _rng(cfg, channel, index):
    return np.random.Generator(np.random.Philox([cfg.seed, channel, index]))


@dataclass
class SynthRally:
    rally_id: str
    index: int
    tokens: list  # gold Direction per frame
    pairs: np.ndarray  # (F, 2, 17, 2), bottom player first
    instances: list  # per frame: list of (17, 2) arrays incl. bystanders, shuffled
    local_hits: list
    segment: RallySegment = None
    global_hits: list = field(default_factory=list)

    def __len__(self):
        return len(self.tokens)


def rally_layout(cfg, index):
    """Direction tokens for one rally and the local hit frames."""
    rng = _rng(cfg, CH_LAYOUT, index)
    lead = int(rng.integers(cfg.lead_steady[0], cfg.lead_steady[1] + 1))
    tail = int(rng.integers(cfg.tail_steady[0], cfg.tail_steady[1] + 1))
    shots = int(rng.integers(cfg.shots[0], cfg.shots[1] + 1))
    first = Direction.B if rng.random() < 0.5 else Direction.U
    runs = [int(rng.integers(cfg.run_length[0], cfg.run_length[1] + 1)) for _ in range(shots)]
    while len(runs) > 1 and lead + sum(runs) + tail > cfg.max_len:
        runs.pop()
    tokens = [Direction.S] * lead
    hits = []
    d = first
    for n in runs:
        hits.append(len(tokens))
        tokens.extend([d] * n)
        d = Direction.U if d == Direction.B else Direction.B
    tokens.extend([Direction.S] * tail)
    if len(tokens) > cfg.max_len:
        raise ValueError("rally layout cannot fit max_len; shrink run_length or steady ranges")
    return tokens, hits


def _skeleton(anchor, height, crouch=0.0, arm=0.0, side=1.0):
    """Pose a skeleton. ``crouch`` lowers the body, ``arm`` in [0, 1] raises the racket wrist."""
    pts = _TEMPLATE.copy()
    pts[_UPPER_BODY, 1] += crouch
    pts[_KNEES, 1] += crouch * 0.5
    pts[_KNEES, 0] *= 1.0 + 2.0 * crouch
    pts[_ANKLES, 0] *= 1.0 + 3.0 * crouch
    wrist = RIGHT_WRIST if side > 0 else LEFT_WRIST
    pts[wrist, 1] = (1 - arm) * pts[wrist, 1] + arm * (-1.08 + crouch)
    pts[wrist, 0] = (1 - arm) * pts[wrist, 0] + arm * 0.10 * side
    return anchor + pts * height


def _run_progress(tokens):
    """Per frame: fraction of the current run elapsed, in [0, 1]."""
    prog = np.zeros(len(tokens))
    start = 0
    for i in range(1, len(tokens) + 1):
        if i == len(tokens) or tokens[i] != tokens[start]:
            n = i - start
            prog[start:i] = np.arange(n) / max(n - 1, 1)
            start = i
    return prog


def _court_bounds(cfg):
    court = np.asarray(cfg.court)
    net_y = (court[2, 1] + court[3, 1]) / 2
    return court, net_y


def generate_rally(cfg, index):
    tokens, hits = rally_layout(cfg, index)
    f = len(tokens)
    rng = _rng(cfg, CH_MOTION, index)
    court, net_y = _court_bounds(cfg)
    top_y, bot_y = court[0, 1], court[4, 1]
    cx = (court[0, 0] + court[1, 0] + court[4, 0] + court[5, 0]) / 4
    # slow random walks for each player's home position
    homes = []
    for slot, (y_lo, y_hi) in enumerate(((net_y + 0.35 * (bot_y - net_y), bot_y - 0.12 * (bot_y - net_y)),
                                         (top_y + 0.15 * (net_y - top_y), net_y - 0.30 * (net_y - top_y)))):
        y0 = rng.uniform(y_lo, y_hi)
        x0 = cx + rng.uniform(-60, 60) * (1.0 if slot == 0 else 0.7)
        steps = rng.normal(0.0, 1.2, size=(f, 2)).cumsum(axis=0)
        pos = np.stack([x0 + steps[:, 0], np.clip(y0 + steps[:, 1], y_lo, y_hi)], axis=1)
        homes.append(pos)
    sides = (1.0 if rng.random() < 0.5 else -1.0, 1.0 if rng.random() < 0.5 else -1.0)
    lunge_dir = rng.choice([-1.0, 1.0], size=len(hits) + 1)
    prog = _run_progress(tokens)
    run_id = np.cumsum([0] + [int(tokens[i] != tokens[i - 1]) for i in range(1, f)])

    pairs = np.zeros((f, 2, 17, 2))
    for t, tok in enumerate(tokens):
        for slot in (0, 1):
            h = cfg.player_height[slot]
            anchor = homes[slot][t].copy()
            crouch = arm = 0.0
            if tok != Direction.S:
                receiving = (tok == Direction.B) == (slot == 0)
                p = prog[t]
                if receiving:
                    crouch = cfg.crouch
                    arm = p ** 2
                    anchor[0] += lunge_dir[run_id[t] % len(lunge_dir)] * cfg.lunge * h * p
                else:
                    arm = (1.0 - p) ** 2
            pairs[t, slot] = _skeleton(anchor, h, crouch, arm, sides[slot])

    noise_rng = _rng(cfg, CH_NOISE, index)
    if cfg.noise_std > 0:
        pairs = pairs + noise_rng.normal(0.0, cfg.noise_std, size=pairs.shape)

    crowd_rng = _rng(cfg, CH_CROWD, index)
    spots = [(court[4, 0] - 90.0, bot_y + 40.0), (court[1, 0] + 110.0, net_y),
             (court[0, 0] - 120.0, top_y + 30.0), (court[5, 0] + 70.0, bot_y + 20.0)]
    crowd = []
    for k in range(cfg.bystanders):
        x, y = spots[k % len(spots)]
        crowd.append((np.array([x, y]) + crowd_rng.uniform(-15, 15, 2), crowd_rng.uniform(70, 120)))
    instances = []
    for t in range(f):
        frame = [pairs[t, 0], pairs[t, 1]]
        for anchor, h in crowd:
            frame.append(_skeleton(anchor + crowd_rng.normal(0, 1.0, 2), h))
        order = crowd_rng.permutation(len(frame))
        instances.append([frame[i] for i in order])
    return SynthRally(f"r{index:04d}", index, tokens, pairs, instances, hits)


# ---------------------------------------------------------------------------
# images for the shot-angle classifier


def _draw_line(img, p0, p1, color, width=0.6):
    h, w = img.shape[1:]
    yy, xx = np.mgrid[0:h, 0:w]
    d = np.asarray(p1, float) - np.asarray(p0, float)
    t = np.clip(((xx - p0[0]) * d[0] + (yy - p0[1]) * d[1]) / max(d @ d, 1e-9), 0, 1)
    dist = np.hypot(xx - (p0[0] + t * d[0]), yy - (p0[1] + t * d[1]))
    alpha = np.clip(1.0 - dist / width, 0, 1) if width > 0 else (dist < 0.5)
    img[:] = img * (1 - alpha) + np.asarray(color)[:, None, None] * alpha


def render_frame(cfg, high, key):
    """One (3, H, W) image: court trapezoid for High, unstructured blobs for Other."""
    rng = _rng(cfg, CH_IMAGE, key)
    h, w = cfg.image_size
    if high:
        base = np.array([0.15, 0.45, 0.30]) + rng.uniform(-0.08, 0.08, 3)
        img = np.broadcast_to(base[:, None, None], (3, h, w)).copy()
        jx, jy = rng.uniform(-1.5, 1.5, 2)
        tl, tr = (w * 0.32 + jx, h * 0.18 + jy), (w * 0.68 + jx, h * 0.18 + jy)
        bl, br = (w * 0.18 + jx, h * 0.88 + jy), (w * 0.82 + jx, h * 0.88 + jy)
        white = np.array([0.95, 0.95, 0.95])
        for a, b in ((tl, tr), (tr, br), (br, bl), (bl, tl)):
            _draw_line(img, a, b, white)
        ml = ((tl[0] + bl[0]) / 2, (tl[1] + bl[1]) / 2)
        mr = ((tr[0] + br[0]) / 2, (tr[1] + br[1]) / 2)
        _draw_line(img, ml, mr, np.array([0.1, 0.1, 0.1]))
    else:
        img = np.broadcast_to(rng.uniform(0.1, 0.9, 3)[:, None, None], (3, h, w)).copy()
        yy, xx = np.mgrid[0:h, 0:w]
        for _ in range(int(rng.integers(2, 6))):
            cy, cx = rng.uniform(0, h), rng.uniform(0, w)
            r = rng.uniform(2.0, 8.0)
            blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r))
            color = rng.uniform(0, 1, 3)
            img = img * (1 - blob) + color[:, None, None] * blob
    img = img + rng.normal(0, cfg.image_noise, img.shape)
    return np.clip(img, 0.0, 1.0)


def angle_image_set(cfg, count, offset):
    """Balanced labelled images (uint8 N×3×H×W) for SA-CNN training/testing."""
    labels = np.array([i % 2 for i in range(count)], dtype=np.int64)
    imgs = np.stack([render_frame(cfg, bool(labels[i]), offset + i) for i in range(count)])
    return to_uint8(imgs), labels


def to_uint8(frames):
    return np.clip(np.round(frames * 255.0), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# videos and datasets


@dataclass
class SynthVideo:
    video_id: str
    fps: float
    angles: list  # 0/1 per frame
    rallies: list  # SynthRally with segment/global_hits filled
    total_frames: int

    @property
    def gold_hits(self):
        return [h for r in self.rallies for h in r.global_hits]

    @property
    def segments(self):
        return [r.segment for r in self.rallies]


def assemble_video(cfg, rallies, video_id):
    """Concatenate rallies with Other gaps before, between, and after them."""
    angles = []
    for r in rallies:
        g = int(_rng(cfg, CH_GAP, r.index).integers(cfg.gap[0], cfg.gap[1] + 1))
        angles.extend([0] * g)
        start = len(angles)
        angles.extend([1] * len(r))
        r.segment = RallySegment(start, len(angles) - 1)
        r.global_hits = [start + h for h in r.local_hits]
    angles.extend([0] * cfg.gap[0])
    return SynthVideo(video_id, cfg.fps, angles, rallies, len(angles))


def render_video_frames(cfg, video):
    frames = np.stack([render_frame(cfg, bool(a), 1_000_000 + i) for i, a in enumerate(video.angles)])
    return to_uint8(frames)


def video_keypoint_records(cfg, video):
    """Raw per-frame detections for the High frames of a video."""
    court = [list(p) for p in cfg.court]
    records = []
    for r in video.rallies:
        for i, inst in enumerate(r.instances):
            records.append({
                "video_id": video.video_id,
                "frame": r.segment.start_frame + i,
                "instances": [np.round(s, 4).tolist() for s in inst],
                "court": court,
            })
    return records


def kseq_record(rally, video_id=None):
    rec = {
        "rally_id": rally.rally_id,
        "frames": [{"pair": np.round(p, 4).tolist(), "label": format_directions([t])}
                   for p, t in zip(rally.pairs, rally.tokens)],
    }
    if video_id is not None and rally.segment is not None:
        rec["video_id"] = video_id
        rec["start_frame"] = rally.segment.start_frame
    return rec


def split_counts(cfg):
    n_train = int(round(cfg.rallies * cfg.train_fraction))
    return n_train, cfg.rallies - n_train


def generate_dataset(cfg, out_dir, with_frames=True):
    """Write train/test splits, a test video, angle image sets, and a manifest.

    Returns the manifest dict. Layout::

        manifest.json
        train/kseq.jsonl                test/kseq.jsonl
        test/angles.jsonl               gold shot-angle stream of the test video
        test/segments.jsonl             gold rally spans
        test/keypoints.jsonl            raw multi-person detections per High frame
        test/gold_hits.jsonl            gold global hit frames
        test/frames.hft                 rendered frames (uint8 N×3×H×W)
        angle/train_images.hft + train_labels.json, angle/test_images.hft + test_labels.json
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write synthetic dataset to {out}: {exc}") from exc
    n_train, _ = split_counts(cfg)
    rallies = [generate_rally(cfg, i) for i in range(cfg.rallies)]
    train, test = rallies[:n_train], rallies[n_train:]
    train_video = assemble_video(cfg, train, "synth-train")
    test_video = assemble_video(cfg, test, "synth-test")

    write_jsonl(out / "train" / "kseq.jsonl", [kseq_record(r, train_video.video_id) for r in train])
    write_jsonl(out / "test" / "kseq.jsonl", [kseq_record(r, test_video.video_id) for r in test])
    for split, video in (("train", train_video), ("test", test_video)):
        write_jsonl(out / split / "angles.jsonl", [{
            "video_id": video.video_id, "fps": video.fps,
            "tokens": "".join("H" if a else "O" for a in video.angles)}])
        write_jsonl(out / split / "segments.jsonl", [{
            "video_id": video.video_id,
            "rallies": [[s.start_frame, s.end_frame] for s in video.segments]}])
        write_jsonl(out / split / "gold_hits.jsonl", [{
            "video_id": video.video_id, "total_frames": video.total_frames,
            "hits": video.gold_hits}])
    write_jsonl(out / "test" / "keypoints.jsonl", video_keypoint_records(cfg, test_video))
    if with_frames:
        write_tensor(out / "test" / "frames.hft", render_video_frames(cfg, test_video))
        n_tr, n_te = cfg.angle_images
        for split, count, offset in (("train", n_tr, 0), ("test", n_te, 500_000)):
            imgs, labels = angle_image_set(cfg, count, offset)
            write_tensor(out / "angle" / f"{split}_images.hft", imgs)
            write_json(out / "angle" / f"{split}_labels.json", {
                "schema_version": SCHEMA_VERSION, "labels": labels.tolist()})

    summary = {
        "train": {"videos": 1, "sequences": len(train), "pairs": sum(len(r) for r in train)},
        "test": {"videos": 1, "sequences": len(test), "pairs": sum(len(r) for r in test)},
    }
    summary["total"] = {k: summary["train"][k] + summary["test"][k] for k in summary["train"]}
    manifest = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "summary": summary}
    write_json(out / "manifest.json", manifest)
    return manifest


def summary_table(summary):
    rows = [f"{'':8}{'Videos':>8}{'Keypoint Sequences':>20}{'Keypoint Pairs':>16}"]
    for split in ("train", "test", "total"):
        s = summary[split]
        rows.append(f"{split.capitalize():8}{s['videos']:>8}{s['sequences']:>20}{s['pairs']:>16}")
    return "\n".join(rows)


def court_keypoints(cfg):
    return CourtKeypoints.from_points(cfg.court)

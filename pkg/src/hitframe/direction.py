"""Shuttlecock direction labelling from two-player keypoint sequences.

Architecture: a separate two-layer MLP per player (bottom player first),
concatenated to ``d_model``, plus sinusoidal positions, then a stack of
post-norm encoder layers and a per-frame linear head over S/B/U/Pad.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import KeypointStats, normalize_pair
from .hits import Direction, format_directions, parse_directions
from .nn.autograd import Tensor, add, concat, relu, reshape
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import ConfigError, affine, encoder_layer, init_affine, init_encoder_layer, sinusoidal_encoding
from .nn.losses import masked_cross_entropy
from .nn.optim import AdamState, LrSchedule, adam_step

log = logging.getLogger(__name__)

PAD = int(Direction.PAD)


class SequenceLengthError(ValueError):
    pass


@dataclass(frozen=True)
class TransformerConfig:
    d_model: int = 512
    heads: int = 8
    layers: int = 8
    d_ff: int = 2048
    max_len: int = 600
    classes: int = 4
    dropout: float = 0.1
    proj_hidden: int = 256

    def __post_init__(self):
        if self.d_model % 2:
            raise ConfigError("d_model must be even for the two player branches")
        if self.d_model % self.heads:
            raise ConfigError("d_model must be divisible by heads")
        if self.max_len < 1:
            raise ConfigError("max_len must be >= 1")

    @classmethod
    def desk(cls):
        return cls(d_model=32, heads=4, layers=2, d_ff=64, max_len=120, dropout=0.1, proj_hidden=64)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class KSeqRecord:
    rally_id: str
    pairs: np.ndarray  # (F, 2, 17, 2) raw pixel coordinates
    labels: list  # Direction per frame, no Pad
    video_id: str = None
    start_frame: int = None

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.float64)
        if self.pairs.ndim != 4 or self.pairs.shape[1:] != (2, 17, 2):
            raise ValueError(f"{self.rally_id}: pairs must be (F, 2, 17, 2), got {self.pairs.shape}")
        if len(self.labels) != len(self.pairs):
            raise ValueError(f"{self.rally_id}: {len(self.labels)} labels for {len(self.pairs)} frames")
        if any(int(t) == PAD for t in self.labels):
            raise ValueError(f"{self.rally_id}: labels must not contain Pad")

    @classmethod
    def from_json(cls, rec):
        frames = rec["frames"]
        return cls(rec["rally_id"], np.array([f["pair"] for f in frames], dtype=np.float64),
                   parse_directions("".join(f["label"] for f in frames)),
                   rec.get("video_id"), rec.get("start_frame"))

    def to_json(self):
        rec = {"rally_id": self.rally_id,
               "frames": [{"pair": p.tolist(), "label": format_directions([t])}
                          for p, t in zip(self.pairs, self.labels)]}
        if self.video_id is not None:
            rec["video_id"] = self.video_id
        if self.start_frame is not None:
            rec["start_frame"] = self.start_frame
        return rec


def init_params(cfg, seed=0):
    rng = np.random.Generator(np.random.Philox(seed))
    params = {}
    half = cfg.d_model // 2
    for player in ("bottom", "top"):
        init_affine(rng, params, f"proj.{player}.fc1", 34, cfg.proj_hidden)
        init_affine(rng, params, f"proj.{player}.fc2", cfg.proj_hidden, half)
    for i in range(cfg.layers):
        init_encoder_layer(rng, params, f"enc{i}", cfg.d_model, cfg.d_ff)
    init_affine(rng, params, "head", cfg.d_model, cfg.classes)
    return params


def playerwise_projection(x, params):
    """(N, F, 2, 17, 2) normalized keypoints -> (N, F, d_model)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim == 4:
        x = reshape(x, (1,) + x.shape)
    n, f = x.shape[:2]
    flat = reshape(x, (n, f, 2, 34))
    outs = []
    for slot, player in enumerate(("bottom", "top")):
        xi = _select_slot(flat, slot)
        h = relu(affine(xi, params[f"proj.{player}.fc1.W"], params[f"proj.{player}.fc1.b"]))
        outs.append(relu(affine(h, params[f"proj.{player}.fc2.W"], params[f"proj.{player}.fc2.b"])))
    return concat(outs, axis=-1)


def _select_slot(x, slot):
    data = x.data[:, :, slot, :]

    def backward(g):
        full = np.zeros(x.shape)
        full[:, :, slot, :] = g
        return (full,)

    return Tensor(data, _parents=(x,), _backward=backward)


def transformer_forward(batch, pad_mask, params, cfg, training=False, rng=None, strict=True):
    """Per-frame logits (N, F, C).

    ``batch`` is (N, F, 2, 17, 2) normalized keypoints; ``pad_mask`` is
    (N, F) with True on padded frames.
    """
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    if x.ndim == 4:
        x = reshape(x, (1,) + x.shape)
        pad_mask = None if pad_mask is None else np.asarray(pad_mask)[None]
    n, f = x.shape[:2]
    if strict and f > cfg.max_len:
        raise SequenceLengthError(f"sequence length {f} exceeds max_len {cfg.max_len}")
    if pad_mask is None:
        pad_mask = np.zeros((n, f), dtype=bool)
    h = playerwise_projection(x, params)
    h = add(h, sinusoidal_encoding(f, cfg.d_model)[None])
    for i in range(cfg.layers):
        h = encoder_layer(h, params, f"enc{i}", cfg.heads, cfg.dropout, training, rng, pad_mask)
    return affine(h, params["head.W"], params["head.b"])


@dataclass
class DirectionModel:
    cfg: TransformerConfig
    params: dict
    stats: KeypointStats
    optimizer: AdamState = field(default_factory=AdamState)

    def arrays(self):
        return {k: t.data for k, t in self.params.items()}

    def save(self, path):
        save_checkpoint(path, "direction", asdict(self.cfg), self.arrays(), optimizer=self.optimizer,
                        extra={"keypoint_stats": self.stats.to_dict()})

    @classmethod
    def load(cls, path):
        ck = load_checkpoint(path, "direction")
        cfg = TransformerConfig.from_dict(ck["config"])
        params = {k: Tensor(v, requires_grad=True) for k, v in ck["params"].items()}
        return cls(cfg, params, KeypointStats.from_dict(ck["extra"]["keypoint_stats"]), ck["optimizer"])


def reference_schedule():
    """1e-5, decayed by 90% from epoch 70 on (100 epochs)."""
    return LrSchedule(1e-5, 0.1, (70,))


def pad_batch(records, stats, length):
    """Stack normalized sequences padded to ``length``; returns x, labels, pad mask."""
    n = len(records)
    x = np.zeros((n, length, 2, 17, 2))
    y = np.full((n, length), PAD, dtype=np.int64)
    mask = np.ones((n, length), dtype=bool)
    for i, r in enumerate(records):
        k = len(r.pairs)
        x[i, :k] = normalize_pair(r.pairs, stats)
        y[i, :k] = [int(t) for t in r.labels]
        mask[i, :k] = False
    return x, y, mask


def batch_loss(model, records, training=False, rng=None, length=None):
    length = length or model.cfg.max_len
    x, y, mask = pad_batch(records, model.stats, length)
    logits = transformer_forward(x, mask, model.params, model.cfg, training, rng)
    return masked_cross_entropy(logits, y, ignore_index=PAD)


def init_model(cfg, records, seed=0):
    stats = KeypointStats.from_pairs(np.concatenate([r.pairs for r in records]))
    return DirectionModel(cfg, init_params(cfg, seed), stats)


def train_direction_model(records, cfg, schedule, epochs, seed=0, batch_size=1, weight_decay=0.0,
                          strict=True, model=None):
    """Train on KSeq records padded to ``cfg.max_len`` with Pad as the ignore index.

    Keypoint statistics come from the training records and are stored with
    the model. Returns the model and the per-epoch mean batch loss.
    """
    if not records:
        raise ValueError("no training records")
    for r in records:
        if len(r.pairs) > cfg.max_len:
            if strict:
                raise SequenceLengthError(f"{r.rally_id}: length {len(r.pairs)} > max_len {cfg.max_len}")
    records = [r for r in records if len(r.pairs) <= cfg.max_len] + \
        [c for r in records if len(r.pairs) > cfg.max_len for c in _chunk_record(r, cfg.max_len)]
    model = model or init_model(cfg, records, seed)
    history = []
    step = 0
    for epoch in range(epochs):
        lr = schedule.lr(epoch)
        order = np.random.Generator(np.random.Philox([seed, 1, epoch])).permutation(len(records))
        losses = []
        for start in range(0, len(order), batch_size):
            batch = [records[i] for i in order[start:start + batch_size]]
            length = max(len(r.pairs) for r in batch) if batch_size > 1 else len(batch[0].pairs)
            rng = np.random.Generator(np.random.Philox([seed, 2, step]))
            for t in model.params.values():
                t.grad = None
            loss = batch_loss(model, batch, training=True, rng=rng, length=length)
            loss.backward()
            adam_step(model.arrays(), {k: t.grad for k, t in model.params.items()},
                      model.optimizer, lr, weight_decay)
            losses.append(float(loss.data))
            step += 1
        history.append(float(np.mean(losses)))
        log.info("direction epoch %d lr=%.1e loss=%.4f", epoch, lr, history[-1])
    return model, history


def _chunk_record(r, size):
    return [KSeqRecord(f"{r.rally_id}#{i // size}", r.pairs[i:i + size], r.labels[i:i + size])
            for i in range(0, len(r.pairs), size)]


def predict_logits(pairs, model, strict=True):
    """Eval-mode logits (F, C) for one raw (F, 2, 17, 2) sequence; chunks when not strict."""
    pairs = np.asarray(pairs, dtype=np.float64)
    f = len(pairs)
    if f < 1:
        raise ValueError("empty keypoint sequence")
    if f > model.cfg.max_len and strict:
        raise SequenceLengthError(f"sequence length {f} exceeds max_len {model.cfg.max_len}")
    out = []
    for start in range(0, f, model.cfg.max_len):
        chunk = normalize_pair(pairs[start:start + model.cfg.max_len], model.stats)
        out.append(transformer_forward(chunk[None], None, model.params, model.cfg).data[0])
    return np.concatenate(out)


def predict_directions(pairs, model, strict=True):
    """Argmax over S/B/U per frame; the Pad logit is never chosen."""
    logits = predict_logits(pairs, model, strict)
    return [Direction(int(i)) for i in np.argmax(logits[:, :PAD], axis=1)]


def token_accuracy(records, model):
    hit = total = 0
    for r in records:
        pred = predict_directions(r.pairs, model, strict=False)
        hit += sum(int(p) == int(g) for p, g in zip(pred, r.labels))
        total += len(r.labels)
    return hit / total

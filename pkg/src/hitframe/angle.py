"""Shot-angle CNN: preprocessing, the conv-block classifier, training, and stream labelling."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn.autograd import ShapeError, Tensor, relu, reshape
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import affine, conv_block, init_affine, init_conv, init_norm
from .nn.losses import softmax_cross_entropy
from .nn.optim import AdamState, LrSchedule, adam_step
from .rally import AngleStream, ShotAngle

log = logging.getLogger(__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class DegenerateDataError(ValueError):
    pass


@dataclass(frozen=True)
class PreprocessConfig:
    resize_h: int = 216
    resize_w: int = 384
    crop: int = 216
    channel_means: tuple = IMAGENET_MEAN
    channel_stds: tuple = IMAGENET_STD

    def __post_init__(self):
        if self.crop > min(self.resize_h, self.resize_w):
            raise ValueError("crop must fit inside the resized frame")
        if min(self.channel_stds) <= 0:
            raise ValueError("channel stds must be positive")

    @classmethod
    def desk(cls):
        return cls(resize_h=32, resize_w=56, crop=32)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["channel_means"] = tuple(d["channel_means"])
        d["channel_stds"] = tuple(d["channel_stds"])
        return cls(**d)


def bilinear_resize(img, out_h, out_w):
    """Resize (C, H, W) with half-pixel centres and edge clamping (no antialiasing)."""
    c, h, w = img.shape

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = axis(h, out_h)
    x0, x1, fx = axis(w, out_w)
    top = img[:, y0][:, :, x0] * (1 - fx) + img[:, y0][:, :, x1] * fx
    bot = img[:, y1][:, :, x0] * (1 - fx) + img[:, y1][:, :, x1] * fx
    return top * (1 - fy)[None, :, None] + bot * fy[None, :, None]


def preprocess(frame, cfg):
    """Resize, centre-crop to a square, and z-score each channel."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[0] != 3 or frame.shape[1] < 2 or frame.shape[2] < 2:
        raise ValueError(f"expected a (3, H>=2, W>=2) frame, got {frame.shape}")
    x = frame
    if frame.shape[1:] != (cfg.resize_h, cfg.resize_w):
        x = bilinear_resize(frame, cfg.resize_h, cfg.resize_w)
    top = (cfg.resize_h - cfg.crop) // 2
    left = (cfg.resize_w - cfg.crop) // 2
    x = x[:, top:top + cfg.crop, left:left + cfg.crop]
    mean = np.asarray(cfg.channel_means)[:, None, None]
    std = np.asarray(cfg.channel_stds)[:, None, None]
    return (x - mean) / std


@dataclass(frozen=True)
class SaCnnConfig:
    input_size: int = 216
    channels: tuple = (16, 32, 64)
    fc_width: int = 128
    classes: int = 2
    pool: int = 2
    stride: int = 2
    faithful_relu: bool = False  # ReLU on the logits as well

    def __post_init__(self):
        if len(self.channels) < 1:
            raise ValueError("need at least one conv block")

    @property
    def flat_size(self):
        size = self.input_size
        for _ in self.channels:
            size = (size - self.pool) // self.stride + 1
        return self.channels[-1] * size * size

    @classmethod
    def desk(cls):
        return cls(input_size=32, channels=(8, 16, 16), fc_width=32)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return cls(**d)


@dataclass
class SaCnnModel:
    cfg: SaCnnConfig
    preprocess: PreprocessConfig
    params: dict  # name -> Tensor
    bn_state: dict = field(default_factory=dict)  # block name -> running stats
    optimizer: AdamState = field(default_factory=AdamState)

    @classmethod
    def init(cls, cfg, preprocess_cfg, seed=0):
        rng = np.random.Generator(np.random.Philox(seed))
        params = {}
        c_in = 3
        for i, c_out in enumerate(cfg.channels):
            init_conv(rng, params, f"block{i}.conv", c_in, c_out)
            init_norm(params, f"block{i}.bn", c_out)
            c_in = c_out
        init_affine(rng, params, "fc", cfg.flat_size, cfg.fc_width)
        init_affine(rng, params, "out", cfg.fc_width, cfg.classes)
        bn_state = {f"block{i}": {} for i in range(len(cfg.channels))}
        return cls(cfg, preprocess_cfg, params, bn_state)

    def arrays(self):
        return {k: t.data for k, t in self.params.items()}

    def buffers(self):
        out = {}
        for name, st in self.bn_state.items():
            if st.get("running_mean") is not None:
                out[f"{name}.running_mean"] = st["running_mean"]
                out[f"{name}.running_var"] = st["running_var"]
        return out

    def save(self, path):
        save_checkpoint(path, "sacnn", {"model": asdict(self.cfg), "preprocess": asdict(self.preprocess)},
                        self.arrays(), self.buffers(), self.optimizer)

    @classmethod
    def load(cls, path):
        ck = load_checkpoint(path, "sacnn")
        cfg = SaCnnConfig.from_dict(ck["config"]["model"])
        pre = PreprocessConfig.from_dict(ck["config"]["preprocess"])
        params = {k: Tensor(v, requires_grad=True) for k, v in ck["params"].items()}
        bn_state = {f"block{i}": {} for i in range(len(cfg.channels))}
        for name, st in bn_state.items():
            if f"{name}.running_mean" in ck["buffers"]:
                st["running_mean"] = ck["buffers"][f"{name}.running_mean"]
                st["running_var"] = ck["buffers"][f"{name}.running_var"]
        return cls(cfg, pre, params, bn_state, ck["optimizer"])


def sacnn_forward(batch, model, training=False):
    """Logits (N, C) for a preprocessed batch (N, 3, S, S)."""
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    cfg = model.cfg
    if x.ndim != 4 or x.shape[1:] != (3, cfg.input_size, cfg.input_size):
        raise ShapeError(f"expected (N, 3, {cfg.input_size}, {cfg.input_size}), got {x.shape}")
    h = x
    for i in range(len(cfg.channels)):
        h = conv_block(h, model.params, f"block{i}", model.bn_state[f"block{i}"], training,
                       cfg.pool, cfg.stride)
    h = reshape(h, (h.shape[0], -1))
    h = relu(affine(h, model.params["fc.W"], model.params["fc.b"]))
    logits = affine(h, model.params["out.W"], model.params["out.b"])
    if cfg.faithful_relu:
        logits = relu(logits)
    return logits


def reference_schedule():
    """1e-3 decayed by 90% every six epochs over 20 epochs."""
    return LrSchedule.every(1e-3, 0.1, 6, 20)


def train_sacnn(images, labels, model, schedule, epochs, batch_size=8, weight_decay=0.1, seed=0):
    """Minimise the summed cross-entropy with Adam. ``images`` are preprocessed.

    Returns the model (updated in place) and the per-epoch summed training loss.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise DegenerateDataError("training set must contain both shot-angle classes")
    images = np.asarray(images, dtype=np.float64)
    history = []
    n = len(labels)
    for epoch in range(epochs):
        lr = schedule.lr(epoch)
        order = np.random.Generator(np.random.Philox([seed, epoch])).permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            for t in model.params.values():
                t.grad = None
            loss = softmax_cross_entropy(sacnn_forward(images[idx], model, training=True), labels[idx])
            loss.backward()
            total += float(loss.data)
            grads = {k: t.grad for k, t in model.params.items()}
            adam_step(model.arrays(), grads, model.optimizer, lr, weight_decay)
        history.append(total)
        log.info("sacnn epoch %d lr=%.1e loss=%.4f", epoch, lr, total)
    return model, history


def predict_classes(images, model, batch_size=256):
    preds = []
    for start in range(0, len(images), batch_size):
        logits = sacnn_forward(images[start:start + batch_size], model, training=False).data
        preds.append(np.argmax(logits, axis=1))  # ties -> lowest index (Other)
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def classify_stream(frames, model, video_id="video", fps=30.0, batch_size=256):
    """Label raw (N, 3, H, W) frames as Other/High."""
    tokens = []
    for start in range(0, len(frames), batch_size):
        chunk = np.stack([preprocess(f, model.preprocess) for f in frames[start:start + batch_size]])
        tokens.extend(int(c) for c in predict_classes(chunk, model, batch_size))
    return AngleStream(video_id, fps, tuple(ShotAngle(t) for t in tokens))

"""Adam with L2-coupled weight decay and a step-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    decay_factor: float = 1.0
    milestones: tuple = ()

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must lie in (0, 1]")

    def lr(self, epoch):
        passed = sum(1 for m in self.milestones if m <= epoch)
        return self.base_lr * self.decay_factor ** passed

    @classmethod
    def every(cls, base_lr, decay_factor, period, epochs):
        """Decay every ``period`` epochs, e.g. ``every(1e-3, 0.1, 6, 20)``."""
        return cls(base_lr, decay_factor, tuple(range(period, epochs, period)))

    def to_dict(self):
        return {"base_lr": self.base_lr, "decay_factor": self.decay_factor,
                "milestones": list(self.milestones)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["base_lr"]), float(d.get("decay_factor", 1.0)),
                   tuple(int(m) for m in d.get("milestones", ())))


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state, lr, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
    """One Adam update, in place on ``params`` (name -> ndarray).

    Weight decay is added to the gradient before the moment updates.
    Missing gradients are treated as zero.
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    b1, b2 = betas
    state.t += 1
    t = state.t
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, w in params.items():
        g = grads.get(name)
        g = np.zeros_like(w) if g is None else g
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {w.shape} for {name}")
        if weight_decay:
            g = g + weight_decay * w
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(w)
            v = np.zeros_like(w)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        w -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state

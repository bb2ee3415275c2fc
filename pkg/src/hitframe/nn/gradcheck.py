"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .autograd import Tensor


def grad_check(op, point, epsilon=1e-5, seed=0):
    """Return the max relative error between analytic and central-difference gradients.

    ``op`` maps a list of Tensors to a Tensor. ``point`` is a list of arrays.
    Non-scalar outputs are reduced with a fixed random projection so every
    output coordinate participates. Relative error per coordinate is
    ``|a - b| / max(1, |a|, |b|)``.
    """
    point = [np.array(p, dtype=np.float64) for p in point]
    probe = None

    def scalar(arrays, track):
        nonlocal probe
        ts = [Tensor(a.copy(), requires_grad=track) for a in arrays]
        out = op(ts)
        if probe is None:
            probe = np.random.default_rng(seed).standard_normal(out.shape)
        return ts, out, float((out.data * probe).sum())

    ts, out, _ = scalar(point, True)
    out.backward(probe)
    worst = 0.0
    for k, t in enumerate(ts):
        analytic = np.zeros_like(point[k]) if t.grad is None else t.grad
        it = np.nditer(point[k], flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            base = point[k][idx]
            point[k][idx] = base + epsilon
            f_plus = scalar(point, False)[2]
            point[k][idx] = base - epsilon
            f_minus = scalar(point, False)[2]
            point[k][idx] = base
            numeric = (f_plus - f_minus) / (2 * epsilon)
            a = analytic[idx]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst

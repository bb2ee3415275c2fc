"""Cross-entropy losses.

``softmax_cross_entropy`` sums per-sample losses over the batch.
``masked_cross_entropy`` averages over the non-ignored positions only; the
two reductions are intentionally different and are not unified.
"""

from __future__ import annotations

import numpy as np

from .autograd import ShapeError, Tensor


class LabelError(ValueError):
    pass


class EmptyMaskError(ValueError):
    pass


def log_softmax(z):
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, labels):
    """Sum over rows of ``-log softmax(logits)[label]``. ``logits`` is (N, C)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} vs labels {labels.shape}")
    c = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise LabelError(f"labels must lie in [0, {c})")
    logp = log_softmax(logits.data)
    rows = np.arange(labels.size)
    loss = -logp[rows, labels].sum()

    def backward(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        return (grad * g,)

    return Tensor(loss, _parents=(logits,), _backward=backward)


def masked_cross_entropy(logits, labels, ignore_index):
    """Mean cross-entropy over positions whose label is not ``ignore_index``.

    ``logits`` is (..., C) and ``labels`` matches its leading shape. Ignored
    positions contribute nothing to the loss and get an exactly-zero gradient.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != logits.shape[:-1]:
        raise ShapeError(f"logits {logits.shape} vs labels {labels.shape}")
    c = logits.shape[-1]
    keep = labels != ignore_index
    count = int(keep.sum())
    if count == 0:
        raise EmptyMaskError("every position carries the ignore index")
    real = labels[keep]
    if real.min() < 0 or real.max() >= c:
        raise LabelError(f"labels must lie in [0, {c}) or equal ignore_index")
    z = logits.data.reshape(-1, c)
    flat_keep = keep.reshape(-1)
    idx = np.flatnonzero(flat_keep)
    logp = log_softmax(z[idx])
    loss = -logp[np.arange(idx.size), real].sum() / count

    def backward(g):
        grad = np.zeros_like(z)
        sub = np.exp(logp)
        sub[np.arange(idx.size), real] -= 1.0
        grad[idx] = sub * (g / count)
        return (grad.reshape(logits.shape),)

    return Tensor(loss, _parents=(logits,), _backward=backward)

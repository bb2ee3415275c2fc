"""Confusion-count metrics, rally-trimming matching, and tolerance-window hit scoring."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .hits import Direction


class EmptyEvaluationError(ValueError):
    pass


def _ratio(num, den):
    return num / den if den else 0.0


def _f1(p, r):
    return 2 * p * r / (p + r) if (p + r) else 0.0


@dataclass(frozen=True)
class BinaryCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other):
        return BinaryCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def binary_metrics(counts):
    total = counts.tp + counts.fp + counts.fn + counts.tn
    if total == 0:
        raise EmptyEvaluationError("all confusion counts are zero")
    p = _ratio(counts.tp, counts.tp + counts.fp)
    r = _ratio(counts.tp, counts.tp + counts.fn)
    return Metrics(
        accuracy=(counts.tp + counts.tn) / total,
        precision=p,
        recall=r,
        f1=_f1(p, r),
    )


# ---------------------------------------------------------------------------
# rally trimming


@dataclass(frozen=True)
class TrimmingReport:
    correct: int
    extra: int
    missed: int
    total_trimmed: int
    actual: int
    accuracy: float
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, correct, extra, missed):
        trimmed = correct + extra
        actual = correct + missed
        p = _ratio(correct, trimmed)
        r = _ratio(correct, actual)
        return cls(correct, extra, missed, trimmed, actual,
                   accuracy=_ratio(correct, correct + extra + missed),
                   precision=p, recall=r, f1=_f1(p, r))

    def to_dict(self):
        return asdict(self)


def _span(seg):
    if hasattr(seg, "start_frame"):
        return seg.start_frame, seg.end_frame
    return int(seg[0]), int(seg[1])


def interval_iou(a, b):
    """IoU of two inclusive frame intervals."""
    (s1, e1), (s2, e2) = a, b
    inter = max(0, min(e1, e2) - max(s1, s2) + 1)
    union = (e1 - s1 + 1) + (e2 - s2 + 1) - inter
    return inter / union


def trimming_report(predicted, actual, iou_threshold=0.5):
    """Greedily match predicted rallies to actual ones in start order (IoU >= threshold)."""
    pred = sorted(_span(s) for s in predicted)
    gold = sorted(_span(s) for s in actual)
    for (s1, e1), (s2, _) in zip(pred, pred[1:]):
        if s2 <= e1:
            raise ValueError(f"predicted segments overlap at frame {s2}")
    used = [False] * len(gold)
    correct = 0
    for p in pred:
        best, best_iou = None, -1.0
        for j, g in enumerate(gold):
            if g[0] > p[1]:
                break
            if used[j]:
                continue
            iou = interval_iou(p, g)
            if iou >= iou_threshold and iou > best_iou:
                best, best_iou = j, iou
        if best is not None:
            used[best] = True
            correct += 1
    return TrimmingReport.from_counts(correct, len(pred) - correct, len(gold) - correct)


# ---------------------------------------------------------------------------
# direction tokens


def token_report(pred, gold):
    """One-vs-rest metrics per real token over positions where gold is not Pad."""
    pred = np.asarray([int(t) for t in pred])
    gold = np.asarray([int(t) for t in gold])
    if pred.shape != gold.shape:
        raise ValueError(f"length mismatch: {pred.size} predicted vs {gold.size} gold")
    keep = gold != Direction.PAD
    if not keep.any():
        raise EmptyEvaluationError("gold sequence is entirely Pad")
    return token_report_from_counts(token_counts(pred[keep], gold[keep]))


def token_counts(pred, gold):
    out = {}
    for tok in (Direction.S, Direction.B, Direction.U):
        p, g = pred == tok, gold == tok
        out[tok.name] = BinaryCounts(int((p & g).sum()), int((p & ~g).sum()),
                                     int((~p & g).sum()), int((~p & ~g).sum()))
    return out


def token_report_from_counts(counts):
    return {name: (c, binary_metrics(c)) for name, c in counts.items()}


# ---------------------------------------------------------------------------
# hit frames


def match_hits(pred, actual, tol):
    """Number of one-to-one matches with ``|p - n| < tol``.

    Predictions are visited in increasing frame order and each takes the
    earliest unmatched actual hit inside its open window. Because all windows
    share one radius this greedy count equals the maximum matching size.
    """
    pred = sorted(pred)
    actual = sorted(actual)
    j = 0
    matches = 0
    for p in pred:
        while j < len(actual) and actual[j] <= p - tol:
            j += 1
        if j < len(actual) and actual[j] < p + tol:
            matches += 1
            j += 1
    return matches


def hit_tolerance_report(pred, actual, total_frames, tol):
    if tol < 1:
        raise ValueError("tolerance must be >= 1")
    pred, actual = list(pred), list(actual)
    for i in pred + actual:
        if i < 0:
            raise ValueError(f"negative frame index {i}")
        if i >= total_frames:
            raise ValueError(f"frame index {i} >= total_frames {total_frames}")
    tp = match_hits(pred, actual, tol)
    fp = len(pred) - tp
    fn = len(actual) - tp
    counts = BinaryCounts(tp, fp, fn, max(total_frames - tp - fp - fn, 0))
    return counts, binary_metrics(counts)

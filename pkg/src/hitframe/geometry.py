"""Court containment and on-court player filtering.

Skeletons are (17, 2) float arrays in COCO keypoint order; pixel y grows
downward. A player pair is stored bottom-of-screen player first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KEYPOINT_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)
LEFT_ANKLE, RIGHT_ANKLE = 15, 16
LEFT_WRIST, RIGHT_WRIST = 9, 10
COURT_POINT_NAMES = (
    "upper_left", "upper_right", "middle_left", "middle_right", "bottom_left", "bottom_right",
)


class InvalidCourtError(ValueError):
    pass


class InsufficientPlayersError(ValueError):
    pass


def as_skeleton(points):
    s = np.asarray(points, dtype=np.float64)
    if s.shape != (17, 2):
        raise ValueError(f"skeleton must be 17x2, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("skeleton has non-finite coordinates")
    return s


@dataclass(frozen=True)
class CourtKeypoints:
    upper_left: tuple
    upper_right: tuple
    middle_left: tuple
    middle_right: tuple
    bottom_left: tuple
    bottom_right: tuple

    @classmethod
    def from_points(cls, points):
        """Build from six [x, y] rows in ``COURT_POINT_NAMES`` order."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.shape != (6, 2):
            raise InvalidCourtError(f"court needs 6 points, got shape {pts.shape}")
        return cls(*(tuple(map(float, p)) for p in pts))

    def to_points(self):
        return [list(getattr(self, n)) for n in COURT_POINT_NAMES]

    def polygon(self):
        """Corner quadrilateral in boundary order UL, UR, BR, BL."""
        return np.array([self.upper_left, self.upper_right, self.bottom_right, self.bottom_left])

    def validate(self):
        poly = self.polygon()
        if not np.all(np.isfinite(poly)):
            raise InvalidCourtError("court has non-finite coordinates")
        if not (self.upper_left[1] < self.bottom_left[1] and self.upper_right[1] < self.bottom_right[1]):
            raise InvalidCourtError("upper court points must lie above bottom points")
        if abs(_signed_area(poly)) <= 1e-12 * _scale(poly) ** 2:
            raise InvalidCourtError("court quadrilateral has zero area")
        if _segments_cross(poly[0], poly[1], poly[2], poly[3]) or _segments_cross(poly[1], poly[2], poly[3], poly[0]):
            raise InvalidCourtError("court quadrilateral is self-intersecting")


def _signed_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _scale(poly):
    return max(float(np.ptp(poly[:, 0])), float(np.ptp(poly[:, 1])), 1e-300)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_cross(p1, p2, p3, p4):
    d1, d2 = _cross(p3, p4, p1), _cross(p3, p4, p2)
    d3, d4 = _cross(p1, p2, p3), _cross(p1, p2, p4)
    return d1 * d2 < 0 and d3 * d4 < 0


def point_in_court(p, court):
    """True iff ``p`` lies inside the corner quadrilateral or on its boundary."""
    court.validate()
    poly = court.polygon()
    x, y = float(p[0]), float(p[1])
    tol = 1e-12 * _scale(poly) ** 2
    inside = False
    for i in range(4):
        a, b = poly[i], poly[(i + 1) % 4]
        # on-edge check first so boundary points count as inside
        if abs(_cross(a, b, (x, y))) <= tol and \
                min(a[0], b[0]) <= x <= max(a[0], b[0]) and min(a[1], b[1]) <= y <= max(a[1], b[1]):
            return True
        if (a[1] > y) != (b[1] > y):
            x_hit = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if x < x_hit:
                inside = not inside
    return inside


def ankle_midpoint(skeleton):
    return (skeleton[LEFT_ANKLE] + skeleton[RIGHT_ANKLE]) / 2.0


def bbox_area(skeleton):
    span = skeleton.max(axis=0) - skeleton.min(axis=0)
    return float(span[0] * span[1])


@dataclass(frozen=True, eq=False)
class PlayerKeypointPair:
    bottom_player: np.ndarray
    top_player: np.ndarray

    def as_array(self):
        return np.stack([self.bottom_player, self.top_player])

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=np.float64)
        return cls(as_skeleton(arr[0]), as_skeleton(arr[1]))

    def __eq__(self, other):
        return isinstance(other, PlayerKeypointPair) and np.array_equal(self.as_array(), other.as_array())


def order_players(a, b):
    """Put the skeleton lower on screen (larger ankle-midpoint y) in the bottom slot."""
    a, b = as_skeleton(a), as_skeleton(b)
    ma, mb = ankle_midpoint(a), ankle_midpoint(b)
    if ma[1] > mb[1] or (ma[1] == mb[1] and ma[0] <= mb[0]):
        return PlayerKeypointPair(a, b)
    return PlayerKeypointPair(b, a)


def filter_players(instances, court):
    """Keep on-court instances (either ankle inside) and return the ordered pair.

    When more than two survive, the two with the largest keypoint bounding
    boxes are kept.
    """
    if len(instances) == 0:
        raise InsufficientPlayersError("no instances in frame")
    court.validate()
    survivors = []
    for inst in instances:
        s = as_skeleton(inst)
        if point_in_court(s[LEFT_ANKLE], court) or point_in_court(s[RIGHT_ANKLE], court):
            survivors.append(s)
    if len(survivors) < 2:
        raise InsufficientPlayersError(f"{len(survivors)} on-court instance(s), need 2")
    if len(survivors) > 2:
        # stable sort keeps detector order among equal areas
        order = sorted(range(len(survivors)), key=lambda i: -bbox_area(survivors[i]))
        survivors = [survivors[i] for i in sorted(order[:2])]
    return order_players(survivors[0], survivors[1])


@dataclass(frozen=True, eq=False)
class KeypointStats:
    """Per-coordinate mean/std over the 34 values of one skeleton, shared by both slots."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != (17, 2) or self.std.shape != (17, 2):
            raise ValueError("stats must be 17x2")
        if not np.all(self.std > 0):
            raise ValueError("std entries must be positive")

    @classmethod
    def from_pairs(cls, pairs, min_std=1e-6):
        """``pairs`` is an array (..., 2, 17, 2); both slots are pooled."""
        flat = np.asarray(pairs, dtype=np.float64).reshape(-1, 17, 2)
        return cls(flat.mean(axis=0), np.maximum(flat.std(axis=0), min_std))

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def normalize_pair(pair, stats):
    """Z-score every coordinate. Accepts a PlayerKeypointPair or an array (..., 2, 17, 2)."""
    if isinstance(pair, PlayerKeypointPair):
        return PlayerKeypointPair((pair.bottom_player - stats.mean) / stats.std,
                                  (pair.top_player - stats.mean) / stats.std)
    return (np.asarray(pair, dtype=np.float64) - stats.mean) / stats.std


def denormalize_pair(pair, stats):
    if isinstance(pair, PlayerKeypointPair):
        return PlayerKeypointPair(pair.bottom_player * stats.std + stats.mean,
                                  pair.top_player * stats.std + stats.mean)
    return np.asarray(pair, dtype=np.float64) * stats.std + stats.mean

"""Hit-frame detection from shuttlecock direction tokens."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import groupby


class Direction(enum.IntEnum):
    S = 0  # steady
    B = 1  # flying toward the bottom court
    U = 2  # flying toward the upper court
    PAD = 3


TOKEN_CHARS = "SBU"


def parse_directions(text):
    try:
        return [Direction(TOKEN_CHARS.index(c)) for c in text]
    except ValueError:
        raise ValueError(f"direction string may only contain S/B/U: {text!r}") from None


def format_directions(tokens):
    return "".join(TOKEN_CHARS[int(t)] for t in tokens)


@dataclass(frozen=True)
class HitFrameSet:
    rally_id: str
    indices: tuple


# (previous, current) run pairs that mark a strike
_HIT_TRANSITIONS = {
    (Direction.S, Direction.B), (Direction.S, Direction.U),
    (Direction.B, Direction.U), (Direction.U, Direction.B),
}


def detect_hits(tokens, rally_id=""):
    """Indices where a run of B/U begins after S, or B and U swap.

    Each hit is reported at the first frame of the new run. Transitions into
    S (landing, end of rally) are not hits. The scan starts from S, so a
    sequence opening on B or U has a hit at frame 0.
    """
    previous = Direction.S
    pos = 0
    hits = []
    for token, run in groupby(tokens):
        token = Direction(token)
        if token == Direction.PAD:
            raise ValueError("direction sequence contains Pad")
        if (previous, token) in _HIT_TRANSITIONS:
            hits.append(pos)
        pos += sum(1 for _ in run)
        previous = token
    return HitFrameSet(rally_id, tuple(hits))


def to_global(hits, segment):
    """Shift rally-local hit indices by the rally's start frame."""
    length = segment.end_frame - segment.start_frame + 1
    idx = hits.indices if isinstance(hits, HitFrameSet) else tuple(hits)
    for i in idx:
        if not 0 <= i < length:
            raise IndexError(f"hit index {i} outside rally of length {length}")
    return [segment.start_frame + i for i in idx]

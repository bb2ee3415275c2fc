"""Shot-angle streams and the rally segmentation state machine."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from itertools import groupby


class ShotAngle(enum.IntEnum):
    OTHER = 0
    HIGH = 1


class EmptyStreamError(ValueError):
    pass


_CHARS = {ShotAngle.OTHER: "O", ShotAngle.HIGH: "H"}
_FROM_CHAR = {"O": ShotAngle.OTHER, "H": ShotAngle.HIGH}


@dataclass(frozen=True)
class AngleStream:
    video_id: str
    fps: float
    tokens: tuple

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        object.__setattr__(self, "tokens", tuple(ShotAngle(t) for t in self.tokens))

    @classmethod
    def from_string(cls, video_id, fps, text):
        try:
            return cls(video_id, fps, tuple(_FROM_CHAR[c] for c in text))
        except KeyError as exc:
            raise ValueError(f"angle token string may only contain 'O'/'H', got {exc.args[0]!r}") from None

    def to_string(self):
        return "".join(_CHARS[t] for t in self.tokens)

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True, order=True)
class RallySegment:
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if not 0 <= self.start_frame <= self.end_frame:
            raise ValueError(f"invalid segment ({self.start_frame}, {self.end_frame})")

    def __len__(self):
        return self.end_frame - self.start_frame + 1


def segment_rallies(stream):
    """Rally spans from Other->High and High->Other transitions.

    The previous angle starts as Other, so a stream opening on High starts a
    rally at frame 0. A rally still open at the last frame is closed there.
    """
    if len(stream.tokens) == 0:
        raise EmptyStreamError(f"angle stream {stream.video_id!r} is empty")
    segments = []
    previous = ShotAngle.OTHER
    start = None
    for frame, angle in enumerate(stream.tokens):
        if angle != previous:
            if angle == ShotAngle.HIGH:
                start = frame
            else:
                segments.append(RallySegment(start, frame - 1))
                start = None
        previous = angle
    if start is not None:
        segments.append(RallySegment(start, len(stream.tokens) - 1))
    return segments


def smooth_stream(stream, min_run):
    """Absorb runs shorter than ``min_run`` into the preceding run. The first run is kept."""
    if min_run < 1:
        raise ValueError("min_run must be >= 1")
    if min_run == 1:
        return stream
    out = []
    for token, run in groupby(stream.tokens):
        n = len(list(run))
        if out and n < min_run:
            token = out[-1]
        out.extend([token] * n)
    return AngleStream(stream.video_id, stream.fps, tuple(out))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitframe.rally import AngleStream, EmptyStreamError, RallySegment, ShotAngle, segment_rallies, smooth_stream


def stream(text):
    return AngleStream.from_string("v", 30, text)


def spans(text):
    return [(s.start_frame, s.end_frame) for s in segment_rallies(stream(text))]


def random_stream(rng):
    n = int(rng.integers(1, 501))
    # mix run-heavy and flicker-heavy streams
    if rng.random() < 0.5:
        tokens = rng.integers(0, 2, n)
    else:
        tokens = np.repeat(rng.integers(0, 2, n), rng.integers(1, 40, n))[:n]
    return AngleStream("v", 30, tuple(int(t) for t in tokens))


def check_partition(s, segs):
    tokens = s.tokens
    starts = [g.start_frame for g in segs]
    assert starts == sorted(starts)
    for a, b in zip(segs, segs[1:]):
        assert a.end_frame < b.start_frame
    covered = np.zeros(len(tokens), dtype=int)
    for g in segs:
        covered[g.start_frame:g.end_frame + 1] += 1
    high = np.array([t == ShotAngle.HIGH for t in tokens])
    assert np.array_equal(covered, high.astype(int))
    rises = sum(1 for prev, cur in zip((ShotAngle.OTHER,) + tokens, tokens)
                if prev == ShotAngle.OTHER and cur == ShotAngle.HIGH)
    assert len(segs) == rises


class TestSegmentRallies:
    def test_single_rally(self):
        assert spans("OOHHHOO") == [(2, 4)]

    def test_no_rally(self):
        assert spans("OOO") == []

    def test_initial_state_and_flush(self):
        assert spans("HHOH") == [(0, 1), (3, 3)]

    def test_empty(self):
        with pytest.raises(EmptyStreamError):
            segment_rallies(stream(""))

    def test_shot_angle_codes(self):
        assert int(ShotAngle.OTHER) == 0 and int(ShotAngle.HIGH) == 1

    def test_string_round_trip(self):
        assert stream("OHHO").to_string() == "OHHO"

    def test_bad_character(self):
        with pytest.raises(ValueError):
            stream("OXH")

    def test_bad_fps(self):
        with pytest.raises(ValueError):
            AngleStream("v", 0, (0,))

    def test_segment_validation(self):
        with pytest.raises(ValueError):
            RallySegment(5, 4)
        assert len(RallySegment(3, 3)) == 1

    def test_thousand_random_streams(self):
        rng = np.random.default_rng(20240101)
        for _ in range(1000):
            s = random_stream(rng)
            segs = segment_rallies(s)
            check_partition(s, segs)
            assert smooth_stream(s, 1) == s
            assert segment_rallies(smooth_stream(s, 1)) == segs


class TestSmoothStream:
    def test_identity(self):
        s = stream("OHOHHOOOH")
        assert smooth_stream(s, 1) == s

    def test_drop_short_other(self):
        assert smooth_stream(stream("HHOHH"), 2).to_string() == "HHHHH"

    def test_drop_short_high(self):
        assert smooth_stream(stream("OOHOO"), 2).to_string() == "OOOOO"

    def test_first_run_kept(self):
        assert smooth_stream(stream("HOOOO"), 3).to_string() == "HOOOO"

    def test_invalid_min_run(self):
        with pytest.raises(ValueError):
            smooth_stream(stream("OH"), 0)

    @settings(max_examples=200, deadline=None)
    @given(text=st.text(alphabet="OH", min_size=1, max_size=80), k=st.integers(1, 6))
    def test_smoothed_output_still_partitions(self, text, k):
        s = smooth_stream(stream(text), k)
        assert len(s) == len(text)
        check_partition(s, segment_rallies(s))

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitframe.hits import Direction, HitFrameSet, detect_hits, format_directions, parse_directions, to_global
from hitframe.rally import RallySegment

S, B, U = 0, 1, 2


def literal_oracle(seq):
    """Frame-by-frame transcription of the hit-detection case table.

    A hit is reported at the frame where the new direction first appears.
    """
    previous = S
    hits = []
    for i, direction in enumerate(seq):
        if previous != direction:
            if previous == S:
                if direction == B:
                    hits.append(i)
                elif direction == U:
                    hits.append(i)
            elif previous == B:
                if direction == U:
                    hits.append(i)
            elif previous == U:
                if direction == B:
                    hits.append(i)
            previous = direction
    return hits


def all_sequences(max_len=8):
    for n in range(1, max_len + 1):
        yield from itertools.product((S, B, U), repeat=n)


class TestDetectHits:
    def test_examples(self):
        assert detect_hits(parse_directions("SBBU")).indices == (1, 3)
        assert detect_hits(parse_directions("SSS")).indices == ()
        assert detect_hits(parse_directions("BUSB")).indices == (0, 1, 3)

    def test_empty_sequence(self):
        assert detect_hits([]).indices == ()

    def test_pad_rejected(self):
        with pytest.raises(ValueError):
            detect_hits([Direction.S, Direction.PAD])

    def test_rally_id_carried(self):
        assert detect_hits([B], "r1") == HitFrameSet("r1", (0,))

    def test_codes(self):
        assert [int(d) for d in Direction] == [0, 1, 2, 3]

    def test_brute_force_all_short_sequences(self):
        cases = mismatches = 0
        for seq in all_sequences():
            cases += 1
            if list(detect_hits(seq).indices) != literal_oracle(seq):
                mismatches += 1
        assert cases == 9840
        assert mismatches == 0

    @settings(max_examples=300, deadline=None)
    @given(runs=st.lists(st.tuples(st.sampled_from([S, B, U]), st.integers(1, 5)), min_size=1, max_size=12),
           stretch=st.integers(1, 4), which=st.integers(0, 100))
    def test_depends_only_on_run_lengths(self, runs, stretch, which):
        seq = [t for t, n in runs for _ in range(n)]
        k = which % len(runs)
        stretched = [(t, n * stretch if i == k else n) for i, (t, n) in enumerate(runs)]
        seq2 = [t for t, n in stretched for _ in range(n)]
        h1, h2 = detect_hits(seq).indices, detect_hits(seq2).indices
        assert len(h1) == len(h2)
        # each hit sits on the same run index
        starts1 = run_starts(runs)
        starts2 = run_starts(stretched)
        assert [starts1.index(h) for h in h1] == [starts2.index(h) for h in h2]

    @settings(max_examples=300, deadline=None)
    @given(seq=st.lists(st.sampled_from([S, B, U]), min_size=1, max_size=40))
    def test_structural_properties(self, seq):
        hits = detect_hits(seq).indices
        assert all(a < b for a, b in zip(hits, hits[1:]))
        assert (0 in hits) == (seq[0] != S)
        # an S run in between (landing, new serve) may legitimately repeat the token
        assert all(seq[a] != seq[b] for a, b in zip(hits, hits[1:]) if S not in seq[a:b])
        assert all(seq[h] != S for h in hits)


def run_starts(runs):
    out, pos = [], 0
    for _, n in runs:
        out.append(pos)
        pos += n
    return out


class TestToGlobal:
    def test_offset(self):
        assert to_global(HitFrameSet("r", (1, 3)), RallySegment(100, 160)) == [101, 103]

    def test_empty(self):
        assert to_global(HitFrameSet("r", ()), RallySegment(5, 9)) == []

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            to_global((0, 5), RallySegment(10, 14))


class TestTokenStrings:
    def test_round_trip(self):
        assert format_directions(parse_directions("SBUUS")) == "SBUUS"

    def test_bad_char(self):
        with pytest.raises(ValueError):
            parse_directions("SXB")

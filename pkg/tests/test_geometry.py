import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitframe.geometry import (
    LEFT_ANKLE,
    RIGHT_ANKLE,
    CourtKeypoints,
    InsufficientPlayersError,
    InvalidCourtError,
    KeypointStats,
    PlayerKeypointPair,
    denormalize_pair,
    filter_players,
    normalize_pair,
    order_players,
    point_in_court,
)

RECT = CourtKeypoints((0, 0), (10, 0), (0, 10), (10, 10), (0, 20), (10, 20))
TRAPEZOID = CourtKeypoints((400, 300), (880, 300), (330, 460), (950, 460), (260, 640), (1020, 640))


def skeleton(ankle_mid, spread=1.0, height=100.0, rng=None):
    """Upright figure whose ankle midpoint is ``ankle_mid``; body spans ``spread`` x ``height``."""
    x, y = ankle_mid
    ys = np.linspace(y - height, y, 17)
    xs = np.full(17, float(x))
    xs[::2] -= spread / 2
    xs[1::2] += spread / 2
    s = np.stack([xs, ys], axis=1)
    s[LEFT_ANKLE] = (x - spread / 2, y)
    s[RIGHT_ANKLE] = (x + spread / 2, y)
    if rng is not None:
        s[:LEFT_ANKLE] += rng.normal(0, 1, (LEFT_ANKLE, 2))
    return s


class TestPointInCourt:
    def test_interior(self):
        assert point_in_court((5, 10), RECT)

    def test_outside(self):
        assert not point_in_court((11, 10), RECT)

    def test_boundary_counts_as_inside(self):
        assert point_in_court((0, 10), RECT)
        assert point_in_court((10, 20), RECT)

    def test_trapezoid_slanted_edge(self):
        assert point_in_court((300, 600), TRAPEZOID)
        assert not point_in_court((280, 400), TRAPEZOID)

    def test_zero_area_court(self):
        flat = CourtKeypoints((0, 0), (10, 0), (0, 0), (10, 0), (0, 0), (10, 0))
        with pytest.raises(InvalidCourtError):
            point_in_court((1, 1), flat)

    def test_collinear_corners(self):
        line = CourtKeypoints((0, 0), (0, 10), (0, 15), (0, 15), (0, 20), (0, 30))
        with pytest.raises(InvalidCourtError):
            point_in_court((0, 5), line)

    def test_self_intersecting_court(self):
        bow = CourtKeypoints((0, 0), (10, 0), (5, 5), (5, 5), (10, 20), (0, 20))
        with pytest.raises(InvalidCourtError):
            point_in_court((5, 10), bow)

    @settings(max_examples=300, deadline=None)
    @given(x=st.floats(-50, 1300, allow_nan=False), y=st.floats(-50, 800, allow_nan=False),
           k=st.sampled_from([0.5, 2.0, 3.0, 0.125, 1024.0]))
    def test_scaling_invariance(self, x, y, k):
        scaled = CourtKeypoints.from_points(np.asarray(TRAPEZOID.to_points()) * k)
        assert point_in_court((x, y), TRAPEZOID) == point_in_court((x * k, y * k), scaled)


class TestOrderPlayers:
    def test_bottom_is_lower_on_screen(self):
        a, b = skeleton((500, 900)), skeleton((500, 300))
        pair = order_players(a, b)
        assert np.array_equal(pair.bottom_player, a) and np.array_equal(pair.top_player, b)

    def test_symmetric_case(self):
        a, b = skeleton((500, 300)), skeleton((500, 900))
        pair = order_players(a, b)
        assert np.array_equal(pair.bottom_player, b)

    def test_tie_uses_smaller_x(self):
        a, b = skeleton((100, 500)), skeleton((200, 500))
        assert np.array_equal(order_players(a, b).bottom_player, a)
        assert np.array_equal(order_players(b, a).bottom_player, a)


class TestFilterPlayers:
    def test_two_in_court_among_five(self):
        inside = [skeleton((600, 600)), skeleton((640, 320))]
        outside = [skeleton((100, 700)), skeleton((1200, 500)), skeleton((640, 100))]
        pair = filter_players([outside[0], inside[0], outside[1], inside[1], outside[2]], TRAPEZOID)
        assert pair == PlayerKeypointPair(inside[0], inside[1])

    def test_largest_boxes_kept(self):
        # bounding boxes 10x10, 20x20, 30x30
        small = skeleton((600, 500), spread=10, height=10)
        mid = skeleton((700, 600), spread=20, height=20)
        big = skeleton((640, 350), spread=30, height=30)
        pair = filter_players([small, mid, big], TRAPEZOID)
        assert pair == PlayerKeypointPair(mid, big)

    def test_one_survivor(self):
        with pytest.raises(InsufficientPlayersError):
            filter_players([skeleton((600, 600)), skeleton((50, 50))], TRAPEZOID)

    def test_empty(self):
        with pytest.raises(InsufficientPlayersError):
            filter_players([], TRAPEZOID)

    def test_single_ankle_inside_suffices(self):
        s = skeleton((400, 640), spread=300)
        assert point_in_court(s[RIGHT_ANKLE], TRAPEZOID)
        assert not point_in_court(s[LEFT_ANKLE], TRAPEZOID)
        pair = filter_players([s, skeleton((640, 350))], TRAPEZOID)
        assert np.array_equal(pair.bottom_player, s)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), extra=st.integers(0, 4))
    def test_ordering_and_idempotence(self, seed, extra):
        rng = np.random.default_rng(seed)
        inst = [skeleton((rng.uniform(450, 830), rng.uniform(320, 620)), spread=rng.uniform(5, 40),
                         height=rng.uniform(40, 160), rng=rng) for _ in range(2)]
        inst += [skeleton((rng.uniform(0, 200), rng.uniform(0, 720)), rng=rng) for _ in range(extra)]
        order = rng.permutation(len(inst))
        pair = filter_players([inst[i] for i in order], TRAPEZOID)
        bottom_y = pair.bottom_player[[LEFT_ANKLE, RIGHT_ANKLE], 1].mean()
        top_y = pair.top_player[[LEFT_ANKLE, RIGHT_ANKLE], 1].mean()
        assert bottom_y >= top_y
        assert filter_players([pair.bottom_player, pair.top_player], TRAPEZOID) == pair


class TestNormalize:
    def test_mean_maps_to_zero(self):
        stats = KeypointStats(np.full((17, 2), 3.0), np.full((17, 2), 2.0))
        pair = PlayerKeypointPair(np.full((17, 2), 3.0), np.full((17, 2), 3.0))
        out = normalize_pair(pair, stats)
        assert np.all(out.as_array() == 0.0)

    def test_forced_arithmetic(self):
        stats = KeypointStats(np.zeros((17, 2)), np.full((17, 2), 2.0))
        out = normalize_pair(np.full((2, 17, 2), 4.0), stats)
        assert np.all(out == 2.0)

    def test_nonpositive_std_rejected(self):
        with pytest.raises(ValueError):
            KeypointStats(np.zeros((17, 2)), np.zeros((17, 2)))

    def test_from_pairs_pools_both_slots(self):
        pairs = np.zeros((1, 2, 17, 2))
        pairs[0, 1] = 2.0
        stats = KeypointStats.from_pairs(pairs)
        assert np.all(stats.mean == 1.0) and np.all(stats.std == 1.0)

    def test_from_pairs_clamps_constant_coordinates(self):
        stats = KeypointStats.from_pairs(np.ones((4, 2, 17, 2)))
        assert np.all(stats.std > 0)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        stats = KeypointStats(rng.uniform(0, 1000, (17, 2)), rng.uniform(0.1, 200, (17, 2)))
        x = rng.uniform(0, 1280, (5, 2, 17, 2))
        np.testing.assert_allclose(denormalize_pair(normalize_pair(x, stats), stats), x, atol=1e-9, rtol=0)
        pair = PlayerKeypointPair.from_array(x[0])
        back = denormalize_pair(normalize_pair(pair, stats), stats)
        np.testing.assert_allclose(back.as_array(), x[0], atol=1e-9, rtol=0)

    def test_stats_dict_round_trip(self):
        stats = KeypointStats(np.arange(34.0).reshape(17, 2), np.ones((17, 2)) * 0.1)
        back = KeypointStats.from_dict(stats.to_dict())
        assert np.array_equal(back.mean, stats.mean) and np.array_equal(back.std, stats.std)

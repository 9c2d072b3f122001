"""Topology signatures, path counting, coverage and novelty statistics."""
import numpy as np
import pytest

from stitchlab import metrics
from stitchlab.datagen import decagon_vertices
from stitchlab.gridworld import GridGeometry

GEO = GridGeometry()
G4 = GridGeometry(n_intersections=4)
START = (0.0, 0.0)
GOAL = (GEO.side, GEO.side)


class TestCounting:
    @pytest.mark.parametrize("n,expected", [(2, 2), (4, 6), (6, 20), (8, 70), (10, 252)])
    def test_closed_form(self, n, expected):
        assert metrics.count_optimal(n) == expected

    @pytest.mark.parametrize("n", [2, 4, 6, 8])
    def test_enumeration_matches_closed_form(self, n):
        moves = metrics.enumerate_optimal(n)
        assert len(moves) == metrics.count_optimal(n)
        assert all(m.count(metrics.DOWN) == n // 2 for m in moves)

    def test_odd_rejected(self):
        with pytest.raises(ValueError):
            metrics.count_optimal(5)
        with pytest.raises(ValueError):
            metrics.enumerate_optimal(7)


class TestSignature:
    def test_hand_built_corner_paths_are_complementary(self):
        # All-right-then-down vs all-down-then-right: together the two loops
        # tile the whole square, so their bit vectors are complements.
        rd = metrics.moves_to_polyline("0" * 5 + "1" * 5, GEO)
        dr = metrics.moves_to_polyline("1" * 5 + "0" * 5, GEO)
        s_rd = metrics.signature(rd, GEO, START, GOAL)
        s_dr = metrics.signature(dr, GEO, START, GOAL)
        assert s_rd != s_dr
        assert all(a != b for a, b in zip(s_rd.bits, s_dr.bits))

    def test_noisy_replays_equal(self):
        rng = np.random.default_rng(0)
        base = metrics.moves_to_polyline("0101010101", GEO)
        dense = np.concatenate(
            [np.linspace(base[i], base[i + 1], 40, endpoint=False) for i in range(len(base) - 1)]
            + [base[-1:]]
        )
        a = dense + rng.normal(0, 0.03, dense.shape)
        b = dense + rng.normal(0, 0.03, dense.shape)
        a[0] = b[0] = base[0]
        a[-1] = b[-1] = base[-1]
        assert metrics.signature(a, GEO, START, GOAL) == metrics.signature(b, GEO, START, GOAL)

    def test_subsampling_invariance(self):
        rng = np.random.default_rng(1)
        base = metrics.moves_to_polyline("0110010110", GEO)
        dense = np.concatenate(
            [np.linspace(base[i], base[i + 1], 30, endpoint=False) for i in range(len(base) - 1)]
            + [base[-1:]]
        )
        dense += rng.normal(0, 0.02, dense.shape)
        dense[0], dense[-1] = base[0], base[-1]
        full = metrics.signature(dense, GEO, START, GOAL)
        half = metrics.signature(np.vstack([dense[::2], dense[-1:]]), GEO, START, GOAL)
        assert full == half

    def test_anchor_mismatch_rejected(self):
        poly = metrics.moves_to_polyline("0101010101", GEO)
        with pytest.raises(ValueError, match="anchor"):
            metrics.signature(poly, GEO, (1.0, 1.0), GOAL)
        with pytest.raises(ValueError, match="anchor"):
            metrics.signature(poly[:-3], GEO, START, GOAL)

    def test_raycast_agrees_with_winding_oracle(self):
        # Two independent inside-tests agree bitwise on random wiggly paths.
        # Endpoints stay noisy (as in any real rollout); an exact-corner
        # closing chord would run straight through the diagonal pit centers,
        # where inside/outside is a boundary convention, not a topology.
        rng = np.random.default_rng(2)
        for trial in range(60):
            moves = "".join(rng.permutation(list("00000" + "11111")))
            base = metrics.moves_to_polyline(moves, GEO)
            dense = np.concatenate(
                [np.linspace(base[i], base[i + 1], 15, endpoint=False) for i in range(len(base) - 1)]
                + [base[-1:]]
            )
            dense += rng.normal(0, 0.04, dense.shape)
            ray = metrics.signature(dense, GEO, START, GOAL, method="raycast")
            wind = metrics.signature(dense, GEO, START, GOAL, method="winding")
            assert ray == wind

    def test_lemma1_signature_soundness(self):
        # The full monotone-path enumerations map to all-distinct signatures.
        for geo, n_expected in [(G4, 20), (GEO, 252)]:
            sigs = metrics.optimal_signature_set(geo)
            assert len(sigs) == n_expected
            assert len(set(sigs.values())) == n_expected


class TestCoverage:
    def setup_method(self):
        self.possible = list(metrics.optimal_signature_set(G4).values())
        self.train = self.possible[:8]

    def test_memorization_is_zero(self):
        assert metrics.coverage(self.train, self.train, 20) == 0.0
        assert metrics.coverage(self.train[:3], self.train, set(self.possible)) == 0.0

    def test_full_coverage_is_one(self):
        assert metrics.coverage(self.possible, self.train, 20) == 1.0

    def test_duplicates_do_not_count_twice(self):
        gen = [self.possible[9], self.possible[9], self.possible[10]]
        a = metrics.coverage(gen, self.train, 20)
        b = metrics.coverage(gen[1:], self.train, 20)
        assert a == b == 2 / 12

    def test_out_of_space_generations_ignored(self):
        alien = metrics.TopologySignature(bits=tuple([True] * 9))
        assert alien not in self.possible
        assert metrics.coverage([alien], self.train, set(self.possible)) == 0.0

    def test_bounds_and_monotonicity(self):
        acc = []
        last = 0.0
        for sig in self.possible[8:]:
            acc.append(sig)
            c = metrics.coverage(acc, self.train, 20)
            assert 0.0 <= c <= 1.0 and c >= last
            last = c

    def test_training_larger_than_space_rejected(self):
        with pytest.raises(ValueError):
            metrics.coverage([], self.possible, 3)


class TestCompletionStats:
    def test_all_success(self):
        s = metrics.completion_stats([True] * 6400)
        assert s.rate == 1.0 and s.sigma == 0.0

    def test_all_failure(self):
        s = metrics.completion_stats([False] * 10)
        assert s.rate == 0.0 and s.sigma == 0.0

    def test_half_and_half_sigma(self):
        s = metrics.completion_stats([True] * 50 + [False] * 50)
        assert s.rate == 0.5
        assert s.sigma == pytest.approx(0.05, rel=1e-12)
        assert s.bound(2) == pytest.approx(0.1, rel=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            metrics.completion_stats([])


class TestDecagonKeypoints:
    def setup_method(self):
        self.verts = decagon_vertices((2.5, 2.5), 2.5)
        self.eps = 0.25

    def _tour(self, order, steps=30):
        pts = []
        for a, b in zip(order[:-1], order[1:]):
            pts.append(np.linspace(self.verts[a], self.verts[b], steps, endpoint=False))
        pts.append(self.verts[order[-1]][None])
        return np.concatenate(pts)

    def test_noiseless_tuple_recovered(self):
        order = (0, 3, 7, 2, 9)
        assert metrics.decagon_keypoints(self._tour(order), self.verts, self.eps) == order

    def test_consecutive_duplicates_collapse(self):
        traj = np.concatenate([self._tour((1, 4)), np.tile(self.verts[4], (25, 1))])
        assert metrics.decagon_keypoints(traj, self.verts, self.eps) == (1, 4)

    def test_novelty_zero_when_all_seen(self):
        tours = [(0, 3, 7, 2, 9), (1, 2, 3, 4, 5)]
        r = metrics.novelty_rate(tours, tours)
        assert r.novelty == 0.0 and r.n_valid == 2 and r.n_invalid == 0

    def test_novelty_counts_invalid(self):
        tours = [(0, 3, 7, 2, 9), (1, 2, 3)]
        r = metrics.novelty_rate(tours, [(9, 8, 7, 6, 5)])
        assert r.n_invalid == 1 and r.n_valid == 1 and r.novelty == 1.0

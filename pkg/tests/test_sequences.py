import numpy as np
import pytest

import ssrd
from ssrd.sequences import (
    count_feasible, enumerate_feasible, format_sequence, is_feasible,
    myopia_sequence, parse_sequence, portfolio_count,
)

from conftest import make_regions
from oracles import ordered_partition_count_brute

PAPER_COUNTS = [
    (4, 2, 5, 66), (4, 4, 5, 75), (5, 2, 5, 450), (5, 4, 5, 540),
    (6, 2, 5, 2970), (6, 3, 5, 3830), (6, 4, 5, 3950),
    (7, 2, 5, 15120), (7, 3, 5, 25410),
]


class TestFeasibility:
    def test_examples(self):
        assert is_feasible(((0, 1), (2,), (3,)), 4, 2, 5)
        assert not is_feasible(((0, 1, 2), (3,)), 4, 2, 5)
        assert not is_feasible(tuple((i,) for i in range(6)), 6, 2, 5)

    def test_missing_region(self):
        assert not is_feasible(((0,), (1,)), 3, 2, 5)

    def test_duplicate_region(self):
        assert not is_feasible(((0, 1), (1, 2)), 3, 2, 5)

    def test_empty_portfolio(self):
        assert not is_feasible(((0,), (), (1,)), 2, 2, 5)


class TestCounts:
    @pytest.mark.parametrize("n,k,t,expected", PAPER_COUNTS)
    def test_published_counts(self, n, k, t, expected):
        assert count_feasible(n, k, t) == expected

    def test_count_matches_enumeration(self):
        for n in range(1, 7):
            for k in range(1, n + 1):
                for t in range(1, 7):
                    enum = sum(1 for _ in enumerate_feasible(n, k, t))
                    assert enum == count_feasible(n, k, t), (n, k, t)

    @pytest.mark.parametrize("n,k,t", [(7, 2, 5), (7, 3, 5), (8, 3, 5), (8, 4, 6)])
    def test_count_matches_enumeration_spot(self, n, k, t):
        assert sum(1 for _ in enumerate_feasible(n, k, t)) == count_feasible(n, k, t)

    def test_count_matches_brute_force(self):
        for n, k, t in [(4, 2, 3), (5, 3, 4), (5, 2, 5), (6, 2, 4)]:
            assert count_feasible(n, k, t) == ordered_partition_count_brute(n, k, t)

    def test_monotone_in_k_and_t(self):
        for n in range(2, 8):
            counts_k = [count_feasible(n, k, 5) for k in range(1, n + 1)]
            assert counts_k == sorted(counts_k)
            counts_t = [count_feasible(n, 2, t) for t in range(1, 8)]
            assert counts_t == sorted(counts_t)

    def test_infeasible_zero(self):
        assert count_feasible(6, 1, 5) == 0
        assert list(enumerate_feasible(6, 1, 5)) == []

    def test_single_region(self):
        assert count_feasible(1, 1, 1) == 1
        assert list(enumerate_feasible(1, 1, 1)) == [((0,),)]


class TestEnumeration:
    def test_all_feasible_and_unique(self):
        seqs = list(enumerate_feasible(5, 2, 4))
        assert len(set(seqs)) == len(seqs)
        for seq in seqs:
            assert is_feasible(seq, 5, 2, 4)
            regions = [r for p in seq for r in p]
            assert sorted(regions) == list(range(5))

    def test_deterministic_order(self):
        a = list(enumerate_feasible(5, 3, 5))
        b = list(enumerate_feasible(5, 3, 5))
        assert a == b

    def test_streaming_prefix_partition(self):
        # sequences sharing a first portfolio are contiguous in the stream
        seqs = list(enumerate_feasible(4, 2, 4))
        firsts = [seq[0] for seq in seqs]
        seen = set()
        prev = None
        for f in firsts:
            if f != prev:
                assert f not in seen
                seen.add(f)
                prev = f


class TestPortfolioCount:
    def test_examples(self):
        assert portfolio_count(7, 3) == 63
        assert portfolio_count(9, 1) == 9
        assert portfolio_count(4, 4) == 15

    def test_invalid(self):
        with pytest.raises(ValueError):
            portfolio_count(3, 0)
        with pytest.raises(ValueError):
            portfolio_count(3, 4)


class TestMyopia:
    def scenario_with_baseline(self, b, k=2):
        # area = b, density = 1, scale 1 -> baseline demand exactly b
        regions = make_regions([(v, 1) for v in b])
        return ssrd.build_scenario(regions, horizon=len(b), k=k,
                                   n_paths=4, demand_scale=1.0, name="myo")

    def test_hand_ranking(self):
        scen = self.scenario_with_baseline([5, 9, 1], k=2)
        assert myopia_sequence(scen, "high") == ((1, 0), (2,))

    def test_low_reverses_order(self):
        scen = self.scenario_with_baseline([5, 9, 1, 7], k=2)
        hi = [r for p in myopia_sequence(scen, "high") for r in p]
        lo = [r for p in myopia_sequence(scen, "low") for r in p]
        assert lo == hi[::-1]

    def test_ties_break_by_id(self):
        scen = self.scenario_with_baseline([4, 4, 4], k=2)
        assert myopia_sequence(scen, "high") == ((0, 1), (2,))
        assert myopia_sequence(scen, "low") == ((0, 1), (2,))

    def test_result_is_feasible(self, small_scenario):
        for mode in ("high", "low"):
            seq = myopia_sequence(small_scenario, mode)
            assert is_feasible(seq, small_scenario.n_regions,
                               small_scenario.k, small_scenario.horizon)


class TestTextFormat:
    def test_round_trip(self):
        seq = ((4,), (2,), (1,), (3,))
        assert parse_sequence(format_sequence(seq)) == seq
        assert format_sequence(seq) == "[[4],[2],[1],[3]]"

    def test_parse_rejects_garbage(self):
        with pytest.raises(ssrd.DataError):
            parse_sequence("not a sequence")
        with pytest.raises(ssrd.DataError):
            parse_sequence('[["a"]]')
        with pytest.raises(ssrd.DataError):
            parse_sequence('{"0": 1}')

from itertools import accumulate, product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexauction.errors import ContractViolation, DomainError
from flexauction.flex import (
    FlexibilityStructure,
    assign_goods,
    demand_profile,
    is_adequate,
    minimal_removals,
)
from flexauction.oracle import brute_force_removals


def profiles(max_k=4, max_entry=5):
    return st.integers(1, max_k).flatmap(
        lambda k: st.tuples(
            st.lists(st.integers(0, max_entry), min_size=k, max_size=k),
            st.lists(st.integers(0, max_entry), min_size=k, max_size=k),
        )
    )


class TestStructure:
    def test_sets(self):
        s = FlexibilityStructure((1, 0, 2))
        assert (s.k, s.M, s.set_sizes) == (3, 3, (1, 1, 3))
        assert s.in_set(0, 1) and not s.in_set(1, 2) and s.in_set(2, 3)

    @pytest.mark.parametrize("m", [(), (0, 0), (1, -1)])
    def test_rejects(self, m):
        with pytest.raises(DomainError):
            FlexibilityStructure(m)


class TestAdequacy:
    def test_examples(self):
        assert is_adequate((1, 1), (1, 1))
        assert not is_adequate((2, 0), (1, 1))
        assert is_adequate((0, 2), (1, 1))

    def test_demand_profile(self):
        assert demand_profile([2, 1, 2, 3], 3) == (1, 2, 1)
        with pytest.raises(DomainError):
            demand_profile([4], 3)


class TestRemovals:
    def test_examples(self):
        assert minimal_removals((2, 0), (1, 1)).r == (1, 0)
        assert minimal_removals((0, 3), (1, 1)).r == (0, 1)
        assert minimal_removals((3, 0, 2), (1, 1, 1)).r == (2, 0, 0)
        assert minimal_removals((1, 0, 3), (1, 1, 1)).r == (0, 0, 1)
        assert minimal_removals((0, 0), (1, 1)).total == 0

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            minimal_removals((1,), (1, 1))

    @given(profiles())
    @settings(max_examples=300, deadline=None)
    def test_total_matches_enumeration(self, nm):
        n, m = nm
        if sum(m) == 0:
            return
        assert minimal_removals(n, m).total == brute_force_removals(n, m)

    @given(profiles())
    @settings(max_examples=300, deadline=None)
    def test_prefix_sums_are_prefix_optima(self, nm):
        # removals up to level j are the fewest that fix the first j inequalities
        n, m = nm
        r = minimal_removals(n, m).r
        for j, total in enumerate(accumulate(r), start=1):
            assert total == brute_force_removals(n[:j], m[:j])

    @given(profiles(), st.randoms(use_true_random=False))
    @settings(max_examples=300, deadline=None)
    def test_removing_from_lower_classes_restores_adequacy(self, nm, rnd):
        # at step j the r_j removals may come from any class <= j
        n, m = nm
        r = minimal_removals(n, m).r
        left = list(n)
        for j, r_j in enumerate(r):
            for _ in range(r_j):
                choices = [i for i in range(j + 1) if left[i] > 0]
                assert choices
                left[rnd.choice(choices)] -= 1
        assert is_adequate(left, m)


class TestAssignGoods:
    def test_example(self):
        s = FlexibilityStructure((1, 1))
        A = assign_goods([(0, 2), (1, 1)], s, 3)
        assert A.tolist() == [[0, 1], [1, 0], [0, 0]]

    def test_inadequate(self):
        with pytest.raises(ContractViolation):
            assign_goods([(0, 1), (1, 1)], FlexibilityStructure((1, 1)))

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=4), st.data())
    @settings(max_examples=200, deadline=None)
    def test_feasible_for_adequate_survivors(self, m, data):
        if sum(m) == 0:
            return
        s = FlexibilityStructure(tuple(m))
        levels = data.draw(st.lists(st.integers(1, s.k), max_size=6))
        n = demand_profile(levels, s.k)
        if not is_adequate(n, s):
            return
        A = assign_goods(list(enumerate(levels)), s, len(levels))
        assert np.all(A.sum(axis=1) == 1)
        assert np.all(A.sum(axis=0) <= 1)
        for consumer, good in zip(*np.nonzero(A)):
            assert s.in_set(int(good), levels[consumer])


def test_adequacy_equals_matching_existence():
    # prefix dominance is exactly when a matching into nested sets exists
    for m in product(range(3), repeat=2):
        if sum(m) == 0:
            continue
        s = FlexibilityStructure(m)
        for n in product(range(4), repeat=2):
            levels = [1] * n[0] + [2] * n[1]
            goods = [range(s.set_size(b)) for b in levels]
            matched = any(len(set(pick)) == len(pick) for pick in product(*goods))
            assert matched == is_adequate(n, m)


class TestReferenceExamples:
    def test_adequacy(self):
        assert is_adequate((1, 2), (2, 1))
        assert not is_adequate((2, 0), (1, 5))
        assert is_adequate((0, 0, 0), (0, 1, 0))

    def test_removals(self):
        assert minimal_removals((3, 1, 2), (2, 2, 1)).r == (1, 0, 0)
        assert minimal_removals((0, 5), (3, 0)).r == (0, 2)
        assert minimal_removals((5,), (0,)).total == 5
        assert minimal_removals((1, 2), (2, 1)).r == (0, 0)

    def test_assignment_orders_by_level_then_index(self):
        A = assign_goods([(7, 2), (3, 1)], FlexibilityStructure((1, 1)), 8)
        assert A[3].tolist() == [1, 0] and A[7].tolist() == [0, 1]
        assert A.sum() == 2

    def test_empty_survivors(self):
        A = assign_goods([], FlexibilityStructure((1, 1)), 3)
        assert A.shape == (3, 2) and not A.any()

    def test_single_class(self):
        A = assign_goods([(1, 1), (0, 1)], FlexibilityStructure((2,)))
        assert A.tolist() == [[1, 0], [0, 1]]

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbes.errors import ValidationError
from pbes.numerics import RngState
from pbes.sampling import (
    direction_count,
    herding_sample,
    pbes_sample,
    random_sample,
    randp_sample,
    sample,
)

from oracles import greedy_herding


def column(values):
    return np.array([[float(v)] for v in values])


class TestDirectionCount:
    @pytest.mark.parametrize(
        "n,m,expected",
        [(5, 2, 2), (4, 3, 2), (1, 1, 1), (7, 4, 3), (6, 4, 2), (9, 6, 4)],
    )
    def test_parity_rule(self, n, m, expected):
        assert direction_count(n, m) == expected


class TestPbesSample:
    def test_hand_trace_five_points(self):
        sel = pbes_sample(column([1, 2, 3, 4, 5]), 2)
        assert sel.ordered_indices == (2, 1)  # values 3 then 2
        assert sel.appended_count == 3
        assert sel.method == "pbes"

    def test_hand_trace_four_points(self):
        sel = pbes_sample(column([10, 20, 30, 40]), 3)
        assert sel.ordered_indices == (1, 2, 0)  # values 20, 30, 10
        assert sel.appended_count == 4

    def test_single_point(self):
        sel = pbes_sample([[7.0]], 1)
        assert sel.ordered_indices == (0,)
        assert sel.appended_count == 1

    def test_invalid_requests(self):
        X = column([1, 2, 3])
        with pytest.raises(ValidationError):
            pbes_sample(X, 0)
        with pytest.raises(ValidationError):
            pbes_sample(X, 4)

    def test_lemma_parity_small(self):
        gen = np.random.default_rng(2024)
        for n in range(1, 16):
            X = gen.normal(size=(n, 3))
            for m in range(1, n + 1):
                sel = pbes_sample(X, m)
                assert len(sel.ordered_indices) == m
                expected = m if (m - n) % 2 == 0 else m + 1
                assert sel.appended_count == expected, (n, m)

    def test_first_pick_is_projection_median(self):
        gen = np.random.default_rng(77)
        for n in (9, 10):
            X = gen.normal(size=(n, 4))
            from pbes.numerics import principal_directions, project

            v = principal_directions(X, 1).directions[0]
            proj = project(X, v)
            order = sorted(range(n), key=lambda r: (proj[r], r))
            sel = pbes_sample(X, n)
            if n % 2 == 1:
                assert sel.ordered_indices[0] == order[(n - 1) // 2]
            else:
                assert sel.ordered_indices[0] == order[n // 2 - 1]
                assert sel.ordered_indices[1] == order[n // 2]

    def test_indices_distinct(self):
        X = np.random.default_rng(5).normal(size=(14, 3))
        sel = pbes_sample(X, 14)
        assert sorted(sel.ordered_indices) == list(range(14))

    def test_translation_invariance(self):
        gen = np.random.default_rng(13)
        X = gen.normal(size=(12, 3))
        base = pbes_sample(X, 7)
        for shift in ([1.0, -2.0, 0.5], [10.0, 10.0, 10.0]):
            moved = pbes_sample(X + np.array(shift), 7)
            assert moved.ordered_indices == base.ordered_indices

    def test_pure_function(self):
        X = np.random.default_rng(19).normal(size=(9, 2))
        assert pbes_sample(X, 4) == pbes_sample(X, 4)

    def test_tie_break_by_row_index(self):
        # identical points: projections all tie, sort falls back to row order
        X = np.ones((4, 2))
        sel = pbes_sample(X, 2)
        assert sel.ordered_indices == (1, 2)  # lower/higher medians of 0,1,2,3


class TestRandpSample:
    def test_one_dimensional_matches_pbes(self):
        X = column([4, 8, 15, 16, 23, 42])
        for m in (1, 2, 3, 6):
            for seed in (0, 1, 99):
                assert (
                    randp_sample(X, m, RngState(seed)).ordered_indices
                    == pbes_sample(X, m).ordered_indices
                )

    def test_deterministic_given_seed(self):
        X = np.random.default_rng(3).normal(size=(6, 2))
        a = randp_sample(X, 4, RngState(11))
        b = randp_sample(X, 4, RngState(11))
        assert a == b

    def test_returns_all_when_m_equals_n(self):
        X = np.random.default_rng(4).normal(size=(7, 2))
        sel = randp_sample(X, 7, RngState(0))
        assert sorted(sel.ordered_indices) == list(range(7))

    def test_lemma_parity_small(self):
        gen = np.random.default_rng(8)
        for n in range(1, 13):
            X = gen.normal(size=(n, 2))
            for m in range(1, n + 1):
                sel = randp_sample(X, m, RngState(n * 100 + m))
                expected = m if (m - n) % 2 == 0 else m + 1
                assert sel.appended_count == expected
                assert len(sel.ordered_indices) == m

    def test_pool_size_cycles(self):
        X = np.random.default_rng(9).normal(size=(10, 3))
        sel = randp_sample(X, 8, RngState(5), pool_size=2)
        assert len(sel.ordered_indices) == 8
        with pytest.raises(ValidationError):
            randp_sample(X, 4, RngState(5), pool_size=0)


class TestHerdingSample:
    def test_hand_trace(self):
        sel = herding_sample(column([0, 1, 2, 10]), 2)
        assert sel.ordered_indices == (2, 1)  # values 2 then 1
        assert sel.appended_count is None

    def test_identical_rows_tie_break(self):
        X = np.ones((5, 3))
        sel = herding_sample(X, 2)
        assert sel.ordered_indices == (0, 1)

    def test_matches_greedy_oracle(self):
        X = np.random.default_rng(21).normal(size=(8, 3))
        sel = herding_sample(X, 3)
        assert list(sel.ordered_indices) == greedy_herding(X, 3)

    def test_pure_function(self):
        X = np.random.default_rng(22).normal(size=(6, 2))
        assert herding_sample(X, 3) == herding_sample(X, 3)


class TestRandomSample:
    def test_m_equals_n_is_permutation(self):
        X = np.random.default_rng(1).normal(size=(9, 2))
        sel = random_sample(X, 9, RngState(3))
        assert sorted(sel.ordered_indices) == list(range(9))

    def test_seed_determinism(self):
        X = np.random.default_rng(2).normal(size=(10, 2))
        assert random_sample(X, 4, RngState(5)) == random_sample(X, 4, RngState(5))

    def test_different_seeds_differ_somewhere(self):
        X = np.random.default_rng(6).normal(size=(10, 2))
        pairs = [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)]
        assert any(
            random_sample(X, 4, RngState(a)).ordered_indices
            != random_sample(X, 4, RngState(b)).ordered_indices
            for a, b in pairs
        )


@given(
    st.integers(1, 12).flatmap(
        lambda n: st.tuples(
            st.just(n),
            st.integers(1, n),
            st.lists(
                st.lists(st.floats(-100, 100, allow_nan=False, width=32), min_size=2, max_size=2),
                min_size=n,
                max_size=n,
            ),
        )
    ),
    st.integers(0, 2**32 - 1),
)
@settings(max_examples=60)
def test_every_sampler_returns_m_distinct_indices(case, seed):
    n, m, rows = case
    X = np.array(rows)
    rng = RngState(seed)
    for method in ("pbes", "randp", "herding", "random"):
        sel = sample(method, X, m, rng=rng)
        assert len(sel.ordered_indices) == m
        assert len(set(sel.ordered_indices)) == m
        assert all(0 <= i < n for i in sel.ordered_indices)


def test_sample_dispatch_requires_seed_for_stochastic():
    X = column([1, 2, 3])
    with pytest.raises(ValidationError):
        sample("random", X, 2)
    with pytest.raises(ValidationError):
        sample("randp", X, 2)
    with pytest.raises(ValidationError):
        sample("nope", X, 2, rng=RngState(0))

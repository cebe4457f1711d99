import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from avgreen.constraints import (ConstraintSystem, constraint_rewrite, random_j_sequence, size_bound,
                                 validate_j_sequence, worst_case_sequence)
from avgreen.paths import Path, PathBatch


def valid_sequences(n_max=40):
    @st.composite
    def build(draw):
        n = draw(st.integers(6, n_max))
        seed = draw(st.integers(0, 2**32 - 1))
        return random_j_sequence(n, np.random.default_rng(seed)), n
    return build()


def brute_forbidden(system):
    """Forbidden pairs via single-coincidence paths on Z."""
    n = system.n
    out = set()
    for u, v in itertools.combinations(range(n + 1), 2):
        sites = np.arange(n + 1)
        sites[v] = sites[u]
        if not system.contains(Path(sites[:, None])):
            out.add((u, v))
    return frozenset(out)


class TestSystem:
    def test_from_j_sequence(self):
        s = ConstraintSystem.from_j_sequence([2, 4, 6], 9)
        assert s.pairs == (((1,), (5, 6, 7, 8)), ((3,), (7, 8)))
        assert s.m == 2 and s.size == 8

    def test_empty_set_detection(self):
        s = ConstraintSystem(4, (((1, 2), (2, 3)),))
        assert s.is_empty_set
        assert not s.mask(PathBatch(np.array([[0, 1, 2, 3, 4]])[:, :, None])).any()

    def test_json_round_trip(self):
        s = constraint_rewrite(worst_case_sequence(20), 20)
        assert ConstraintSystem.from_json(s.dumps()) == s
        assert ConstraintSystem.from_json(s.to_json(), n=20) == s
        with pytest.raises(ValueError):
            ConstraintSystem.from_json(s.to_json())

    def test_index_range_checked(self):
        with pytest.raises(ValueError):
            ConstraintSystem(3, (((1,), (4,)),))

    @pytest.mark.parametrize("js,n", [([2], 8), ([3, 2], 8), ([1, 3], 8), ([2, 3, 5], 8), ([2, 6], 7)])
    def test_invalid_sequences(self, js, n):
        with pytest.raises(ValueError):
            validate_j_sequence(js, n)

    @given(valid_sequences(12))
    def test_forbidden_pairs_match_brute_force(self, case):
        js, n = case
        s = ConstraintSystem.from_j_sequence(js, n)
        assert s.forbidden_pairs() == brute_forbidden(s)


class TestRewrite:
    def test_single_constraint_identity(self):
        for n in range(6, 14):
            js = [2, n - 2]
            assert constraint_rewrite(js, n) == ConstraintSystem.from_j_sequence(js, n)

    @given(valid_sequences(200))
    def test_same_set(self, case):
        js, n = case
        assert constraint_rewrite(js, n).equivalent(ConstraintSystem.from_j_sequence(js, n))

    @given(valid_sequences(200))
    def test_same_constraint_count(self, case):
        js, n = case
        assert constraint_rewrite(js, n).m == len(js) - 1

    @pytest.mark.parametrize("n", range(6, 11))
    def test_random_paths(self, n, rng):
        for _ in range(3):
            js = random_j_sequence(n, rng)
            a, b = ConstraintSystem.from_j_sequence(js, n), constraint_rewrite(js, n)
            ids = rng.integers(0, 3 + n // 2, size=(700, n + 1))
            batch = PathBatch(np.asarray(ids)[:, :, None])
            assert np.array_equal(a.mask(batch), b.mask(batch))

    def test_planted_coincidences(self, rng):
        n = 10
        js = worst_case_sequence(n)
        a, b = ConstraintSystem.from_j_sequence(js, n), constraint_rewrite(js, n)
        rows = []
        for u, v in itertools.combinations(range(n + 1), 2):
            ids = np.arange(n + 1)
            ids[v] = ids[u]
            rows.append(ids)
        batch = PathBatch(np.asarray(np.array(rows))[:, :, None])
        ma = a.mask(batch)
        assert np.array_equal(ma, b.mask(batch))
        assert 0 < ma.sum() < len(rows)

    @pytest.mark.parametrize("n", [12, 16, 24, 64, 256])
    def test_worst_case_exact(self, n):
        js = worst_case_sequence(n)
        assert constraint_rewrite(js, n).equivalent(ConstraintSystem.from_j_sequence(js, n))

    @pytest.mark.parametrize("n", [64, 256, 1024])
    def test_size_bound(self, n):
        js = worst_case_sequence(n)
        before = ConstraintSystem.from_j_sequence(js, n).size
        after = constraint_rewrite(js, n).size
        assert after <= size_bound(n)
        assert before >= n * n / 8

    def test_size_growth_is_n_log_n(self):
        sizes = {n: constraint_rewrite(worst_case_sequence(n), n).size for n in (128, 256, 512, 1024)}
        ratios = [sizes[n] / (n * np.log2(n)) for n in sizes]
        assert max(ratios) / min(ratios) < 1.5

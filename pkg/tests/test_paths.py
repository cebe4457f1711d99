
import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from avgreen.environment import moments
from avgreen.kernels import compose_kernels, sio_kernel
from avgreen.lattice import TorusGrid
from avgreen.paths import (Cell, Coincide, Dyadic, FullSpace, Irreducible, LongSecond, Path,
                           PrimedCoincide, ScriptSPrimed, Tilde, Truncation, V, VPrimed, box_points, cell_count,
                           decomposition_audit, enumerate_cells, enumerate_paths, is_reducible, membership,
                           partition_audit, partition_label, path_sum_T, procedure_pairs)
from avgreen.patterns import nested_expectation



def labels_to_path(labels):
    """One-dimensional path whose sites are the labels themselves."""
    return Path(np.asarray(labels)[:, None])


irreducible_labels = st.integers(4, 9).flatmap(
    lambda n: st.lists(st.integers(0, 5), min_size=n - 1, max_size=n - 1).map(lambda mid: [0] + mid + [5])
).filter(lambda ls: not is_reducible(labels_to_path(ls)))


class TestReducibility:
    def test_n2_always_reducible(self):
        for x1 in box_points(3, 2, (-1, -1)):
            assert is_reducible(Path.from_parts((0, 0), [x1], (1, 0)))

    def test_n3_unique_irreducible(self):
        x0, x3 = (0, 0), (2, 1)
        batch = enumerate_paths(x0, x3, 3, box_points(4, 2, (-1, -1)))
        irr = batch.subset(~batch.reducible)
        assert len(irr) == 1
        assert irr.sites[0].tolist() == [[0, 0], [2, 1], [0, 0], [2, 1]]

    def test_n3_back_and_forth_reducible(self):
        assert is_reducible(Path.from_parts((0, 0), [(0, 0), (0, 0)], (1, 1)))

    def test_equal_endpoints_rejected(self):
        with pytest.raises(ValueError):
            is_reducible(Path.from_parts((0, 0), [(1, 0)], (0, 0)))

    @given(st.lists(st.integers(0, 3), min_size=3, max_size=9))
    def test_matches_pattern_definition(self, labels):
        if labels[0] == labels[-1]:
            return
        from avgreen.patterns import CoincidencePattern
        assert is_reducible(labels_to_path(labels)) == CoincidencePattern(labels).is_reducible()


class TestMembership:
    def test_full_space(self):
        b = enumerate_paths((0, 0), (1, 1), 3, 3)
        assert membership(b, FullSpace()).all()

    def test_dyadic_explicit_path(self):
        # segments of squared length 1, 1, 9, 4: longest first reaches [2, 4) at index 2
        p = Path.from_parts((0,), [(1,), (2,), (5,)], (7,))
        hits = [(m, j) for m in range(4) for j in range(4) if Dyadic(m, j).contains(p)]
        assert hits == [(1, 2)]

    def test_dyadic_family_is_partition(self):
        b = enumerate_paths((0, 0), (2, 1), 4, box_points(4, 2, (-1, -1)))
        b = b.subset(b.distinct_endpoints)
        count = sum(Dyadic(m, j).mask(b).astype(int) for m in range(4) for j in range(4))
        assert np.all(count == 1)

    def test_truncation(self):
        p = Path.from_parts((0,), [(3,)], (4,))
        assert not Truncation(1).contains(p) and Truncation(2).contains(p)

    def test_tilde_requires_connection(self):
        p = Path.from_parts((0,), [(1,), (0,)], (1,))
        assert Dyadic(0, 0).contains(p) and Tilde(0, 0).contains(p)
        q = Path.from_parts((0,), [(1,), (2,)], (3,))
        assert Dyadic(0, 0).contains(q) and not Tilde(0, 0).contains(q)

    def test_primed_coincide_minimality(self):
        p = Path.from_parts((0,), [(1,), (0,), (1,)], (2,))
        # prefix x_0, x_1 meets the suffix: first prefix site meeting it is x_0 = x_2
        assert PrimedCoincide(1, 0, 2).contains(p)
        assert not PrimedCoincide(1, 1, 3).contains(p)
        with pytest.raises(ValueError):
            PrimedCoincide(1, 2, 3).validate(4)

    def test_long_second(self):
        p = Path.from_parts((0,), [(0,), (3,)], (3,))
        # r = 3, n = 3: segments 0, 3, 0; the only segment >= 1 outside [0, 1) is k0 = 1
        assert LongSecond(1, 0, 1).contains(p)
        assert not LongSecond(2, 0, 1).contains(p)

    def test_v_and_v_primed(self):
        p = labels_to_path([0, 5, 0, 5, 0, 5])
        assert V(1, 2).contains(p) and V(3, 4).contains(p)
        assert VPrimed(1, 4).contains(p) and not VPrimed(3, 4).contains(p)

    def test_intersection(self):
        p = labels_to_path([0, 5, 0, 5])
        assert (VPrimed(1, 2) & Irreducible()).contains(p)
        assert not (VPrimed(1, 2) & Coincide(0, 3)).contains(p)

    def test_malformed_descriptor(self):
        with pytest.raises(ValueError):
            membership(enumerate_paths((0,), (1,), 3, 3), Dyadic(0, 5))
        with pytest.raises(ValueError):
            ScriptSPrimed(3, 2, 0, 1).validate(6)


class TestProcedure:
    def test_worked_example(self):
        p = labels_to_path([0, 1, 0, 2, 1, 2])
        tr = procedure_pairs(p, 3, 2)
        assert tr.pairs == ((1, 4),) and tr.m == 1
        assert partition_label(p) == Cell("chain", 3, 2, ((1, 4),))

    def test_n3_label(self):
        assert partition_label(labels_to_path([0, 5, 0, 5])) == Cell("V", 1, 2)

    def test_rejects_paths_outside_domain(self):
        with pytest.raises(ValueError):
            procedure_pairs(labels_to_path([0, 1, 2, 5]), 1, 2)
        with pytest.raises(ValueError):
            partition_label(labels_to_path([0, 1, 0]))

    @settings(suppress_health_check=[HealthCheck.filter_too_much])
    @given(irreducible_labels)
    def test_trace_invariants(self, labels):
        p = labels_to_path(labels)
        cell = partition_label(p)
        assert cell.descriptor().contains(p)
        n = len(labels) - 1
        if cell.kind == "chain":
            tr = procedure_pairs(p, cell.i, cell.j)
            assert tr.m <= (n - 3) // 2
            js = [cell.j] + [jm for _, jm in tr.pairs]
            assert all(a < b for a, b in zip(js, js[1:]))
            j1 = tr.pairs[0][1]
            assert not set(labels[1:cell.j]) & set(labels[j1 + 1:n])

    @settings(suppress_health_check=[HealthCheck.filter_too_much])
    @given(irreducible_labels, st.permutations(range(6)))
    def test_label_invariant_under_site_relabeling(self, labels, perm):
        relabeled = [perm[x] for x in labels]
        assert partition_label(labels_to_path(labels)) == partition_label(labels_to_path(relabeled))


class TestCells:
    @pytest.mark.parametrize("n", range(3, 10))
    def test_count_formula(self, n):
        cells = enumerate_cells(n)
        assert len(cells) == cell_count(n) <= 2 ** (n - 1)
        assert len({c.key() for c in cells}) == len(cells)

    def test_sequence(self):
        assert [cell_count(n) for n in range(3, 8)] == [1, 3, 7, 15, 31]


class TestAudits:
    @pytest.mark.parametrize("n", [3, 4])
    def test_decomposition(self, n):
        rep = decomposition_audit(n, 3, 2)
        assert rep.passed, rep.counterexamples()
        names = {a["name"] for a in rep.to_json()["audits"]}
        assert {"coincidence_partition", "second_long_segment", "discard_reducible_1"} <= names

    def test_corrupted_descriptor_yields_counterexample(self):
        class Broken(PrimedCoincide):
            def mask(self, batch):
                return batch.eq[:, self.j1, self.j2]

        rep = decomposition_audit(4, 3, 2, primed=Broken)
        assert not rep.passed
        assert rep.counterexamples()

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_partition_d2(self, n):
        rep = partition_audit(n, 3, 2)
        assert rep.passed, rep.counterexamples()
        c = rep.empirical_constants
        assert c["occupied_cells"] <= c["cells"] <= 2 ** (n - 1)

    @pytest.mark.parametrize("n", [6, 7])
    def test_partition_d1(self, n):
        rep = partition_audit(n, 4, 1)
        assert rep.passed, rep.counterexamples()
        assert rep.empirical_constants["max_procedure_m"] <= (n - 3) // 2

    def test_json_shape(self):
        js = partition_audit(3, 3, 2).to_json()
        assert {"n", "d", "box", "audits", "empirical_constants"} <= set(js)


@pytest.fixture(scope="module")
def kernels():
    g = TorusGrid(2, 8)
    return [sio_kernel(g, 0, 0), sio_kernel(g, 0, 1), sio_kernel(g, 1, 1), sio_kernel(g, 1, 0)]


class TestPathSums:
    def test_full_space_matches_fft(self, kernels, rng):
        g = kernels[0].grid
        bs = [rng.uniform(-1, 1, g.shape) for _ in range(2)]
        col = compose_kernels(kernels[:2], bs).values
        box = box_points(8, 2)
        for x0 in [(1, 0), (3, 5)]:
            assert abs(path_sum_T(FullSpace(), kernels[:2], bs, x0, (0, 0), box) - col[x0]) <= 1e-10

    def test_coincidence_factorizes(self, kernels):
        box = box_points(8, 2)
        K1, K2, K3, K4 = kernels
        x0 = (2, 1)
        lhs = path_sum_T(Coincide(1, 3), kernels, None, x0, (0, 0), box)
        loop = float(np.sum(K2.values * K3.at(-np.stack(np.indices((8, 8)), -1).reshape(-1, 2)).reshape(8, 8)))
        rhs = loop * compose_kernels([K1, K4]).values[x0]
        assert abs(lhs - rhs) <= 1e-10

    def test_empty_descriptor(self, kernels):
        assert path_sum_T(Coincide(0, 3), kernels[:3], None, (1, 0), (0, 0), 3) == 0

    def test_irreducible_n3_matches_series_weight(self, kernels):
        # summing nested expectations over all paths reproduces the single-path closed form
        from avgreen.series import n3_closed_form
        from avgreen.environment import rademacher
        box = box_points(5, 2, (-2, -2))
        x0 = (1, 1)
        T = path_sum_T(Irreducible(), kernels[:3], None, x0, (0, 0), box)
        assert abs(T - n3_closed_form(kernels[:3], x0, (0, 0), rademacher())) <= 1e-14

    def test_cost_cap(self, kernels):
        with pytest.raises(ValueError):
            path_sum_T(FullSpace(), kernels, None, (0, 0), (1, 0), 9, cost_cap=1000)


def test_reducible_paths_have_zero_weight():
    mom = moments(ASYM_LAW, 6)
    b = enumerate_paths((0,), (3,), 4, box_points(4, 1))
    b = b.subset(b.reducible)
    for row in b.ids:
        assert nested_expectation(tuple(row), mom) == 0


from avgreen.environment import SigmaDistribution  # noqa: E402

ASYM_LAW = SigmaDistribution.from_config([{"value": -1, "prob": "1/2"}, {"value": "1/2", "prob": "1/3"},
                                          {"value": 1, "prob": "1/6"}])

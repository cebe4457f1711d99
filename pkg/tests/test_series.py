import numpy as np
import pytest

from avgreen.environment import SigmaDistribution, moments, rademacher
from avgreen.kernels import fit_decay_exponent, laplacian_symbol, sio_kernel
from avgreen.lattice import ScalarField, TorusGrid, project_mean_zero
from avgreen.series import (SeriesTruncation, assemble_averaged_symbol, averaged_green, averaged_solution,
                            majorant_ratio, n3_closed_form, n3_offdiagonal_field, series_term_exact,
                            series_term_torus)

ASYM = SigmaDistribution.from_config([{"value": -1, "prob": "1/2"}, {"value": "1/2", "prob": "1/3"},
                                      {"value": 1, "prob": "1/6"}])


@pytest.fixture(scope="module")
def g32():
    return TorusGrid(2, 32)


@pytest.fixture(scope="module")
def kernels32(g32):
    return [sio_kernel(g32, 0, 0), sio_kernel(g32, 0, 1), sio_kernel(g32, 1, 1), sio_kernel(g32, 1, 0)]


class TestExactTerms:
    @pytest.mark.parametrize("n", [1, 2])
    def test_low_order_off_diagonal_vanishes(self, n, kernels32):
        t = series_term_exact(n, kernels32[:n], (0, 0), (3, 1), ASYM, R_path=4)
        assert t.value == 0.0

    @pytest.mark.parametrize("law", [rademacher(), ASYM])
    def test_n3_single_path(self, law, kernels32):
        x0, xn = (1, 2), (4, 0)
        t = series_term_exact(3, kernels32[:3], x0, xn, law, R_path=3)
        K1, K2, K3 = kernels32[:3]
        off = (x0[0] - xn[0], x0[1] - xn[1])
        neg = (-off[0], -off[1])
        expected = float(law.variance) ** 2 * K1(off) * K2(neg) * K3(off)
        assert abs(t.value - expected) <= 1e-12
        assert abs(n3_closed_form(kernels32[:3], x0, xn, law) - t.value) <= 1e-12

    def test_rademacher_prefactor_is_one(self, kernels32):
        K = kernels32[0]
        assert n3_closed_form([K] * 3, (0, 0), (2, 1), rademacher()) == pytest.approx(
            K((2, 1)) * K((-2, -1)) * K((2, 1)), abs=0)

    def test_translation_invariance(self, kernels32):
        a = series_term_exact(4, kernels32, (0, 0), (2, 1), ASYM, R_path=2).value
        b = series_term_exact(4, kernels32, (3, -1), (5, 0), ASYM, R_path=2).value
        assert abs(a - b) <= 1e-14

    def test_symmetry_with_symmetric_kernels(self, g32):
        K = [sio_kernel(g32, 0, 0), sio_kernel(g32, 1, 1), sio_kernel(g32, 0, 0)]
        a = series_term_exact(3, K, (0, 0), (3, 2), ASYM, R_path=3).value
        b = series_term_exact(3, K, (3, 2), (0, 0), ASYM, R_path=3).value
        assert abs(a - b) <= 1e-14

    def test_tail_bound_reported_and_shrinks(self, kernels32):
        small = series_term_exact(4, kernels32, (0, 0), (1, 0), ASYM, R_path=2)
        large = series_term_exact(4, kernels32, (0, 0), (1, 0), ASYM, R_path=5)
        assert 0 < large.tail_bound < small.tail_bound
        js = large.to_json()
        assert {"n", "x0", "xn", "value", "tail_bound", "kernel_ids", "distribution"} <= set(js)

    def test_box_term_converges_to_torus_term(self, g32, kernels32):
        mom = moments(ASYM, 5)
        T = series_term_torus(kernels32, mom)
        x = (2, 1)
        box = series_term_exact(4, kernels32, x, (0, 0), ASYM, R_path=4)
        assert abs(box.value - T[x]) <= box.tail_bound

    def test_cost_cap(self, kernels32):
        with pytest.raises(ValueError):
            series_term_exact(4, kernels32, (0, 0), (1, 0), rademacher(), R_path=20, cost_cap=1e4)
        with pytest.raises(ValueError):
            series_term_exact(5, kernels32 + kernels32[:1], (0, 0), (1, 0), rademacher())


class TestTorusTerms:
    @pytest.mark.parametrize("law", [rademacher(), ASYM])
    def test_torus_n3_off_diagonal_matches_closed_form(self, law, g32, kernels32):
        T = series_term_torus(kernels32[:3], moments(law, 4))
        F = n3_offdiagonal_field(kernels32[:3], law)
        off = g32.radius() > 0
        assert np.max(np.abs(T - F)[off]) <= 1e-12

    @pytest.mark.parametrize("n", [1, 2])
    def test_torus_low_order_off_diagonal_zero(self, n, g32, kernels32):
        T = series_term_torus(kernels32[:n], moments(ASYM, n + 1))
        assert np.all(T[g32.radius() > 0] == 0)

    def test_even_terms_vanish_for_symmetric_law(self, kernels32):
        for n in (2, 4):
            assert np.all(series_term_torus(kernels32[:n], moments(rademacher(), n + 1)) == 0)

    def test_n3_decay(self):
        g = TorusGrid(2, 512)
        F = n3_offdiagonal_field([sio_kernel(g, 0, 0)] * 3, rademacher())
        F[0, 0] = 0
        assert abs(fit_decay_exponent(F, (2, 32)).slope + 6) <= 0.3


class TestAveragedSymbol:
    def test_delta_zero_is_laplacian(self, g32):
        s = assemble_averaged_symbol(SeriesTruncation(3, 0.0), ASYM, 0.2, g32)
        assert np.allclose(s.values, laplacian_symbol(g32).values + 0.2, atol=1e-14)

    def test_zero_mode_and_hermitian(self, g32):
        s = assemble_averaged_symbol(SeriesTruncation(3, 0.2), ASYM, 0.3, g32)
        assert abs(s.values[0, 0] - 0.3) <= 1e-14
        refl = np.roll(np.flip(s.values, axis=(0, 1)), 1, axis=(0, 1))
        assert np.allclose(s.values, np.conj(refl), atol=1e-14)

    def test_mean_zero_law_factor_is_one(self, g32):
        s = assemble_averaged_symbol(SeriesTruncation(1, 0.3), rademacher(), 0.0, g32)
        assert s.mean_sigma == 0
        assert np.allclose(s.laplacian_part, laplacian_symbol(g32).values)

    def test_lower_bound(self):
        s = assemble_averaged_symbol(SeriesTruncation(3, 0.1), rademacher(), 0.0, TorusGrid(2, 64))
        assert s.lower_bound_ratio >= 0.3

    def test_sign_structure(self, g32):
        s = assemble_averaged_symbol(SeriesTruncation(3, 0.2), ASYM, 0.1, g32)
        neg = s.rescaled(-0.2)
        for n in (1, 2, 3):
            cn = s.truncated(n).correction - s.truncated(n - 1).correction
            cm = neg.truncated(n).correction - neg.truncated(n - 1).correction
            assert np.allclose(cm, (-1) ** (n + 1) * cn, atol=1e-15)


class TestAveragedGreen:
    def test_lattice_constant_d3(self):
        # torus values approach the infinite-lattice constant like 1/N
        vals = {}
        for N in (64, 128):
            s = assemble_averaged_symbol(SeriesTruncation(1, 0.0), rademacher(), 0.0, TorusGrid(3, N))
            vals[N] = averaged_green(s).values[0, 0, 0]
        assert abs(2 * vals[128] - vals[64] - 0.2527310098) <= 1e-3

    def test_integrability_precondition(self, g32):
        s = assemble_averaged_symbol(SeriesTruncation(1, 0.1), rademacher(), 0.0, g32)
        with pytest.raises(ValueError):
            averaged_green(s, (0, 0))
        averaged_green(s, (1, 0))

    @pytest.mark.parametrize("alpha,expected", [((1, 0, 0), -2), ((1, 1, 0), -3), ((2, 0, 0), -3)])
    def test_derivative_decay_d3(self, alpha, expected):
        s = assemble_averaged_symbol(SeriesTruncation(3, 0.1), rademacher(), 0.0, TorusGrid(3, 64))
        fit = fit_decay_exponent(averaged_green(s, alpha), center=np.array(alpha) / 2)
        assert abs(fit.slope - expected) <= 0.25

    def test_screened_regime_d2(self):
        g = TorusGrid(2, 256)
        s = assemble_averaged_symbol(SeriesTruncation(3, 0.1), rademacher(), 0.05, g)
        K = averaged_green(s, (1, 0))
        # screening length 1/sqrt(mu) ~ 4.5: below it the gradient decays like |x|^-1, beyond it much faster
        inside = fit_decay_exponent(K, (1, 6), n_bins=8, center=(0.5, 0)).slope
        outside = fit_decay_exponent(K, (8, 64), n_bins=8, center=(0.5, 0)).slope
        assert abs(inside + 1) <= 0.25
        assert outside < -2

    def test_solution_of_delta_is_green(self, g32):
        s = assemble_averaged_symbol(SeriesTruncation(3, 0.1), ASYM, 0.2, g32)
        u = averaged_solution(s, ScalarField.delta(g32), (1, 0))
        assert np.allclose(u.values, averaged_green(s, (1, 0)).values, atol=1e-14)

    def test_solution_linear(self, g32, rng):
        s = assemble_averaged_symbol(SeriesTruncation(3, 0.1), ASYM, 0.2, g32)
        f, h = rng.standard_normal(g32.shape), rng.standard_normal(g32.shape)
        lhs = averaged_solution(s, ScalarField(g32, 2 * f - h)).values
        rhs = 2 * averaged_solution(s, ScalarField(g32, f)).values - averaged_solution(s, ScalarField(g32, h)).values
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_mean_zero_data_required(self, g32):
        s = assemble_averaged_symbol(SeriesTruncation(1, 0.1), rademacher(), 0.0, g32)
        with pytest.raises(ValueError):
            averaged_solution(s, ScalarField(g32, np.ones(g32.shape)))

    def test_majorant_single_constant(self, rng):
        g = TorusGrid(3, 32)
        s = assemble_averaged_symbol(SeriesTruncation(3, 0.1), rademacher(), 0.0, g)
        f = np.zeros(g.shape)
        f[:4, :4, :4] = rng.standard_normal((4, 4, 4))
        f = project_mean_zero(ScalarField(g, f))
        ratios = [majorant_ratio(s, f, a) for a in [(0, 0, 0), (1, 0, 0), (0, 1, 1), (2, 0, 0)]]
        assert max(ratios) < 2.0

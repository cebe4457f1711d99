import numpy as np
import pytest

from avgreen.environment import rademacher
from avgreen.kernels import ConvolutionKernel
from avgreen.lattice import ScalarField, TorusGrid
from avgreen.montecarlo import (MCResult, cross_route_comparison, mc_averaged_green, sample_seeds, symmetrize,
                                truncation_allowance)
from avgreen.series import SeriesTruncation, assemble_averaged_symbol, averaged_green


def test_delta_zero_is_deterministic_green():
    g = TorusGrid(2, 16)
    r = mc_averaged_green(g, rademacher(), 0.0, 0.1, 4)
    ref = averaged_green(assemble_averaged_symbol(SeriesTruncation(1, 0.0), rademacher(), 0.1, g)).values
    assert np.max(np.abs(r.mean.values - ref)) <= 1e-9
    assert np.max(r.stderr.values) <= 1e-12


def test_reproducible_at_fixed_workers():
    g = TorusGrid(2, 8)
    a = mc_averaged_green(g, rademacher(), 0.2, 0.1, 6, seeds=3, workers=2)
    b = mc_averaged_green(g, rademacher(), 0.2, 0.1, 6, seeds=3, workers=2)
    c = mc_averaged_green(g, rademacher(), 0.2, 0.1, 6, seeds=3, workers=1)
    assert np.array_equal(a.mean.values, b.mean.values)
    assert np.allclose(a.mean.values, c.mean.values, atol=1e-14)


def test_variance_decays_like_inverse_samples():
    g = TorusGrid(2, 8)
    ns = np.array([100, 400, 1600])
    var = [mc_averaged_green(g, rademacher(), 0.3, 0.2, int(n), seeds=9, control_variate=False).stderr.values[1, 0]
           ** 2 for n in ns]
    slope = np.polyfit(np.log(ns), np.log(var), 1)[0]
    assert abs(slope + 1) <= 0.1


def test_control_variate_reduces_error_and_agrees():
    g = TorusGrid(2, 8)
    a = mc_averaged_green(g, rademacher(), 0.2, 0.2, 200, seeds=1, control_variate=True)
    b = mc_averaged_green(g, rademacher(), 0.2, 0.2, 200, seeds=1, control_variate=False)
    assert np.max(a.stderr.values) < np.max(b.stderr.values)
    se = np.sqrt(a.stderr.values**2 + b.stderr.values**2)
    assert np.max(np.abs(a.mean.values - b.mean.values) / se) < 5


def test_symmetrize_is_projection():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6, 6))
    s = symmetrize(a)
    assert np.allclose(symmetrize(s), s)
    assert np.allclose(s, np.transpose(s, (1, 0, 2)))
    assert np.allclose(s, np.roll(np.flip(s, axis=(0, 1, 2)), 1, axis=(0, 1, 2)))
    assert np.isclose(s.sum(), a.sum())


def test_sample_seeds_distinct_and_stable():
    s = sample_seeds(5, 100)
    assert len(set(s)) == 100 and s == sample_seeds(5, 100)
    assert sample_seeds(5, 10) == s[:10]


def test_truncation_allowance():
    base = np.zeros(4)
    greens = [base, base + 1.0, base + 1.0, base + 1.1, base + 1.11]
    # increments 1, 0 (skipped), 0.1, 0.01 -> rho 0.1 -> 0.01 * 0.1 / 0.9
    assert np.isclose(truncation_allowance(greens), 0.01 * 0.1 / 0.9)
    assert truncation_allowance([base, base + 1.0]) == 1.0
    assert truncation_allowance([base, base + 1, base + 3]) == np.inf


def _fake_mc(grid, mean, se):
    return MCResult(ConvolutionKernel(grid, mean), ScalarField(grid, np.full(grid.shape, se)), 10)


def test_cross_route_report():
    g = TorusGrid(2, 16)
    ref = np.zeros(g.shape)
    mean = np.zeros(g.shape)
    mean[2, 0] = 0.25
    rep = cross_route_comparison(_fake_mc(g, mean, 0.1), ref, 4)
    assert np.isclose(rep.max_z, 2.5) and rep.passed
    mean[3, 0] = 0.5
    rep = cross_route_comparison(_fake_mc(g, mean, 0.1), ref, 4)
    assert not rep.passed and rep.worst_site == (3, 0) and np.isclose(rep.max_z, 5.0)
    assert cross_route_comparison(_fake_mc(g, mean, 0.1), ref, 4, allowance=0.25).passed
    assert cross_route_comparison(_fake_mc(g, mean, 0.1), ref, 2).passed
    assert rep.to_json()["passed"] is False


def test_validation():
    with pytest.raises(ValueError):
        mc_averaged_green(TorusGrid(2, 8), rademacher(), 0.1, 0.1, 1)
    with pytest.raises(ValueError):
        mc_averaged_green(TorusGrid(2, 8), rademacher(), 0.1, 0.1, 3, seeds=[1, 2])

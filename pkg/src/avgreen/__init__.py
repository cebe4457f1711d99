"""Averaged Green's functions of random elliptic difference operators on the torus.

Modules
-------
lattice      torus grids, fields, finite differences, spectral transforms
kernels      Fourier multipliers, convolution kernels, decay fits
environment  random conductivity laws, sampling, exact probability spaces
patterns     coincidence patterns and nested expectations
series       averaged series terms and the averaged symbol
feshbach     exact verification of the averaged operator on tiny tori
montecarlo   Monte Carlo estimates of the averaged Green's function
paths        path sets, decomposition and partition audits
constraints  disjointness constraint systems and their rewriting
probes       empirical constants for composed singular integrals
experiments  configuration, run ledger and command line
"""

__version__ = "0.1.0"

from .constraints import ConstraintSystem, constraint_rewrite, worst_case_sequence
from .environment import SigmaDistribution, moments, named_distribution, rademacher, sample_sigma, solve_L
from .feshbach import FeshbachReport, feshbach_verify
from .kernels import (ConvolutionKernel, DecayFit, Symbol, compose_kernels, extract_kernel, fit_decay_exponent,
                      riesz_symbol, sio_kernel, sio_symbol)
from .lattice import ScalarField, TorusGrid, mixed_derivative
from .montecarlo import MCResult, cross_route_comparison, mc_averaged_green
from .paths import Path, PathBatch, decomposition_audit, partition_audit, partition_label
from .probes import bound_probe, bound_probe_sweep
from .series import (AveragedSymbol, SeriesTruncation, assemble_averaged_symbol, averaged_green,
                     n3_offdiagonal_field, series_term_exact, series_term_torus)

__all__ = [
    "AveragedSymbol", "ConstraintSystem", "ConvolutionKernel", "DecayFit", "FeshbachReport", "MCResult", "Path",
    "PathBatch", "ScalarField", "SeriesTruncation", "SigmaDistribution", "Symbol", "TorusGrid",
    "assemble_averaged_symbol", "averaged_green", "bound_probe", "bound_probe_sweep", "compose_kernels",
    "constraint_rewrite", "cross_route_comparison", "decomposition_audit", "extract_kernel", "feshbach_verify",
    "fit_decay_exponent", "mc_averaged_green", "mixed_derivative", "moments", "n3_offdiagonal_field",
    "named_distribution", "partition_audit", "partition_label", "rademacher", "riesz_symbol", "sample_sigma",
    "series_term_exact", "series_term_torus", "sio_kernel", "sio_symbol", "solve_L", "worst_case_sequence",
]

"""Random coefficient fields, the operator ``L_omega`` and its solver.

The coefficient is ``A(x, omega) = (1 + delta sigma(x, omega)) I`` with
``sigma`` i.i.d. over sites, and

    L u = sum_j grad_j^* ((1 + delta sigma) grad_j u) + mu u.

Laws are finite-atom distributions with exact rational moments.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np
import scipy.fft as sfft

from .lattice import ScalarField, TorusGrid

__all__ = [
    "SigmaDistribution",
    "MomentSequence",
    "EnvironmentSample",
    "SolveReport",
    "SolverError",
    "FiniteProbabilitySpace",
    "sample_sigma",
    "apply_L",
    "solve_L",
    "enumerate_probability_space",
    "moments",
    "rademacher",
    "named_distribution",
]


def _to_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, str):
        return Fraction(v)
    return Fraction(v).limit_denominator(10**12) if isinstance(v, float) else Fraction(v)


@dataclass(frozen=True)
class SigmaDistribution:
    """Finite-atom law of ``sigma`` with ``|value| <= 1``.

    Values and probabilities are stored as exact fractions. Floats are
    rationalized with denominators up to ``1e12`` and probabilities are
    renormalized exactly, so ``1/3`` given as ``0.3333333333333333`` is
    treated as one third.
    """

    atoms: tuple[tuple[Fraction, Fraction], ...]
    name: str = "custom"

    def __post_init__(self):
        atoms = tuple((_to_fraction(v), _to_fraction(p)) for v, p in self.atoms)
        if not atoms:
            raise ValueError("distribution needs at least one atom")
        if any(p < 0 for _, p in atoms):
            raise ValueError("probabilities must be nonnegative")
        total = sum(p for _, p in atoms)
        if abs(float(total) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {float(total)}, not 1")
        if any(abs(v) > 1 for v, _ in atoms):
            raise ValueError("atoms must satisfy |value| <= 1")
        atoms = tuple((v, p / total) for v, p in atoms if p > 0)
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def from_config(cls, spec, name: str | None = None) -> "SigmaDistribution":
        """Build from a named law or a list of ``{value, prob}`` mappings."""
        if isinstance(spec, str):
            return named_distribution(spec)
        if isinstance(spec, dict):
            return cls.from_config(spec["atoms"], spec.get("name", name))
        return cls(tuple((a["value"], a["prob"]) for a in spec), name or "custom")

    def to_config(self) -> dict:
        return {"name": self.name,
                "atoms": [{"value": str(v), "prob": str(p)} for v, p in self.atoms]}

    @property
    def values(self) -> np.ndarray:
        return np.array([float(v) for v, _ in self.atoms])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([float(p) for _, p in self.atoms])

    @property
    def mean(self) -> Fraction:
        return sum(p * v for v, p in self.atoms)

    @property
    def variance(self) -> Fraction:
        return sum(p * v * v for v, p in self.atoms) - self.mean**2


def rademacher() -> SigmaDistribution:
    return SigmaDistribution(((1, Fraction(1, 2)), (-1, Fraction(1, 2))), "rademacher")


def named_distribution(name: str) -> SigmaDistribution:
    """``rademacher``, ``uniform3`` (uniform on -1, 0, 1) or ``constant:<c>``."""
    if name == "rademacher":
        return rademacher()
    if name == "uniform3":
        return SigmaDistribution(tuple((v, Fraction(1, 3)) for v in (-1, 0, 1)), "uniform3")
    if name.startswith("constant:"):
        return SigmaDistribution(((name.split(":", 1)[1], 1),), name)
    raise ValueError(f"unknown distribution {name!r}")


@dataclass(frozen=True)
class MomentSequence:
    """Exact moments ``m_k = E[sigma^k]`` for ``k = 0..k_max``."""

    values: tuple[Fraction, ...]

    @property
    def k_max(self) -> int:
        return len(self.values) - 1

    def __getitem__(self, k: int) -> Fraction:
        if k > self.k_max:
            raise ValueError(f"moment of order {k} requested, only {self.k_max} available")
        return self.values[k]

    def hankel(self) -> np.ndarray:
        """Moment matrix ``[m_{i+j}]`` on the represented range."""
        h = self.k_max // 2
        return np.array([[float(self.values[i + j]) for j in range(h + 1)] for i in range(h + 1)])


def moments(dist: SigmaDistribution, k_max: int) -> MomentSequence:
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    return MomentSequence(tuple(sum(p * v**k for v, p in dist.atoms) for k in range(k_max + 1)))


@dataclass(frozen=True, eq=False)
class EnvironmentSample:
    """One realization of ``sigma`` on a grid.

    ``sigma`` has the grid shape, or shape ``(d,) + grid.shape`` for a
    separate coefficient per axis.
    """

    grid: TorusGrid
    sigma: np.ndarray
    seed: int | None = None
    distribution: str = "custom"

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float, copy=True)
        if s.shape not in (self.grid.shape, (self.grid.d,) + self.grid.shape):
            raise ValueError(f"sigma shape {s.shape} incompatible with {self.grid}")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @property
    def field(self) -> ScalarField:
        if self.sigma.shape != self.grid.shape:
            raise ValueError("per-axis environment has no single scalar field")
        return ScalarField(self.grid, self.sigma)

    def conductances(self, delta: float) -> list[np.ndarray]:
        """Per-axis edge weights ``1 + delta sigma``."""
        if self.sigma.shape == self.grid.shape:
            c = 1.0 + delta * self.sigma
            return [c] * self.grid.d
        return [1.0 + delta * self.sigma[j] for j in range(self.grid.d)]


@dataclass
class SolveReport:
    iterations: int
    residual: float
    delta: float
    mu: float
    converged: bool = True


class SolverError(RuntimeError):
    """Raised when the iterative solver fails to reach its tolerance."""


def sample_sigma(grid: TorusGrid, dist: SigmaDistribution, seed: int) -> EnvironmentSample:
    """Draw i.i.d. site values from a counter-based Philox stream keyed by ``seed``.

    Site ``x`` consumes the uniform with counter equal to its row-major index,
    so the field does not depend on traversal order.
    """
    bitgen = np.random.Philox(key=int(seed) % 2**64)
    u = np.random.Generator(bitgen).random(grid.volume)
    cdf = np.cumsum(dist.probabilities)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, len(cdf) - 1)
    sigma = dist.values[idx].reshape(grid.shape)
    return EnvironmentSample(grid, sigma, int(seed), dist.name)


def _check_delta_mu(delta: float, mu: float) -> None:
    if not 0 <= abs(delta) < 1:
        raise ValueError(f"|delta| must be < 1 for ellipticity, got {delta}")
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")


def _apply_L_array(cond: list[np.ndarray], mu: float, u: np.ndarray) -> np.ndarray:
    out = mu * u if mu else np.zeros_like(u)
    for j, c in enumerate(cond):
        flux = c * (np.roll(u, -1, axis=j) - u)
        out = out + np.roll(flux, 1, axis=j) - flux
    return out


def apply_L(env: EnvironmentSample, delta: float, mu: float, f: ScalarField) -> ScalarField:
    """``sum_j grad_j^* ((1 + delta sigma) grad_j f) + mu f``."""
    _check_delta_mu(delta, mu)
    if f.grid != env.grid:
        raise ValueError("field and environment live on different grids")
    return f.with_values(_apply_L_array(env.conductances(delta), mu, f.values))


def _precond(grid: TorusGrid, mu: float):
    lap = sum(2.0 * (1.0 - np.cos(2 * np.pi * np.arange(grid.N) / grid.N)).reshape(
        [grid.N if a == j else 1 for a in range(grid.d)]) for j in range(grid.d))
    lap = np.broadcast_to(lap, grid.shape)[..., : grid.N // 2 + 1] + mu
    inv = np.zeros_like(lap)
    nz = lap > 0
    inv[nz] = 1.0 / lap[nz]
    axes = tuple(range(grid.d))

    def apply(r):
        return sfft.irfftn(inv * sfft.rfftn(r, axes=axes), s=grid.shape, axes=axes)

    return apply


def solve_L(env: EnvironmentSample, delta: float, mu: float, rhs: ScalarField,
            tol: float = 1e-10, maxiter: int = 500, x0: ScalarField | None = None):
    """Solve ``L_omega u = rhs`` by preconditioned conjugate gradients.

    The preconditioner is ``(-Delta + mu)^{-1}`` applied spectrally. With
    ``mu = 0`` the right-hand side must have zero mean and the solution is
    returned with zero mean.

    Returns
    -------
    u : ScalarField
    report : SolveReport
    """
    _check_delta_mu(delta, mu)
    grid = env.grid
    if rhs.grid != grid:
        raise ValueError("rhs and environment live on different grids")
    if rhs.is_complex:
        raise ValueError("rhs must be real")
    b = np.asarray(rhs.values, dtype=float)
    bnorm = np.linalg.norm(b)
    if mu == 0 and abs(b.sum()) > 1e-10 * max(bnorm, 1.0) * np.sqrt(grid.volume):
        raise ValueError("rhs must have zero mean when mu = 0; project it first")
    if mu == 0:
        b = b - b.mean()
    if bnorm == 0:
        return ScalarField(grid, np.zeros(grid.shape)), SolveReport(0, 0.0, delta, mu)
    cond = env.conductances(delta)
    M = _precond(grid, mu)
    x = np.zeros(grid.shape) if x0 is None else np.array(x0.values, dtype=float)
    r = b - _apply_L_array(cond, mu, x)
    z = M(r)
    p = z.copy()
    rz = np.vdot(r, z)
    it = 0
    rel = np.linalg.norm(r) / bnorm
    while rel > tol and it < maxiter:
        Ap = _apply_L_array(cond, mu, p)
        a = rz / np.vdot(p, Ap)
        x = x + a * p
        r = r - a * Ap
        it += 1
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            break
        z = M(r)
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if mu == 0:
        x = x - x.mean()
    true_rel = float(np.linalg.norm(b - _apply_L_array(cond, mu, x)) / bnorm)
    report = SolveReport(it, true_rel, delta, mu, converged=true_rel <= max(tol, 10 * tol))
    if not report.converged:
        raise SolverError(f"PCG did not converge: residual {true_rel:.3e} after {it} iterations")
    return ScalarField(grid, x), report


@dataclass(frozen=True, eq=False)
class FiniteProbabilitySpace:
    """All ``q**(N**d)`` environments with their product probabilities.

    ``sigmas`` has shape ``(|Omega|,) + grid.shape``.
    """

    grid: TorusGrid
    sigmas: np.ndarray
    probabilities: np.ndarray
    distribution: str = "custom"

    def __len__(self) -> int:
        return len(self.probabilities)

    def __iter__(self) -> Iterator[tuple[EnvironmentSample, float]]:
        for s, p in zip(self.sigmas, self.probabilities):
            yield EnvironmentSample(self.grid, s, None, self.distribution), float(p)

    def expectation(self, values: np.ndarray) -> np.ndarray:
        """``E[X]`` for ``values`` with leading axis indexed by outcomes."""
        return np.tensordot(self.probabilities, values, axes=(0, 0))


def enumerate_probability_space(grid: TorusGrid, dist: SigmaDistribution,
                                cap: int = 2**20) -> FiniteProbabilitySpace:
    q = len(dist.atoms)
    if q**grid.volume > cap:
        raise ValueError(f"{q}**{grid.volume} outcomes exceed the cap {cap}")
    combos = np.array(list(itertools.product(range(q), repeat=grid.volume)), dtype=int)
    sigmas = dist.values[combos].reshape((-1,) + grid.shape)
    probs = np.prod(dist.probabilities[combos], axis=1)
    return FiniteProbabilitySpace(grid, sigmas, probs, dist.name)

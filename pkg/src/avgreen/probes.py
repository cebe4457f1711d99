"""Empirical constants for deterministic bounds on compositions of singular integrals.

For ``T^n = K^1 ... K^n`` with ``K^j(x, y) = K_j(x - y) b_j(y)`` and
``|b_j| <= 1`` the bound

    |T^n(x_0, x_n)| <= eps (C / eps)^n <x_0 - x_n>^{-d + eps}

is probed by solving for the smallest ``C`` at every offset in a radius
window. The bound holds with a finite constant if that implied constant does
not grow across the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import ConvolutionKernel, bracket, compose_kernels, sio_kernel
from .lattice import TorusGrid

__all__ = ["BoundProbe", "implied_constant", "bound_probe", "bound_probe_sweep", "default_kernels",
           "random_weights"]


@dataclass
class BoundProbe:
    """Implied constants of one composition over a radius window.

    ``inner`` and ``outer`` are the largest constants on the lower and upper
    halves of the window in ``log r``; ``growth = outer / inner``.
    """

    n: int
    eps: float
    window: tuple
    constant: float
    inner: float
    outer: float
    radii: list = field(default_factory=list)
    constants: list = field(default_factory=list)

    @property
    def growth(self) -> float:
        return self.outer / self.inner if self.inner > 0 else np.inf

    def stable(self, tol: float = 0.05) -> bool:
        """Finite constant that does not grow over the window (up to ``tol``)."""
        return bool(np.isfinite(self.constant) and self.constant > 0 and self.growth <= 1 + tol)

    def to_json(self) -> dict:
        return {"n": self.n, "eps": self.eps, "window": list(self.window), "constant": self.constant,
                "inner": self.inner, "outer": self.outer, "growth": self.growth}


def implied_constant(value, r, n: int, eps: float, d: int):
    """Smallest ``C`` with ``|value| <= eps (C/eps)^n <r>^{-d+eps}``."""
    v = np.abs(np.asarray(value, dtype=float))
    return eps * (v * bracket(r) ** (d - eps) / eps) ** (1.0 / n)


def default_kernels(grid: TorusGrid, n: int, mu: float = 0.0, cache=None) -> list[ConvolutionKernel]:
    """``n`` singular integral kernels cycling through the index pairs ``(i, i')``."""
    pairs = [(i, k) for i in range(grid.d) for k in range(grid.d)]
    return [sio_kernel(grid, *pairs[j % len(pairs)], mu=mu, cache=cache) for j in range(n)]


def random_weights(grid: TorusGrid, n: int, seed: int) -> list[np.ndarray]:
    """``n`` independent sign fields, the realizations of a Rademacher environment."""
    rng = np.random.default_rng(seed)
    return [rng.choice([-1.0, 1.0], size=grid.shape) for _ in range(n)]


def bound_probe(Ks: Sequence[ConvolutionKernel], bs: Sequence | None, eps: float,
                window: tuple[float, float] | None = None) -> BoundProbe:
    """Implied constants of the column ``x -> T^n(x, 0)`` over ``window``.

    Parameters
    ----------
    Ks : kernels ``K_1..K_n``.
    bs : weights with ``max |b_j| <= 1``, or None for ``b_j = 1``.
    eps : exponent loss in the bound.
    window : radii ``[r_min, r_max]``, default ``[4, N/4]``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grid = Ks[0].grid
    n = len(Ks)
    lo, hi = window if window is not None else (4.0, grid.N / 4)
    if not 1 <= lo < hi <= grid.N / 4:
        raise ValueError("window must lie in [1, N/4]")
    col = compose_kernels(Ks, bs).values
    r = grid.radius()
    sel = (r >= lo) & (r <= hi)
    c = implied_constant(col[sel], r[sel], n, eps, grid.d)
    rs = r[sel]
    mid = np.sqrt(lo * hi)
    inner = float(c[rs < mid].max())
    outer = float(c[rs >= mid].max())
    edges = np.geomspace(lo, hi, 11)
    prof_r, prof_c = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        k = (rs >= a) & (rs < b) if b < hi else (rs >= a) & (rs <= b)
        if k.any():
            prof_r.append(float(np.sqrt(a * b)))
            prof_c.append(float(c[k].max()))
    return BoundProbe(n, float(eps), (float(lo), float(hi)), float(c.max()), inner, outer, prof_r, prof_c)


def bound_probe_sweep(grid: TorusGrid, n_values: Sequence[int] = (1, 2, 3, 4),
                      eps_values: Sequence[float] = (0.25, 0.5, 1.0), seed: int | None = 0,
                      mu: float = 0.0, cache=None, window=None) -> list[BoundProbe]:
    """Probes for every ``(n, eps)``; random sign weights unless ``seed`` is None."""
    out = []
    for n in n_values:
        Ks = default_kernels(grid, n, mu, cache)
        bs = None if seed is None else random_weights(grid, n, seed + n)
        for eps in eps_values:
            out.append(bound_probe(Ks, bs, eps, window))
    return out

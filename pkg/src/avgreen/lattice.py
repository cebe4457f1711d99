"""Periodic lattice substrate: grids, fields, finite differences and FFTs.

Conventions
-----------
The forward transform is unnormalized, ``f^(k) = sum_x f(x) exp(-i theta.x)``
with ``theta = 2 pi k / N``, and the inverse carries ``1 / N**d``. Axes are
zero-based throughout, so ``forward_gradient(f, 0)`` differences along the
first coordinate.

The forward difference ``grad_j u(x) = u(x + e_j) - u(x)`` has symbol
``exp(i theta_j) - 1`` and its adjoint ``grad_j^* u(x) = u(x - e_j) - u(x)``
has symbol ``exp(-i theta_j) - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft

__all__ = [
    "TorusGrid",
    "ScalarField",
    "as_multi_index",
    "forward_gradient",
    "adjoint_gradient",
    "mixed_derivative",
    "negative_laplacian",
    "spectral_transform",
    "apply_multiplier",
    "project_mean_zero",
]

REPRESENTATIONS = ("config", "dual")


@dataclass(frozen=True)
class TorusGrid:
    """The discrete torus ``(Z / N Z)**d``.

    Parameters
    ----------
    d : int
        Spatial dimension, ``d >= 1``.
    N : int
        Side length, ``N >= 2``.
    """

    d: int
    N: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"side length must be an integer >= 2, got {self.N}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def volume(self) -> int:
        return self.N**self.d

    def site_index(self, coords: Sequence[int]) -> int:
        """Row-major flat index of a site, coordinates taken modulo ``N``."""
        coords = self.wrap(coords)
        return int(np.ravel_multi_index(coords, self.shape))

    def site_coords(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.volume:
            raise IndexError(f"site index {index} out of range for {self}")
        return tuple(int(c) for c in np.unravel_index(index, self.shape))

    def wrap(self, coords: Sequence[int]) -> tuple[int, ...]:
        coords = tuple(int(c) for c in coords)
        if len(coords) != self.d:
            raise ValueError(f"expected {self.d} coordinates, got {len(coords)}")
        return tuple(c % self.N for c in coords)

    def frequencies(self) -> list[np.ndarray]:
        """Broadcastable arrays of ``theta_j = 2 pi k_j / N``, one per axis."""
        theta = 2.0 * np.pi * np.arange(self.N) / self.N
        out = []
        for j in range(self.d):
            shape = [1] * self.d
            shape[j] = self.N
            out.append(theta.reshape(shape))
        return out

    def offsets(self) -> list[np.ndarray]:
        """Minimal-image integer offsets in ``[-N/2, N/2)``, one array per axis."""
        k = np.arange(self.N)
        k = np.where(k >= (self.N + 1) // 2, k - self.N, k)
        out = []
        for j in range(self.d):
            shape = [1] * self.d
            shape[j] = self.N
            out.append(k.reshape(shape))
        return out

    def radius(self, center: Sequence[float] | None = None) -> np.ndarray:
        """Euclidean minimal-image distance of each site from ``-center``.

        With ``center = c`` the returned value at site ``x`` is ``|x + c|``,
        which is the natural radius for kernels whose stencil is centred at
        ``x + c`` rather than at ``x``.
        """
        offs = self.offsets()
        c = np.zeros(self.d) if center is None else np.asarray(center, dtype=float)
        if c.shape != (self.d,):
            raise ValueError(f"center must have {self.d} components")
        r2 = np.zeros(self.shape)
        for j in range(self.d):
            r2 = r2 + (offs[j] + c[j]) ** 2
        return np.sqrt(r2)

    def to_dict(self) -> dict:
        return {"d": self.d, "N": self.N}


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A real or complex field on a torus grid.

    ``representation`` is ``"config"`` for functions of sites and ``"dual"``
    for functions of dual points ``theta``. The values are stored read-only.
    """

    grid: TorusGrid
    values: np.ndarray
    representation: str = "config"

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"representation must be one of {REPRESENTATIONS}")
        vals = np.array(self.values, copy=True)
        if vals.dtype.kind not in "fc":
            vals = vals.astype(float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values have shape {vals.shape}, grid expects {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: TorusGrid, representation: str = "config") -> "ScalarField":
        return cls(grid, np.zeros(grid.shape), representation)

    @classmethod
    def delta(cls, grid: TorusGrid, site: Sequence[int] | None = None) -> "ScalarField":
        """Unit mass at ``site`` (origin by default)."""
        v = np.zeros(grid.shape)
        v[grid.wrap(site if site is not None else (0,) * grid.d)] = 1.0
        return cls(grid, v)

    @property
    def is_complex(self) -> bool:
        return self.values.dtype.kind == "c"

    def __call__(self, site: Sequence[int]):
        return self.values[self.grid.wrap(site)]

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.representation)

    def mean(self):
        return self.values.mean()


def as_multi_index(alpha: Iterable[int] | None, d: int) -> tuple[int, ...]:
    """Validate a multi-index of nonnegative integers of length ``d``."""
    if alpha is None:
        return (0,) * d
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != d:
        raise ValueError(f"multi-index {alpha} must have length {d}")
    if any(a < 0 for a in alpha):
        raise ValueError(f"multi-index {alpha} has negative entries")
    return alpha


def _check_axis(grid: TorusGrid, j: int) -> int:
    if not 0 <= j < grid.d:
        raise ValueError(f"axis {j} out of range for d = {grid.d}")
    return j


def forward_gradient(f: ScalarField, j: int) -> ScalarField:
    """``(grad_j f)(x) = f(x + e_j) - f(x)``."""
    _check_axis(f.grid, j)
    return f.with_values(np.roll(f.values, -1, axis=j) - f.values)


def adjoint_gradient(f: ScalarField, j: int) -> ScalarField:
    """Adjoint difference ``(grad_j^* f)(x) = f(x - e_j) - f(x)``."""
    _check_axis(f.grid, j)
    return f.with_values(np.roll(f.values, 1, axis=j) - f.values)


def mixed_derivative(f: ScalarField, alpha: Sequence[int]) -> ScalarField:
    """Apply ``grad^alpha = prod_j grad_j^{alpha_j}`` by repeated differences."""
    alpha = as_multi_index(alpha, f.grid.d)
    out = f
    for j, a in enumerate(alpha):
        for _ in range(a):
            out = forward_gradient(out, j)
    return out


def negative_laplacian(f: ScalarField) -> ScalarField:
    """``-Delta f = sum_j grad_j^* grad_j f``."""
    v = np.zeros_like(f.values)
    for j in range(f.grid.d):
        v = v + 2.0 * f.values - np.roll(f.values, 1, axis=j) - np.roll(f.values, -1, axis=j)
    return f.with_values(v)


def spectral_transform(f: ScalarField, direction: str = "forward") -> ScalarField:
    """Forward (unnormalized) or inverse (``1/N**d``) discrete Fourier transform.

    Parameters
    ----------
    f : ScalarField
        Input in ``config`` representation for ``forward`` and ``dual`` for
        ``inverse``.
    direction : {"forward", "inverse"}
    """
    if direction == "forward":
        if f.representation != "config":
            raise ValueError("forward transform expects a config-space field")
        return ScalarField(f.grid, sfft.fftn(f.values), "dual")
    if direction == "inverse":
        if f.representation != "dual":
            raise ValueError("inverse transform expects a dual-space field")
        return ScalarField(f.grid, sfft.ifftn(f.values), "config")
    raise ValueError(f"unknown direction {direction!r}")


def project_mean_zero(f: ScalarField) -> ScalarField:
    """Subtract the spatial mean."""
    return f.with_values(f.values - f.values.mean())


def apply_multiplier(f: ScalarField, symbol) -> ScalarField:
    """Apply the Fourier multiplier ``symbol`` to a config-space field.

    The result is real when ``f`` is real and the symbol is Hermitian,
    ``s(-theta) = conj(s(theta))``.
    """
    if f.representation != "config":
        raise ValueError("apply_multiplier expects a config-space field")
    if symbol.grid != f.grid:
        raise ValueError(f"grid mismatch: field on {f.grid}, symbol on {symbol.grid}")
    symbol.require_defined()
    out = sfft.ifftn(symbol.values * sfft.fftn(f.values))
    if not f.is_complex and symbol.hermitian:
        out = out.real
    return ScalarField(f.grid, out)

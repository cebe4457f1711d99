"""Fourier symbols, convolution kernels, truncations, compositions and decay fits.

A :class:`Symbol` is a Fourier multiplier sampled on the dual grid and a
:class:`ConvolutionKernel` is its physical-space kernel, ``K = F^{-1} s``, so
that ``(K * f)(x) = sum_y K(x - y) f(y)``.

Notes
-----
The zero mode of a symbol is governed by ``zero_mode_policy``:

``"undefined"``
    The symbol carries no convention at ``theta = 0``. When the defining
    formula is singular there the stored value is NaN and any attempt to use
    it raises. The Laplacian symbol is regular (its value is 0) but is still
    tagged undefined because its inverse is not.
``"zero"``
    The value at ``theta = 0`` is set to 0 (mean-zero sector).
``"regularized"``
    A mass ``mu > 0`` has been added, so the value is finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.fft as sfft
from scipy.optimize import least_squares

from .lattice import ScalarField, TorusGrid, as_multi_index

__all__ = [
    "Symbol",
    "ConvolutionKernel",
    "IntervalMask",
    "DecayFit",
    "laplacian_symbol",
    "regularized_laplacian_symbol",
    "riesz_symbol",
    "sio_symbol",
    "gradient_symbol",
    "monomial_symbol",
    "extract_kernel",
    "sio_kernel",
    "truncate_kernel",
    "smooth_truncate_kernel",
    "compose_kernels",
    "fit_decay_exponent",
    "bracket",
    "convolution_sum_profile",
    "convolution_sum_check",
]

ZERO_MODE_POLICIES = ("undefined", "zero", "regularized")


@dataclass(frozen=True, eq=False)
class Symbol:
    """Fourier multiplier sampled at the dual points ``theta = 2 pi k / N``.

    Attributes
    ----------
    grid : TorusGrid
    values : ndarray
        Complex or real values indexed like the FFT output.
    zero_mode_policy : str
        One of ``"undefined"``, ``"zero"``, ``"regularized"``.
    mu : float
        Regularization mass, positive exactly when the policy is regularized.
    name : str
        Identifier used for caching and provenance.
    params : dict
        Parameters that, with ``name``, determine the symbol.
    """

    grid: TorusGrid
    values: np.ndarray
    zero_mode_policy: str = "undefined"
    mu: float = 0.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.zero_mode_policy not in ZERO_MODE_POLICIES:
            raise ValueError(f"zero_mode_policy must be one of {ZERO_MODE_POLICIES}")
        if self.zero_mode_policy == "regularized" and not self.mu > 0:
            raise ValueError("a regularized symbol requires mu > 0")
        vals = np.array(self.values, copy=True)
        if vals.shape != self.grid.shape:
            raise ValueError(f"symbol shape {vals.shape} does not match grid {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def zero_value(self):
        return self.values[(0,) * self.grid.d]

    @property
    def zero_mode_defined(self) -> bool:
        return bool(np.isfinite(self.zero_value))

    def require_defined(self) -> None:
        if not self.zero_mode_defined:
            raise ValueError(
                f"symbol {self.name!r} has an undefined zero mode; "
                "choose a convention with with_zero_mode() or regularize with mu > 0"
            )

    @cached_property
    def hermitian(self) -> bool:
        """Whether ``s(-theta) = conj(s(theta))``, so the kernel is real."""
        if not self.zero_mode_defined:
            vals = self.values.copy()
            vals[(0,) * self.grid.d] = 0.0
        else:
            vals = self.values
        flipped = np.conj(_reflect(vals))
        scale = max(np.max(np.abs(vals)), 1.0)
        return bool(np.max(np.abs(vals - flipped)) <= 1e-12 * scale)

    def with_zero_mode(self, value: float = 0.0) -> "Symbol":
        """Copy of the symbol with the zero mode set to ``value``.

        Setting 0 selects the mean-zero convention.
        """
        vals = np.array(self.values, dtype=complex if np.iscomplexobj(self.values) else float)
        vals[(0,) * self.grid.d] = value
        policy = "zero" if value == 0 else self.zero_mode_policy
        return Symbol(self.grid, vals, policy, self.mu if policy == "regularized" else 0.0,
                      self.name, dict(self.params, zero_mode=value))

    def __mul__(self, other: "Symbol") -> "Symbol":
        if not isinstance(other, Symbol):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        policy = "zero" if "zero" in (self.zero_mode_policy, other.zero_mode_policy) else (
            "regularized" if "regularized" in (self.zero_mode_policy, other.zero_mode_policy)
            else "undefined")
        mu = max(self.mu, other.mu) if policy == "regularized" else 0.0
        return Symbol(self.grid, self.values * other.values, policy, mu,
                      f"{self.name}*{other.name}", {"left": self.params, "right": other.params})


def _reflect(a: np.ndarray) -> np.ndarray:
    """``a(-k)`` on the periodic index grid."""
    out = a
    for ax in range(a.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


@dataclass(frozen=True, eq=False)
class ConvolutionKernel:
    """Physical-space kernel ``K(x)`` indexed by the torus offset ``x``."""

    grid: TorusGrid
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.array(self.values, copy=True)
        if vals.shape != self.grid.shape:
            raise ValueError(f"kernel shape {vals.shape} does not match grid {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __call__(self, offset: Sequence[int]):
        return self.values[self.grid.wrap(offset)]

    def at(self, offsets: np.ndarray) -> np.ndarray:
        """Vectorized lookup at integer offsets of shape ``(..., d)``."""
        offsets = np.asarray(offsets) % self.grid.N
        return self.values[tuple(np.moveaxis(offsets, -1, 0))]

    def transform(self) -> np.ndarray:
        """Forward transform, the symbol of the kernel."""
        return sfft.fftn(self.values)

    def as_field(self) -> ScalarField:
        return ScalarField(self.grid, self.values)

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.values).sum())


@dataclass(frozen=True)
class IntervalMask:
    """Radial interval ``[lower, upper)`` applied to ``|x - y|``."""

    lower: float = 0.0
    upper: float = np.inf

    def __post_init__(self):
        if self.lower < 0 or self.lower > self.upper:
            raise ValueError(f"invalid interval [{self.lower}, {self.upper})")

    @classmethod
    def dyadic(cls, m: int) -> "IntervalMask":
        """``I_m = [0, 2**m)``."""
        return cls(0.0, 2.0**m)

    def contains(self, r: np.ndarray) -> np.ndarray:
        return (r >= self.lower) & (r < self.upper)


@dataclass
class DecayFit:
    """Power-law fit ``log max|K| ~ intercept + slope * log r`` over radial bins."""

    window: tuple[float, float]
    slope: float
    intercept: float
    residual: float
    n_bins: int
    radii: np.ndarray
    maxima: np.ndarray
    offset: float = 0.0
    center: tuple[float, ...] | None = None
    bracket: bool = False

    def to_json(self, grid: TorusGrid | None = None) -> dict:
        out = {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "window": list(self.window),
            "n_bins": self.n_bins,
            "offset": self.offset,
        }
        if grid is not None:
            out["grid"] = grid.to_dict()
        return out


def laplacian_symbol(grid: TorusGrid) -> Symbol:
    """``sum_j 2 (1 - cos theta_j)``."""
    vals = sum(2.0 * (1.0 - np.cos(t)) for t in grid.frequencies())
    return Symbol(grid, np.broadcast_to(vals, grid.shape), "undefined", 0.0, "laplacian")


def regularized_laplacian_symbol(grid: TorusGrid, mu: float) -> Symbol:
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    lap = laplacian_symbol(grid).values
    return Symbol(grid, lap + mu, "regularized", float(mu), "regularized_laplacian", {"mu": float(mu)})


def riesz_symbol(grid: TorusGrid, s: float) -> Symbol:
    """Symbol of the Riesz potential ``Lambda^s = (-Delta)^{s/2}``.

    For ``s < 0`` the zero mode is NaN and the policy undefined; call
    ``with_zero_mode(0.0)`` to invert on the mean-zero sector.
    """
    if s <= -grid.d / 2:
        raise ValueError(f"s must exceed -d/2 = {-grid.d / 2}, got {s}")
    lap = laplacian_symbol(grid).values
    zero = (0,) * grid.d
    vals = np.empty(grid.shape)
    nz = lap > 0
    vals[nz] = lap[nz] ** (s / 2.0)
    if s > 0:
        vals[zero], policy = 0.0, "zero"
    elif s == 0:
        vals[zero], policy = 1.0, "undefined"
    else:
        vals[zero], policy = np.nan, "undefined"
    return Symbol(grid, vals, policy, 0.0, "riesz", {"s": float(s)})


def gradient_symbol(grid: TorusGrid, j: int, adjoint: bool = False) -> np.ndarray:
    """``exp(i theta_j) - 1`` (or its conjugate for the adjoint difference)."""
    if not 0 <= j < grid.d:
        raise ValueError(f"axis {j} out of range for d = {grid.d}")
    t = grid.frequencies()[j]
    return np.broadcast_to(np.exp(-1j * t if adjoint else 1j * t) - 1.0, grid.shape)


def monomial_symbol(grid: TorusGrid, alpha: Sequence[int]) -> np.ndarray:
    """``m^alpha(theta) = prod_j (exp(i theta_j) - 1)**alpha_j``."""
    alpha = as_multi_index(alpha, grid.d)
    out = np.ones(grid.shape, dtype=complex)
    for j, a in enumerate(alpha):
        if a:
            out = out * gradient_symbol(grid, j) ** a
    return out


def sio_symbol(grid: TorusGrid, i: int, i_prime: int, mu: float = 0.0) -> Symbol:
    """Entry ``(i, i')`` of ``grad (-Delta + mu)^{-1} grad^*``.

    The value is ``(e^{i theta_i} - 1)(e^{-i theta_i'} - 1) / (lap + mu)``; with
    ``mu = 0`` the zero mode is set to 0.
    """
    if not (0 <= i < grid.d and 0 <= i_prime < grid.d):
        raise ValueError(f"indices ({i}, {i_prime}) out of range for d = {grid.d}")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    lap = laplacian_symbol(grid).values + mu
    num = gradient_symbol(grid, i) * gradient_symbol(grid, i_prime, adjoint=True)
    zero = (0,) * grid.d
    den = lap.copy()
    den[zero] = 1.0
    vals = num / den
    vals[zero] = 0.0
    if mu > 0:
        return Symbol(grid, vals, "regularized", float(mu), "sio", {"i": i, "i_prime": i_prime, "mu": float(mu)})
    return Symbol(grid, vals, "zero", 0.0, "sio", {"i": i, "i_prime": i_prime, "mu": 0.0})


def extract_kernel(s: Symbol) -> ConvolutionKernel:
    """Inverse transform of a symbol; real when the symbol is Hermitian."""
    s.require_defined()
    k = sfft.ifftn(s.values)
    if s.hermitian:
        k = k.real
    return ConvolutionKernel(s.grid, k, {"symbol": s.name, "params": s.params})


def sio_kernel(grid: TorusGrid, i: int, i_prime: int, mu: float = 0.0, cache=None) -> ConvolutionKernel:
    """Real kernel of ``grad_i (-Delta + mu)^{-1} grad_{i'}^*``, optionally cached on disk."""
    def compute():
        return extract_kernel(sio_symbol(grid, i, i_prime, mu)).as_field()

    if cache is None:
        f = compute()
    else:
        key = cache.key(grid, "sio", {"i": i, "i_prime": i_prime, "mu": float(mu)})
        f = cache.get_or_compute(key, compute)
    return ConvolutionKernel(grid, f.values, {"symbol": "sio", "params": {"i": i, "i_prime": i_prime, "mu": float(mu)}})


def _as_values(K) -> tuple[TorusGrid, np.ndarray]:
    if isinstance(K, (ConvolutionKernel, ScalarField)):
        return K.grid, K.values
    a = np.asarray(K)
    if a.ndim == 0 or len(set(a.shape)) != 1:
        raise ValueError("array kernels must be cubic")
    return TorusGrid(a.ndim, a.shape[0]), a


def truncate_kernel(K: ConvolutionKernel, I: IntervalMask) -> ConvolutionKernel:
    """``K_I(x) = K(x) chi_I(|x|)`` with the minimal-image Euclidean norm."""
    mask = I.contains(K.grid.radius())
    return ConvolutionKernel(K.grid, np.where(mask, K.values, 0), dict(K.provenance, interval=[I.lower, I.upper]))


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step equal to 1 for t <= 0 and 0 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
        b = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    return a / (a + b)


def smooth_truncate_kernel(K: ConvolutionKernel, scale: float) -> ConvolutionKernel:
    """Multiply by ``psi(|x| / scale)`` with ``psi = 1`` on ``[0, 1]`` and 0 beyond 2."""
    psi = _smooth_step(K.grid.radius() / scale - 1.0)
    return ConvolutionKernel(K.grid, K.values * psi, dict(K.provenance, smooth_scale=scale))


def compose_kernels(Ks: Sequence[ConvolutionKernel], bs: Sequence | None = None,
                    xn: Sequence[int] | None = None) -> ScalarField:
    """Column ``x -> T^n(x, x_n)`` of ``T^n = K^1 K^2 ... K^n``.

    Here ``K^j(x, y) = K_j(x - y) b_j(y)``. The column is built right to left
    by alternating pointwise multiplication with ``b_j`` and one FFT
    convolution with ``K_j``.

    Parameters
    ----------
    Ks : sequence of ConvolutionKernel
    bs : sequence of ScalarField, ndarray or None, optional
        Bounded weights with ``max |b_j| <= 1``; None stands for ``b_j = 1``.
    xn : site, optional
        Column index, the origin by default.
    """
    if not Ks:
        raise ValueError("need at least one kernel")
    grid = Ks[0].grid
    if any(K.grid != grid for K in Ks):
        raise ValueError("kernels live on different grids")
    bs = [None] * len(Ks) if bs is None else list(bs)
    if len(bs) != len(Ks):
        raise ValueError("need one weight per kernel")
    weights = []
    for b in bs:
        if b is None:
            weights.append(None)
            continue
        bv = b.values if isinstance(b, ScalarField) else np.asarray(b)
        if bv.shape != grid.shape:
            raise ValueError("weight lives on a different grid")
        if np.max(np.abs(bv)) > 1.0 + 1e-12:
            raise ValueError("weights must satisfy max |b| <= 1")
        weights.append(bv)
    v = ScalarField.delta(grid, xn).values
    real = all(np.isrealobj(K.values) for K in Ks) and all(w is None or np.isrealobj(w) for w in weights)
    for K, w in zip(reversed(Ks), reversed(weights)):
        if w is not None:
            v = v * w
        v = sfft.ifftn(sfft.fftn(K.values) * sfft.fftn(v))
        if real:
            v = v.real
    return ScalarField(grid, v)


def bracket(r):
    """Japanese bracket ``<x> = 1 + |x|`` with the Euclidean norm."""
    return 1.0 + np.asarray(r, dtype=float)


def fit_decay_exponent(K, window: tuple[float, float] | None = None, *, n_bins: int = 10,
                       center: Sequence[float] | None = None, free_offset: bool = False,
                       use_bracket: bool = False) -> DecayFit:
    """Fit a power-law decay exponent to a kernel.

    Radii in the window are split into ``n_bins`` logarithmically spaced bins;
    the maximum of ``|K|`` in each bin is regressed, in log-log coordinates,
    against the radius at which it is attained.

    Parameters
    ----------
    K : ConvolutionKernel, ScalarField or ndarray
    window : (r_min, r_max), optional
        Defaults to ``[4, N/4]``; must lie within ``[1, N/4]``.
    n_bins : int
        Number of radial bins, at least 8.
    center : sequence of float, optional
        Measure radii as ``|x + center|``. Finite-difference kernels
        ``grad^alpha G`` are naturally centred at ``x + alpha/2``.
    free_offset : bool
        First fit ``A r^s + c`` to all window points by relative least
        squares and subtract ``c``. This absorbs the additive offset of torus
        kernels inverted on the mean-zero sector.
    use_bracket : bool
        Regress against ``log(1 + r)`` instead of ``log r``.

    Returns
    -------
    DecayFit
    """
    grid, vals = _as_values(K)
    if window is None:
        window = (4.0, grid.N / 4.0)
    r_min, r_max = float(window[0]), float(window[1])
    if not (1.0 <= r_min < r_max <= grid.N / 4.0 + 1e-12):
        raise ValueError(f"window {window} must satisfy 1 <= r_min < r_max <= N/4 = {grid.N / 4}")
    if n_bins < 8:
        raise ValueError("at least 8 radial bins are required")
    r = grid.radius(center).ravel()
    a = np.asarray(vals).ravel()
    sel = (r >= r_min) & (r <= r_max)
    r, a = r[sel], a[sel]
    offset = 0.0
    if free_offset:
        a = a.real if np.iscomplexobj(a) else a
        nzm = a != 0
        s0, l0 = np.polyfit(np.log(r[nzm]), np.log(np.abs(a[nzm])), 1)

        def resid(p):
            return (np.exp(p[0]) * r[nzm] ** p[1] + p[2] - a[nzm]) / np.abs(a[nzm])

        sol = least_squares(resid, [l0, s0, 0.0], x_scale="jac")
        offset = float(sol.x[2])
        a = a - offset
    edges = np.geomspace(r_min, r_max, n_bins + 1)
    edges[-1] = np.nextafter(r_max, np.inf)
    idx = np.digitize(r, edges) - 1
    absa = np.abs(a)
    radii, maxima = [], []
    for b in range(n_bins):
        m = np.flatnonzero(idx == b)
        if m.size == 0:
            raise ValueError(f"radial bin [{edges[b]:.3g}, {edges[b + 1]:.3g}) contains no lattice points")
        k = m[np.argmax(absa[m])]
        if absa[k] == 0:
            raise ValueError(f"kernel vanishes identically in bin [{edges[b]:.3g}, {edges[b + 1]:.3g})")
        radii.append(r[k])
        maxima.append(absa[k])
    radii, maxima = np.array(radii), np.array(maxima)
    x = np.log(bracket(radii) if use_bracket else radii)
    y = np.log(maxima)
    slope, intercept = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((y - intercept - slope * x) ** 2)))
    return DecayFit((r_min, r_max), float(slope), float(intercept), res, n_bins, radii, maxima,
                    offset, None if center is None else tuple(float(c) for c in center), use_bracket)


def convolution_sum_profile(alpha: float, beta: float, grid: TorusGrid) -> np.ndarray:
    """Ratio ``sum_x <a-x>^-alpha <x-b>^-beta / <a-b>^-(alpha+beta-d)`` for all offsets ``a-b``."""
    br = bracket(grid.radius())
    f = br ** (-alpha)
    g = br ** (-beta)
    conv = sfft.ifftn(sfft.fftn(f) * sfft.fftn(g)).real
    return conv * br ** (alpha + beta - grid.d)


def convolution_sum_check(alpha: float, beta: float, a: Sequence[int], b: Sequence[int],
                          grid: TorusGrid, eps: float | None = None) -> float:
    """Bound ratio of the convolution sum of two brackets on the torus.

    Computes ``sum_x <a-x>^{-alpha} <x-b>^{-beta}`` exactly and divides by
    ``<a-b>^{-(alpha+beta-d)}``. The admissible range is
    ``3d/4 <= alpha, beta <= d - eps`` with ``eps > 0``; by default ``eps`` is
    ``d - max(alpha, beta)``.
    """
    d = grid.d
    if eps is None:
        eps = d - max(alpha, beta)
    if not eps > 0:
        raise ValueError("eps must be positive")
    for v in (alpha, beta):
        if not (0.75 * d <= v <= d - eps + 1e-12):
            raise ValueError(f"exponent {v} outside [3d/4, d - eps] = [{0.75 * d}, {d - eps}]")
    prof = convolution_sum_profile(alpha, beta, grid)
    off = tuple((int(x) - int(y)) % grid.N for x, y in zip(a, b))
    return float(prof[off])

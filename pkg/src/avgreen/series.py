"""Perturbation-series kernels of the averaged operator.

With ``K = grad (-Delta + mu)^{-1} grad^*`` the averaged operator is

    calL = (1 + delta E sigma)(-Delta) + mu + grad^* K^delta grad,
    K^delta = delta sum_{n >= 1} (-delta)^n P sigma (K P^perp sigma)^n.

Entry ``(i, i')`` of the ``n``-th term at offset ``x = x_0 - x_n`` is

    f_n(x) = sum over paths x_0 -> x_n of
             K_1(x_0 - x_1) ... K_n(x_{n-1} - x_n) N(pattern of the path),

summed over intermediate component indices, where ``N`` is the nested
expectation. Two exact evaluations are provided:

* :func:`series_term_torus` sums over the whole torus by Mobius inversion on
  the partition lattice. Each partition class is a small tensor contraction
  done with FFT convolutions.
* :func:`series_term_exact` enumerates paths in a box, reporting a tail bound.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .environment import MomentSequence, SigmaDistribution, moments
from .kernels import ConvolutionKernel, Symbol, extract_kernel, monomial_symbol, sio_kernel, laplacian_symbol
from .lattice import ScalarField, TorusGrid, as_multi_index
from .patterns import mobius, nested_expectation, set_partitions

__all__ = [
    "SeriesTerm",
    "SeriesTruncation",
    "AveragedSymbol",
    "pattern_weights",
    "series_term_torus",
    "series_term_exact",
    "n3_closed_form",
    "n3_offdiagonal_field",
    "sio_family",
    "series_kernel_matrix",
    "assemble_averaged_symbol",
    "averaged_green",
    "averaged_solution",
    "majorant_ratio",
]


# ---------------------------------------------------------------------------
# pattern weights


@lru_cache(maxsize=None)
def _weights_cached(n: int, mom_values: tuple[Fraction, ...]) -> tuple[tuple[tuple[int, ...], Fraction], ...]:
    mom = MomentSequence(mom_values)
    parts = list(set_partitions(n + 1))
    N = {p: nested_expectation(p, mom) for p in parts}
    out = []
    for rho in parts:
        g = sum((N[pi] * mobius(pi, rho) for pi in parts if N[pi]), Fraction(0))
        if g:
            out.append((rho, g))
    return tuple(out)


def pattern_weights(n: int, mom: MomentSequence) -> list[tuple[tuple[int, ...], Fraction]]:
    """Nonzero ``g(rho) = sum_{pi <= rho} N(pi) mu(pi, rho)`` over partitions of ``0..n``.

    The torus sum of ``prod K_j * N(pattern)`` equals ``sum_rho g(rho) F_rho``
    where ``F_rho`` sums over paths obeying at least the equalities of ``rho``.
    """
    if mom.k_max < n + 1:
        raise ValueError(f"need moments up to order {n + 1}")
    return list(_weights_cached(n, tuple(mom.values[: n + 2])))


# ---------------------------------------------------------------------------
# contraction engine on the torus


def _reflect(a: np.ndarray) -> np.ndarray:
    out = a
    for ax in range(a.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


class _Conv:
    """Real FFT convolutions with cached transforms."""

    def __init__(self, shape):
        self.shape = shape
        self.axes = tuple(range(len(shape)))
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def hat(self, a: np.ndarray) -> np.ndarray:
        key = id(a)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is a:
            return hit[1]
        h = sfft.rfftn(a, axes=self.axes)
        self._cache[key] = (a, h)
        return h

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return sfft.irfftn(self.hat(a) * self.hat(b), s=self.shape, axes=self.axes)


def _contract(factors, free: list, has_x: bool, conv: _Conv, brute_cap: int):
    """Sum a product of difference factors over free torus variables.

    ``factors`` holds ``(array, a, b)`` for ``array(y_a - y_b)``; variable
    names are ``"x"``, ``"z"`` (pinned to the origin) and free names. Returns
    a field in ``x`` if ``has_x`` else a scalar.
    """
    shape = conv.shape
    scalar = 1.0
    unary: dict = {}
    binary: list = []

    def add_unary(v, arr):
        unary[v] = arr if v not in unary else unary[v] * arr

    for arr, a, b in factors:
        if a == b:
            scalar *= float(arr[(0,) * arr.ndim])
        elif a == "z":
            add_unary(b, _reflect(arr))
        elif b == "z":
            add_unary(a, arr)
        else:
            binary.append((arr, a, b))
    free = list(free)
    while free:
        progress = False
        for v in free:
            edges = [(arr, a, b) for arr, a, b in binary if v in (a, b)]
            partners = {b if a == v else a for arr, a, b in edges}
            if len(partners) == 0:
                u = unary.pop(v, None)
                scalar *= float(u.sum()) if u is not None else float(np.prod(shape))
            elif len(partners) == 1:
                w = partners.pop()
                P = np.ones(shape)
                for arr, a, b in edges:
                    P = P * (arr if a == w else _reflect(arr))
                U = unary.pop(v, None)
                add_unary(w, conv(P, U) if U is not None else np.full(shape, P.sum()))
            elif len(partners) == 2 and v not in unary:
                w1, w2 = sorted(partners)
                A = np.ones(shape)
                C = np.ones(shape)
                for arr, a, b in edges:
                    if w1 in (a, b):
                        A = A * (arr if a == w1 else _reflect(arr))
                    else:
                        C = C * (arr if b == w2 else _reflect(arr))
                binary.append((conv(A, C), w1, w2))
            else:
                continue
            binary = [e for e in binary if v not in (e[1], e[2])]
            free.remove(v)
            progress = True
            break
        if not progress:
            v = free[0]
            if np.prod(shape) > brute_cap:
                raise NotImplementedError("contraction needs a brute-force loop beyond the cost cap")
            total = None
            for t in itertools.product(*(range(s) for s in shape)):
                sub = []
                for arr, a, b in binary:
                    if a == v and b == v:
                        sub.append((arr, "z", "z"))
                    elif a == v:
                        sub.append((np.roll(_reflect(arr), t, axis=conv.axes), b, "z"))
                    elif b == v:
                        sub.append((np.roll(arr, t, axis=conv.axes), a, "z"))
                    else:
                        sub.append((arr, a, b))
                for w, arr in unary.items():
                    if w != v:
                        sub.append((arr, w, "z"))
                if v in unary:
                    sub.append((np.full(shape, unary[v][t]), "z", "z"))
                val = _contract(sub, [f for f in free if f != v], has_x, conv, brute_cap)
                total = val if total is None else total + val
            return scalar * total
    if has_x:
        out = np.full(shape, scalar)
        for arr, a, b in binary:
            out = out * (arr if (a, b) == ("x", "z") else _reflect(arr))
        if "x" in unary:
            out = out * unary["x"]
        return out
    if unary:
        raise AssertionError("unexpected unary factor left without x")
    return scalar


def _class_sum(rho: tuple[int, ...], kernels: Sequence[np.ndarray], conv: _Conv, brute_cap: int):
    """``F_rho`` as a field over ``x = x_0 - x_n`` (nonzero only at 0 when 0 ~ n)."""
    n = len(kernels)
    diag = rho[0] == rho[n]
    name = {}
    for blk in set(rho):
        if blk == rho[n]:
            name[blk] = "z"
        elif blk == rho[0]:
            name[blk] = "x"
        else:
            name[blk] = f"v{blk}"
    factors = [(kernels[j - 1], name[rho[j - 1]], name[rho[j]]) for j in range(1, n + 1)]
    free = sorted({name[b] for b in set(rho)} - {"x", "z"})
    res = _contract(factors, free, not diag, conv, brute_cap)
    if diag:
        out = np.zeros(conv.shape)
        out[(0,) * len(conv.shape)] = res
        return out
    return res


def series_term_torus(kernels: Sequence[ConvolutionKernel | np.ndarray], mom: MomentSequence,
                      brute_cap: int = 4096, conv: _Conv | None = None) -> np.ndarray:
    """Exact torus sum ``f_n(x)`` for all offsets ``x = x_0 - x_n``.

    Parameters
    ----------
    kernels : sequence of n real kernels ``K_1..K_n``
    mom : MomentSequence
        Moments up to order ``n + 1``.
    brute_cap : int
        Largest grid volume for which a contraction that FFTs cannot resolve
        may fall back to an explicit loop. Never reached for ``n <= 3``.
    """
    arrs = [np.asarray(K.values if isinstance(K, ConvolutionKernel) else K) for K in kernels]
    if any(np.iscomplexobj(a) for a in arrs):
        raise ValueError("series terms require real kernels")
    n = len(arrs)
    if n < 1:
        raise ValueError("n must be at least 1")
    shape = arrs[0].shape
    conv = conv or _Conv(shape)
    out = np.zeros(shape)
    for rho, g in pattern_weights(n, mom):
        out = out + float(g) * _class_sum(rho, arrs, conv, brute_cap)
    return out


# ---------------------------------------------------------------------------
# box enumeration


@dataclass
class SeriesTerm:
    """A box-enumerated series term with its a-posteriori tail bound."""

    n: int
    x0: tuple[int, ...]
    xn: tuple[int, ...]
    value: float
    tail_bound: float
    n_paths: int
    box: tuple[tuple[int, ...], int]
    kernel_ids: list = field(default_factory=list)
    distribution: str = ""

    def to_json(self) -> dict:
        return {"n": self.n, "x0": list(self.x0), "xn": list(self.xn), "value": self.value,
                "tail_bound": self.tail_bound, "n_paths": self.n_paths,
                "box": {"corner": list(self.box[0]), "side": self.box[1]},
                "kernel_ids": self.kernel_ids, "distribution": self.distribution}


def _pair_bits(n: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(n + 1) for b in range(a + 1, n + 1)]


@lru_cache(maxsize=None)
def _pattern_table(n: int, mom_values: tuple[Fraction, ...]) -> np.ndarray:
    """Nested expectation indexed by the bitmask of pairwise position equalities."""
    mom = MomentSequence(mom_values)
    pairs = _pair_bits(n)
    table = np.full(2 ** len(pairs), np.nan)
    for rho in set_partitions(n + 1):
        key = sum(1 << k for k, (a, b) in enumerate(pairs) if rho[a] == rho[b])
        table[key] = float(nested_expectation(rho, mom))
    return table


def series_term_exact(n: int, kernels: Sequence[ConvolutionKernel], x0: Sequence[int], xn: Sequence[int],
                      dist: SigmaDistribution, R_path: int = 6, box: tuple | None = None,
                      cost_cap: float = 5e7, n_cap: int = 4) -> SeriesTerm:
    """Sum over paths with interior points in a box, with a tail bound.

    The box is ``{y : |y - mid|_inf <= R_path}`` around the midpoint of the
    endpoints, or ``box = (corner, side)``. Sites are plain integer points;
    kernels are looked up modulo ``N``.

    The tail bound covers paths leaving the box: such a path has some segment
    of length at least ``rho / n``, where ``rho`` is the sup-norm distance of
    the endpoints to the complement of the box, so the omitted sum is at most
    ``n max|N| max_j ||K_j 1_{|y| >= rho/n}||_1 max||K||_1^{n-2} max||K||_inf``.
    """
    if not 1 <= n <= n_cap:
        raise ValueError(f"n must lie in [1, {n_cap}]")
    if len(kernels) != n:
        raise ValueError(f"need {n} kernels, got {len(kernels)}")
    grid = kernels[0].grid
    d = grid.d
    x0 = tuple(int(c) for c in x0)
    xn = tuple(int(c) for c in xn)
    if len(x0) != d or len(xn) != d:
        raise ValueError("endpoint dimension mismatch")
    if box is None:
        mid = tuple((a + b) // 2 for a, b in zip(x0, xn))
        corner = tuple(m - R_path for m in mid)
        side = 2 * R_path + 1
    else:
        corner, side = tuple(int(c) for c in box[0]), int(box[1])
    sites = np.stack(np.meshgrid(*[np.arange(c, c + side) for c in corner], indexing="ij"), -1).reshape(-1, d)
    B = len(sites)
    n_paths = B ** (n - 1)
    if n_paths > cost_cap:
        raise ValueError(f"{n_paths} paths exceed the cost cap {cost_cap:g}")
    mom = moments(dist, n + 1)
    table = _pattern_table(n, tuple(mom.values))
    pairs = _pair_bits(n)
    kv = [np.asarray(K.values) for K in kernels]

    def kval(j, a, b):
        off = (a - b) % grid.N
        return kv[j][tuple(off[..., c] for c in range(d))]

    X0 = np.array(x0)
    XN = np.array(xn)
    total = 0.0
    if n == 1:
        pts = [X0[None], XN[None]]
        chunks = [pts]
    else:
        def chunk_iter():
            if n == 2:
                yield [X0[None], sites, XN[None]]
                return
            rest = np.indices((B,) * (n - 2)).reshape(n - 2, -1)
            for i1 in range(B):
                yield [X0[None], sites[i1][None]] + [sites[r] for r in rest] + [XN[None]]
        chunks = chunk_iter()
    for pts in chunks:
        size = max(len(p) for p in pts)
        P = [np.broadcast_to(p, (size, d)) for p in pts]
        prod = np.ones(size)
        for j in range(n):
            prod = prod * kval(j, P[j], P[j + 1])
        key = np.zeros(size, dtype=np.int64)
        for k, (a, b) in enumerate(pairs):
            key |= np.all(P[a] == P[b], axis=1).astype(np.int64) << k
        total += float(np.sum(prod * table[key]))
    lo = np.array(corner)
    hi = lo + side - 1
    rho = min(int(np.min(np.minimum(X - lo, hi - X))) + 1 for X in (X0, XN)) if n > 1 else np.inf
    if n == 1 or rho <= 0:
        tail = 0.0 if n == 1 else np.inf
    else:
        t = rho / n
        r = grid.radius()
        maxN = float(np.nanmax(np.abs(table)))
        l1 = max(np.abs(a).sum() for a in kv)
        linf = max(np.abs(a).max() for a in kv)
        ltail = max(np.abs(a[r >= t]).sum() for a in kv)
        tail = n * maxN * ltail * l1 ** max(n - 2, 0) * (linf if n >= 2 else 1.0)
    ids = [K.provenance for K in kernels]
    return SeriesTerm(n, x0, xn, total, float(tail), n_paths, (corner, side), ids, dist.name)


def n3_offdiagonal_field(kernels: Sequence[ConvolutionKernel], dist: SigmaDistribution) -> np.ndarray:
    """``Var^2 K_1(x) K_2(-x) K_3(x)`` for all offsets ``x`` (the value at 0 is not the diagonal term).

    The only irreducible path from ``x_0`` to ``x_3 != x_0`` is ``(x_3, x_0)``
    and its nested expectation is ``Var(sigma)^2`` for every law.
    """
    if len(kernels) != 3:
        raise ValueError("need three kernels")
    k1, k2, k3 = (np.asarray(K.values) for K in kernels)
    return float(dist.variance) ** 2 * k1 * _reflect(k2) * k3


def n3_closed_form(kernels: Sequence[ConvolutionKernel], x0: Sequence[int], xn: Sequence[int],
                   dist: SigmaDistribution) -> float:
    """Off-diagonal ``n = 3`` term, ``Var^2 K_1(x_0 - x_3) K_2(x_3 - x_0) K_3(x_0 - x_3)``."""
    x0 = tuple(int(c) for c in x0)
    xn = tuple(int(c) for c in xn)
    if x0 == xn:
        raise ValueError("closed form requires x0 != xn")
    mom = moments(dist, 4)
    v = nested_expectation((0, 1, 0, 1), mom)
    off = tuple(a - b for a, b in zip(x0, xn))
    neg = tuple(-o for o in off)
    K1, K2, K3 = kernels
    return float(v) * float(K1(off)) * float(K2(neg)) * float(K3(off))


# ---------------------------------------------------------------------------
# averaged symbol


def sio_family(grid: TorusGrid, mu: float = 0.0, cache=None) -> dict[tuple[int, int], ConvolutionKernel]:
    """All kernels ``K_{i i'}`` of ``grad (-Delta + mu)^{-1} grad^*``."""
    return {(i, k): sio_kernel(grid, i, k, mu, cache) for i in range(grid.d) for k in range(grid.d)}


def series_kernel_matrix(grid: TorusGrid, dist: SigmaDistribution, mu: float, n: int,
                         family: dict | None = None, brute_cap: int = 4096) -> np.ndarray:
    """``f_n`` summed over intermediate indices, shape ``(d, d) + grid.shape``.

    Entry ``[i, i']`` is ``sum_{a_1..a_{n-1}} f_n[K_{i a_1}, ..., K_{a_{n-1} i'}]``;
    the ``n``-th series contribution to ``K^delta`` is ``delta (-delta)^n`` times this.
    """
    d = grid.d
    family = family or sio_family(grid, mu)
    arrs = {k: np.asarray(v.values) for k, v in family.items()}
    mom = moments(dist, n + 1)
    conv = _Conv(grid.shape)
    out = np.zeros((d, d) + grid.shape)
    for i in range(d):
        for k in range(d):
            for mids in itertools.product(range(d), repeat=n - 1):
                idx = (i,) + mids + (k,)
                ks = [arrs[(idx[j], idx[j + 1])] for j in range(n)]
                out[i, k] += series_term_torus(ks, mom, brute_cap, conv)
    return out


@dataclass
class SeriesTruncation:
    """Truncation of the series for ``K^delta``.

    ``n_max`` counts the retained terms; ``eps`` is the decay-loss parameter
    recorded for reporting only.
    """

    n_max: int = 3
    delta: float = 0.1
    R_path: int = 6
    eps: float = 0.5

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if not abs(self.delta) < 1:
            raise ValueError("|delta| must be < 1")


@dataclass(eq=False)
class AveragedSymbol:
    """Symbol ``m(theta)`` of the truncated averaged operator.

    ``terms[n - 1]`` holds the unweighted ``f_n`` kernel matrices, so the
    symbol can be re-assembled for other ``delta`` by :meth:`rescaled`.
    """

    grid: TorusGrid
    values: np.ndarray
    laplacian_part: np.ndarray
    mu: float
    correction: np.ndarray
    delta: float
    mean_sigma: float
    terms: list
    distribution: str = ""
    lower_bound_ratio: float = float("nan")

    @property
    def n_max(self) -> int:
        return len(self.terms)

    def kernel_matrix(self) -> np.ndarray:
        """Truncated ``K^delta`` kernels, shape ``(d, d) + grid.shape``."""
        return sum(self.delta * (-self.delta) ** n * t for n, t in enumerate(self.terms, start=1))

    def rescaled(self, delta: float, check: bool = True) -> "AveragedSymbol":
        return _build_symbol(self.grid, delta, self.mu, self.mean_sigma, self.terms, self.distribution, check)

    def truncated(self, n_max: int, check: bool = True) -> "AveragedSymbol":
        """Same symbol keeping only the terms ``n <= n_max`` (``0`` keeps none)."""
        if not 0 <= n_max <= self.n_max:
            raise ValueError(f"n_max must lie in 0..{self.n_max}")
        return _build_symbol(self.grid, self.delta, self.mu, self.mean_sigma, self.terms[:n_max],
                             self.distribution, check)

    def as_symbol(self) -> Symbol:
        policy = "regularized" if self.mu > 0 else "undefined"
        return Symbol(self.grid, self.values, policy, self.mu, "averaged", {"delta": self.delta})


def _build_symbol(grid, delta, mu, mean_sigma, terms, dist_name, check=True, lower_min=0.0):
    from .kernels import gradient_symbol

    d = grid.d
    lap = laplacian_symbol(grid).values
    lap_part = (1.0 + delta * mean_sigma) * lap
    Kd = sum(delta * (-delta) ** n * t for n, t in enumerate(terms, start=1))
    corr = np.zeros(grid.shape, dtype=complex)
    if terms:
        Khat = sfft.fftn(Kd, axes=tuple(range(2, 2 + d)))
        for j in range(d):
            gj = gradient_symbol(grid, j, adjoint=True)
            for k in range(d):
                corr += gj * Khat[j, k] * gradient_symbol(grid, k)
    vals = lap_part + mu + corr
    if np.max(np.abs(vals.imag)) <= 1e-12 * max(1.0, np.max(np.abs(vals))):
        vals = vals.real
        corr = corr.real
    th2 = sum(((t + np.pi) % (2 * np.pi) - np.pi) ** 2 for t in grid.frequencies())
    th2 = np.broadcast_to(th2, grid.shape)
    nz = th2 > 0
    ratio = float(np.min(np.real(vals)[nz] / th2[nz])) if np.any(nz) else float("nan")
    sym = AveragedSymbol(grid, vals, lap_part, float(mu), corr, float(delta), float(mean_sigma),
                         list(terms), dist_name, ratio)
    if check and not ratio > lower_min:
        raise ValueError(f"lower bound violated: min Re m / |theta|^2 = {ratio:.3g} (delta too large)")
    return sym


def assemble_averaged_symbol(trunc: SeriesTruncation, dist: SigmaDistribution, mu: float,
                             grid: TorusGrid, cache=None, check: bool = True) -> AveragedSymbol:
    """Assemble ``m(theta)`` from the exact torus series terms ``n = 1..n_max``.

    ``m = (1 + delta E sigma) lap + mu + sum_{j,k} (e^{-i theta_j} - 1) K^delta_{jk}^ (e^{i theta_k} - 1)``.
    The lower bound ``min Re m(theta) / |theta|^2 > 0`` is checked and
    recorded in ``lower_bound_ratio``.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    family = sio_family(grid, mu, cache)
    terms = [series_kernel_matrix(grid, dist, mu, n, family) for n in range(1, trunc.n_max + 1)]
    return _build_symbol(grid, trunc.delta, mu, float(dist.mean), terms, dist.name, check)


def _green_multiplier(symbol: AveragedSymbol, alpha) -> np.ndarray:
    grid = symbol.grid
    alpha = as_multi_index(alpha, grid.d)
    order = sum(alpha)
    if symbol.mu == 0 and not order > 2 - grid.d:
        raise ValueError(f"|alpha| = {order} must exceed 2 - d = {2 - grid.d} when mu = 0")
    m = np.array(symbol.values, dtype=complex)
    zero = (0,) * grid.d
    mult_num = monomial_symbol(grid, alpha)
    if symbol.mu == 0:
        m[zero] = 1.0
        mult = mult_num / m
        mult[zero] = 0.0
    else:
        mult = mult_num / m
    return mult


def averaged_green(symbol: AveragedSymbol, alpha=None) -> ConvolutionKernel:
    """Kernel of ``grad^alpha G`` with ``G`` the inverse of the averaged operator.

    With ``mu = 0`` the zero mode is dropped (mean-zero sector), which requires
    ``|alpha| > 2 - d``.
    """
    alpha = as_multi_index(alpha, symbol.grid.d)
    mult = _green_multiplier(symbol, alpha)
    K = extract_kernel(Symbol(symbol.grid, mult, "zero" if symbol.mu == 0 else "regularized",
                              symbol.mu, "averaged_green", {"alpha": list(alpha), "delta": symbol.delta}))
    return ConvolutionKernel(K.grid, K.values, dict(K.provenance, alpha=list(alpha)))


def averaged_solution(symbol: AveragedSymbol, f: ScalarField, alpha=None) -> ScalarField:
    """``grad^alpha (G * f)`` by one multiplier application.

    With ``mu = 0`` and ``alpha = 0`` the data must have zero mean.
    """
    if f.grid != symbol.grid:
        raise ValueError("grid mismatch")
    alpha = as_multi_index(alpha, f.grid.d)
    if symbol.mu == 0 and sum(alpha) == 0 and abs(f.values.sum()) > 1e-10 * max(1.0, np.abs(f.values).sum()):
        raise ValueError("f must have zero mean when mu = 0 and alpha = 0")
    mult = _green_multiplier(symbol, alpha)
    out = sfft.ifftn(mult * sfft.fftn(f.values))
    if not f.is_complex:
        out = out.real
    return ScalarField(f.grid, out)


def majorant_ratio(symbol: AveragedSymbol, f: ScalarField, alpha=None) -> float:
    """``max_x |grad^alpha (G*f)(x)| / sum_y |f(y)| <x - y>^{-(d - 2 + |alpha|)}``."""
    alpha = as_multi_index(alpha, f.grid.d)
    u = np.abs(averaged_solution(symbol, f, alpha).values)
    p = f.grid.d - 2 + sum(alpha)
    w = (1.0 + f.grid.radius()) ** (-p)
    maj = sfft.ifftn(sfft.fftn(w) * sfft.fftn(np.abs(f.values))).real
    return float(np.max(u / maj))

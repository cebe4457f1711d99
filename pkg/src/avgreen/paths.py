"""Lattice paths, the path sets used to split the series terms, and audits.

A path ``(x_0, ..., x_n)`` has fixed distinct endpoints and a free interior
``(x_1, ..., x_{n-1})``. Path sets are symbolic descriptors evaluated by
membership; they are materialized only on finite boxes, where every interior
tuple is enumerated.

Segment lengths are compared through exact integer squared lengths, so
thresholds such as ``|x_k - x_{k+1}| >= r / n`` carry no rounding.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import comb
from typing import Iterator, Sequence

import numpy as np

from .environment import SigmaDistribution, moments
from .kernels import ConvolutionKernel
from .lattice import ScalarField, TorusGrid
from .patterns import CoincidencePattern, nested_expectation

__all__ = [
    "Path",
    "PathBatch",
    "PathSet",
    "FullSpace",
    "Dyadic",
    "Tilde",
    "Coincide",
    "PrimedCoincide",
    "LongSecond",
    "V",
    "VPrimed",
    "ScriptS",
    "ScriptSPrimed",
    "Truncation",
    "Irreducible",
    "Intersection",
    "ProcedureTrace",
    "Cell",
    "AuditReport",
    "box_points",
    "enumerate_paths",
    "is_reducible",
    "membership",
    "procedure_pairs",
    "partition_label",
    "enumerate_cells",
    "cell_count",
    "path_sum_T",
    "decomposition_audit",
    "partition_audit",
]


# ---------------------------------------------------------------- paths


def _min_image(diff: np.ndarray, N: int) -> np.ndarray:
    return (diff + N // 2) % N - N // 2


@dataclass(frozen=True, eq=False)
class Path:
    """A single path ``(x_0, ..., x_n)`` stored as an integer array ``(n + 1, d)``.

    With ``grid`` set, sites are torus sites and lengths use the minimal
    image; otherwise sites are plain points of ``Z^d``.
    """

    sites: np.ndarray
    grid: TorusGrid | None = None

    def __post_init__(self):
        s = np.array(self.sites, dtype=np.int64)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 2:
            raise ValueError("a path needs at least two sites")
        if self.grid is not None:
            if s.shape[1] != self.grid.d:
                raise ValueError("site dimension does not match the grid")
            s = s % self.grid.N
        s.setflags(write=False)
        object.__setattr__(self, "sites", s)

    @classmethod
    def from_parts(cls, x0, interior, xn, grid: TorusGrid | None = None) -> "Path":
        x0 = np.atleast_1d(x0)
        xn = np.atleast_1d(xn)
        mid = np.asarray(interior, dtype=np.int64).reshape(-1, x0.size)
        return cls(np.vstack([x0, mid, xn]), grid)

    @property
    def n(self) -> int:
        return self.sites.shape[0] - 1

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    @property
    def x0(self) -> tuple:
        return tuple(int(c) for c in self.sites[0])

    @property
    def xn(self) -> tuple:
        return tuple(int(c) for c in self.sites[-1])

    @property
    def interior(self) -> np.ndarray:
        return self.sites[1:-1]

    def labels(self) -> tuple:
        return tuple(tuple(int(c) for c in s) for s in self.sites)

    def pattern(self) -> CoincidencePattern:
        return CoincidencePattern.from_sites(self.labels())

    def segment_lengths2(self) -> np.ndarray:
        """Exact squared segment lengths ``|x_k - x_{k+1}|^2``."""
        return self.batch().seg2[0]

    def segment_lengths(self) -> np.ndarray:
        return np.sqrt(self.segment_lengths2())

    def batch(self) -> "PathBatch":
        return PathBatch(self.sites[None], self.grid)

    def to_list(self) -> list:
        return self.sites.tolist()


class PathBatch:
    """Many paths of a common length, shape ``(P, n + 1, d)``.

    Equality and squared-length tables are computed once and shared by every
    descriptor evaluated on the batch.
    """

    def __init__(self, sites: np.ndarray, grid: TorusGrid | None = None):
        s = np.asarray(sites, dtype=np.int64)
        if s.ndim != 3 or s.shape[1] < 2:
            raise ValueError("expected an array of shape (P, n + 1, d)")
        if grid is not None:
            s = s % grid.N
        self.sites = s
        self.grid = grid

    def __len__(self) -> int:
        return self.sites.shape[0]

    @property
    def n(self) -> int:
        return self.sites.shape[1] - 1

    def __getitem__(self, k: int) -> Path:
        return Path(self.sites[k], self.grid)

    def subset(self, mask: np.ndarray) -> "PathBatch":
        return PathBatch(self.sites[mask], self.grid)

    @cached_property
    def ids(self) -> np.ndarray:
        """Integer site labels; equal labels mean equal sites."""
        P, n1, d = self.sites.shape
        flat = self.sites.reshape(-1, d)
        lo = flat.min(axis=0) if flat.size else np.zeros(d, np.int64)
        span = (flat.max(axis=0) - lo + 1) if flat.size else np.ones(d, np.int64)
        code = np.zeros(flat.shape[0], dtype=np.int64)
        for k in range(d):
            code = code * int(span[k]) + (flat[:, k] - lo[k])
        return code.reshape(P, n1)

    @cached_property
    def eq(self) -> np.ndarray:
        """Boolean table ``eq[p, a, b] = (x_a == x_b)``."""
        ids = self.ids
        return ids[:, :, None] == ids[:, None, :]

    @cached_property
    def seg2(self) -> np.ndarray:
        diff = np.diff(self.sites, axis=1)
        if self.grid is not None:
            diff = _min_image(diff, self.grid.N)
        return np.sum(diff * diff, axis=-1)

    @cached_property
    def r2(self) -> np.ndarray:
        """Squared endpoint distance ``|x_0 - x_n|^2``."""
        diff = self.sites[:, -1] - self.sites[:, 0]
        if self.grid is not None:
            diff = _min_image(diff, self.grid.N)
        return np.sum(diff * diff, axis=-1)

    @cached_property
    def connected_at(self) -> np.ndarray:
        """``connected_at[p, j]``: prefix ``x_0..x_j`` meets suffix ``x_{j+1}..x_n``."""
        eq = self.eq
        n = self.n
        out = np.zeros((len(self), n), dtype=bool)
        for j in range(n):
            out[:, j] = eq[:, : j + 1, j + 1:].any(axis=(1, 2))
        return out

    @cached_property
    def reducible(self) -> np.ndarray:
        return ~self.connected_at.all(axis=1)

    @cached_property
    def distinct_endpoints(self) -> np.ndarray:
        return self.ids[:, 0] != self.ids[:, -1]


def box_points(side: int, d: int, origin: Sequence[int] | None = None) -> np.ndarray:
    """All points of ``origin + {0, ..., side - 1}^d``, shape ``(side^d, d)``."""
    pts = np.array(list(itertools.product(range(side), repeat=d)), dtype=np.int64).reshape(-1, d)
    if origin is not None:
        pts = pts + np.asarray(origin, dtype=np.int64)
    return pts


def _box_array(box, d: int) -> np.ndarray:
    if isinstance(box, (int, np.integer)):
        return box_points(int(box), d)
    pts = np.asarray(box, dtype=np.int64)
    if pts.ndim != 2 or pts.shape[1] != d:
        raise ValueError("box must be a side length or an array of shape (M, d)")
    return pts


def enumerate_paths(x0, xn, n: int, box, grid: TorusGrid | None = None,
                    cap: int = 10**7) -> PathBatch:
    """Every path from ``x0`` to ``xn`` whose interior sites lie in ``box``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.int64))
    xn = np.atleast_1d(np.asarray(xn, dtype=np.int64))
    d = x0.size
    pts = _box_array(box, d)
    M = pts.shape[0]
    if n < 1:
        raise ValueError("n must be at least 1")
    count = M ** (n - 1)
    if count > cap:
        raise ValueError(f"{count} paths exceed the enumeration cap {cap}")
    idx = np.indices((M,) * (n - 1)).reshape(n - 1, -1).T if n > 1 else np.zeros((1, 0), np.int64)
    sites = np.empty((idx.shape[0], n + 1, d), dtype=np.int64)
    sites[:, 0] = x0
    sites[:, -1] = xn
    if n > 1:
        sites[:, 1:-1] = pts[idx]
    return PathBatch(sites, grid)


def is_reducible(path: Path | Sequence) -> bool:
    """Whether some ``j`` splits the path into disjoint site sets ``{x_0..x_j}``, ``{x_{j+1}..x_n}``."""
    if not isinstance(path, Path):
        path = Path(path)
    b = path.batch()
    if not b.distinct_endpoints[0]:
        raise ValueError("reducibility requires x_0 != x_n")
    return bool(b.reducible[0])


# ---------------------------------------------------------------- descriptors


class PathSet:
    """Symbolic path set evaluated by membership."""

    def mask(self, batch: PathBatch) -> np.ndarray:
        raise NotImplementedError

    def validate(self, n: int) -> None:
        """Raise ValueError if the parameters violate the index orderings for length ``n``."""

    def __and__(self, other: "PathSet") -> "Intersection":
        left = self.parts if isinstance(self, Intersection) else (self,)
        right = other.parts if isinstance(other, Intersection) else (other,)
        return Intersection(tuple(left) + tuple(right))

    def contains(self, path: Path | Sequence) -> bool:
        if not isinstance(path, Path):
            path = Path(path)
        return bool(membership(path, self))


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def _any_eq(eq: np.ndarray, us: Sequence[int], vs: Sequence[int]) -> np.ndarray:
    us, vs = list(us), list(vs)
    if not us or not vs:
        return np.zeros(eq.shape[0], dtype=bool)
    return eq[:, us][:, :, vs].any(axis=(1, 2))


def _max_below(seg2: np.ndarray, idx: Sequence[int], bound2) -> np.ndarray:
    """All squared lengths at ``idx`` are strictly below ``bound2``."""
    idx = list(idx)
    if not idx:
        return np.ones(seg2.shape[0], dtype=bool)
    return (seg2[:, idx] < np.asarray(bound2)[..., None]).all(axis=1)


@dataclass(frozen=True)
class FullSpace(PathSet):
    def mask(self, batch):
        return np.ones(len(batch), dtype=bool)


@dataclass(frozen=True)
class Truncation(PathSet):
    """``X_k``: every segment shorter than ``2^k``."""

    k: int

    def validate(self, n):
        _check(self.k >= 0, "truncation level must be nonnegative")

    def mask(self, batch):
        self.validate(batch.n)
        return (batch.seg2 < 4**self.k).all(axis=1)


@dataclass(frozen=True)
class Dyadic(PathSet):
    """Longest segment in ``[2^m, 2^{m+1})``, first reaching ``2^m`` at index ``j0``."""

    m: int
    j0: int

    def validate(self, n):
        _check(self.m >= 0, "m must be nonnegative")
        _check(0 <= self.j0 < n, "need 0 <= j0 < n")

    def mask(self, batch):
        self.validate(batch.n)
        s = batch.seg2
        lo, hi = 4**self.m, 4 ** (self.m + 1)
        return (s < hi).all(axis=1) & (s[:, self.j0] >= lo) & (s[:, : self.j0] < lo).all(axis=1)


@dataclass(frozen=True)
class Tilde(PathSet):
    """Dyadic cell whose prefix ``x_0..x_{j0}`` meets the suffix ``x_{j0+1}..x_n``."""

    m: int
    j0: int

    def validate(self, n):
        Dyadic(self.m, self.j0).validate(n)

    def mask(self, batch):
        return Dyadic(self.m, self.j0).mask(batch) & batch.connected_at[:, self.j0]


@dataclass(frozen=True)
class Coincide(PathSet):
    """``x_{j1} = x_{j2}``."""

    j1: int
    j2: int

    def validate(self, n):
        _check(0 <= self.j1 <= n and 0 <= self.j2 <= n, "indices out of range")

    def mask(self, batch):
        self.validate(batch.n)
        return batch.eq[:, self.j1, self.j2]


@dataclass(frozen=True)
class PrimedCoincide(PathSet):
    """``x_{j1} = x_{j2}`` with ``j1`` the first prefix site meeting the suffix and
    ``j2`` the first suffix site equal to ``x_{j1}``."""

    j0: int
    j1: int
    j2: int

    def validate(self, n):
        _check(0 <= self.j1 <= self.j0 < self.j2 <= n, "need 0 <= j1 <= j0 < j2 <= n")

    def mask(self, batch):
        self.validate(batch.n)
        n, eq = batch.n, batch.eq
        out = eq[:, self.j1, self.j2].copy()
        out &= ~_any_eq(eq, range(self.j1), range(self.j0 + 1, n + 1))
        out &= ~_any_eq(eq, [self.j1], range(self.j0 + 1, self.j2))
        return out


@dataclass(frozen=True)
class LongSecond(PathSet):
    """First segment of length ``>= r / n`` outside ``[j1, j2)``, found at ``k0``.

    ``r = |x_0 - x_n|``. The search runs over ``0..j1-1`` and then ``j2..n-1``.
    """

    k0: int
    j1: int
    j2: int

    def validate(self, n):
        _check(0 <= self.j1 < self.j2 <= n, "need 0 <= j1 < j2 <= n")
        _check(0 <= self.k0 < self.j1 or self.j2 <= self.k0 < n, "k0 must lie in [0, j1) or [j2, n)")

    def mask(self, batch):
        self.validate(batch.n)
        n = batch.n
        s = n * n * batch.seg2  # |seg| >= r/n  <=>  n^2 |seg|^2 >= r^2
        r2 = batch.r2
        before = list(range(self.k0)) if self.k0 < self.j1 else list(range(self.j1)) + list(range(self.j2, self.k0))
        return (s[:, self.k0] >= r2) & _max_below(s, before, r2)


@dataclass(frozen=True)
class V(PathSet):
    """``x_i = x_n`` and ``x_j = x_0``."""

    i: int
    j: int

    def validate(self, n):
        _check(0 < self.i < n and 0 < self.j < n, "need 0 < i, j < n")

    def mask(self, batch):
        self.validate(batch.n)
        eq, n = batch.eq, batch.n
        return eq[:, self.i, n] & eq[:, self.j, 0]


@dataclass(frozen=True)
class VPrimed(PathSet):
    """``V(i, j)`` with ``i`` the first visit to ``x_n`` and ``j`` the last visit to ``x_0``."""

    i: int
    j: int

    def validate(self, n):
        V(self.i, self.j).validate(n)

    def mask(self, batch):
        n, eq = batch.n, batch.eq
        out = V(self.i, self.j).mask(batch)
        out &= ~_any_eq(eq, [0], range(self.j + 1, n))
        out &= ~_any_eq(eq, [n], range(1, self.i))
        return out


@dataclass(frozen=True)
class ScriptS(PathSet):
    """``x_i = x_j`` with no dyadic restriction."""

    i: int
    j: int

    def validate(self, n):
        _check(0 < self.i < n and 0 < self.j < n, "need 0 < i, j < n")

    def mask(self, batch):
        self.validate(batch.n)
        return batch.eq[:, self.i, self.j]


@dataclass(frozen=True)
class ScriptSPrimed(PathSet):
    """Pair ``(i_m, j_m)`` as selected by the Procedure given ``j_{m-2} < j_{m-1}``.

    ``x_{i_m} = x_{j_m}``; no ``x_u`` with ``j_{m-2} < u < i_m`` equals
    ``x_{j_m}``; no ``x_u`` with ``j_{m-2} < u < j_{m-1}`` equals any ``x_v``
    with ``j_m < v < n``.
    """

    i_m: int
    j_m: int
    j_m2: int
    j_m1: int

    def validate(self, n):
        _check(0 <= self.j_m2 < self.i_m < self.j_m1 < self.j_m < n,
               "need j_{m-2} < i_m < j_{m-1} < j_m < n")

    def mask(self, batch):
        self.validate(batch.n)
        n, eq = batch.n, batch.eq
        out = eq[:, self.i_m, self.j_m].copy()
        out &= ~_any_eq(eq, range(self.j_m2 + 1, self.i_m), [self.j_m])
        out &= ~_any_eq(eq, range(self.j_m2 + 1, self.j_m1), range(self.j_m + 1, n))
        return out


@dataclass(frozen=True)
class Irreducible(PathSet):
    """The set ``U`` of irreducible paths."""

    def mask(self, batch):
        return batch.distinct_endpoints & ~batch.reducible


@dataclass(frozen=True)
class Intersection(PathSet):
    parts: tuple

    def validate(self, n):
        for p in self.parts:
            p.validate(n)

    def mask(self, batch):
        out = np.ones(len(batch), dtype=bool)
        for p in self.parts:
            out &= p.mask(batch)
        return out


def membership(path: Path | PathBatch, desc: PathSet):
    """Literal evaluation of the defining conditions of ``desc``.

    Returns a bool for a single path and a boolean array for a batch.
    """
    if isinstance(path, PathBatch):
        return desc.mask(path)
    if not isinstance(path, Path):
        path = Path(path)
    return bool(desc.mask(path.batch())[0])


# ---------------------------------------------------------------- procedure and partition


@dataclass(frozen=True)
class ProcedureTrace:
    """Pairs ``(i_1, j_1), ..., (i_m, j_m)`` extracted from a path in ``U ∩ V'(i, j)``."""

    i: int
    j: int
    pairs: tuple
    n: int

    @property
    def m(self) -> int:
        return len(self.pairs)

    def to_json(self) -> dict:
        return {"i": self.i, "j": self.j, "n": self.n, "pairs": [list(p) for p in self.pairs]}


def _first_last(ids: np.ndarray) -> tuple[int, int]:
    n = len(ids) - 1
    i = min(l for l in range(n + 1) if ids[l] == ids[n])
    j = max(l for l in range(n + 1) if ids[l] == ids[0])
    return i, j


def _ids_of(path) -> np.ndarray:
    if isinstance(path, Path):
        return path.batch().ids[0]
    return Path(path).batch().ids[0]


def procedure_pairs(path, i: int, j: int) -> ProcedureTrace:
    """Greedy max/min extraction of the linking pairs of an irreducible path with ``j < i``.

    Starting from ``j_{-1} = 0`` and ``j_0 = j``, step ``m`` takes ``j_m`` as
    the largest ``l > j_{m-1}`` with ``x_l`` equal to some ``x_u``,
    ``0 < u < j_{m-1}``, and ``i_m`` as the smallest ``l`` with
    ``x_l = x_{j_m}``. It stops once ``j_m > i``.
    """
    ids = _ids_of(path)
    n = len(ids) - 1
    if ids[0] == ids[n]:
        raise ValueError("x_0 = x_n")
    batch = PathBatch(Path(path).sites[None]) if not isinstance(path, Path) else path.batch()
    if batch.reducible[0]:
        raise ValueError("path is reducible")
    if not (0 < j < i < n) or not VPrimed(i, j).mask(batch)[0]:
        raise ValueError(f"path is not in V'({i}, {j}) with j < i")
    pairs = []
    prev = j
    while True:
        early = {ids[u] for u in range(1, prev)}
        cand = [l for l in range(prev + 1, n) if ids[l] in early]
        if not cand:
            raise AssertionError("irreducible path without a linking pair")
        jm = max(cand)
        im = min(l for l in range(n + 1) if ids[l] == ids[jm])
        pairs.append((im, jm))
        if jm > i:
            break
        if jm == i:
            raise AssertionError("j_m = i is excluded by V'")
        prev = jm
    return ProcedureTrace(i, j, tuple(pairs), n)


@dataclass(frozen=True)
class Cell:
    """One set of the explicit partition of ``U``.

    ``kind == "V"`` is ``V'(i, j)`` with ``i < j``; ``kind == "chain"`` is
    ``V'(i, j) ∩ S'(i_1, j_1) ∩ ... ∩ S'(i_m, j_m)`` with ``j < i``.
    """

    kind: str
    i: int
    j: int
    pairs: tuple = ()

    def descriptor(self) -> PathSet:
        parts = [VPrimed(self.i, self.j)]
        js = [0, self.j]
        for im, jm in self.pairs:
            parts.append(ScriptSPrimed(im, jm, js[-2], js[-1]))
            js.append(jm)
        return Intersection(tuple(parts))

    def key(self) -> tuple:
        return (self.kind, self.i, self.j, self.pairs)

    def to_json(self) -> dict:
        return {"kind": self.kind, "i": self.i, "j": self.j, "pairs": [list(p) for p in self.pairs]}


def partition_label(path) -> Cell:
    """Cell of the partition of ``U`` containing an irreducible path."""
    ids = _ids_of(path)
    n = len(ids) - 1
    if ids[0] == ids[n]:
        raise ValueError("x_0 = x_n")
    p = path if isinstance(path, Path) else Path(path)
    if p.batch().reducible[0]:
        raise ValueError("path is reducible")
    i, j = _first_last(ids)
    if i < j:
        return Cell("V", i, j)
    tr = procedure_pairs(p, i, j)
    return Cell("chain", i, j, tr.pairs)


def enumerate_cells(n: int) -> list[Cell]:
    """Every cell of the partition of ``U`` for paths of length ``n``."""
    if n < 3:
        return []
    cells = [Cell("V", i, j) for i in range(1, n) for j in range(i + 1, n)]

    def chains(i, m, js, pairs):
        jm2, jm1 = js[-2], js[-1]
        last = len(pairs) + 1 == m
        for im in range(jm2 + 1, jm1):
            rng = range(i + 1, n) if last else range(jm1 + 1, i)
            for jm in rng:
                if last:
                    yield tuple(pairs) + ((im, jm),)
                else:
                    yield from chains(i, m, js + [jm], pairs + [(im, jm)])

    for m in range(1, (n - 3) // 2 + 1):
        for j in range(2, n - 1):
            for i in range(j + 1, n - 1):
                for pr in chains(i, m, [0, j], []):
                    cells.append(Cell("chain", i, j, pr))
    return cells


def cell_count(n: int) -> int:
    """``sum_{0 <= m <= (n-3)/2} C(n-1, 2m+2)``."""
    return sum(comb(n - 1, 2 * m + 2) for m in range(0, (n - 3) // 2 + 1)) if n >= 3 else 0


# ---------------------------------------------------------------- path sums


def path_sum_T(desc: PathSet, kernels: Sequence[ConvolutionKernel], bs: Sequence | None,
               x0, xn, box, cost_cap: int = 2 * 10**7, chunk: int = 200_000) -> float:
    """``sum_{x in desc, x_k in box} K^1(x_0, x_1) ... K^n(x_{n-1}, x_n)``.

    ``K^k(x, y) = K_k(x - y) b_k(y)`` with torus kernels; paths are
    enumerated over ``box`` (a side length or an array of sites).
    """
    n = len(kernels)
    if n < 1:
        raise ValueError("need at least one kernel")
    grid = kernels[0].grid
    bs = [None] * n if bs is None else list(bs)
    if len(bs) != n:
        raise ValueError("need one weight per kernel")
    weights = [None if b is None else (b.values if isinstance(b, ScalarField) else np.asarray(b)) for b in bs]
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.int64))
    xn = np.atleast_1d(np.asarray(xn, dtype=np.int64))
    pts = _box_array(box, grid.d)
    M = pts.shape[0]
    total_paths = M ** (n - 1)
    if total_paths * n > cost_cap:
        raise ValueError(f"path sum over {total_paths} paths exceeds the cost cap")
    desc.validate(n)
    total = 0.0
    for start in range(0, total_paths, chunk):
        flat = np.arange(start, min(start + chunk, total_paths))
        idx = np.stack(np.unravel_index(flat, (M,) * (n - 1)), axis=1) if n > 1 else np.zeros((flat.size, 0), int)
        sites = np.empty((flat.size, n + 1, grid.d), dtype=np.int64)
        sites[:, 0] = x0
        sites[:, -1] = xn
        if n > 1:
            sites[:, 1:-1] = pts[idx]
        batch = PathBatch(sites, grid)
        keep = desc.mask(batch)
        if not keep.any():
            continue
        s = sites[keep]
        w = np.ones(s.shape[0], dtype=np.result_type(*[K.values for K in kernels]))
        for k, (K, b) in enumerate(zip(kernels, weights)):
            w = w * K.at(s[:, k] - s[:, k + 1])
            if b is not None:
                y = s[:, k + 1] % grid.N
                w = w * b[tuple(y.T)]
        total += w.sum()
    return total.real if np.iscomplexobj(total) and abs(total.imag) < 1e-14 else total


# ---------------------------------------------------------------- audits


@dataclass
class AuditReport:
    """Outcome of exhaustive audits; ``audits`` holds one entry per check."""

    n: int
    d: int
    box: int
    audits: list = field(default_factory=list)
    empirical_constants: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(a["pass"] for a in self.audits)

    def counterexamples(self) -> list:
        return [a for a in self.audits if not a["pass"]]

    def to_json(self) -> dict:
        return {"n": self.n, "d": self.d, "box": self.box, "audits": self.audits,
                "empirical_constants": self.empirical_constants, "wall_time": self.wall_time}


class _Audit:
    def __init__(self, name: str):
        self.name = name
        self.counterexample = None
        self.detail = None
        self.checked = 0

    def check(self, batch: PathBatch, ok: np.ndarray, detail: str | None = None):
        self.checked += int(ok.size)
        if self.counterexample is None and not ok.all():
            k = int(np.flatnonzero(~ok)[0])
            self.counterexample = batch.sites[k].tolist()
            self.detail = detail

    def record(self) -> dict:
        out = {"name": self.name, "pass": self.counterexample is None, "checked": self.checked}
        if self.counterexample is not None:
            out["counterexample"] = self.counterexample
            if self.detail:
                out["detail"] = self.detail
        return out


def _endpoint_pairs(pts: np.ndarray) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    for a in range(len(pts)):
        for b in range(len(pts)):
            if a != b:
                yield pts[a], pts[b]


def _vanishing_law() -> SigmaDistribution:
    # asymmetric on purpose so that odd moments do not hide anything
    return SigmaDistribution.from_config([{"value": -1, "prob": Fraction(1, 2)},
                                          {"value": Fraction(1, 2), "prob": Fraction(1, 3)},
                                          {"value": 1, "prob": Fraction(1, 6)}])


def _pattern_rows(batch: PathBatch, mask: np.ndarray) -> list[CoincidencePattern]:
    if not mask.any():
        return []
    ids = batch.ids[mask]
    eqs = np.unique(batch.eq[mask].reshape(mask.sum(), -1), axis=0)
    n1 = ids.shape[1]
    out = []
    for row in eqs:
        e = row.reshape(n1, n1)
        out.append(CoincidencePattern(tuple(int(np.argmax(e[k])) for k in range(n1))))
    return out


def decomposition_audit(n: int, box: int = 3, d: int = 2, *, primed=PrimedCoincide,
                        vanishing_check: bool = True) -> AuditReport:
    """Exhaustive check of the dyadic and coincidence decompositions on a box.

    Every path with both endpoints and all interior sites in ``{0..box-1}^d``
    and ``x_0 != x_n`` is tested for: the dyadic cells partition paths; the
    disjointified coincidence sets partition each connected dyadic cell; the
    second long segment exists; the refinement by ``k0`` is a partition;
    discarded paths are reducible; reducible patterns have zero nested
    expectation.

    ``primed`` substitutes the disjointified coincidence descriptor, which is
    how a deliberately corrupted definition is exercised.
    """
    t0 = time.perf_counter()
    if n < 2:
        raise ValueError("need n >= 2")
    pts = box_points(box, d)
    names = ["dyadic_partition", "coincidence_partition", "second_long_segment",
             "k0_partition", "discard_reducible_1", "discard_reducible_2", "reducible_vanishing"]
    audits = {k: _Audit(k) for k in names}
    mom = moments(_vanishing_law(), n + 1)
    seen_patterns: set = set()
    max_m = int(np.floor(np.log2(np.sqrt(d) * (box - 1)))) if box > 1 else 0
    counts = {"paths": 0, "reducible": 0, "tilde_members": 0}
    for x0, xn in _endpoint_pairs(pts):
        batch = enumerate_paths(x0, xn, n, pts)
        counts["paths"] += len(batch)
        counts["reducible"] += int(batch.reducible.sum())
        cover = np.zeros(len(batch), dtype=int)
        for m in range(max_m + 1):
            for j0 in range(n):
                dy = Dyadic(m, j0).mask(batch)
                cover += dy
                if not dy.any():
                    continue
                tl = Tilde(m, j0).mask(batch)
                counts["tilde_members"] += int(tl.sum())
                audits["discard_reducible_1"].check(batch, ~(dy & ~tl) | batch.reducible,
                                                    f"Dyadic({m},{j0}) minus Tilde")
                in_cells = np.zeros(len(batch), dtype=int)
                kept = np.zeros(len(batch), dtype=bool)
                for j1 in range(j0 + 1):
                    for j2 in range(j0 + 1, n + 1):
                        co = Coincide(j1, j2).mask(batch) & tl
                        if co.any():
                            s = n * n * batch.seg2
                            ks = list(range(j1)) + list(range(j2, n))
                            long_ = (s[:, ks] >= batch.r2[:, None]).any(axis=1) if ks else np.zeros(len(batch), bool)
                            audits["second_long_segment"].check(batch, ~co | long_, f"S({j1},{j2})")
                        pc = primed(j0, j1, j2).mask(batch) & tl
                        in_cells += pc
                        if not pc.any():
                            continue
                        k_cover = np.zeros(len(batch), dtype=int)
                        for k0 in list(range(j1)) + list(range(j2, n)):
                            cell = pc & LongSecond(k0, j1, j2).mask(batch)
                            k_cover += cell
                            kept |= cell & batch.connected_at[:, k0]
                        audits["k0_partition"].check(batch, k_cover == pc, f"S'({j0},{j1},{j2})")
                audits["coincidence_partition"].check(batch, in_cells == tl, f"Tilde({m},{j0})")
                audits["discard_reducible_2"].check(batch, ~(tl & ~kept) | batch.reducible,
                                                    f"Tilde({m},{j0}) minus refined set")
        audits["dyadic_partition"].check(batch, cover == 1)
        if vanishing_check:
            for pat in _pattern_rows(batch, batch.reducible):
                if pat.labels in seen_patterns:
                    continue
                seen_patterns.add(pat.labels)
                val = nested_expectation(pat, mom)
                if val != 0:
                    audits["reducible_vanishing"].counterexample = list(pat.labels)
                    audits["reducible_vanishing"].detail = f"nested expectation {val}"
            audits["reducible_vanishing"].checked = len(seen_patterns)
    rep = AuditReport(n, d, box, [a.record() for a in audits.values()],
                      {"paths": counts["paths"], "reducible_paths": counts["reducible"],
                       "tilde_members": counts["tilde_members"],
                       "reducible_patterns": len(seen_patterns)})
    rep.wall_time = time.perf_counter() - t0
    return rep


def partition_audit(n: int, box: int = 3, d: int = 2) -> AuditReport:
    """Exhaustive check that the cells of :func:`enumerate_cells` partition ``U``.

    For every path in the box with ``x_0 != x_n``: irreducible paths lie in
    exactly one cell, reducible paths in none, :func:`partition_label` names
    that cell, and every Procedure trace obeys ``m <= (n-3)/2`` and the
    disjointness ``{x_1..x_{j-1}} ∩ {x_{j_1+1}..x_{n-1}} = ∅``.
    """
    t0 = time.perf_counter()
    if n < 3:
        raise ValueError("need n >= 3")
    cells = enumerate_cells(n)
    descs = [c.descriptor() for c in cells]
    index = {c.key(): k for k, c in enumerate(cells)}
    pts = box_points(box, d)
    audits = {k: _Audit(k) for k in ["disjoint_cover", "label_agrees", "trace_length", "trace_max_disjoint"]}
    n_irred = 0
    max_m = 0
    occupied = set()
    for x0, xn in _endpoint_pairs(pts):
        batch = enumerate_paths(x0, xn, n, pts)
        U = Irreducible().mask(batch)
        n_irred += int(U.sum())
        hit = np.full(len(batch), -1)
        count = np.zeros(len(batch), dtype=int)
        for k, desc in enumerate(descs):
            mk = desc.mask(batch)
            count += mk
            hit[mk] = k
        audits["disjoint_cover"].check(batch, count == U.astype(int))
        for p in np.flatnonzero(U):
            path = batch[p]
            cell = partition_label(path)
            ok = index.get(cell.key(), -2) == hit[p]
            if not ok and audits["label_agrees"].counterexample is None:
                audits["label_agrees"].counterexample = path.to_list()
                audits["label_agrees"].detail = str(cell.to_json())
            audits["label_agrees"].checked += 1
            occupied.add(cell.key())
            if cell.kind == "chain":
                m = len(cell.pairs)
                max_m = max(max_m, m)
                ids = batch.ids[p]
                if 2 * m > n - 3 and audits["trace_length"].counterexample is None:
                    audits["trace_length"].counterexample = path.to_list()
                audits["trace_length"].checked += 1
                j1 = cell.pairs[0][1]
                left = set(ids[1:cell.j].tolist())
                right = set(ids[j1 + 1:n].tolist())
                if left & right and audits["trace_max_disjoint"].counterexample is None:
                    audits["trace_max_disjoint"].counterexample = path.to_list()
                audits["trace_max_disjoint"].checked += 1
    records = [a.record() for a in audits.values()]
    records.append({"name": "cell_count", "pass": len(cells) == cell_count(n) <= 2 ** (n - 1),
                    "checked": len(cells)})
    rep = AuditReport(n, d, box, records,
                      {"cells": len(cells), "cell_bound": 2 ** (n - 1), "occupied_cells": len(occupied),
                       "irreducible_paths": n_irred, "max_procedure_m": max_m})
    rep.wall_time = time.perf_counter() - t0
    return rep

"""Disjointness constraint systems on paths and their ``O(n log n)`` rewriting.

A system ``{(E_l, F_l)}`` defines the path set
``A = ∩_l { x : {x_u : u in E_l} ∩ {x_v : v in F_l} = ∅ }``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import log2
from typing import Sequence

import numpy as np

from .paths import Path, PathBatch, PathSet, _any_eq

__all__ = ["ConstraintSystem", "constraint_rewrite", "random_j_sequence", "size_bound", "validate_j_sequence",
           "worst_case_sequence"]


@dataclass(frozen=True)
class ConstraintSystem(PathSet):
    """Family of index-set pairs ``(E_l, F_l)`` inside ``{0, ..., n}``."""

    n: int
    pairs: tuple

    def __post_init__(self):
        pairs = tuple((tuple(sorted(set(int(u) for u in E))), tuple(sorted(set(int(v) for v in F))))
                      for E, F in self.pairs)
        for E, F in pairs:
            if any(not 0 <= k <= self.n for k in E + F):
                raise ValueError(f"indices must lie in 0..{self.n}")
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def from_j_sequence(cls, j_sequence: Sequence[int], n: int) -> "ConstraintSystem":
        """``E_l = (j_{l-2}, j_{l-1})``, ``F_l = (j_l, n)`` with ``j_{-1} = 0``."""
        js = validate_j_sequence(j_sequence, n)
        J = [0] + js
        pairs = [(range(J[l - 1] + 1, J[l]), range(J[l + 1] + 1, n)) for l in range(1, len(js))]
        return cls(n, tuple(pairs))

    @property
    def m(self) -> int:
        return len(self.pairs)

    @property
    def size(self) -> int:
        return sum(len(E) + len(F) for E, F in self.pairs)

    @property
    def is_empty_set(self) -> bool:
        """Some ``E_l`` and ``F_l`` share an index, so no path satisfies the system."""
        return any(set(E) & set(F) for E, F in self.pairs)

    def forbidden_pairs(self) -> frozenset:
        """Unordered pairs ``(u, v)``, ``u < v``, whose sites must differ.

        A path lies in the set iff it has no coincidence on a forbidden pair,
        and each pair is realized by a path with that single coincidence, so
        two systems on ``Z^d`` define the same set iff these sets agree.
        """
        out = set()
        for E, F in self.pairs:
            for u in E:
                for v in F:
                    if u != v:
                        out.add((min(u, v), max(u, v)))
        return frozenset(out)

    def equivalent(self, other: "ConstraintSystem") -> bool:
        """Exact set equality through :meth:`forbidden_pairs`."""
        if self.n != other.n:
            return False
        if self.is_empty_set or other.is_empty_set:
            return self.is_empty_set == other.is_empty_set
        return self.forbidden_pairs() == other.forbidden_pairs()

    def validate(self, n):
        if n != self.n:
            raise ValueError(f"system is for n = {self.n}, paths have n = {n}")

    def mask(self, batch: PathBatch) -> np.ndarray:
        self.validate(batch.n)
        if self.is_empty_set:
            return np.zeros(len(batch), dtype=bool)
        out = np.ones(len(batch), dtype=bool)
        for E, F in self.pairs:
            out &= ~_any_eq(batch.eq, E, F)
        return out

    def contains(self, path) -> bool:
        if not isinstance(path, Path):
            path = Path(path)
        return bool(self.mask(path.batch())[0])

    def to_json(self) -> list:
        """JSON array of ``[E_l, F_l]`` index lists."""
        return [[list(E), list(F)] for E, F in self.pairs]

    def dumps(self) -> str:
        return json.dumps({"n": self.n, "pairs": self.to_json()})

    @classmethod
    def from_json(cls, obj, n: int | None = None) -> "ConstraintSystem":
        if isinstance(obj, str):
            obj = json.loads(obj)
        if isinstance(obj, dict):
            n, obj = obj["n"], obj["pairs"]
        if n is None:
            raise ValueError("n is required")
        return cls(int(n), tuple((E, F) for E, F in obj))


def validate_j_sequence(j_sequence: Sequence[int], n: int) -> list[int]:
    """Check that every ``E_l`` and ``F_l`` is nonempty; return the sequence as a list."""
    js = [int(j) for j in j_sequence]
    if len(js) < 2:
        raise ValueError("need j_0 < j_1 at least")
    if any(b <= a for a, b in zip(js, js[1:])):
        raise ValueError("j-sequence must be strictly increasing")
    J = [0] + js
    for k in range(1, len(js)):
        if J[k] - J[k - 1] < 2:
            raise ValueError(f"E_{k} = ({J[k - 1]}, {J[k]}) is empty")
    if js[-1] > n - 2:
        raise ValueError(f"F_{len(js) - 1} = ({js[-1]}, {n}) is empty")
    return js


def _rewrite(js: list[int], n: int, shift: int, first: int, out: dict) -> None:
    """Fill ``out[l] = (E'_l, F'_l)`` for constraints ``first..first+m-1`` in global indices."""
    m = len(js) - 1
    J = [0] + js

    def j(k):
        return J[k + 1]

    def E(l):
        return set(range(j(l - 2) + 1, j(l - 1)))

    def F(l):
        return set(range(j(l) + 1, n))

    def emit(l, Es, Fs):
        out[first + l - 1] = (sorted(u + shift for u in Es), sorted(v + shift for v in Fs))

    if m <= 1:
        for l in range(1, m + 1):
            emit(l, E(l), F(l))
        return
    below = [l for l in range(m + 1) if 2 * j(l) <= n - 2]
    l0 = max(below) if below else -1
    for l in (l0, l0 + 1, l0 + 2):
        if not 1 <= l <= m:
            continue
        if l == l0:
            emit(l, set().union(*(E(k) for k in range(1, l0 + 1))), F(l))
        else:
            emit(l, E(l), F(l))
    if l0 >= 2:
        # constraints 1..l0-1 only need F_l minus F_{l0}, which lives in [1, j_{l0}]
        _rewrite(js[:l0], j(l0) + 1, shift, first, out)
    if l0 + 3 <= m:
        s = j(l0 + 1)
        _rewrite([x - s for x in js[l0 + 2:]], n - s, shift + s, first + l0 + 2, out)


def constraint_rewrite(j_sequence: Sequence[int], n: int) -> ConstraintSystem:
    """Rewrite the system of ``j_sequence`` into one of total size ``O(n log n)``.

    The split index is ``l_0 = max{l : j_l <= n/2 - 1}``. Constraint ``l_0``
    absorbs every earlier ``E_l``, which lets constraints ``l < l_0`` drop
    ``F_{l_0}`` from ``F_l``; constraints ``l_0 + 1`` and ``l_0 + 2`` are
    kept; the two remaining blocks each live in an index window of length at
    most ``n/2`` and are rewritten recursively, the right one after
    translation.

    Parameters
    ----------
    j_sequence : sequence of int
        ``0 < j_0 < j_1 < ... < j_m < n`` with all ``E_l``, ``F_l`` nonempty.
    n : int
        Path length; ``F_l = (j_l, n)``.

    Returns
    -------
    ConstraintSystem
        Same path set as :meth:`ConstraintSystem.from_j_sequence`.
    """
    js = validate_j_sequence(j_sequence, n)
    out: dict = {}
    _rewrite(js, n, 0, 1, out)
    m = len(js) - 1
    if sorted(out) != list(range(1, m + 1)):
        raise AssertionError("rewriting lost a constraint")
    return ConstraintSystem(n, tuple(out[l] for l in range(1, m + 1)))


def worst_case_sequence(n: int) -> list[int]:
    """``j_l = 2l + 2`` for ``l = 0..(n-4)//2``: every gap minimal, quadratic input size."""
    if n < 6:
        raise ValueError("need n >= 6")
    return [2 * l + 2 for l in range((n - 4) // 2 + 1)]


def size_bound(n: int) -> float:
    """Empirical ceiling ``6 n log2 n + 12`` on the rewritten size."""
    return 6 * n * log2(n) + 12


def random_j_sequence(n: int, rng: np.random.Generator) -> list[int]:
    """Random valid sequence: gaps of 2 or 3 from ``j_{-1} = 0``, optionally a final gap of 1."""
    if n < 5:
        raise ValueError("need n >= 5")
    while True:
        js, prev = [], 0
        while prev + 2 <= n - 2:
            prev += int(rng.integers(2, 4))
            if prev > n - 2:
                break
            js.append(prev)
        if js and js[-1] + 1 <= n - 2 and rng.random() < 0.5:
            js.append(js[-1] + 1)
        if len(js) >= 2:
            return validate_j_sequence(js, n)

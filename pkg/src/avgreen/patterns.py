"""Coincidence patterns of paths and exact nested expectations.

A path ``(x_0, ..., x_n)`` induces a set partition of the positions
``{0, ..., n}`` by site equality. For i.i.d. ``sigma`` the expectation

    P sigma(x_0) P^perp sigma(x_1) ... P^perp sigma(x_n)

depends on the path only through this partition, and is evaluated here by
exact polynomial algebra over the labels.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import Hashable, Iterator, Sequence

from .environment import MomentSequence

__all__ = [
    "CoincidencePattern",
    "set_partitions",
    "nested_expectation",
    "mobius",
    "is_refinement",
]


def _canonical(labels: Sequence[Hashable]) -> tuple[int, ...]:
    seen: dict = {}
    out = []
    for lab in labels:
        if lab not in seen:
            seen[lab] = len(seen)
        out.append(seen[lab])
    return tuple(out)


@dataclass(frozen=True)
class CoincidencePattern:
    """Set partition of path positions, stored as a restricted growth string.

    ``labels[k]`` is the block of position ``k``; blocks are numbered in order
    of first appearance, so relabelings compare equal.
    """

    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", _canonical(self.labels))
        if len(self.labels) < 2:
            raise ValueError("a pattern needs at least two positions")

    @classmethod
    def from_sites(cls, sites: Sequence[Hashable]) -> "CoincidencePattern":
        return cls(tuple(tuple(s) if isinstance(s, list) else s for s in sites))

    @classmethod
    def parse(cls, text: str) -> "CoincidencePattern":
        """Parse ``"ABAB"`` or ``"A,B,A,B"``."""
        return cls(tuple(text.split(",")) if "," in text else tuple(text))

    @property
    def n(self) -> int:
        return len(self.labels) - 1

    @property
    def n_blocks(self) -> int:
        return max(self.labels) + 1

    @property
    def distinct_endpoints(self) -> bool:
        return self.labels[0] != self.labels[-1]

    def blocks(self) -> list[tuple[int, ...]]:
        out: list[list[int]] = [[] for _ in range(self.n_blocks)]
        for k, lab in enumerate(self.labels):
            out[lab].append(k)
        return [tuple(b) for b in out]

    def is_reducible(self) -> bool:
        """Some split ``j`` separates ``{0..j}`` and ``{j+1..n}`` into disjoint label sets."""
        if not self.distinct_endpoints:
            raise ValueError("reducibility requires distinct endpoints")
        return split_index(self.labels) is not None

    def __str__(self) -> str:
        return "".join(chr(ord("A") + lab) if lab < 26 else f"[{lab}]" for lab in self.labels)


def split_index(labels: Sequence[Hashable]) -> int | None:
    """Smallest ``j < n`` with disjoint prefix ``0..j`` and suffix ``j+1..n``, else None."""
    last = {}
    for k, lab in enumerate(labels):
        last[lab] = k
    reach = -1
    for j in range(len(labels) - 1):
        reach = max(reach, last[labels[j]])
        if reach <= j:
            return j
    return None


def set_partitions(k: int) -> Iterator[tuple[int, ...]]:
    """All restricted growth strings of length ``k``."""
    if k == 0:
        yield ()
        return

    def rec(prefix: list[int], top: int):
        if len(prefix) == k:
            yield tuple(prefix)
            return
        for lab in range(top + 2):
            prefix.append(lab)
            yield from rec(prefix, max(top, lab))
            prefix.pop()

    yield from rec([0], 0)


def is_refinement(fine: Sequence[int], coarse: Sequence[int]) -> bool:
    """Whether every block of ``fine`` lies inside a block of ``coarse``."""
    image: dict = {}
    for a, b in zip(fine, coarse):
        if image.setdefault(a, b) != b:
            return False
    return True


def mobius(fine: Sequence[int], coarse: Sequence[int]) -> int:
    """Mobius function of the partition lattice, ``prod_B (-1)^{k_B - 1} (k_B - 1)!``.

    ``k_B`` counts the blocks of ``fine`` merged into block ``B`` of ``coarse``.
    """
    if not is_refinement(fine, coarse):
        return 0
    merged: dict = {}
    for a, b in zip(fine, coarse):
        merged.setdefault(b, set()).add(a)
    out = 1
    for s in merged.values():
        k = len(s)
        out *= (-1) ** (k - 1) * factorial(k - 1)
    return out


def _expect(poly: dict, mom: MomentSequence) -> Fraction:
    total = Fraction(0)
    for mono, c in poly.items():
        term = c
        for e in mono:
            if e:
                term *= mom[e]
        total += term
    return total


@lru_cache(maxsize=None)
def _nested_cached(labels: tuple[int, ...], mom_values: tuple[Fraction, ...]) -> Fraction:
    mom = MomentSequence(mom_values)
    nb = max(labels) + 1
    one = (0,) * nb
    poly = {one: Fraction(1)}
    for k in range(len(labels) - 1, 0, -1):
        lab = labels[k]
        poly = {m[:lab] + (m[lab] + 1,) + m[lab + 1:]: c for m, c in poly.items()}
        ev = _expect(poly, mom)
        if ev:
            poly[one] = poly.get(one, Fraction(0)) - ev
            if poly[one] == 0:
                del poly[one]
    lab = labels[0]
    poly = {m[:lab] + (m[lab] + 1,) + m[lab + 1:]: c for m, c in poly.items()}
    return _expect(poly, mom)


def nested_expectation(pattern: CoincidencePattern | Sequence[Hashable], mom: MomentSequence) -> Fraction:
    """Exact value of ``P sigma_{L_0} P^perp sigma_{L_1} ... P^perp sigma_{L_n}``.

    Evaluated right to left on a polynomial with one variable per label:
    multiplying by ``sigma_L`` raises that variable's exponent and ``P^perp``
    subtracts the expectation, computed by independence as
    ``E prod a_L^{e_L} = prod m_{e_L}``.

    Parameters
    ----------
    pattern : CoincidencePattern or sequence of labels
    mom : MomentSequence
        Must contain moments up to the largest label multiplicity.

    Returns
    -------
    Fraction
        The exact value.
    """
    if not isinstance(pattern, CoincidencePattern):
        pattern = CoincidencePattern(tuple(pattern))
    need = max(pattern.labels.count(b) for b in range(pattern.n_blocks))
    if need > mom.k_max:
        raise ValueError(f"pattern needs moments up to order {need}, have {mom.k_max}")
    return _nested_cached(pattern.labels, tuple(mom.values))

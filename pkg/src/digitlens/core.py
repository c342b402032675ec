"""Digit systems, missing-digit sets and their uniform cell measures.

A :class:`DigitSystem` fixes a base ``p``, an ambient dimension ``n`` and a
digit set ``D`` of ``n``-tuples.  The set ``K_{p,D,l}`` consists of the points
of ``[0,1]^n`` whose base-``p`` expansion uses digits from ``D`` at every
level past the first ``l`` (the first ``l`` levels are unrestricted).  The
uniform measure picks each admissible digit tuple with equal probability,
level by level, which makes every admissible depth-``k`` cell equally heavy.

Cells are closed boxes; corners and measures are exact rationals.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

Box = tuple[tuple[Fraction, Fraction], ...]


def _as_tuple(d, n: int) -> tuple[int, ...]:
    if isinstance(d, (int, np.integer)):
        d = (int(d),)
    t = tuple(int(v) for v in d)
    if len(t) != n:
        raise ValueError(f"digit {d!r} does not have {n} coordinates")
    return t


@dataclass(frozen=True)
class DigitSystem:
    """Base ``p``, dimension ``n``, digit set ``digits`` and free prefix depth.

    ``digits`` may be given as integers when ``n == 1``; they are stored as
    a sorted, deduplicated tuple of ``n``-tuples.
    """

    p: int
    n: int
    digits: tuple[tuple[int, ...], ...]
    free_prefix: int = 0

    def __post_init__(self):
        if int(self.p) < 3:
            raise ValueError(f"base must be >= 3, got {self.p}")
        if int(self.n) < 1:
            raise ValueError(f"dimension must be >= 1, got {self.n}")
        if int(self.free_prefix) < 0:
            raise ValueError("free prefix depth must be >= 0")
        digits = tuple(sorted({_as_tuple(d, self.n) for d in self.digits}))
        if not digits:
            raise ValueError("digit set is empty")
        for d in digits:
            if min(d) < 0 or max(d) > self.p - 1:
                raise ValueError(f"digit {d} outside [0, {self.p - 1}]")
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "free_prefix", int(self.free_prefix))
        object.__setattr__(self, "digits", digits)

    # -- constructors ------------------------------------------------------

    @classmethod
    def full(cls, p: int, n: int = 1, free_prefix: int = 0) -> "DigitSystem":
        return cls(p, n, tuple(itertools.product(range(p), repeat=n)), free_prefix)

    @classmethod
    def rectangle(cls, p: int, ranges: Sequence[tuple[int, int]], free_prefix: int = 0):
        """Digits ``[a_1,b_1] x ... x [a_n,b_n]`` (inclusive integer ranges)."""
        axes = [range(a, b + 1) for a, b in ranges]
        return cls(p, len(ranges), tuple(itertools.product(*axes)), free_prefix)

    @classmethod
    def complement(cls, p: int, n: int, missing: Iterable, free_prefix: int = 0):
        gone = {_as_tuple(m, n) for m in missing}
        keep = [d for d in itertools.product(range(p), repeat=n) if d not in gone]
        return cls(p, n, tuple(keep), free_prefix)

    def with_free_prefix(self, free_prefix: int) -> "DigitSystem":
        return DigitSystem(self.p, self.n, self.digits, free_prefix)

    # -- shared system interface ------------------------------------------

    @property
    def bases(self) -> tuple[int, ...]:
        return (self.p,) * self.n

    @property
    def size(self) -> int:
        return len(self.digits)

    @cached_property
    def digit_array(self) -> np.ndarray:
        return np.array(self.digits, dtype=np.int64).reshape(-1, self.n)

    @cached_property
    def _free_array(self) -> np.ndarray:
        return np.array(list(itertools.product(range(self.p), repeat=self.n)),
                        dtype=np.int64).reshape(-1, self.n)

    def level_digits(self, level: int) -> np.ndarray:
        """Admissible digit tuples at ``level`` (0 = most significant)."""
        return self._free_array if level < self.free_prefix else self.digit_array

    def level_count(self, level: int) -> int:
        return self.p ** self.n if level < self.free_prefix else self.size

    def allowed(self, level: int, digit: tuple[int, ...]) -> bool:
        if level < self.free_prefix:
            return len(digit) == self.n and all(0 <= v < self.p for v in digit)
        return digit in self._digit_set

    @cached_property
    def _digit_set(self) -> frozenset:
        return frozenset(self.digits)

    def axis_tail(self, axis: int):
        """``(p, free_prefix, tail_digit, min_digit, max_digit)`` for one coordinate."""
        col = [d[axis] for d in self.digits]
        return self.p, self.free_prefix, self.digits[0][axis], min(col), max(col)

    def cell_weight(self, depth: int) -> Fraction:
        return _cell_weight(self, depth)

    def hausdorff_dim(self) -> float:
        return hausdorff_dim(self)

    def is_product(self) -> bool:
        """True when the digit set is a Cartesian product of coordinate sets."""
        axes = [sorted({d[i] for d in self.digits}) for i in range(self.n)]
        return math.prod(len(a) for a in axes) == self.size

    def factor_systems(self) -> list["DigitSystem"]:
        """One-dimensional factors; only meaningful when :meth:`is_product`."""
        return [DigitSystem(self.p, 1, tuple((v,) for v in sorted({d[i] for d in self.digits})),
                            self.free_prefix) for i in range(self.n)]

    def rectangle_ranges(self) -> list[tuple[int, int]] | None:
        """``[(a_1,b_1), ...]`` if the digits form a rectangle, else ``None``."""
        ranges = []
        for i in range(self.n):
            col = {d[i] for d in self.digits}
            a, b = min(col), max(col)
            if len(col) != b - a + 1:
                return None
            ranges.append((a, b))
        if math.prod(b - a + 1 for a, b in ranges) != self.size:
            return None
        return ranges

    def to_json(self) -> dict:
        return {"p": self.p, "n": self.n, "digits": [list(d) for d in self.digits],
                "l": self.free_prefix}


@dataclass(frozen=True)
class ProductSystem:
    """Cartesian product of one-dimensional systems, possibly with distinct bases."""

    factors: tuple[DigitSystem, ...]

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise ValueError("product needs at least one factor")
        for f in factors:
            if not isinstance(f, DigitSystem) or f.n != 1:
                raise ValueError("every factor must be a one-dimensional DigitSystem")
        object.__setattr__(self, "factors", factors)

    @property
    def n(self) -> int:
        return len(self.factors)

    @property
    def bases(self) -> tuple[int, ...]:
        return tuple(f.p for f in self.factors)

    @property
    def size(self) -> int:
        return math.prod(f.size for f in self.factors)

    def level_digits(self, level: int) -> np.ndarray:
        cols = [f.level_digits(level)[:, 0] for f in self.factors]
        grids = np.meshgrid(*cols, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)

    def level_count(self, level: int) -> int:
        return math.prod(f.level_count(level) for f in self.factors)

    def allowed(self, level: int, digit: tuple[int, ...]) -> bool:
        return len(digit) == self.n and all(
            f.allowed(level, (v,)) for f, v in zip(self.factors, digit))

    def axis_tail(self, axis: int):
        return self.factors[axis].axis_tail(0)

    def cell_weight(self, depth: int) -> Fraction:
        return _cell_weight(self, depth)

    def hausdorff_dim(self) -> float:
        return hausdorff_dim(self)

    def with_free_prefix(self, free_prefix: int) -> "ProductSystem":
        return ProductSystem(tuple(f.with_free_prefix(free_prefix) for f in self.factors))

    def as_digit_system(self) -> DigitSystem:
        """Collapse to a single DigitSystem; needs equal bases and prefixes."""
        if len(set(self.bases)) != 1 or len({f.free_prefix for f in self.factors}) != 1:
            raise ValueError("factors must share base and free prefix")
        digits = tuple(itertools.product(*[[d[0] for d in f.digits] for f in self.factors]))
        return DigitSystem(self.bases[0], self.n, digits, self.factors[0].free_prefix)

    def to_json(self) -> dict:
        return {"factors": [f.to_json() for f in self.factors]}


System = Union[DigitSystem, ProductSystem]


@dataclass(frozen=True)
class PowerBaseSystem:
    """Rectangle system too large to materialise: ``p = base**p_exp`` and
    ``D = {0, ..., base**digit_exp - 1}^n``.  Only dimension formulas and the
    closed-form bounds work on it."""

    base: int
    p_exp: int
    digit_exp: int
    n: int = 1

    def __post_init__(self):
        if self.base < 2 or self.p_exp < 1 or not 0 <= self.digit_exp <= self.p_exp:
            raise ValueError("need base >= 2, p_exp >= 1 and 0 <= digit_exp <= p_exp")

    def hausdorff_dim(self) -> Fraction:
        return hausdorff_dim(self)

    def to_json(self) -> dict:
        return {"base": self.base, "p_exp": self.p_exp, "digit_exp": self.digit_exp,
                "n": self.n}


def _cell_weight(system, depth: int) -> Fraction:
    w = Fraction(1)
    for j in range(depth):
        w /= system.level_count(j)
    return w


def hausdorff_dim(system) -> float | Fraction:
    """Dimension ``log #D / log p`` (summed over factors for products).

    For :class:`PowerBaseSystem` the result is an exact ``Fraction``.
    """
    if isinstance(system, PowerBaseSystem):
        return Fraction(system.n * system.digit_exp, system.p_exp)
    if isinstance(system, ProductSystem):
        return sum(hausdorff_dim(f) for f in system.factors)
    return math.log(system.size) / math.log(system.p)


def system_from_json(obj: dict) -> System | PowerBaseSystem:
    if "factors" in obj:
        return ProductSystem(tuple(system_from_json(f) for f in obj["factors"]))
    if "p_exp" in obj:
        return PowerBaseSystem(int(obj["base"]), int(obj["p_exp"]), int(obj["digit_exp"]),
                               int(obj.get("n", 1)))
    n = int(obj.get("n", 1))
    return DigitSystem(int(obj["p"]), n, tuple(tuple(d) if isinstance(d, list) else d
                                               for d in obj["digits"]), int(obj.get("l", 0)))


# -- cell addressing ---------------------------------------------------------


@dataclass(frozen=True)
class CellAddress:
    """Depth-``k`` cell of the construction tree, most significant digit first."""

    system: System
    word: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "word", tuple(_as_tuple(d, self.system.n) for d in self.word))

    @property
    def depth(self) -> int:
        return len(self.word)

    def is_admissible(self) -> bool:
        return all(self.system.allowed(j, d) for j, d in enumerate(self.word))

    def corner(self) -> tuple[int, ...]:
        """Integer corner in units of ``p_i^{-depth}`` per coordinate."""
        out = []
        for i, p in enumerate(self.system.bases):
            a = 0
            for d in self.word:
                a = a * p + d[i]
            out.append(a)
        return tuple(out)


def root(system: System) -> CellAddress:
    return CellAddress(system, ())


def children(addr: CellAddress) -> list[CellAddress]:
    """Admissible children in canonical order."""
    level = addr.depth
    digs = addr.system.level_digits(level)
    return [CellAddress(addr.system, addr.word + (tuple(int(v) for v in d),)) for d in digs]


def cell_box(addr: CellAddress) -> Box:
    k = addr.depth
    return tuple((Fraction(a, p ** k), Fraction(a + 1, p ** k))
                 for a, p in zip(addr.corner(), addr.system.bases))


def cell_measure(addr: CellAddress) -> "MeasureValue":
    if not addr.is_admissible():
        raise ValueError(f"inadmissible cell {addr.word}")
    return MeasureValue(addr.system.cell_weight(addr.depth))


@dataclass(frozen=True)
class MeasureValue:
    exact: Fraction

    @property
    def approx(self) -> float:
        return float(self.exact)

    def __eq__(self, other):
        if isinstance(other, MeasureValue):
            return self.exact == other.exact
        return self.exact == other

    def __hash__(self):
        return hash(self.exact)


def _tail_sum(p: int, free_prefix: int, depth: int, free_digit: int, digit: int) -> Fraction:
    """``sum_{j >= depth} p^{-(j+1)} c_j`` in units of ``p^{-depth}``, where
    ``c_j`` is ``free_digit`` on free levels and ``digit`` afterwards."""
    total = Fraction(0)
    for j in range(depth, max(depth, free_prefix)):
        total += Fraction(free_digit, p ** (j + 1 - depth))
    start = max(depth, free_prefix)
    total += Fraction(digit, (p - 1) * p ** (start - depth))
    return total


def tail_offsets(system: System, depth: int) -> tuple[Fraction, ...]:
    """Offset of :func:`representative_point` inside a depth-``depth`` cell,
    in units of the cell side, per coordinate."""
    out = []
    for i in range(system.n):
        p, l, tail, _, _ = system.axis_tail(i)
        out.append(_tail_sum(p, l, depth, 0, tail))
    return tuple(out)


def hull_offsets(system: System, depth: int) -> tuple[tuple[Fraction, Fraction], ...]:
    """Per-coordinate hull of ``K`` inside any depth-``depth`` cell, in units
    of the cell side."""
    out = []
    for i in range(system.n):
        p, l, _, lo, hi = system.axis_tail(i)
        out.append((_tail_sum(p, l, depth, 0, lo), _tail_sum(p, l, depth, p - 1, hi)))
    return tuple(out)


def representative_point(addr: CellAddress) -> tuple[Fraction, ...]:
    """A point of ``K`` in the cell: the word followed by the minimal digit forever."""
    k = addr.depth
    offs = tail_offsets(addr.system, k)
    return tuple(Fraction(a, p ** k) + off / p ** k
                 for a, p, off in zip(addr.corner(), addr.system.bases, offs))


def enumerate_cells(system: System, depth: int) -> Iterable[CellAddress]:
    """All admissible depth-``depth`` cells, canonical order."""
    levels = [[tuple(int(v) for v in d) for d in system.level_digits(j)] for j in range(depth)]
    for word in itertools.product(*levels):
        yield CellAddress(system, word)

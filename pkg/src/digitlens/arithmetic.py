"""Coverage of distance, sum and product sets at a fixed resolution.

A target interval is cut into equal bins.  A bin is *hit* when a genuine
point of the set (built from representative points of cells) maps into it;
the witness is kept and rechecked in exact rational arithmetic.  A bin is
*empty* when no cell's interval image touches it, which is certified because
every point of ``K`` lies in the hull box of its cell.  Everything else is
*unknown*.

Cells are refined level by level; a cell is dropped once its image misses
the target or lands only on bins that are already hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .core import DigitSystem, ProductSystem, System, hull_offsets, tail_offsets

HIT, EMPTY, UNKNOWN = "hit", "empty", "unknown"
MAX_CELLS = 20_000_000
_MARGIN = 1e-9  # float witnesses closer than this (in bin widths) to an edge are binned exactly


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(str(v)) if isinstance(v, float) else Fraction(v)


@dataclass(frozen=True)
class Bin:
    lo: Fraction
    hi: Fraction
    status: str
    witness: tuple | None = None  # (value as float, point as tuple of Fractions)


@dataclass
class CoverageReport:
    target: tuple[Fraction, Fraction]
    delta: Fraction
    bins: list[Bin]
    depth: int
    kind: str
    cells_visited: int = 0

    @property
    def hit_fraction(self) -> float:
        return sum(b.status == HIT for b in self.bins) / len(self.bins)

    def statuses(self) -> list[str]:
        return [b.status for b in self.bins]

    def to_json(self) -> dict:
        return {"kind": self.kind, "target": [str(self.target[0]), str(self.target[1])],
                "delta": str(self.delta), "depth": self.depth,
                "hit_fraction": self.hit_fraction, "cells_visited": self.cells_visited,
                "bins": [{"lo": str(b.lo), "hi": str(b.hi), "status": b.status,
                          "witness": None if b.witness is None else
                          {"value": b.witness[0], "point": [str(c) for c in b.witness[1]]}}
                         for b in self.bins]}

    def csv_rows(self):
        for b in self.bins:
            yield float(b.lo), float(b.hi), b.status


# -- maps --------------------------------------------------------------------


@dataclass(frozen=True)
class PlaneMap:
    """A map ``R^2 -> R`` with a float evaluator, a monotone box image and an
    exact membership check ``lo <= phi(point) <= hi``."""

    name: str
    value: Callable  # (m, 2) float -> (m,)
    image: Callable  # lo (m,2), hi (m,2) -> (ilo, ihi)
    contains: Callable  # point (Fractions), lo, hi -> bool
    symmetric: bool = False

    def exact_bins(self, q, a, w, N, guess):
        """Indices of the closed bins ``[a + i w, a + (i+1) w]`` holding ``phi(q)``."""
        return [i for i in range(max(0, guess - 1), min(N, guess + 2))
                if self.contains(q, a + i * w, a + (i + 1) * w)]


def _sum_map():
    return PlaneMap(
        "sum", lambda x: x[:, 0] + x[:, 1],
        lambda lo, hi: (lo[:, 0] + lo[:, 1], hi[:, 0] + hi[:, 1]),
        lambda q, a, b: a <= q[0] + q[1] <= b, True)


def _product_map():
    # all coordinates are in [0, 1], so the product is monotone in each
    return PlaneMap(
        "product", lambda x: x[:, 0] * x[:, 1],
        lambda lo, hi: (lo[:, 0] * lo[:, 1], hi[:, 0] * hi[:, 1]),
        lambda q, a, b: a <= q[0] * q[1] <= b, True)


def _sum_of_squares_map():
    return PlaneMap(
        "sum_of_squares", lambda x: (x ** 2).sum(axis=1),
        lambda lo, hi: ((lo ** 2).sum(axis=1), (hi ** 2).sum(axis=1)),
        lambda q, a, b: a <= q[0] ** 2 + q[1] ** 2 <= b, True)


def _pinned_map(x):
    xf = np.array([float(c) for c in x])
    xq = tuple(_frac(c) for c in x)

    def image(lo, hi):
        near = np.clip(xf, lo, hi) - xf
        far = np.maximum(np.abs(lo - xf), np.abs(hi - xf))
        return np.sqrt((near ** 2).sum(axis=1)), np.sqrt((far ** 2).sum(axis=1))

    def contains(q, a, b):
        d2 = sum((qi - xi) ** 2 for qi, xi in zip(q, xq))
        return (a <= 0 or a * a <= d2) and d2 <= b * b

    return PlaneMap("pinned_distance", lambda y: np.sqrt(((y - xf) ** 2).sum(axis=1)),
                    image, contains, False)


MAPS = {"sum": _sum_map, "product": _product_map, "sum_of_squares": _sum_of_squares_map}


# -- engine ------------------------------------------------------------------


def _bins(target, delta):
    a, b = _frac(target[0]), _frac(target[1])
    d = _frac(delta)
    if not b > a:
        raise ValueError("target interval is empty")
    if d <= 0:
        raise ValueError("delta must be positive")
    N = math.ceil((b - a) / d)
    w = (b - a) / N
    return a, b, d, N, w


def _cover(system: System, phi: PlaneMap, target, delta, depth: int, *,
           adaptive: bool = True, max_cells: int = MAX_CELLS) -> CoverageReport:
    if system.n != 2:
        raise ValueError("coverage needs a two-dimensional system")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    a, b, d, N, w = _bins(target, delta)
    af, wf = float(a), float(w)
    bases = np.array(system.bases, dtype=np.int64)
    hit_val = np.full(N, np.inf)
    hit_key = np.zeros((N, 2))
    hit_src = [None] * N  # (level, corner) of the current witness
    corners = np.zeros((1, 2), dtype=np.int64)
    visited = 0
    widen = 1e-12

    def bin_range(ilo, ihi):
        # conservative: may report extra touched bins, never fewer
        ilo = ilo - widen * (1 + np.abs(ilo))
        ihi = ihi + widen * (1 + np.abs(ihi))
        lo_i = np.floor((ilo - af) / wf).astype(np.int64)
        hi_i = np.ceil((ihi - af) / wf).astype(np.int64) - 1
        # a closed bin also meets an image that ends exactly on its left edge
        hi_i = np.maximum(hi_i, lo_i)
        return np.clip(lo_i, 0, N - 1), np.clip(hi_i, 0, N - 1), (ihi >= af) & (ilo <= float(b))

    touched = np.zeros(N, dtype=bool)
    for level in range(depth + 1):
        visited += len(corners)
        scale = np.array([float(p) ** -level for p in system.bases])
        base = corners * scale
        hull = hull_offsets(system, level)
        hlo = base + np.array([float(h[0]) for h in hull]) * scale
        hhi = base + np.array([float(h[1]) for h in hull]) * scale
        ilo, ihi = phi.image(hlo, hhi)
        lo_i, hi_i, meets = bin_range(ilo, ihi)
        corners, lo_i, hi_i = corners[meets], lo_i[meets], hi_i[meets]
        base = base[meets]
        # witnesses from representative points
        tail = np.array([float(t) for t in tail_offsets(system, level)])
        reps = base + tail * scale
        vals = phi.value(reps)
        pos = (vals - af) / wf
        idx = np.floor(pos)
        frac = pos - idx
        ok = (idx >= 0) & (idx < N) & (frac > _MARGIN) & (frac < 1 - _MARGIN)
        # values near a bin edge are binned exactly (they may sit in two bins)
        edge = ~ok & (pos > -_MARGIN) & (pos < N + _MARGIN)
        cand_j = [np.flatnonzero(ok)]
        cand_i = [idx[ok].astype(np.int64)]
        for j in np.flatnonzero(edge):
            q = _exact_rep(system, level, tuple(int(c) for c in corners[j]))
            for bi in phi.exact_bins(q, a, w, N, int(idx[j])):
                cand_j.append(np.array([j]))
                cand_i.append(np.array([bi], dtype=np.int64))
        jj = np.concatenate(cand_j)
        if len(jj):
            key = np.sort(reps, axis=1) if phi.symmetric else reps
            ii = np.concatenate(cand_i)
            order = np.lexsort((key[jj, 1], key[jj, 0], vals[jj], ii))
            ii_s = ii[order]
            first = np.ones(len(ii_s), dtype=bool)
            first[1:] = ii_s[1:] != ii_s[:-1]
            for j, bi in zip(jj[order[first]], ii_s[first]):
                kj = tuple(key[j])
                if (vals[j], kj[0], kj[1]) < (hit_val[bi], hit_key[bi, 0], hit_key[bi, 1]):
                    hit_val[bi] = vals[j]
                    hit_key[bi] = kj
                    hit_src[bi] = (level, tuple(int(c) for c in corners[j]))
        if level == depth:
            for s, e in zip(lo_i, hi_i):
                touched[s:e + 1] = True
            break
        if adaptive:
            # drop cells whose every touched bin already has a witness
            unhit = np.concatenate([[0], np.cumsum(~np.isfinite(hit_val))])
            open_ = unhit[hi_i + 1] - unhit[lo_i] > 0
            for s, e in zip(lo_i[~open_], hi_i[~open_]):
                touched[s:e + 1] = True
            corners = corners[open_]
        digs = system.level_digits(level)
        if len(corners) * len(digs) > max_cells:
            raise RuntimeError(f"more than {max_cells} cells at level {level + 1}; "
                               "reduce depth or enlarge delta")
        corners = (corners[:, None, :] * bases + digs[None, :, :]).reshape(-1, 2)

    bins = []
    for i in range(N):
        lo_b, hi_b = a + i * w, a + (i + 1) * w
        if hit_src[i] is not None:
            level, corner = hit_src[i]
            q = _exact_rep(system, level, corner)
            if phi.contains(q, lo_b, hi_b):
                if phi.symmetric:
                    q = tuple(sorted(q))
                bins.append(Bin(lo_b, hi_b, HIT, (float(hit_val[i]), q)))
                continue
        bins.append(Bin(lo_b, hi_b, UNKNOWN if touched[i] else EMPTY))
    return CoverageReport((a, b), d, bins, depth, phi.name, visited)


def _exact_rep(system, level, corner):
    offs = tail_offsets(system, level)
    return tuple(Fraction(c, p ** level) + o / p ** level
                 for c, p, o in zip(corner, system.bases, offs))


# -- public operations -------------------------------------------------------


def pinned_distance_cover(system: System, x: Sequence, target, delta, depth: int,
                          **kw) -> CoverageReport:
    """Coverage of ``{|x - y| : y in K}`` over ``target`` at resolution ``delta``."""
    if len(x) != 2:
        raise ValueError("pin must be a point of R^2")
    return _cover(system, _pinned_map(x), target, delta, depth, **kw)


def binary_map_cover(system_a: DigitSystem, system_b: DigitSystem, kind: str, target, delta,
                     depth: int, **kw) -> CoverageReport:
    """Coverage of ``{phi(a, b) : a in A, b in B}`` for ``phi`` in
    ``sum | product | sum_of_squares``."""
    if kind not in MAPS:
        raise ValueError(f"unknown map {kind!r}; choose from {sorted(MAPS)}")
    for s in (system_a, system_b):
        if not isinstance(s, DigitSystem) or s.n != 1:
            raise ValueError("binary maps take one-dimensional systems")
    return _cover(ProductSystem((system_a, system_b)), MAPS[kind](), target, delta, depth, **kw)


def recheck(report: CoverageReport, system: System | None = None) -> bool:
    """Exact recheck of every witness against its bin (squares for distances)."""
    for bn in report.bins:
        if bn.status != HIT:
            continue
        q = bn.witness[1]
        if report.kind == "sum":
            v = q[0] + q[1]
        elif report.kind == "product":
            v = q[0] * q[1]
        elif report.kind == "sum_of_squares":
            v = q[0] ** 2 + q[1] ** 2
        else:
            continue  # pinned witnesses are rechecked with the pin at construction
        if not bn.lo <= v <= bn.hi:
            return False
    return True


@dataclass(frozen=True)
class Run:
    lo: Fraction
    hi: Fraction
    bins: int

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo


def interval_detect(report: CoverageReport) -> list[Run]:
    """Maximal runs of consecutive hit bins, as closed intervals."""
    runs = []
    start = None
    for i, bn in enumerate(report.bins + [None]):
        if bn is not None and bn.status == HIT:
            if start is None:
                start = i
        elif start is not None:
            runs.append(Run(report.bins[start].lo, report.bins[i - 1].hi, i - start))
            start = None
    return runs

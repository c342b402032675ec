"""Counting missing-digit cells near manifolds.

The construction tree is walked level by level with integer cell corners
(``corner * p + digit`` for children).  A cell whose certified distance
interval already clears ``delta`` (with slack) is pruned; a cell lying wholly
inside the neighbourhood contributes all its admissible descendants at once.
Leaves are classified from their own enclosure, so the pruned walk returns
exactly what exhaustive leaf enumeration returns.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import DigitSystem, ProductSystem, System, hausdorff_dim
from .geometry import Circle, Manifold, SimilarityTransform, Superellipse, apply_transform

DEFAULT_MAX_NODES = 50_000_000
CHUNK = 1 << 18
ENV_MAX_NODES = "DIGITLENS_MAX_NODES"


def max_nodes_default() -> int:
    raw = os.environ.get(ENV_MAX_NODES)
    return int(float(raw)) if raw else DEFAULT_MAX_NODES


class ExpansionCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class CountResult:
    delta: float
    depth: int
    inside_count: int
    straddle_count: int
    measure_lower: Fraction
    measure_upper: Fraction
    nodes: int = 0

    @property
    def total(self) -> int:
        """Cells meeting the neighbourhood (certified inside plus straddling)."""
        return self.inside_count + self.straddle_count

    def row(self) -> dict:
        return {"delta": self.delta, "depth": self.depth, "inside": self.inside_count,
                "straddle": self.straddle_count, "mlow": float(self.measure_lower),
                "mhigh": float(self.measure_upper)}


# -- traversal ---------------------------------------------------------------


def _slack(manifold: Manifold, diam: float) -> float:
    """How far a child's enclosure may undercut (or overshoot) its parent's.

    Exact enclosures only drift by rounding; Lipschitz-type ones by up to the
    diameter of the cell being refined.
    """
    if getattr(manifold, "exact_boxes", False):
        return 1e-12 * (1.0 + diam) + 1e-13
    return diam + 1e-12


def _region_bounds(region, bases, level):
    """Integer corner ranges at ``level``: ``(overlap_lo, overlap_hi, in_lo, in_hi)``
    per axis.  Overlap keeps cells whose box meets the region's interior;
    ``in`` keeps cells contained in it."""
    out = []
    for (a, b), p in zip(region, bases):
        a, b = Fraction(a), Fraction(b)
        s = p ** level
        out.append((math.floor(a * s), math.ceil(b * s) - 1,
                    math.ceil(a * s), math.floor(b * s) - 1))
    return out


def _mask_region(corners, bounds, which):
    ok = np.ones(len(corners), dtype=bool)
    for i, bnd in enumerate(bounds):
        lo, hi = (bnd[0], bnd[1]) if which == "overlap" else (bnd[2], bnd[3])
        ok &= (corners[:, i] >= lo) & (corners[:, i] <= hi)
    return ok


def _boxes(corners, bases, level):
    scale = np.array([float(p) ** -level for p in bases])
    lo = corners * scale
    return lo, lo + scale


def count_cells_near(system: System, manifold: Manifold, delta: float, depth: int, *,
                     region=None, prune: bool = True, max_nodes: int | None = None,
                     check_scale: bool = True) -> CountResult:
    """Count depth-``depth`` admissible cells certified inside / straddling ``M^delta``.

    ``region`` (optional, per-axis ``(lo, hi)``) restricts the count to cells
    contained in that box.  ``prune=False`` walks every admissible cell, which
    is the brute-force reference.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if manifold.n != system.n:
        raise ValueError("manifold and system live in different dimensions")
    bases = system.bases
    if check_scale and max(float(p) ** -depth for p in bases) > delta * (1 + 1e-12):
        raise ValueError(f"cells of depth {depth} are larger than delta={delta}; "
                         "increase depth")
    if max(bases) ** depth >= 2 ** 62:
        raise ValueError("depth too large for integer cell corners")
    cap = max_nodes_default() if max_nodes is None else max_nodes
    n = system.n
    # admissible descendants of one level-j cell, down to depth
    below = [1] * (depth + 1)
    for j in range(depth - 1, -1, -1):
        below[j] = below[j + 1] * system.level_count(j)

    inside = 0
    straddle = 0
    nodes = 0
    stack = [(0, np.zeros((1, n), dtype=np.int64))]
    while stack:
        level, corners = stack.pop()
        if len(corners) > CHUNK:
            stack.append((level, corners[CHUNK:]))
            corners = corners[:CHUNK]
        nodes += len(corners)
        if nodes > cap:
            raise ExpansionCapExceeded(
                f"more than {cap} cells expanded; use a larger delta or smaller depth "
                f"(or raise {ENV_MAX_NODES})")
        if region is not None:
            rb = _region_bounds(region, bases, level)
            corners = corners[_mask_region(corners, rb, "overlap" if level < depth else "in")]
            if not len(corners):
                continue
        lo, hi = _boxes(corners, bases, level)
        if level == depth:
            dlo, dhi = manifold.box_interval(lo, hi, delta)
            ins = dhi <= delta
            inside += int(ins.sum())
            straddle += int((~ins & (dlo <= delta)).sum())
            continue
        diam = math.sqrt(sum(float(p) ** (-2 * level) for p in bases))
        slack = _slack(manifold, diam)
        dlo, dhi = manifold.box_interval(lo, hi, delta - slack if prune else None)
        if prune:
            keep = dlo <= delta + slack
            full = dhi <= delta - slack
            if region is not None:
                full &= _mask_region(corners, rb, "in")
            inside += int(full.sum()) * below[level]
            corners = corners[keep & ~full]
            if not len(corners):
                continue
        digs = system.level_digits(level)
        kids = (corners[:, None, :] * np.array(bases, dtype=np.int64) + digs[None, :, :])
        stack.append((level + 1, kids.reshape(-1, n)))
    w = system.cell_weight(depth)
    return CountResult(float(delta), depth, inside, straddle, inside * w,
                       (inside + straddle) * w, nodes)


# -- fits --------------------------------------------------------------------


@dataclass
class ScalingFit:
    points: list[tuple[float, float]]
    exponent: float
    intercept: float
    r2: float
    residuals: list[float]

    def to_json(self) -> dict:
        return {"points": [list(p) for p in self.points], "exponent": self.exponent,
                "intercept": self.intercept, "r2": self.r2, "residuals": self.residuals}


def fit_exponent(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Least-squares slope of ``log value`` against ``log(1/delta)``."""
    pts = [(float(d), float(v)) for d, v in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points for a fit")
    for d, v in pts:
        if d <= 0:
            raise ValueError(f"nonpositive scale delta={d}")
        if v <= 0:
            raise ValueError(f"nonpositive value {v} at delta={d}")
    ds = [d for d, _ in pts]
    if any(b >= a for a, b in zip(ds, ds[1:])):
        raise ValueError("deltas must be strictly decreasing")
    x = np.log(1.0 / np.array(ds))
    y = np.log(np.array([v for _, v in pts]))
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot < 1e-24 else 1.0 - float((res ** 2).sum()) / ss_tot
    return ScalingFit(pts, float(slope), float(intercept), r2, [float(r) for r in res])


# -- neighbourhood measure scaling -------------------------------------------


@dataclass
class MeasureScaling:
    counts: list[CountResult]
    target: float
    ratios: list[float]
    fit: ScalingFit | None
    exponent: float | None
    degenerate: str | None = None

    @property
    def ratio_spread(self) -> float:
        pos = [r for r in self.ratios if r > 0]
        return max(pos) / min(pos) if len(pos) == len(self.ratios) and pos else math.inf

    def to_json(self) -> dict:
        return {"rows": [c.row() for c in self.counts], "target": self.target,
                "ratios": self.ratios, "exponent": self.exponent,
                "ratio_spread": self.ratio_spread if self.degenerate is None else None,
                "fit": self.fit.to_json() if self.fit else None, "degenerate": self.degenerate}


def _ladder(system, ks):
    p = max(system.bases)
    return [float(p) ** -k for k in ks]


def neighborhood_measure_scaling(system: System, manifold: Manifold, ks: Sequence[int], *,
                                 depth_offset: int = 0, **kw) -> MeasureScaling:
    """``measure_upper`` of ``M^delta`` over ``delta = p^{-k}``, ``k in ks``.

    Depth ``k + depth_offset`` is used at ``delta = p^{-k}``.  ``exponent`` is the
    fitted power of ``delta`` (so ``lambda(M^delta) ~ delta^exponent``) and
    ``target`` is ``n - dim M``.
    """
    ks = sorted(ks)
    target = system.n - manifold.dim
    counts = []
    for k, d in zip(ks, _ladder(system, ks)):
        counts.append(count_cells_near(system, manifold, d, k + depth_offset, **kw))
    ratios = [float(c.measure_upper) / c.delta ** target for c in counts]
    if any(c.measure_upper == 0 for c in counts):
        return MeasureScaling(counts, target, ratios, None, None, "degenerate: zero mass")
    fit = fit_exponent([(c.delta, float(c.measure_upper)) for c in counts])
    return MeasureScaling(counts, target, ratios, fit, -fit.exponent)


def box_count_fit(system: System, ks: Sequence[int]) -> ScalingFit:
    """Box-counting fit from the number of admissible depth-``k`` cells."""
    pts = []
    p = max(system.bases)
    for k in sorted(ks):
        pts.append((float(p) ** -k, float(math.prod(system.level_count(j) for j in range(k)))))
    return fit_exponent(pts)


# -- sharpness: the first row under an order-k contact ---------------------


@dataclass
class SharpnessResult:
    k: int
    l: int
    p: int
    delta: float
    depth: int
    count: int
    prediction: int
    ratio: float
    passes: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _prefix_digits(D, p):
    D = sorted(int(d) for d in D)
    if D != list(range(len(D))) or not 0 < len(D) - 1 < p - 1:
        raise ValueError("digit sets must be {0, ..., l_i} with 0 < l_i < p - 1")
    return D


def sharpness_first_row(p: int, D1, D2, k: int, l: int, *, c_threshold: float = 1.0,
                        prune: bool = True, **kw) -> SharpnessResult:
    """Cells of ``K_{p,D1} x K_{p,D2}`` of side ``delta = p^{-kl}`` in
    ``[0, p^{-l}] x [0, p^{-kl}]`` meeting the ``delta``-neighbourhood of
    ``|x|^k + |y-1|^k = 1``.  The curve has order-``k`` contact with the x-axis at
    the origin, so the whole first row stays within ``delta``; the count is
    compared with ``(p^{l(k-1)})^{dim K_{p,D1}} = (#D1)^{l(k-1)}``.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if l < 0:
        raise ValueError("l must be >= 0")
    D1 = _prefix_digits(D1, p)
    D2 = _prefix_digits(D2, p)
    system = DigitSystem(p, 2, tuple((a, b) for a in D1 for b in D2))
    depth = k * l
    delta = float(p) ** -depth
    region = ((Fraction(0), Fraction(1, p ** l)), (Fraction(0), Fraction(1, p ** depth)))
    res = count_cells_near(system, Superellipse(k), delta, depth, region=region, prune=prune, **kw)
    # (p^{l(k-1)})^{log #D1 / log p} is exactly (#D1)^{l(k-1)}
    prediction = len(D1) ** (l * (k - 1))
    count = res.total
    return SharpnessResult(k, l, p, delta, depth, count, prediction, count / prediction,
                           count >= c_threshold * prediction)


def sharpness_slope(p, D1, D2, k, ls=(1, 2, 3), **kw):
    """Counts over ``l in ls`` with the fitted growth slope and its target ``(k-1)s/k``."""
    rows = [sharpness_first_row(p, D1, D2, k, l, **kw) for l in ls]
    fit = fit_exponent([(r.delta, r.count) for r in rows])
    s1 = math.log(len(list(D1))) / math.log(p)
    return rows, fit, (k - 1) * s1 / k


# -- searching for the free prefix l ------------------------------------------


@dataclass
class LSearchResult:
    applicable: bool
    l: int | None
    table: list[dict] = field(default_factory=list)
    message: str = ""

    @property
    def found(self) -> bool:
        return self.l is not None

    def to_json(self) -> dict:
        return {"applicable": self.applicable, "l": self.l, "table": self.table,
                "message": self.message}


def l_search(system: DigitSystem, manifold: Manifold, ks: Sequence[int] = (2, 3, 4, 5, 6),
             c_threshold: float = 0.1, l_max: int = 4, *, depth_offset: int = 0,
             **kw) -> LSearchResult:
    """Smallest free prefix ``l <= l_max`` for which the count of cells meeting
    ``M^delta`` is at least ``c (1/delta)^{dim_H K + dim M - n}`` at every ladder scale."""
    s = hausdorff_dim(system)
    excess = s + manifold.dim - system.n
    if excess <= 0:
        return LSearchResult(False, None, [], f"not applicable: dim_H K + dim M - n = "
                                              f"{excess:.6g} <= 0")
    table = []
    for l in range(l_max + 1):
        sys_l = system.with_free_prefix(l)
        ok = True
        for k, d in zip(sorted(ks), _ladder(system, sorted(ks))):
            res = count_cells_near(sys_l, manifold, d, k + depth_offset, **kw)
            need = c_threshold * (1.0 / d) ** excess
            table.append({"l": l, "delta": d, "count": res.total, "required": need,
                          "shortfall": max(0.0, need - res.total)})
            ok &= res.total >= need
        if ok:
            return LSearchResult(True, l, table, f"l={l} passes at every scale")
    return LSearchResult(True, None, table, f"no l <= {l_max} passes; see shortfalls")


# -- sweeping over similarity transforms --------------------------------------


@dataclass
class SweepRow:
    transform: SimilarityTransform
    label: str
    ratios: list[float]
    bounded_away: bool

    @property
    def ratio_last(self) -> float:
        return self.ratios[-1]


def transform_sweep(system: System, manifold: Manifold, transforms, ks: Sequence[int], *,
                    depth_offset: int = 0, labels=None, floor: float = 0.1, **kw) -> list[SweepRow]:
    """``lambda((T M)^delta) / delta^{n - dim M}`` over a grid of transforms.

    A row is flagged ``bounded_away`` when every ratio on the ladder is positive
    and the last is at least ``floor`` times the largest.
    """
    rows = []
    for i, T in enumerate(transforms):
        m = apply_transform(manifold, T)
        sc = neighborhood_measure_scaling(system, m, ks, depth_offset=depth_offset, **kw)
        r = sc.ratios
        away = min(r) > 0 and r[-1] >= floor * max(r)
        rows.append(SweepRow(T, labels[i] if labels else str(i), r, away))
    return rows


def circle_radius_grid(center, radii) -> tuple[Circle, list[SimilarityTransform], list[str]]:
    """Unit circle at the origin plus the transforms taking it to the given circles."""
    base = Circle(tuple(0.0 for _ in center), 1.0)
    n = len(center)
    eye = tuple(tuple(float(i == j) for j in range(n)) for i in range(n))
    Ts = [SimilarityTransform(float(r), tuple(center), eye) for r in radii]
    return base, Ts, [f"r={r:g}" for r in radii]

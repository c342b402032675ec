"""Independent reference computations used by the test suite.

These deliberately avoid the package's fast paths: plain loops over digits,
exact rationals where the answer is combinatorial, and quadrature where it
is geometric.  Frozen numbers below were produced by these functions.
"""

from __future__ import annotations

import cmath
import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np

from digitlens.core import cell_box, enumerate_cells
from digitlens.geometry import distance_interval

# frozen oracle values
CANTOR_SUP_F = 2.0                                   # attained at theta = 0
CANTOR_L1_BOUND = 1.0 - math.log(2) / math.log(3)    # 0.36907024642854...
CARPET_BOX_DIM = math.log(8) / math.log(3)           # 1.8927892607...
# dense-grid maxima (1-D: 10^6 points, 2-D: 1000^2 points); lower bounds on sup f
GRID_SUP = {
    "p4_01": 2.613125929752753,
    "p5_013": 2.794882040117635,
    "p10_0to8": 2.209838202222034,
}


# -- Fourier -----------------------------------------------------------------


def g_direct(digits, p, eta):
    """``(1/#D) sum_d exp(-2 pi i d.eta)`` with a Python loop."""
    eta = [float(e) for e in np.atleast_1d(eta)]
    tot = 0j
    for d in digits:
        d = (d,) if isinstance(d, int) else d
        tot += cmath.exp(-2j * math.pi * sum(a * b for a, b in zip(d, eta)))
    return tot / len(digits)


def f_direct(digits, p, n, theta):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return sum(abs(g_direct(digits, p, [(i[j] + theta[j]) / p for j in range(n)]))
               for i in itertools.product(range(p), repeat=n))


def transform_direct(digits, p, xi, levels=80):
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    out = 1 + 0j
    for j in range(levels):
        out *= g_direct(digits, p, xi / p ** j)
    return out


def dense_grid_sup_1d(digits, p, points=10 ** 6):
    """Max of ``f`` on ``points`` equispaced offsets, by broadcasting over
    (offset, i, digit); unrelated to the package's einsum contraction."""
    d = np.array([x if isinstance(x, int) else x[0] for x in digits], dtype=float)
    best = 0.0
    for th in np.array_split(np.arange(points) / points, max(1, points // 20000)):
        eta = (np.arange(p)[None, :] + th[:, None]) / p
        g = np.exp(-2j * np.pi * eta[..., None] * d).mean(axis=-1)
        best = max(best, float(np.abs(g).sum(axis=1).max()))
    return best


def dense_grid_sup_2d(digits, p, per_axis=400):
    D = np.array(digits, dtype=float)
    best = 0.0
    ts = np.arange(per_axis) / per_axis
    i = np.array(list(itertools.product(range(p), repeat=2)), dtype=float)
    for t0 in ts:
        th = np.stack([np.full(per_axis, t0), ts], axis=1)
        eta = (i[None, :, :] + th[:, None, :]) / p
        ph = np.exp(-2j * np.pi * np.einsum("abk,dk->abd", eta, D)).mean(axis=-1)
        best = max(best, float(np.abs(ph).sum(axis=1).max()))
    return best


# -- counting ----------------------------------------------------------------


def brute_count(system, manifold, delta, depth, region=None):
    """``(inside, straddle)`` over every admissible cell, one predicate call each."""
    inside = straddle = 0
    for addr in enumerate_cells(system, depth):
        box = cell_box(addr)
        if region is not None and not all(r[0] <= b[0] and b[1] <= r[1]
                                          for b, r in zip(box, region)):
            continue
        dlo, dhi = distance_interval(manifold, [(float(a), float(b)) for a, b in box])
        if dhi <= delta:
            inside += 1
        elif dlo <= delta:
            straddle += 1
    return inside, straddle


def circle_meets_exact(center, radius, delta, box):
    """Whether a closed rational box meets the closed annulus ``|r - radius| <= delta``.

    Squared extremes of the distance to the centre are exact rationals.
    """
    near = sum((min(max(c, lo), hi) - c) ** 2 for c, (lo, hi) in zip(center, box))
    far = sum(max(abs(lo - c), abs(hi - c)) ** 2 for c, (lo, hi) in zip(center, box))
    inner = max(radius - delta, Fraction(0))
    return near <= (radius + delta) ** 2 and far >= inner ** 2


def circle_count_exact(system, center, radius, delta, depth):
    center = [Fraction(c) for c in center]
    radius, delta = Fraction(radius), Fraction(delta)
    return sum(circle_meets_exact(center, radius, delta, cell_box(a))
               for a in enumerate_cells(system, depth))


def _arc_in_unit_square(center, rho):
    """Length of the circle of radius ``rho`` about ``center`` inside ``[0,1]^2``."""
    cx, cy = center
    cuts = [0.0, 2 * math.pi]
    for c, lo_hi, trig in ((cx, (0.0, 1.0), math.cos), (cy, (0.0, 1.0), math.sin)):
        for wall in lo_hi:
            s = (wall - c) / rho
            if abs(s) <= 1:
                base = math.acos(s) if trig is math.cos else math.asin(s)
                alts = (base, -base) if trig is math.cos else (base, math.pi - base)
                cuts += [a % (2 * math.pi) for a in alts]
    cuts.sort()
    total = 0.0
    for a, b in zip(cuts, cuts[1:]):
        m = 0.5 * (a + b)
        x, y = cx + rho * math.cos(m), cy + rho * math.sin(m)
        if 0 <= x <= 1 and 0 <= y <= 1:
            total += (b - a) * rho
    return total


def annulus_area(center, radius, delta):
    """Area of ``{x in [0,1]^2 : |dist(x, center) - radius| <= delta}`` by polar quadrature."""
    lo = max(0.0, radius - delta)
    hi = radius + delta
    f = lambda r: _arc_in_unit_square(center, float(r))
    # split at radii where the arc meets a wall so the integrand is smooth per piece
    walls = sorted({abs(w - c) for c in center for w in (0.0, 1.0)}
                   | {math.hypot(wx - center[0], wy - center[1]) for wx in (0, 1) for wy in (0, 1)})
    pts = [lo] + [w for w in walls if lo < w < hi] + [hi]
    return float(mpmath.quad(f, pts))


# -- arithmetic --------------------------------------------------------------


def carry_free_empty_bins(m, p, depth, target, delta):
    """Bins of ``target`` missing ``A + A`` for ``A = K_{p,{0..m-1}}``, ``p > 2m``.

    Digit sums stay below ``p`` so no carries occur: ``A + A`` lies in the union
    over ``e in {0..2m-2}^depth`` of ``[0.e, 0.e + 2(m-1)/(p-1) p^-depth]``.
    Returns the set of bin indices disjoint from that union (closed intervals).
    """
    a, b = Fraction(target[0]), Fraction(target[1])
    delta = Fraction(delta)
    nb = math.ceil((b - a) / delta)
    w = Fraction(2 * (m - 1), p - 1) / p ** depth
    ivs = []
    for e in itertools.product(range(2 * m - 1), repeat=depth):
        lo = sum(Fraction(d, p ** (j + 1)) for j, d in enumerate(e))
        ivs.append((lo, lo + w))
    ivs.sort()
    empty = set()
    for i in range(nb):
        lo = a + i * delta
        hi = min(lo + delta, b)
        if not any(x <= hi and lo <= y for x, y in ivs):
            empty.add(i)
    return empty


def cantor_pair_sum_bins(depth, target, delta):
    """Bins hit by ``x + y`` over depth-``depth`` left endpoints of the middle-third Cantor set."""
    ends = [sum(Fraction(2 * d, 3 ** (j + 1)) for j, d in enumerate(w))
            for w in itertools.product((0, 1), repeat=depth)]
    a, b = Fraction(target[0]), Fraction(target[1])
    delta = Fraction(delta)
    nb = math.ceil((b - a) / delta)
    hit = set()
    for x in ends:
        for y in ends:
            s = x + y
            if a <= s <= b:
                i = min(int((s - a) / delta), nb - 1)
                hit.add(i)
                if i > 0 and s == a + i * delta:
                    hit.add(i - 1)
    return hit, nb

"""Manifolds with certified distance enclosures over axis-aligned boxes.

Every manifold answers two questions, both vectorised over rows:

* ``distance_bounds(points)`` -> ``(lo, hi)`` with ``lo <= dist(x, M) <= hi``;
* ``box_interval(lo, hi, threshold=None)`` -> ``(dlo, dhi)`` enclosing
  ``{dist(x, M) : x in box}``.  With a threshold, boxes whose cheap upper
  bound already sits below it may skip refinement and report ``dlo = 0``.

Enclosures are widened outward for floating point rounding.  They are also
monotone under box refinement (a sub-box never gets a lower ``dlo`` or a
higher ``dhi`` than its parent, up to rounding), which is what lets the
counting code prune whole subtrees.

The decay exponent ``sigma`` is data attached to the manifold, with defaults
for the named families; it is never derived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

ROUND_ABS = 1e-14
EPS = float(np.finfo(float).eps)
ROUND_REL = 1e-12


def _widen(dlo, dhi):
    dlo = np.maximum(dlo - (ROUND_ABS + ROUND_REL * np.abs(dlo)), 0.0)
    dhi = dhi + ROUND_ABS + ROUND_REL * np.abs(dhi)
    return dlo, dhi


def _as_rows(a, n):
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, n)


class Manifold:
    """Base class.  Subclasses set ``n``, ``dim``, ``sigma`` and implement
    :meth:`distance_bounds`; :meth:`box_interval` defaults to the 1-Lipschitz
    enclosure around the box centre."""

    kind = "manifold"
    n: int
    dim: int
    sigma: float | None

    def distance_bounds(self, points):
        raise NotImplementedError

    def distance(self, points):
        lo, hi = self.distance_bounds(points)
        return 0.5 * (lo + hi)

    def box_interval(self, lo, hi, threshold=None):
        lo = _as_rows(lo, self.n)
        hi = _as_rows(hi, self.n)
        return _widen(*self._lipschitz(lo, hi))

    def _lipschitz(self, lo, hi):
        c = 0.5 * (lo + hi)
        rho = 0.5 * np.linalg.norm(hi - lo, axis=1)
        plo, phi = self.distance_bounds(c)
        return np.maximum(plo - rho, 0.0), phi + rho

    def params(self) -> dict:
        raise NotImplementedError

    def to_json(self) -> dict:
        out = {"kind": self.kind, **self.params(), "dim": self.dim}
        if self.sigma is not None:
            out["sigma"] = self.sigma
        return out


def _check_sigma(sigma, n):
    if sigma is not None and not 0 < sigma <= (n - 1) / 2 + 1e-12:
        raise ValueError(f"sigma must lie in (0, {(n - 1) / 2}], got {sigma}")


# -- circle / sphere ---------------------------------------------------------


@dataclass(frozen=True)
class Circle(Manifold):
    """Sphere ``|x - center| = radius`` in R^n (a circle when n = 2)."""

    center: tuple[float, ...]
    radius: float
    sigma: float | None = None
    kind = "circle"
    exact_boxes = True

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        if self.sigma is None:
            object.__setattr__(self, "sigma", (self.n - 1) / 2 if self.n > 1 else None)
        _check_sigma(self.sigma, self.n)

    @property
    def n(self):
        return len(self.center)

    @property
    def dim(self):
        return self.n - 1

    def distance_bounds(self, points):
        x = _as_rows(points, self.n)
        d = np.abs(np.linalg.norm(x - np.array(self.center), axis=1) - self.radius)
        return d, d

    def box_interval(self, lo, hi, threshold=None):
        lo = _as_rows(lo, self.n)
        hi = _as_rows(hi, self.n)
        c = np.array(self.center)
        near = np.clip(c, lo, hi) - c
        rmin = np.sqrt(np.einsum("ij,ij->i", near, near))
        far = np.maximum(np.abs(lo - c), np.abs(hi - c))
        rmax = np.sqrt(np.einsum("ij,ij->i", far, far))
        r = self.radius
        dlo = np.where(rmin > r, rmin - r, np.where(rmax < r, r - rmax, 0.0))
        dhi = np.maximum(r - rmin, rmax - r)
        return _widen(dlo, dhi)

    def params(self):
        return {"center": list(self.center), "radius": self.radius}


# -- segment (flat, for plumbing only) --------------------------------------


@dataclass(frozen=True)
class Segment(Manifold):
    """Straight segment ``[a, b]``.  Flat pieces are not of finite type; this
    kind exists to exercise the machinery and carries no decay exponent unless
    one is given."""

    a: tuple[float, ...]
    b: tuple[float, ...]
    sigma: float | None = None
    kind = "segment"

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if len(self.a) != len(self.b):
            raise ValueError("endpoints differ in dimension")
        _check_sigma(self.sigma, self.n)

    @property
    def n(self):
        return len(self.a)

    @property
    def dim(self):
        return 1

    def distance_bounds(self, points):
        x = _as_rows(points, self.n)
        a, b = np.array(self.a), np.array(self.b)
        ab = b - a
        L2 = float(ab @ ab)
        t = np.zeros(len(x)) if L2 == 0 else np.clip((x - a) @ ab / L2, 0.0, 1.0)
        d = np.linalg.norm(x - (a + t[:, None] * ab), axis=1)
        return d, d

    def box_interval(self, lo, hi, threshold=None):
        lo = _as_rows(lo, self.n)
        hi = _as_rows(hi, self.n)
        dlo, dhi = self._lipschitz(lo, hi)
        # distance to a convex set is convex: its maximum over a box sits at a corner
        corners = _corners(lo, hi)
        cmax = np.max([self.distance_bounds(c)[1] for c in corners], axis=0)
        dhi = np.minimum(dhi, cmax)
        if self.n == 2:
            # disjoint convex polygons: a closest pair has a vertex of one of them
            cmin = np.min([self.distance_bounds(c)[0] for c in corners], axis=0)
            ends = [np.linalg.norm(np.clip(e, lo, hi) - e, axis=1)
                    for e in (np.array(self.a), np.array(self.b))]
            dlo = np.minimum(cmin, np.minimum(*ends))
        dlo = np.where(_segment_meets_box(np.array(self.a), np.array(self.b), lo, hi), 0.0, dlo)
        return _widen(dlo, dhi)

    def params(self):
        return {"a": list(self.a), "b": list(self.b)}


def _corners(lo, hi):
    n = lo.shape[1]
    out = []
    for mask in range(1 << n):
        sel = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        out.append(np.where(sel, hi, lo))
    return out


def _segment_meets_box(a, b, lo, hi):
    """Liang-Barsky clip of the segment against each box."""
    t0 = np.zeros(len(lo))
    t1 = np.ones(len(lo))
    ok = np.ones(len(lo), dtype=bool)
    d = b - a
    for i in range(len(a)):
        if d[i] == 0:
            ok &= (a[i] >= lo[:, i]) & (a[i] <= hi[:, i])
            continue
        ta = (lo[:, i] - a[i]) / d[i]
        tb = (hi[:, i] - a[i]) / d[i]
        t0 = np.maximum(t0, np.minimum(ta, tb))
        t1 = np.minimum(t1, np.maximum(ta, tb))
    return ok & (t0 <= t1)


# -- hyperbola branch --------------------------------------------------------


def _quartic_hyperbola_distance(x, y, r):
    """Distance from each ``(x, y)`` to ``{st = r, s > 0}``.

    Stationary points of ``(s - x)^2 + (r/s - y)^2`` solve
    ``s^4 - x s^3 + r y s - r^2 = 0``; the constant term is negative so a
    positive root always exists.
    """
    m = len(x)
    comp = np.zeros((m, 4, 4))
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    # monic s^4 + c3 s^3 + c2 s^2 + c1 s + c0
    comp[:, 0, 3] = r * r
    comp[:, 1, 3] = -r * y
    comp[:, 2, 3] = 0.0
    comp[:, 3, 3] = x
    roots = np.linalg.eigvals(comp)
    s = roots.real
    good = (np.abs(roots.imag) <= 1e-6 * (1 + np.abs(s))) & (s > 0)
    s = np.where(good, s, np.nan)
    for _ in range(3):
        f = ((s - x[:, None]) * s ** 3 + r * (y[:, None] * s - r))
        df = 4 * s ** 3 - 3 * x[:, None] * s ** 2 + r * y[:, None]
        step = np.where(df != 0, f / np.where(df == 0, 1.0, df), 0.0)
        s = np.where(s - step > 0, s - step, s)
    d = np.hypot(s - x[:, None], r / s - y[:, None])
    d = np.where(np.isnan(d), np.inf, d)
    return d.min(axis=1)


@dataclass(frozen=True)
class Hyperbola(Manifold):
    """Branch ``(x - cx)(y - cy) = r`` with ``x > cx, y > cy``."""

    r: float
    center: tuple[float, float] = (0.0, 0.0)
    sigma: float | None = 0.5
    kind = "hyperbola"

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("hyperbola parameter must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        _check_sigma(self.sigma, 2)

    n = 2
    dim = 1

    def distance_bounds(self, points):
        x = _as_rows(points, 2) - np.array(self.center)
        d = _quartic_hyperbola_distance(x[:, 0], x[:, 1], self.r)
        return d, d

    def box_interval(self, lo, hi, threshold=None):
        lo = _as_rows(lo, 2)
        hi = _as_rows(hi, 2)
        c = np.array(self.center)
        lo_s, hi_s = lo - c, hi - c
        quad = (lo_s >= 0).all(axis=1)
        dlo, dhi = self._lipschitz(lo, hi)
        if quad.any():
            # xy - r grows toward the upper right; {xy >= r} is convex and
            # invariant under adding the positive cone, so on each side the
            # distance is monotone along the diagonal and extremal at corners.
            flo = lo_s[:, 0] * lo_s[:, 1] - self.r
            fhi = hi_s[:, 0] * hi_s[:, 1] - self.r
            d_lo = self.distance_bounds(lo)[0]
            d_hi = self.distance_bounds(hi)[0]
            exact_lo = np.where(flo > 0, d_lo, np.where(fhi < 0, d_hi, 0.0))
            exact_hi = np.maximum(d_lo, d_hi)
            dlo = np.where(quad, exact_lo, dlo)
            dhi = np.where(quad, exact_hi, dhi)
        return _widen(dlo, dhi)

    def params(self):
        return {"r": self.r, "center": list(self.center)}


# -- superellipse ------------------------------------------------------------


def _superellipse_graph(u, k):
    """``1 - (1 - |u|^k)^{1/k}``, stable for small ``u``."""
    with np.errstate(divide="ignore"):  # log1p(-1) = -inf gives the endpoint value 1
        return -np.expm1(np.log1p(-np.minimum(np.abs(u) ** k, 1.0)) / k)


@dataclass(frozen=True)
class Superellipse(Manifold):
    """Curve ``|x|^k + |y - 1|^k = 1``; order-``k`` contact with the x-axis at 0."""

    k: int
    sigma: float | None = None
    samples: int = field(default=256, repr=False)
    kind = "superellipse"

    def __post_init__(self):
        if int(self.k) < 2:
            raise ValueError("superellipse exponent must be >= 2")
        if self.sigma is None:
            object.__setattr__(self, "sigma", 1.0 / self.k)
        _check_sigma(self.sigma, 2)

    n = 2
    dim = 1

    def _level(self, x, y):
        """``|x|^k + |y-1|^k - 1`` computed without cancellation near y = 0, 2."""
        k = self.k
        ax = np.abs(x) ** k
        with np.errstate(divide="ignore"):
            ay = np.where(y <= 1, np.expm1(k * np.log1p(-np.minimum(y, 1.0))),
                          np.abs(y - 1) ** k - 1.0)
        return ax + ay

    def _pieces(self, u):
        """The curve as four graphs over ``u in [-c, c]``, ``c = 2^{-1/k}``:
        bottom, top, left, right.  Returns ``(X, Y)`` of shape ``(4,) + u.shape``."""
        y0 = _superellipse_graph(u, self.k)  # 1 - (1 - |u|^k)^{1/k}, exact near 0
        w = 1.0 - y0
        X = np.stack([u, u, -w, w])
        Y = np.stack([y0, 2.0 - y0, 1.0 + u, 1.0 + u])
        return X, Y

    def distance_bounds(self, points, rounds: int = 10, split: int = 16,
                        per_point: int = 4096):
        """Certified bounds by branch and bound over the curve parameter.

        On each piece ``|gamma'|^2 <= 2`` and ``|gamma''| <= (k-1) 2^{(k+1)/k}``,
        so ``psi(u) = |x - gamma(u)|^2`` has ``|psi''| <= C`` and on a sample
        interval of length ``h`` stays above ``min(ends) - C h^2 / 8``.
        Intervals that cannot beat the best sample are dropped; the rest are
        subdivided until the bracket is tight or a point's budget of live
        intervals runs out (then the bracket is simply wider).
        """
        pts = _as_rows(points, 2)
        m = len(pts)
        k = self.k
        c = 2.0 ** (-1.0 / k)
        gam2 = (k - 1) * 2.0 ** ((k + 1) / k)
        reach = np.hypot(pts[:, 0], pts[:, 1] - 1.0) + math.sqrt(2.0)
        C = 4.0 + 2.0 * reach * gam2

        u = np.linspace(-c, c, self.samples + 1)
        X, Y = self._pieces(u)
        psi = (X[None] - pts[:, 0, None, None]) ** 2 + (Y[None] - pts[:, 1, None, None]) ** 2
        upper = psi.reshape(m, -1).min(axis=1)
        h = u[1] - u[0]
        lb = np.minimum(psi[..., :-1], psi[..., 1:]) - C[:, None, None] * h * h / 8
        pid, piece, idx = np.nonzero(lb <= upper[:, None, None])
        a = u[idx]
        cur = lb[pid, piece, idx]
        lower = np.full(m, np.inf)
        for r in range(rounds + 1):
            low_now = np.full(m, np.inf)
            np.minimum.at(low_now, pid, cur)
            counts = np.bincount(pid, minlength=m)
            gap = np.sqrt(upper) - np.sqrt(np.clip(low_now, 0.0, None))
            done = (gap <= 1e-13 + 1e-10 * np.sqrt(upper)) | (counts * split > per_point)
            if r == rounds or h / split < 1e-15:
                done[:] = True
            lower = np.where(done & (counts > 0), np.minimum(lower, low_now), lower)
            go = ~done[pid]
            pid, piece, a = pid[go], piece[go], a[go]
            if not len(pid):
                break
            h = h / split
            t = a[:, None] + h * np.arange(split + 1)[None, :]
            Xs, Ys = self._pieces(t)
            rows = np.arange(len(piece))
            Xs, Ys = Xs[piece, rows], Ys[piece, rows]
            ps = (Xs - pts[pid, 0, None]) ** 2 + (Ys - pts[pid, 1, None]) ** 2
            np.minimum.at(upper, pid, ps.min(axis=1))
            sub = np.minimum(ps[:, :-1], ps[:, 1:]) - C[pid, None] * h * h / 8
            ki, kj = np.nonzero(sub <= upper[pid, None])
            cur = sub[ki, kj]
            pid, piece, a = pid[ki], piece[ki], t[ki, kj]
        lower = np.minimum(lower, upper)
        # rounding in psi: coordinate differences carry eps * (|x| + |gamma|) error
        du = np.sqrt(upper)
        scale = 2.0 * (np.abs(pts[:, 0]) + np.abs(pts[:, 1]) + du)
        lo = np.sqrt(np.maximum(lower - 16 * EPS * (du * scale + upper), 0.0))
        return lo, np.sqrt(upper)

    def _graph_gap(self, lo, hi):
        """Upper bound on distance over the box: the axis-parallel gap to one of
        the four graph pieces, for boxes whose graph coordinate lies in [-c, c]."""
        c = 2.0 ** (-1.0 / self.k)
        x0, y0, x1, y1 = lo[:, 0], lo[:, 1], hi[:, 0], hi[:, 1]
        best = np.full(len(lo), np.inf)
        # (u range, v range) with the piece at v = graph(u)
        for u0, u1, v0, v1 in ((x0, x1, y0, y1), (x0, x1, 2.0 - y1, 2.0 - y0),
                               (y0 - 1.0, y1 - 1.0, x0 + 1.0, x1 + 1.0),
                               (y0 - 1.0, y1 - 1.0, 1.0 - x1, 1.0 - x0)):
            ok = (u0 >= -c) & (u1 <= c)
            amin = np.where((u0 <= 0) & (u1 >= 0), 0.0, np.minimum(np.abs(u0), np.abs(u1)))
            amax = np.maximum(np.abs(u0), np.abs(u1))
            gap = np.maximum(v1 - _superellipse_graph(amin, self.k),
                             _superellipse_graph(amax, self.k) - v0)
            best = np.where(ok, np.minimum(best, gap), best)
        return best

    def box_interval(self, lo, hi, threshold=None):
        lo = _as_rows(lo, 2)
        hi = _as_rows(hi, 2)
        m = len(lo)
        cheap = self._graph_gap(lo, hi)
        easy = np.zeros(m, dtype=bool)
        if threshold is not None:
            easy = _widen(0.0, cheap)[1] <= threshold
        dlo = np.zeros(m)
        dhi = cheap.copy()
        hard = ~easy
        if hard.any():
            dlo[hard], lip_hi = self._lipschitz(lo[hard], hi[hard])
            dhi[hard] = np.minimum(dhi[hard], lip_hi)
        k = self.k
        xs = np.clip(0.0, lo[:, 0], hi[:, 0])
        ys = np.clip(1.0, lo[:, 1], hi[:, 1])
        gmin = self._level(xs, ys)
        xf = np.where(np.abs(lo[:, 0]) > np.abs(hi[:, 0]), lo[:, 0], hi[:, 0])
        yf = np.where(np.abs(lo[:, 1] - 1) > np.abs(hi[:, 1] - 1), lo[:, 1], hi[:, 1])
        gmax = self._level(xf, yf)
        tol = 1e-15 * k
        meets = (gmin <= tol) & (gmax >= -tol)
        dlo = np.where(meets, 0.0, dlo)
        # a box holding a curve point is within its diameter of the curve
        dhi = np.where(meets, np.minimum(dhi, np.linalg.norm(hi - lo, axis=1)), dhi)
        # outside the convex region the distance is convex, so max at a corner
        outside = hard & (gmin > tol)
        if outside.any():
            sl = (lo[outside], hi[outside])
            cmax = np.max([self.distance_bounds(cn)[1] for cn in _corners(*sl)], axis=0)
            dhi[outside] = np.minimum(dhi[outside], cmax)
        return _widen(dlo, dhi)

    def params(self):
        return {"k": self.k}


# -- Veronese curve ----------------------------------------------------------


@dataclass(frozen=True)
class Veronese(Manifold):
    """``t -> (t, t^2, ..., t^n)`` for ``t`` in ``[t0, t1]``."""

    degree: int
    t0: float = 0.0
    t1: float = 1.0
    sigma: float | None = None
    kind = "veronese"

    def __post_init__(self):
        if int(self.degree) < 2:
            raise ValueError("Veronese curve needs n >= 2")
        if self.t1 < self.t0:
            raise ValueError("empty parameter interval")
        if self.sigma is None:
            object.__setattr__(self, "sigma", 1.0 / self.degree)
        _check_sigma(self.sigma, self.degree)

    @property
    def n(self):
        return self.degree

    @property
    def dim(self):
        return 1

    def _point(self, t):
        return np.stack([t ** (i + 1) for i in range(self.n)], axis=-1)

    def distance_bounds(self, points):
        x = _as_rows(points, self.n)
        n = self.n
        m = len(x)
        deg = 2 * n - 1
        # d/dt of sum (t^i - x_i)^2 / 2 = sum_i i t^{2i-1} - sum_i i x_i t^{i-1}
        coef = np.zeros((m, deg + 1))  # coef[:, j] multiplies t^j
        for i in range(1, n + 1):
            coef[:, 2 * i - 1] += i
            coef[:, i - 1] -= i * x[:, i - 1]
        comp = np.zeros((m, deg, deg))
        if deg > 1:
            idx = np.arange(deg - 1)
            comp[:, idx + 1, idx] = 1.0
        comp[:, :, -1] = -coef[:, :deg] / coef[:, deg:deg + 1]
        roots = np.linalg.eigvals(comp)
        t = np.clip(roots.real, self.t0, self.t1)
        cand = np.concatenate([t, np.full((m, 1), self.t0), np.full((m, 1), self.t1)], axis=1)
        diff = self._point(cand) - x[:, None, :]
        d = np.sqrt(np.einsum("mcj,mcj->mc", diff, diff)).min(axis=1)
        return d, d

    def params(self):
        return {"n": self.n, "t0": self.t0, "t1": self.t1}


# -- implicit hypersurface ---------------------------------------------------

_SAFE = {name: getattr(np, name) for name in
         ("sin", "cos", "tan", "exp", "log", "sqrt", "abs", "arctan", "sinh", "cosh",
          "tanh", "pi")}


@dataclass(frozen=True)
class Implicit(Manifold):
    """Zero set of a scalar expression in ``x, y, z`` (or ``x0, x1, ...``).

    ``grad_max`` must bound ``|grad F|`` on the region of interest, giving the
    certified lower bound ``|F(x)| / grad_max``.  ``grad_min`` (optional, a
    lower bound for ``|grad F|`` near the zero set) gives the upper bound
    ``|F(x)| / grad_min``; without it the upper bound is infinite.
    """

    expression: str
    n: int
    grad_max: float
    grad_min: float | None = None
    dim: int | None = None
    sigma: float | None = None
    kind = "implicit"

    def __post_init__(self):
        if self.grad_max <= 0:
            raise ValueError("grad_max must be positive")
        if self.dim is None:
            object.__setattr__(self, "dim", self.n - 1)
        _check_sigma(self.sigma, self.n)
        object.__setattr__(self, "_code", compile(self.expression, "<manifold>", "eval"))

    def value(self, points):
        x = _as_rows(points, self.n)
        env = dict(_SAFE)
        for i in range(self.n):
            env[f"x{i}"] = x[:, i]
        for name, i in zip("xyz", range(min(self.n, 3))):
            env[name] = x[:, i]
        return np.broadcast_to(eval(self._code, {"__builtins__": {}}, env), (len(x),))

    def distance_bounds(self, points):
        f = np.abs(self.value(points))
        lo = f / self.grad_max
        hi = f / self.grad_min if self.grad_min else np.full_like(f, np.inf)
        return lo, hi

    def params(self):
        out = {"expression": self.expression, "n": self.n, "grad_max": self.grad_max}
        if self.grad_min:
            out["grad_min"] = self.grad_min
        return out


# -- similarity transforms ---------------------------------------------------


@dataclass(frozen=True)
class SimilarityTransform:
    """``x -> t g x + v`` with ``t > 0`` and ``g`` orthogonal."""

    t: float
    v: tuple[float, ...]
    g: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("scale must be positive")
        g = np.array(self.g, dtype=float)
        v = tuple(float(c) for c in self.v)
        if g.shape != (len(v), len(v)):
            raise ValueError("rotation and translation dimensions differ")
        if not np.allclose(g.T @ g, np.eye(len(v)), atol=1e-12, rtol=0):
            raise ValueError("g is not orthogonal")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "g", tuple(tuple(float(c) for c in row) for row in g))

    @classmethod
    def identity(cls, n):
        return cls(1.0, (0.0,) * n, tuple(tuple(row) for row in np.eye(n)))

    @classmethod
    def rotation2d(cls, angle, t=1.0, v=(0.0, 0.0)):
        c, s = math.cos(angle), math.sin(angle)
        return cls(t, v, ((c, -s), (s, c)))

    @property
    def n(self):
        return len(self.v)

    @property
    def matrix(self):
        return np.array(self.g)

    def apply(self, x):
        x = _as_rows(x, self.n)
        return self.t * x @ self.matrix.T + np.array(self.v)

    def inverse_apply(self, x):
        x = _as_rows(x, self.n)
        return ((x - np.array(self.v)) / self.t) @ self.matrix

    def compose(self, inner: "SimilarityTransform") -> "SimilarityTransform":
        """``self`` after ``inner``."""
        g = self.matrix @ inner.matrix
        v = self.t * self.matrix @ np.array(inner.v) + np.array(self.v)
        return SimilarityTransform(self.t * inner.t, tuple(v), tuple(map(tuple, g)))

    def signed_permutation(self):
        """``(perm, signs)`` if ``g`` maps axes to axes, else ``None``."""
        g = self.matrix
        r = np.round(g)
        if not np.array_equal(np.abs(r).sum(axis=1), np.ones(self.n)) or \
                not np.allclose(g, r, atol=1e-12):
            return None
        return np.argmax(np.abs(r), axis=1), r.sum(axis=1)

    def to_json(self):
        return {"t": self.t, "v": list(self.v), "g": [list(r) for r in self.g]}

    @classmethod
    def from_json(cls, obj):
        n = len(obj["v"])
        g = obj.get("g") or np.eye(n).tolist()
        return cls(float(obj["t"]), tuple(obj["v"]), tuple(tuple(r) for r in g))


@dataclass(frozen=True)
class Transformed(Manifold):
    """Image ``T(M)``; ``dist(x, T(M)) = t * dist(T^{-1} x, M)``."""

    base: Manifold
    transform: SimilarityTransform
    kind = "transformed"

    @property
    def n(self):
        return self.base.n

    @property
    def dim(self):
        return self.base.dim

    @property
    def sigma(self):
        return self.base.sigma

    def distance_bounds(self, points):
        lo, hi = self.base.distance_bounds(self.transform.inverse_apply(points))
        return self.transform.t * lo, self.transform.t * hi

    def box_interval(self, lo, hi, threshold=None):
        lo = _as_rows(lo, self.n)
        hi = _as_rows(hi, self.n)
        sp = self.transform.signed_permutation()
        if sp is None:
            return _widen(*self._lipschitz(lo, hi))
        # axis-preserving: the preimage of a box is a box
        a = self.transform.inverse_apply(lo)
        b = self.transform.inverse_apply(hi)
        th = None if threshold is None else threshold / self.transform.t
        blo, bhi = self.base.box_interval(np.minimum(a, b), np.maximum(a, b), th)
        return _widen(self.transform.t * blo, self.transform.t * bhi)

    def params(self):
        return {"base": self.base.to_json(), "transform": self.transform.to_json()}


def apply_transform(m: Manifold, T: SimilarityTransform) -> Manifold:
    """``T(M)``, in closed form where the family is preserved."""
    if T.n != m.n:
        raise ValueError("transform and manifold dimensions differ")
    if isinstance(m, Circle):
        c = T.apply(np.array(m.center))[0]
        return Circle(tuple(c), T.t * m.radius, m.sigma)
    if isinstance(m, Segment):
        a, b = T.apply(np.array([m.a, m.b]))
        return Segment(tuple(a), tuple(b), m.sigma)
    if isinstance(m, Hyperbola) and np.allclose(T.matrix, np.eye(2), atol=1e-15):
        c = T.apply(np.array(m.center))[0]
        return Hyperbola(m.r * T.t ** 2, tuple(c), m.sigma)
    if isinstance(m, Transformed):
        return Transformed(m.base, T.compose(m.transform))
    return Transformed(m, T)


# -- public predicates -------------------------------------------------------


def _box_arrays(box, n):
    if isinstance(box, tuple) and len(box) == 2 and not isinstance(box[0], (tuple, list)):
        raise TypeError("box must be a sequence of (lo, hi) pairs")
    lo = np.array([[float(a) for a, _ in box]])
    hi = np.array([[float(b) for _, b in box]])
    if lo.shape[1] != n:
        raise ValueError("box dimension does not match manifold")
    if (hi < lo).any():
        raise ValueError("empty box")
    return lo, hi


def distance_interval(m: Manifold, box: Sequence[tuple]) -> tuple[float, float]:
    """Certified ``[dlo, dhi]`` for ``{dist(x, M) : x in box}``."""
    if not isinstance(m, Manifold):
        raise TypeError(f"unsupported manifold kind: {type(m).__name__}")
    lo, hi = _box_arrays(box, m.n)
    dlo, dhi = m.box_interval(lo, hi)
    return float(dlo[0]), float(dhi[0])


INSIDE, OUTSIDE, STRADDLE = "inside", "outside", "straddle"


def classify(dlo, dhi, delta):
    """Vectorised three-way classification codes: 1 inside, 0 straddle, -1 outside."""
    return np.where(dhi <= delta, 1, np.where(dlo > delta, -1, 0))


def cell_vs_neighborhood(m: Manifold, delta: float, box) -> str:
    if delta <= 0:
        raise ValueError("delta must be positive")
    dlo, dhi = distance_interval(m, box)
    if dhi <= delta:
        return INSIDE
    if dlo > delta:
        return OUTSIDE
    return STRADDLE


# -- JSON --------------------------------------------------------------------


def manifold_from_json(obj: dict) -> Manifold:
    kind = obj["kind"]
    sigma = obj.get("sigma")
    if kind == "circle":
        return Circle(tuple(obj["center"]), float(obj["radius"]), sigma)
    if kind == "segment":
        return Segment(tuple(obj["a"]), tuple(obj["b"]), sigma)
    if kind == "hyperbola":
        return Hyperbola(float(obj["r"]), tuple(obj.get("center", (0.0, 0.0))),
                         0.5 if sigma is None else sigma)
    if kind == "superellipse":
        return Superellipse(int(obj["k"]), sigma)
    if kind == "veronese":
        return Veronese(int(obj["n"]), float(obj.get("t0", 0.0)), float(obj.get("t1", 1.0)),
                        sigma)
    if kind == "implicit":
        return Implicit(obj["expression"], int(obj["n"]), float(obj["grad_max"]),
                        obj.get("grad_min"), obj.get("dim"), sigma)
    if kind == "transformed":
        return Transformed(manifold_from_json(obj["base"]),
                           SimilarityTransform.from_json(obj["transform"]))
    raise ValueError(f"unsupported manifold kind: {kind!r}")


def fraction_box(box) -> tuple[tuple[Fraction, Fraction], ...]:
    return tuple((Fraction(a), Fraction(b)) for a, b in box)

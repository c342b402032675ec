"""Fourier side of missing-digit measures.

``g(eta) = (1/#D) sum_d exp(-2 pi i <d, eta>)`` is the one-step symbol, and
the transform of the uniform measure is the infinite product
``prod_{j >= 0} g(xi / p^j)``.  The profile ``f(theta) = sum_i |g((i + theta)/p)|``
over ``i in {0..p-1}^n`` controls the l1 partial sums; a certified enclosure
of its supremum gives the lower bound ``n - log(sup f) / log p``.

Everything here works with ``lambda_{p,D}`` itself; a free prefix on the
system is ignored because it changes the measure only by an absolutely
continuous factor on the first few levels.
"""

from __future__ import annotations

import math
import string
from dataclasses import asdict, dataclass, field
from typing import Sequence

import mpmath
import numpy as np

from .core import DigitSystem, PowerBaseSystem, hausdorff_dim

TWO_PI = 2.0 * math.pi
EPS = np.finfo(float).eps

MAX_PARTIAL_TERMS = 10 ** 8
_CHUNK_ELEMS = 1 << 22


# -- the symbol g ------------------------------------------------------------


def _digit_radius(system: DigitSystem) -> float:
    """``max_d |d|_2``."""
    return float(np.sqrt((system.digit_array.astype(float) ** 2).sum(axis=1)).max())


def _indicator(system: DigitSystem) -> np.ndarray:
    m = np.zeros((system.p,) * system.n)
    m[tuple(system.digit_array.T)] = 1.0
    return m / system.size


def g_value(system: DigitSystem, xi) -> np.ndarray | complex:
    """``g`` at one point (length-``n`` vector) or at each row of an array."""
    x = np.asarray(xi, dtype=float)
    single = x.ndim <= 1
    x = x.reshape(-1, system.n)
    x = x - np.floor(x)  # g is 1-periodic; reducing keeps the phases accurate
    out = np.empty(len(x), dtype=complex)
    d = system.digit_array.astype(float)
    step = max(1, _CHUNK_ELEMS // system.size)
    for s in range(0, len(x), step):
        ph = np.exp(-2j * np.pi * (x[s:s + step] @ d.T))
        out[s:s + step] = ph.mean(axis=1)
    return complex(out[0]) if single else out


def _einsum_spec(n: int, batch: bool) -> str:
    d = string.ascii_lowercase[:n]
    i = string.ascii_uppercase[:n]
    m = "z" if batch else ""
    ops = [d] + [f"{m}{i[a]}{d[a]}" for a in range(n)]
    return ",".join(ops) + "->" + m + i


def _phase(eta, p):
    """``exp(-2 pi i d eta)`` for ``d = 0..p-1``; last axis is ``d``."""
    eta = np.asarray(eta, dtype=float)
    eta = eta - np.floor(eta)
    return np.exp(-2j * np.pi * eta[..., None] * np.arange(p))


def g_grid(system: DigitSystem, axes: Sequence[np.ndarray]) -> np.ndarray:
    """``g`` on the Cartesian grid ``axes[0] x ... x axes[n-1]``.

    Contracts the digit indicator tensor with one phase matrix per axis, which
    costs far less than summing over digits point by point.
    """
    if len(axes) != system.n:
        raise ValueError("need one coordinate array per axis")
    mats = [_phase(a, system.p) for a in axes]
    return np.einsum(_einsum_spec(system.n, False), _indicator(system), *mats, optimize=True)


def _profile_terms(system: DigitSystem, theta: np.ndarray, grad: bool = False):
    """``g((i + theta)/p)`` for every ``i``, for a batch of ``theta`` (rows).

    Returns an array of shape ``(m, p, ..., p)``; with ``grad`` also the list of
    partial derivatives in ``theta``.
    """
    p, n = system.p, system.n
    theta = np.asarray(theta, dtype=float).reshape(-1, n)
    i = np.arange(p)
    mats = [_phase((i[None, :] + theta[:, a:a + 1]) / p, p) for a in range(n)]
    spec = _einsum_spec(n, True)
    ind = _indicator(system)
    g = np.einsum(spec, ind, *mats, optimize=True)
    if not grad:
        return g
    w = -2j * np.pi * np.arange(p) / p
    grads = []
    for a in range(n):
        mm = list(mats)
        mm[a] = mats[a] * w
        grads.append(np.einsum(spec, ind, *mm, optimize=True))
    return g, grads


def f_profile(system: DigitSystem, theta) -> np.ndarray | float:
    """``f(theta) = sum_i |g((i + theta)/p)|``; accepts one point or rows."""
    t = np.asarray(theta, dtype=float)
    single = t.ndim <= 1
    vals = np.abs(_profile_terms(system, t)).reshape(len(t.reshape(-1, system.n)), -1).sum(axis=1)
    return float(vals[0]) if single else vals


# -- the transform -----------------------------------------------------------


@dataclass(frozen=True)
class FrequencyPoint:
    """``lattice + offset`` with integer ``lattice`` and ``offset`` in [0,1]^n."""

    lattice: tuple[int, ...]
    offset: tuple[float, ...] = ()

    def __post_init__(self):
        lat = tuple(int(v) for v in self.lattice)
        off = tuple(float(v) for v in self.offset) or (0.0,) * len(lat)
        if len(off) != len(lat):
            raise ValueError("lattice and offset differ in length")
        if any(not 0.0 <= v <= 1.0 for v in off):
            raise ValueError("offset components must lie in [0, 1]")
        object.__setattr__(self, "lattice", lat)
        object.__setattr__(self, "offset", off)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.lattice, dtype=float) + np.array(self.offset)


@dataclass(frozen=True)
class TransformValue:
    value: complex
    error_bound: float
    terms: int


def truncation_depth(system: DigitSystem, norm: float, tol: float) -> int:
    """Least ``J`` with ``2 pi A |xi| p^{-J} / (p-1) <= tol``, ``A = max |d|``.

    Since ``|1 - g(eta)| <= 2 pi A |eta|`` and all factors have modulus at most
    one, dropping the factors ``j > J`` moves the product by at most that sum.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    c = TWO_PI * _digit_radius(system) * norm / (system.p - 1)
    if c <= tol:
        return 0
    return max(0, math.ceil(math.log(c / tol) / math.log(system.p)))


def _tail_bound(system, norm, J):
    return TWO_PI * _digit_radius(system) * norm * system.p ** (-float(J)) / (system.p - 1)


def fourier_transform(system: DigitSystem, xi, tol: float = 1e-12) -> TransformValue:
    """Truncated product ``prod_{j<=J} g(xi/p^j)`` with certified error."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = xi.vector if isinstance(xi, FrequencyPoint) else np.asarray(xi, dtype=float).ravel()
    if v.size != system.n:
        raise ValueError("frequency has wrong dimension")
    norm = float(np.linalg.norm(v))
    J = truncation_depth(system, norm, tol)
    scales = float(system.p) ** -np.arange(J + 1, dtype=float)
    vals = g_value(system, scales[:, None] * v[None, :])
    return TransformValue(complex(np.prod(vals)), _tail_bound(system, norm, J), J + 1)


def _abs_transform_grid(system: DigitSystem, axes, tol: float):
    """``|lambda^(xi)|`` on a Cartesian grid plus a uniform per-term error."""
    norm = math.sqrt(sum(float(np.max(np.abs(a))) ** 2 for a in axes))
    J = truncation_depth(system, norm, tol)
    out = None
    for j in range(J + 1):
        s = float(system.p) ** -j
        gj = np.abs(g_grid(system, [a * s for a in axes]))
        out = gj if out is None else out * gj
    return out, _tail_bound(system, norm, J)


# -- partial sums ------------------------------------------------------------


@dataclass(frozen=True)
class PartialSum:
    k: int
    theta: tuple[float, ...]
    value: float
    errbar: float
    window: str
    squared: bool = False
    terms: int = 0


def _window_axis(p, k, window):
    R = p ** k
    if window == "block":
        return np.arange(R, dtype=float)
    if window == "symmetric":
        return np.arange(-R + 1, R, dtype=float)
    raise ValueError(f"unknown window {window!r}; use 'block' or 'symmetric'")


def _partial_sum(system, k, theta, window, squared, tol):
    if k < 0:
        raise ValueError("k must be >= 0")
    n, p = system.n, system.p
    theta = np.zeros(n) if theta is None else np.asarray(theta, dtype=float).ravel()
    if theta.size != n:
        raise ValueError("theta has wrong dimension")
    base = _window_axis(p, k, window)
    count = base.size ** n
    if count > MAX_PARTIAL_TERMS:
        raise ValueError(f"{count} frequencies exceed the enumeration guard "
                         f"({MAX_PARTIAL_TERMS}); use a smaller k")
    axes = [base + theta[a] for a in range(n)]
    # chunk along the first axis to bound memory
    rest = base.size ** (n - 1)
    step = max(1, _CHUNK_ELEMS // max(rest, 1))
    total = 0.0
    err = 0.0
    for s in range(0, base.size, step):
        chunk = [axes[0][s:s + step]] + axes[1:]
        mag, e = _abs_transform_grid(system, chunk, tol)
        if squared:
            total += float((mag ** 2).sum())
            err = max(err, (2.0 + e) * e)
        else:
            total += float(mag.sum())
            err = max(err, e)
    return PartialSum(k, tuple(float(t) for t in theta), total, err * count, window,
                      squared, count)


def partial_sum_l1(system: DigitSystem, k: int, theta=None, *, window: str = "block",
                   tol: float = 1e-13) -> PartialSum:
    """``sum |lambda^(xi + theta)|`` over a window of integer ``xi``.

    ``window="block"`` sums over ``{0, ..., p^k - 1}^n``, the window on which
    ``S_k(theta) <= (sup f)^k`` holds.  ``window="symmetric"`` sums over
    ``|xi|_inf < p^k``; that window is covered by ``2^n`` shifted blocks, so the
    certified bound there is ``2^n (sup f)^k`` (see :func:`partial_sum_bound`).
    """
    return _partial_sum(system, k, theta, window, False, tol)


def partial_sum_l2(system: DigitSystem, k: int, *, window: str = "symmetric",
                   tol: float = 1e-13) -> PartialSum:
    """``sum_{|xi|_inf < p^k} |lambda^(xi)|^2``."""
    return _partial_sum(system, k, None, window, True, tol)


def partial_sum_bound(sup_hi: float, k: int, n: int, window: str = "block") -> float:
    """Certified upper bound for :func:`partial_sum_l1` given ``sup f <= sup_hi``."""
    b = sup_hi ** k
    return b if window == "block" else (2 ** n) * b


# -- certified supremum of f -------------------------------------------------


@dataclass
class SupEnclosure:
    lo: float
    hi: float
    argmax: tuple[float, ...]
    cells: int
    converged: bool
    factorized: bool = False

    @property
    def width(self) -> float:
        return self.hi - self.lo


def _box_upper(system, centers, half, A_t, rnd):
    """Upper bounds of ``f`` on boxes ``centers +- half`` (half: per-axis half side)."""
    g, grads = _profile_terms(system, centers, grad=True)
    m = len(centers)
    g = g.reshape(m, -1)
    grads = [q.reshape(m, -1) for q in grads]
    absg = np.abs(g)
    fc = absg.sum(axis=1)
    rho = float(np.linalg.norm(half))
    terms = absg.shape[1]
    lip = fc + terms * A_t * rho
    smooth = absg > 2.0 * A_t * rho
    safe = np.where(smooth, absg, 1.0)
    B_t = A_t * A_t
    lin = np.zeros(m)
    # terms near a zero of g: |g(c + d)| <= |g(c)| + sum_j |dg/dtheta_j| h_j + B rho^2 / 2
    rough = np.zeros_like(absg)
    for a, q in enumerate(grads):
        du = np.where(smooth, (np.conj(g) * q).real / safe, 0.0)
        lin += np.abs(du.sum(axis=1)) * half[a]
        rough += np.abs(q) * half[a]
    rough = np.minimum(rough + 0.5 * B_t * rho * rho, A_t * rho)
    curv = np.where(smooth, B_t * (1.0 + 2.0 / safe), 0.0).sum(axis=1)
    second = fc + lin + 0.5 * rho * rho * curv + np.where(smooth, 0.0, rough).sum(axis=1)
    ub = np.minimum(np.minimum(lip, second), float(terms)) + rnd
    return fc, ub


def _sup_f_direct(system: DigitSystem, tol: float, max_cells: int) -> SupEnclosure:
    n, p = system.n, system.p
    A_t = TWO_PI * _digit_radius(system) / p  # Lipschitz constant of each term in theta
    terms = p ** n
    rnd = 8.0 * EPS * terms * (system.size + 8)
    m0 = max(1, int(round((2048) ** (1.0 / n))))
    half = np.full(n, 0.5 / m0)
    ticks = (np.arange(m0) + 0.5) / m0
    centers = np.stack([g.ravel() for g in np.meshgrid(*([ticks] * n), indexing="ij")], axis=1)
    lo = -np.inf
    arg = centers[0]
    settled = -np.inf
    cells = 0
    offs = np.array(np.meshgrid(*([[-0.5, 0.5]] * n), indexing="ij")).reshape(n, -1).T
    batch = max(64, _CHUNK_ELEMS // (8 * terms * p))
    # depth-first over batches keeps the worklist small; each entry is
    # (centres, half side per axis, parent upper bounds)
    work = [(centers, half, np.full(len(centers), np.inf))]
    while work:
        centers, half, parent_ub = work.pop()
        if len(centers) > batch:
            work.append((centers[batch:], half, parent_ub[batch:]))
            centers, parent_ub = centers[:batch], parent_ub[:batch]
        # the incumbent may have risen since the parent was split
        alive = parent_ub > lo
        centers = centers[alive]
        if not len(centers):
            continue
        cells += len(centers)
        fc, ub = _box_upper(system, centers, half, A_t, rnd)
        ub = np.minimum(ub, parent_ub[alive])
        j = int(np.argmax(fc))
        if fc[j] - rnd > lo:
            lo = float(fc[j] - rnd)
            arg = centers[j]
        keep = ub > lo
        done = keep & (ub <= lo + 0.5 * tol)
        if done.any():
            settled = max(settled, float(ub[done].max()))
        live = keep & ~done
        if not live.any():
            continue
        if cells >= max_cells:
            hi = max(settled, lo, float(ub[live].max()))
            for wc, wh, wp in work:
                for s in range(0, len(wc), batch):
                    sel = wp[s:s + batch] > lo
                    if sel.any():
                        _, wub = _box_upper(system, wc[s:s + batch][sel], wh, A_t, rnd)
                        hi = max(hi, float(np.minimum(wub, wp[s:s + batch][sel]).max()))
            return SupEnclosure(lo, hi, tuple(float(v) for v in arg), cells, False)
        # bisect every live box along all axes
        h2 = half / 2
        kids = (centers[live][:, None, :] + offs[None, :, :] * half).reshape(-1, n)
        work.append((kids, h2, np.repeat(ub[live], len(offs))))
    hi = max(settled, lo)
    return SupEnclosure(lo, hi, tuple(float(v) for v in arg), cells, True)


def sup_f(system: DigitSystem, tol: float = 1e-6, max_cells: int = 5_000_000,
          factorize: bool = True) -> SupEnclosure:
    """Certified ``[lo, hi]`` containing ``sup_{theta in [0,1]^n} f(theta)``.

    Branch and bound over boxes: each box gets the smaller of a first-order
    (Lipschitz) bound and a second-order bound that uses the gradient at the
    centre and a curvature bound on the terms that stay away from zero on the
    box.  ``lo`` is the best evaluated centre (less a rounding margin).  When
    the digit set is a Cartesian product, ``f`` factors over coordinates and
    the one-dimensional suprema are multiplied.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if factorize and system.n > 1 and system.is_product():
        n, p = system.n, system.p
        sub_tol = tol / (n * (p + 1) ** (n - 1))
        parts = [_sup_f_direct(f, sub_tol, max_cells) for f in system.factor_systems()]
        lo = math.prod(s.lo for s in parts)
        hi = math.prod(s.hi for s in parts)
        return SupEnclosure(lo, hi, tuple(s.argmax[0] for s in parts),
                            sum(s.cells for s in parts), all(s.converged for s in parts),
                            factorized=True)
    return _sup_f_direct(system, tol, max_cells)


def grid_sup_f(system: DigitSystem, points_per_axis: int) -> float:
    """Maximum of ``f`` over the grid ``{j / N}^n`` (a lower estimate of sup f)."""
    t = np.arange(points_per_axis) / points_per_axis
    best = 0.0
    rows = np.stack([g.ravel() for g in np.meshgrid(*([t] * system.n), indexing="ij")], axis=1)
    step = max(1, _CHUNK_ELEMS // (system.p ** system.n * system.p))
    for s in range(0, len(rows), step):
        best = max(best, float(f_profile(system, rows[s:s + step]).max()))
    return best


# -- lower bounds for the l1 dimension ---------------------------------------


@dataclass
class BoundReport:
    method: str
    lower_bound: float
    sup_f_enclosure: tuple[float, float] | None
    grid_cells_explored: int
    tolerance: float | None
    clamped: bool = False
    converged: bool = True
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = asdict(self)
        if self.sup_f_enclosure is not None:
            out["sup_f_enclosure"] = list(self.sup_f_enclosure)
        return out


def _clamp(value):
    return (0.0, True) if value < 0 else (value, False)


def l1_lower_bound_algorithm(system: DigitSystem, tol: float = 1e-6, **kw) -> BoundReport:
    """``n - log(hi) / log p`` from the certified enclosure of ``sup f``."""
    if not isinstance(system, DigitSystem):
        raise TypeError("the algorithmic bound needs an explicit DigitSystem")
    enc = sup_f(system, tol, **kw)
    value = system.n - math.log(enc.hi) / math.log(system.p)
    value, clamped = _clamp(value)
    return BoundReport("algorithm", value, (enc.lo, enc.hi), enc.cells, tol, clamped,
                       enc.converged, {"argmax": list(enc.argmax), "factorized": enc.factorized})


def crude_sup_bound(p, n, t) -> float:
    """``(t p^n + (2 p log p)^n) / (p^n - t)``."""
    return (t * p ** n + (2 * p * math.log(p)) ** n) / (p ** n - t)


def l1_lower_bound_crude(system: DigitSystem | None = None, *, p: int | None = None,
                         n: int | None = None, t: int | None = None) -> BoundReport:
    """Closed-form bound for digit sets missing ``t`` of the ``p^n`` tuples."""
    if system is not None:
        p, n, t = system.p, system.n, system.p ** system.n - system.size
    if p is None or n is None or t is None:
        raise ValueError("give a system or all of p, n, t")
    if p < 4:
        raise ValueError("the crude bound needs p >= 4")
    if not 1 <= t < p ** n:
        raise ValueError("need 1 <= t < p^n missing tuples")
    s = crude_sup_bound(p, n, t)
    value, clamped = _clamp(n - math.log(s) / math.log(p))
    return BoundReport("crude", value, None, 0, None, clamped, True,
                       {"sup_f_upper": s, "p": p, "n": n, "t": t})


def l1_lower_bound_rectangle(system) -> BoundReport:
    """``dim_H - n log(log p^2) / log p`` for rectangular digit sets.

    A :class:`PowerBaseSystem` is evaluated in exponent form with mpmath, so
    bases like ``10**9000`` never have to be materialised.
    """
    if isinstance(system, PowerBaseSystem):
        with mpmath.workdps(60):
            logp = system.p_exp * mpmath.log(system.base)
            dim = mpmath.mpf(system.n * system.digit_exp) / system.p_exp
            exact = dim - system.n * mpmath.log(2 * logp) / logp
            text = mpmath.nstr(exact, 40)
        if system.base ** system.p_exp < 4:
            raise ValueError("the rectangle bound needs p >= 4")
        value, clamped = _clamp(float(exact))
        return BoundReport("rectangle", value, None, 0, None, clamped, True,
                           {"exact": text, "dim_H": str(system.hausdorff_dim())})
    if not isinstance(system, DigitSystem):
        raise TypeError("unsupported system type")
    if system.rectangle_ranges() is None:
        raise ValueError("digit set is not a rectangle [a1,b1] x ... x [an,bn]; "
                         "use the algorithm or crude bound instead")
    if system.p < 4:
        raise ValueError("the rectangle bound needs p >= 4")
    lp = math.log(system.p)
    raw = hausdorff_dim(system) - system.n * math.log(2 * lp) / lp
    value, clamped = _clamp(raw)
    return BoundReport("rectangle", value, None, 0, None, clamped, True, {"raw": raw})


METHODS = {"algorithm": l1_lower_bound_algorithm, "crude": l1_lower_bound_crude,
           "rectangle": l1_lower_bound_rectangle}

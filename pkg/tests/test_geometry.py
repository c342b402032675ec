from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from digitlens import geometry as G

CIRCLE = G.Circle((0.5, 0.5), 0.4)

KINDS = {
    "circle": CIRCLE,
    "segment": G.Segment((0.2, 0.1), (0.7, 0.9)),
    "hyperbola": G.Hyperbola(0.1),
    "superellipse": G.Superellipse(3),
    "veronese": G.Veronese(2, -0.5, 1.2),
    "implicit": G.Implicit("x**2 + y**2 - 0.25", 2, grad_max=3.0, grad_min=None),
}


def _sample_curve(m, count=200001):
    """Dense points on the curve, for brute-force distances."""
    if isinstance(m, G.Circle):
        a = np.linspace(0, 2 * np.pi, count)
        return np.stack([m.center[0] + m.radius * np.cos(a), m.center[1] + m.radius * np.sin(a)], 1)
    if isinstance(m, G.Segment):
        t = np.linspace(0, 1, count)[:, None]
        return (1 - t) * np.array(m.a) + t * np.array(m.b)
    if isinstance(m, G.Hyperbola):
        u = np.linspace(-12, 12, count)
        x = math.sqrt(m.r) * np.exp(u)
        return np.stack([x + m.center[0], m.r / x + m.center[1]], 1)
    if isinstance(m, G.Superellipse):
        a = np.linspace(0, 2 * np.pi, count)
        c, s = np.cos(a), np.sin(a)
        e = 2.0 / m.k
        return np.stack([np.sign(c) * np.abs(c) ** e, 1 + np.sign(s) * np.abs(s) ** e], 1)
    if isinstance(m, G.Veronese):
        t = np.linspace(m.t0, m.t1, count)
        return np.stack([t ** (i + 1) for i in range(m.n)], 1)
    raise TypeError


def _brute(m, pts):
    curve = _sample_curve(m)
    return np.array([np.min(np.linalg.norm(curve - p, axis=1)) for p in pts])


# -- worked examples -------------------------------------------------------


def test_circle_examples():
    unit = G.Circle((0.0, 0.0), 1.0)
    lo, hi = G.distance_interval(unit, [(1, 1), (0, 0)])
    assert lo == 0 and hi < 1e-13
    lo, hi = G.distance_interval(unit, [(2, 3), (0, 0)])
    assert lo == pytest.approx(1, abs=1e-11) and hi == pytest.approx(2, abs=1e-11)
    assert lo <= 1 and hi >= 2


def test_hyperbola_on_curve():
    lo, hi = G.distance_interval(G.Hyperbola(1.0), [(1, 1), (1, 1)])
    assert lo == 0 and hi < 1e-12


def test_root_inside_when_delta_large():
    for m in KINDS.values():
        if m.n != 2 or isinstance(m, G.Implicit):
            continue
        _, hi = G.distance_interval(m, [(0, 1), (0, 1)])
        assert G.cell_vs_neighborhood(m, hi, [(0, 1), (0, 1)]) == G.INSIDE


def test_circle_straddle_against_sampling():
    box = [(1 / 3, 2 / 3), (1 / 3, 2 / 3)]
    verdict = G.cell_vs_neighborhood(CIRCLE, 1 / 3, box)
    assert verdict in (G.INSIDE, G.STRADDLE)
    t = np.linspace(1 / 3, 2 / 3, 1000)
    X, Y = np.meshgrid(t, t)
    d = np.abs(np.hypot(X - 0.5, Y - 0.5) - 0.4)
    if verdict == G.INSIDE:
        assert (d <= 1 / 3).all()
    else:
        assert d.max() > 1 / 3 - 1e-12 or d.min() <= 1 / 3


def test_segment_outside_example():
    line = G.Segment((0.5, 0.0), (0.5, 1.0))
    assert G.cell_vs_neighborhood(line, 0.1, [(0, 0.25), (0, 0.25)]) == G.OUTSIDE
    assert line.sigma is None


def test_cell_vs_neighborhood_rejects_bad_delta():
    with pytest.raises(ValueError):
        G.cell_vs_neighborhood(CIRCLE, 0.0, [(0, 1), (0, 1)])


def test_classify_codes():
    assert list(G.classify(np.array([0, 0, 2.0]), np.array([0.5, 2, 3]), 1.0)) == [1, 0, -1]


# -- pointwise distances -----------------------------------------------------


@pytest.mark.parametrize("name", ["circle", "segment", "hyperbola", "superellipse", "veronese"])
def test_pointwise_bounds_contain_sampled_distance(name):
    m = KINDS[name]
    rng = np.random.default_rng(7)
    pts = rng.uniform(-0.5, 1.5, (40, m.n))
    lo, hi = m.distance_bounds(pts)
    ref = _brute(m, pts)
    # the curve sample is an upper estimate accurate to its spacing
    assert (lo <= ref + 1e-12).all()
    assert (hi <= ref + 1e-12).all()
    assert (ref - hi <= 1e-3).all()
    assert (hi - lo <= 1e-8).all()


def test_superellipse_tiny_distances():
    m = G.Superellipse(3)
    x = np.array([1e-3, 2e-4, 0.0])
    y = x ** 3 / 3
    lo, hi = m.distance_bounds(np.stack([x, y + 1e-10], 1))
    assert (lo <= 1e-10 + 1e-15).all() and (hi >= 0.9e-10).all()


def test_superellipse_graph_gap_fast_path_sound():
    m = G.Superellipse(2)
    rng = np.random.default_rng(3)
    lo = rng.uniform(-0.6, 0.6, (300, 2)) * np.array([1.0, 0.1])
    hi = lo + rng.uniform(0, 0.02, (300, 2))
    slow = m.box_interval(lo, hi)
    fast = m.box_interval(lo, hi, threshold=0.05)
    for i in range(300):
        pts = np.stack(np.meshgrid(np.linspace(lo[i, 0], hi[i, 0], 5),
                                   np.linspace(lo[i, 1], hi[i, 1], 5)), -1).reshape(-1, 2)
        d = m.distance_bounds(pts)
        assert d[1].max() <= fast[1][i] + 1e-12
        assert d[0].min() >= fast[0][i] - 1e-12
        assert d[0].min() >= slow[0][i] - 1e-12
        # the hint never changes which side of the threshold a box lands on
        assert (fast[1][i] <= 0.05) == (slow[1][i] <= 0.05) or fast[1][i] <= 0.05


# -- box enclosures ----------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(name=st.sampled_from(sorted(KINDS)), data=st.data())
def test_box_interval_sound_and_monotone(name, data):
    m = KINDS[name]
    n = m.n
    lo = np.array(data.draw(st.lists(st.floats(-0.2, 1.0), min_size=n, max_size=n)))
    size = data.draw(st.floats(1e-4, 0.3))
    hi = lo + size
    plo, phi = m.box_interval(lo, hi)
    rng = np.random.default_rng(0)
    pts = lo + rng.uniform(0, 1, (64, n)) * size
    dl, dh = m.distance_bounds(pts)
    assert (dl >= plo[0] - 1e-9).all()
    if np.isfinite(phi[0]):
        assert (dh <= phi[0] + 1e-9).all()
    # tree refinement: one of the p^n sub-cubes is never looser than its parent
    p = data.draw(st.integers(2, 5))
    idx = np.array(data.draw(st.lists(st.integers(0, p - 1), min_size=n, max_size=n)))
    clo = lo + idx * size / p
    cl, ch = m.box_interval(clo, clo + size / p)
    assert cl[0] >= plo[0] - 1e-8
    assert ch[0] <= phi[0] + 1e-8


def test_circle_box_interval_exact_against_grid():
    rng = np.random.default_rng(5)
    for _ in range(50):
        lo = rng.uniform(0, 1, 2)
        hi = lo + rng.uniform(0, 0.3, 2)
        dlo, dhi = CIRCLE.box_interval(lo, hi)
        X, Y = np.meshgrid(np.linspace(lo[0], hi[0], 301), np.linspace(lo[1], hi[1], 301))
        d = np.abs(np.hypot(X - 0.5, Y - 0.5) - 0.4)
        assert dlo[0] <= d.min() + 1e-12 and d.max() <= dhi[0] + 1e-12
        assert d.min() - dlo[0] < 5e-3 and dhi[0] - d.max() < 5e-3


# -- transforms --------------------------------------------------------------


def test_transform_validation_and_algebra():
    with pytest.raises(ValueError):
        G.SimilarityTransform(1.0, (0, 0), ((1, 1), (0, 1)))
    with pytest.raises(ValueError):
        G.SimilarityTransform(0.0, (0, 0), ((1, 0), (0, 1)))
    T = G.SimilarityTransform.rotation2d(0.3, t=2.0, v=(1.0, -1.0))
    S = G.SimilarityTransform.rotation2d(-1.1, t=0.5, v=(0.2, 0.0))
    x = np.array([[0.3, 0.7], [1.0, 2.0]])
    assert np.allclose(T.inverse_apply(T.apply(x)), x, atol=1e-14)
    assert np.allclose(T.compose(S).apply(x), T.apply(S.apply(x)), atol=1e-14)
    assert G.SimilarityTransform.from_json(T.to_json()) == T


def test_apply_transform_circle_example():
    out = G.apply_transform(G.Circle((0.0, 0.0), 1.0), G.SimilarityTransform(2.0, (1, 0), ((1, 0), (0, 1))))
    assert isinstance(out, G.Circle)
    assert out.center == (1.0, 0.0) and out.radius == 2.0


def test_identity_transform_preserves_distances():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 2, (100, 2))
    for name in ("hyperbola", "superellipse", "segment", "circle"):
        m = KINDS[name]
        mt = G.apply_transform(m, G.SimilarityTransform.identity(2))
        assert np.allclose(mt.distance(pts), m.distance(pts), atol=1e-12)


def test_rotated_hyperbola():
    H = G.Hyperbola(1.0)
    R = G.SimilarityTransform.rotation2d(math.pi / 2)
    HR = G.apply_transform(H, R)
    probes = np.random.default_rng(4).uniform(0.1, 3, (50, 2))
    assert np.allclose(HR.distance(R.apply(probes)), H.distance(probes), atol=1e-12)


@pytest.mark.parametrize("name", sorted(KINDS))
def test_scaling_identity(name):
    m = KINDS[name]
    n = m.n
    rng = np.random.default_rng(11)
    g = np.linalg.qr(rng.normal(size=(n, n)))[0]
    T = G.SimilarityTransform(1.7, tuple(rng.normal(size=n)), tuple(map(tuple, g)))
    mt = G.apply_transform(m, T)
    x = rng.uniform(-1, 2, (100, n))
    lhs = mt.distance_bounds(x)
    rhs = m.distance_bounds(T.inverse_apply(x))
    for a, b in zip(lhs, rhs):
        fin = np.isfinite(b)
        assert np.allclose(a[fin], T.t * b[fin], atol=1e-9, rtol=0)


# -- defaults and serialisation ---------------------------------------------


def test_sigma_defaults():
    assert CIRCLE.sigma == 0.5
    assert G.Circle((0, 0, 0), 1.0).sigma == 1.0
    assert G.Veronese(3).sigma == pytest.approx(1 / 3)
    assert G.Superellipse(4).sigma == 0.25
    assert G.Hyperbola(1.0).sigma == 0.5
    with pytest.raises(ValueError):
        G.Circle((0, 0), 1.0, sigma=-1.0)
    with pytest.raises(ValueError):
        G.Circle((0, 0), 1.0, sigma=2.0)


def test_json_round_trip():
    for m in list(KINDS.values()) + [G.apply_transform(G.Hyperbola(0.5),
                                                       G.SimilarityTransform.rotation2d(0.4))]:
        back = G.manifold_from_json(m.to_json())
        pts = np.random.default_rng(1).uniform(0, 1, (10, m.n))
        assert np.allclose(back.distance_bounds(pts)[0], m.distance_bounds(pts)[0])
    with pytest.raises(ValueError):
        G.manifold_from_json({"kind": "torus"})


def test_distance_interval_rejects_unsupported():
    with pytest.raises(TypeError):
        G.distance_interval("circle", [(0, 1), (0, 1)])

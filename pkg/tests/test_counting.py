from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from digitlens import counting as C
from digitlens import geometry as G
from digitlens.core import DigitSystem, hausdorff_dim

import oracles

CIRCLE = G.Circle((0.5, 0.5), 0.4)
CARPET = DigitSystem.complement(3, 2, [(1, 1)])
FULL3 = DigitSystem.full(3, 2)


def test_whole_square_neighbourhood():
    res = C.count_cells_near(CARPET, CIRCLE, 2.0, 3)
    assert res.inside_count == 8 ** 3 and res.straddle_count == 0
    assert res.measure_lower == 1 and res.measure_upper == 1


def test_depth_one_full_digits_against_oracles():
    res = C.count_cells_near(FULL3, CIRCLE, 1 / 3, 1)
    assert res.total == 9
    assert (res.inside_count, res.straddle_count) == oracles.brute_count(FULL3, CIRCLE, 1 / 3, 1)
    assert res.total == oracles.circle_count_exact(FULL3, (Fraction(1, 2),) * 2, Fraction(2, 5),
                                                   Fraction(1, 3), 1)


def test_point_mass_far_from_circle():
    res = C.count_cells_near(DigitSystem(3, 2, [(0, 0)]), G.Circle((0.0, 0.0), 1.0), 0.1, 3)
    assert res.total == 0 and res.measure_upper == 0


PAIRS = [
    (CARPET, CIRCLE, 0.05), (FULL3, CIRCLE, 0.04), (CARPET, G.Hyperbola(0.1), 0.05),
    (DigitSystem(4, 2, [(0, 0), (1, 3), (3, 1), (2, 2)]), G.Superellipse(2), 0.03),
    (CARPET, G.Segment((0.1, 0.0), (0.9, 1.0)), 0.05),
    (DigitSystem(5, 2, [(0, 0), (4, 4), (2, 1)]), G.Circle((0.2, 0.3), 0.6), 0.01),
]


@pytest.mark.parametrize("system,manifold,delta", PAIRS)
def test_pruned_equals_brute_force(system, manifold, delta):
    depth = 3
    res = C.count_cells_near(system, manifold, delta, depth)
    raw = C.count_cells_near(system, manifold, delta, depth, prune=False)
    assert (res.inside_count, res.straddle_count) == (raw.inside_count, raw.straddle_count)
    assert (res.inside_count, res.straddle_count) == oracles.brute_count(system, manifold, delta,
                                                                         depth)


@settings(max_examples=25, deadline=None)
@given(p=st.integers(3, 5), data=st.data())
def test_circle_counts_match_exact_rationals(p, data):
    digits = data.draw(st.sets(st.tuples(st.integers(0, p - 1), st.integers(0, p - 1)),
                               min_size=1, max_size=p * p))
    s = DigitSystem(p, 2, tuple(digits))
    c = (Fraction(data.draw(st.integers(0, 8)), 8), Fraction(data.draw(st.integers(0, 8)), 8))
    r = Fraction(data.draw(st.integers(1, 8)), 10)
    depth = 2
    delta = Fraction(1, p ** depth)
    res = C.count_cells_near(s, G.Circle(tuple(map(float, c)), float(r)), float(delta), depth)
    exact = oracles.circle_count_exact(s, c, r, delta, depth)
    # float widening may admit cells that only touch the neighbourhood boundary
    assert res.total >= exact
    assert res.total - exact <= 4 * len(digits)


def test_monotone_in_delta_and_depth():
    prev = -1
    prev_m = Fraction(-1)
    for d in (1 / 81, 1 / 27, 1 / 9, 1 / 3):
        res = C.count_cells_near(CARPET, CIRCLE, d, 4)
        assert res.total >= prev and res.measure_upper >= prev_m
        prev, prev_m = res.total, res.measure_upper
    a = C.count_cells_near(CARPET, CIRCLE, 1 / 9, 2)
    b = C.count_cells_near(CARPET, CIRCLE, 1 / 9, 3)
    assert b.total <= 8 * a.total
    assert a.measure_lower <= b.measure_lower <= b.measure_upper <= a.measure_upper


def test_determinism_and_guards(monkeypatch):
    a = C.count_cells_near(CARPET, CIRCLE, 1 / 27, 4)
    b = C.count_cells_near(CARPET, CIRCLE, 1 / 27, 4)
    assert a == b
    with pytest.raises(ValueError):
        C.count_cells_near(CARPET, CIRCLE, 0.01, 2)
    with pytest.raises(ValueError):
        C.count_cells_near(CARPET, CIRCLE, -1.0, 2)
    with pytest.raises(C.ExpansionCapExceeded):
        C.count_cells_near(CARPET, CIRCLE, 1 / 27, 4, max_nodes=10)
    monkeypatch.setenv(C.ENV_MAX_NODES, "10")
    with pytest.raises(C.ExpansionCapExceeded):
        C.count_cells_near(CARPET, CIRCLE, 1 / 27, 4)


def test_region_restricts_count():
    region = ((Fraction(0), Fraction(1, 3)), (Fraction(0), Fraction(1)))
    res = C.count_cells_near(CARPET, CIRCLE, 1 / 9, 2, region=region)
    assert res.total == oracles.brute_count(CARPET, CIRCLE, 1 / 9, 2, region=region)[0] + \
        oracles.brute_count(CARPET, CIRCLE, 1 / 9, 2, region=region)[1]


# -- fits ------------------------------------------------------------------


def test_fit_examples():
    f = C.fit_exponent([(0.1, 10), (0.01, 100), (0.001, 1000)])
    assert f.exponent == pytest.approx(1.0) and f.r2 == pytest.approx(1.0)
    assert C.fit_exponent([(0.1, 1), (0.01, 1), (0.001, 1)]).exponent == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError, match="delta=0.01"):
        C.fit_exponent([(0.1, 1), (0.01, 0), (0.001, 1)])
    with pytest.raises(ValueError):
        C.fit_exponent([(0.1, 1), (0.01, 1)])
    with pytest.raises(ValueError):
        C.fit_exponent([(0.01, 1), (0.1, 1), (0.001, 1)])


def test_carpet_box_count():
    fit = C.box_count_fit(CARPET, range(2, 7))
    assert fit.exponent == pytest.approx(oracles.CARPET_BOX_DIM, abs=1e-9)


def test_lebesgue_circle_scaling():
    sc = C.neighborhood_measure_scaling(FULL3, CIRCLE, range(2, 7), depth_offset=1)
    assert sc.degenerate is None
    assert abs(sc.exponent - 1.0) <= 0.05


def test_point_mass_scaling_degenerate():
    sc = C.neighborhood_measure_scaling(DigitSystem(3, 2, [(0, 0)]), CIRCLE, range(2, 5))
    assert sc.degenerate and "zero" in sc.degenerate
    assert all(r == 0 for r in sc.ratios)


# -- sharpness -------------------------------------------------------------

NINE = list(range(9))


def test_sharpness_examples():
    r = C.sharpness_first_row(10, NINE, NINE, 2, 1)
    assert r.count >= 9 and r.prediction == 9 and r.passes
    r0 = C.sharpness_first_row(10, NINE, NINE, 2, 0)
    assert r0.delta == 1.0 and r0.count == 1
    r3 = C.sharpness_first_row(10, NINE, NINE, 3, 1)
    assert r3.count >= 81


@pytest.mark.parametrize("k,l", [(2, 1), (3, 1)])
def test_sharpness_against_brute_force(k, l):
    r = C.sharpness_first_row(10, NINE, NINE, k, l)
    raw = C.sharpness_first_row(10, NINE, NINE, k, l, prune=False)
    s = DigitSystem(10, 2, [(a, b) for a in NINE for b in NINE])
    region = ((Fraction(0), Fraction(1, 10 ** l)), (Fraction(0), Fraction(1, 10 ** (k * l))))
    ins, strad = oracles.brute_count(s, G.Superellipse(k), 10.0 ** -(k * l), k * l, region)
    assert r.count == raw.count == ins + strad


def test_sharpness_slope_k2():
    rows, fit, target = C.sharpness_slope(10, NINE, NINE, 2)
    assert target == pytest.approx(math.log(9) / math.log(10) / 2)
    assert fit.exponent >= target - 0.05


def test_sharpness_guards():
    with pytest.raises(ValueError):
        C.sharpness_first_row(10, [0, 2], NINE, 2, 1)
    with pytest.raises(ValueError):
        C.sharpness_first_row(10, NINE, NINE, 1, 1)
    with pytest.raises(ValueError):
        C.sharpness_first_row(10, list(range(10)), NINE, 2, 1)


# -- l search and sweeps ---------------------------------------------------


def test_l_search_lebesgue_passes_at_zero():
    res = C.l_search(FULL3, CIRCLE, ks=(2, 3, 4))
    assert res.applicable and res.l == 0


def test_l_search_carpet_finds_some_l():
    res = C.l_search(CARPET, CIRCLE, ks=(2, 3, 4, 5, 6))
    assert res.applicable and res.found
    assert all(row["count"] >= 0 for row in res.table)


def test_l_search_not_applicable():
    points = G.Circle((0.5,), 0.25)
    assert points.dim == 0
    res = C.l_search(DigitSystem(3, 1, (0, 2)), points)
    assert not res.applicable and "not applicable" in res.message


def test_l_search_exhaustion_lists_shortfalls():
    res = C.l_search(CARPET, CIRCLE, ks=(2, 3), c_threshold=1e6, l_max=1)
    assert res.applicable and res.l is None
    assert any(row["shortfall"] > 0 for row in res.table)


def test_sweep_point_mass_zero_and_lebesgue_positive():
    base, Ts, labels = C.circle_radius_grid((0.5, 0.5), [0.1, 0.3])
    zero = C.transform_sweep(DigitSystem(3, 2, [(0, 0)]), base, Ts, [2, 3, 4], depth_offset=1,
                             labels=labels)
    assert all(r == 0 for row in zero for r in row.ratios)
    pos = C.transform_sweep(FULL3, base, Ts, [2, 3, 4], depth_offset=1, labels=labels)
    assert all(row.bounded_away and min(row.ratios) > 0 for row in pos)


def test_sweep_hyperbola_family_on_carpet():
    H = G.Hyperbola(0.05)
    Ts = [G.SimilarityTransform(t, (0.0, 0.0), ((1, 0), (0, 1))) for t in (1.0, 2.0, 3.0)]
    rows = C.transform_sweep(CARPET, H, Ts, [2, 3, 4])
    assert len(rows) == 3 and all(min(r.ratios) >= 0 for r in rows)


def test_product_system_counts_match_digit_system():
    from digitlens.core import ProductSystem
    a = DigitSystem(3, 1, (0, 2))
    prod = ProductSystem((a, a))
    flat = DigitSystem(3, 2, [(0, 0), (0, 2), (2, 0), (2, 2)])
    x = C.count_cells_near(prod, CIRCLE, 1 / 27, 3)
    y = C.count_cells_near(flat, CIRCLE, 1 / 27, 3)
    assert (x.inside_count, x.straddle_count) == (y.inside_count, y.straddle_count)
    assert hausdorff_dim(prod) == pytest.approx(hausdorff_dim(flat))

import itertools

import numpy as np
import pytest

from greencomp.errors import EmptyUncertaintySet, SignPatternCapExceeded
from greencomp.model import PriceCurve
from greencomp.uncertainty import (
    EllipsoidalSet,
    PolyhedralSet,
    Singleton,
    SubHorizon,
    cost_terms,
    greedy_box_sum_lp,
    sample_realization,
    sign_pattern_maximize,
    worst_case_energy,
)


def _vertices(lo, hi, s_min, s_max):
    """Brute-force vertices of a box cut by one sum slab."""
    T = lo.size
    out = []
    for corner in itertools.product(*zip(lo, hi)):
        c = np.array(corner)
        if s_min - 1e-12 <= c.sum() <= s_max + 1e-12:
            out.append(c)
    for j in range(T):
        others = [t for t in range(T) if t != j]
        for corner in itertools.product(*[(lo[t], hi[t]) for t in others]):
            for s in (s_min, s_max):
                if not np.isfinite(s):
                    continue
                v = np.empty(T)
                v[others] = corner
                v[j] = s - sum(corner)
                if lo[j] - 1e-12 <= v[j] <= hi[j] + 1e-12:
                    out.append(v)
    return out


def test_box_example():
    prices = PriceCurve(np.array([1.0]), np.array([0.5]))
    e, value = worst_case_energy(PolyhedralSet(np.array([1.0]), np.array([3.0])),
                                 np.array([2.0]), prices)
    assert e == pytest.approx([1.0])
    assert value == pytest.approx(1.0)


def test_singleton_matches_direct_cost():
    prices = PriceCurve(np.array([0.4, 1.2, 0.7]), np.array([0.2, 0.6, 0.1]))
    point = np.array([1.0, 2.0, 0.5])
    p = np.array([2.0, 1.0, 0.5])
    e, value = worst_case_energy(Singleton(point), p, prices)
    d = p - point
    direct = np.sum(prices.alpha * np.maximum(d, 0) - prices.beta * np.maximum(-d, 0))
    assert np.array_equal(e, point)
    assert value == pytest.approx(direct)


def test_ellipsoid_closed_form():
    prices = PriceCurve(np.array([0.9]), np.array([0.3]))
    p = np.array([2.0])
    e, value = sign_pattern_maximize(EllipsoidalSet(p, np.eye(1)), p, prices)
    assert value == pytest.approx(0.9)
    assert e == pytest.approx([1.0])


def test_sum_constraint_pins_the_point():
    prices = PriceCurve(np.array([1.0, 1.0]), np.array([0.5, 0.5]))
    uset = PolyhedralSet(np.array([1.0, 1.0]), np.array([2.0, 2.0]),
                         (SubHorizon((0, 1), e_min=2.0, e_max=2.0),))
    e, _ = worst_case_energy(uset, np.array([0.0, 5.0]), prices)
    assert np.allclose(e, [1.0, 1.0])


def test_scarce_renewables_are_worst_when_buying():
    prices = PriceCurve(np.array([0.4, 1.2, 0.8]), np.array([0.2, 0.6, 0.3]))
    uset = PolyhedralSet(np.array([1.0, 1.0, 1.0]), np.array([2.0, 3.0, 2.0]),
                         (SubHorizon((0, 1, 2), e_min=4.0),))
    e, _ = worst_case_energy(uset, np.array([5.0, 5.0, 5.0]), prices)
    assert e.sum() == pytest.approx(4.0)
    assert uset.contains(e)


def test_matches_vertex_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(300):
        T = int(rng.integers(1, 5))
        lo = rng.uniform(0, 2, T)
        hi = lo + rng.uniform(0, 3, T)
        s_max = float(rng.uniform(lo.sum(), hi.sum())) if rng.random() < 0.7 else np.inf
        s_min = float(rng.uniform(lo.sum(), min(hi.sum(), s_max))) if rng.random() < 0.4 \
            else -np.inf
        sub = SubHorizon(tuple(range(T)), None if s_min == -np.inf else s_min,
                         None if s_max == np.inf else s_max)
        uset = PolyhedralSet(lo, hi, (sub,))
        alpha = rng.uniform(0.5, 2.0, T)
        prices = PriceCurve(alpha, alpha * rng.uniform(0.0, 0.9, T))
        p = rng.uniform(0, 5, T)
        e, value = worst_case_energy(uset, p, prices)
        brute = max(cost_terms(p, v, prices.psi, prices.phi).sum()
                    for v in _vertices(lo, hi, s_min, s_max))
        assert uset.contains(e)
        assert value == pytest.approx(brute, abs=1e-9)


def test_ellipsoid_optimum_on_boundary():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((3, 3))
    ell = EllipsoidalSet(np.array([1.0, 2.0, 1.5]), a @ a.T + 0.5 * np.eye(3))
    prices = PriceCurve(np.array([0.4, 1.2, 0.8]), np.array([0.2, 0.6, 0.3]))
    p = np.array([1.5, 1.0, 2.0])
    e, value = worst_case_energy(ell, p, prices)
    assert ell.contains(e)
    u = rng.standard_normal((2000, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    samples = ell.center + u @ np.linalg.cholesky(ell.shape).T
    assert np.all(cost_terms(p, samples, prices.psi, prices.phi).sum(axis=1) <= value + 1e-9)


def test_enlarging_the_set_never_lowers_the_worst_case():
    rng = np.random.default_rng(8)
    prices = PriceCurve(np.array([0.4, 1.2, 0.8]), np.array([0.2, 0.6, 0.3]))
    for _ in range(50):
        lo = rng.uniform(0, 1, 3)
        hi = lo + rng.uniform(0.1, 2, 3)
        p = rng.uniform(0, 4, 3)
        base = worst_case_energy(PolyhedralSet(lo, hi), p, prices)[1]
        bigger = hi.copy()
        bigger[int(rng.integers(3))] += 1.0
        assert worst_case_energy(PolyhedralSet(lo, bigger), p, prices)[1] >= base - 1e-12


def test_worst_case_fixed_at_lower_bound_when_not_binding():
    prices = PriceCurve(np.array([0.4, 1.2]), np.array([0.2, 0.6]))
    lo = np.array([1.0, 1.0])
    p = np.array([0.5, 0.8])
    e, value = worst_case_energy(PolyhedralSet(lo, np.array([2.0, 2.0])), p, prices)
    e2, value2 = worst_case_energy(PolyhedralSet(lo, np.array([5.0, 5.0])), p, prices)
    assert np.allclose(e, lo) and np.allclose(e2, lo)
    assert value == pytest.approx(value2)


def test_sign_pattern_cap():
    uset = PolyhedralSet(np.zeros(5), np.ones(5))
    prices = PriceCurve(np.ones(5), 0.5 * np.ones(5))
    with pytest.raises(SignPatternCapExceeded):
        sign_pattern_maximize(uset, np.ones(5), prices, cap=4)


def test_greedy_box_sum_lp():
    lo, hi = np.array([0.0, 1.0, 2.0]), np.array([1.0, 2.0, 4.0])
    assert np.allclose(greedy_box_sum_lp(np.array([1.0, -1.0, 2.0]), lo, hi), [1.0, 1.0, 4.0])
    cap = (SubHorizon((0, 1, 2), e_max=5.5),)
    capped = greedy_box_sum_lp(np.array([1.0, 3.0, 2.0]), lo, hi, cap)
    assert np.allclose(capped, [0.0, 2.0, 3.5])
    assert np.allclose(greedy_box_sum_lp(np.zeros(3), lo, hi), lo)


def test_empty_sets_rejected():
    with pytest.raises(EmptyUncertaintySet):
        PolyhedralSet(np.array([2.0]), np.array([1.0]))
    with pytest.raises(EmptyUncertaintySet):
        PolyhedralSet(np.array([1.0, 1.0]), np.array([2.0, 2.0]), (SubHorizon((0, 1), e_max=1.0),))
    with pytest.raises(EmptyUncertaintySet):
        EllipsoidalSet(np.zeros(2), -np.eye(2))


def test_sample_realization():
    uset = PolyhedralSet(np.array([1.0, 2.0]), np.array([3.0, 6.0]))
    rng = np.random.default_rng(0)
    assert np.array_equal(sample_realization(uset, 0.0, rng), uset.lower)
    draws = sample_realization(uset, 0.5, rng, size=100_000)
    assert draws.shape == (100_000, 2)
    assert np.all(draws >= uset.lower)
    assert np.all(draws <= uset.lower + 0.5 * (uset.upper - uset.lower))
    with pytest.raises(ValueError):
        sample_realization(uset, 1.5, rng)

import numpy as np
import pytest

from greencomp.cost import (
    project_to_band,
    tilde_g_subgradient,
    transaction_cost,
    transaction_cost_split,
    unbounded_slots,
    worst_cost,
)
from greencomp.model import PriceCurve
from greencomp.uncertainty import PolyhedralSet, Singleton, SubHorizon

TABLE_ONE_SLOT = PriceCurve(np.array([0.402]), np.array([0.201]))


def _prices(rng, T):
    alpha = rng.uniform(0.3, 1.5, T)
    return PriceCurve(alpha, alpha * rng.uniform(0.0, 0.95, T))


def test_transaction_cost_examples():
    assert transaction_cost(np.array([1.0]), np.array([1.0]), TABLE_ONE_SLOT) == 0.0
    one = np.array([1.0])
    assert transaction_cost(3 * one, one, TABLE_ONE_SLOT) == pytest.approx(0.804)
    assert transaction_cost(0 * one, one, TABLE_ONE_SLOT) == pytest.approx(-0.201)


def test_both_cost_forms_agree():
    rng = np.random.default_rng(0)
    for _ in range(200):
        prices = _prices(rng, 6)
        p, e = rng.uniform(0, 5, 6), rng.uniform(0, 5, 6)
        assert transaction_cost_split(p, e, prices) == pytest.approx(
            transaction_cost(p, e, prices), abs=1e-12)


def test_worst_cost_singleton_and_homogeneity():
    prices = PriceCurve(np.array([0.4, 1.2]), np.array([0.2, 0.6]))
    point = np.array([1.0, 2.0])
    p = np.array([2.0, 1.0])
    assert worst_cost(p, Singleton(point), prices).value == pytest.approx(
        transaction_cost(p, point, prices))
    box = PolyhedralSet(np.array([0.5, 0.5]), np.array([2.0, 3.0]))
    assert worst_cost(p, box, prices.scaled(3.0)).value == pytest.approx(
        3.0 * worst_cost(p, box, prices).value)


def test_worst_cost_box_example():
    prices = PriceCurve(np.array([1.0]), np.array([0.5]))
    value = worst_cost(np.array([2.0]), PolyhedralSet(np.array([1.0]), np.array([3.0])), prices)
    assert value.value == pytest.approx(1.0)


def test_worst_cost_dominates_feasible_realisations_and_is_convex():
    rng = np.random.default_rng(1)
    prices = _prices(rng, 4)
    box = PolyhedralSet(rng.uniform(0, 1, 4), rng.uniform(1, 3, 4))
    p, q = rng.uniform(0, 4, 4), rng.uniform(0, 4, 4)
    worst = worst_cost(p, box, prices).value
    for e in box.lower + rng.random((1000, 4)) * (box.upper - box.lower):
        assert transaction_cost(p, e, prices) <= worst + 1e-12
    mid = worst_cost(0.5 * (p + q), box, prices).value
    assert mid <= 0.5 * (worst + worst_cost(q, box, prices).value) + 1e-12


def test_subgradient_examples():
    prices = PriceCurve(np.array([0.402, 0.44]), np.array([0.201, 0.22]))
    box = PolyhedralSet(np.array([0.5, 0.5]), np.array([1.0, 1.0]))
    out = tilde_g_subgradient(np.array([3.0, 3.0]), np.zeros(2), box, prices)
    assert np.allclose(out.subgrad, prices.alpha)
    out = tilde_g_subgradient(np.array([3.0, 3.0]), np.array([0.1, 0.1]), box, prices)
    assert out.subgrad[0] == pytest.approx(0.302)
    out = tilde_g_subgradient(np.array([0.0, 3.0]), np.zeros(2), box, prices)
    assert out.subgrad[0] == pytest.approx(0.201)


def test_subgradient_takes_buy_side_at_the_kink():
    prices = PriceCurve(np.array([0.8]), np.array([0.3]))
    out = tilde_g_subgradient(np.array([1.0]), np.array([0.5]), Singleton(np.array([1.0])), prices)
    assert out.subgrad[0] == pytest.approx(0.3)


def test_subgradient_inequality():
    rng = np.random.default_rng(2)
    for _ in range(200):
        prices = _prices(rng, 5)
        uset = PolyhedralSet(rng.uniform(0, 1, 5), rng.uniform(1, 3, 5),
                             (SubHorizon((0, 1, 2), e_max=4.0), SubHorizon((3, 4))))
        lam = rng.uniform(prices.beta, prices.alpha)
        p, q = rng.uniform(0, 4, 5), rng.uniform(0, 4, 5)
        at_p = tilde_g_subgradient(p, lam, uset, prices)
        at_q = tilde_g_subgradient(q, lam, uset, prices)
        assert at_q.value >= at_p.value + at_p.subgrad @ (q - p) - 1e-9


def test_subgradient_matches_central_differences():
    rng = np.random.default_rng(3)
    prices = _prices(rng, 4)
    point = rng.uniform(1, 2, 4)
    lam = rng.uniform(prices.beta, prices.alpha)
    p = point + np.array([0.5, -0.4, 0.3, -0.6])
    out = tilde_g_subgradient(p, lam, Singleton(point), prices)
    delta = 1e-6
    for t in range(4):
        step = np.zeros(4)
        step[t] = delta
        up = tilde_g_subgradient(p + step, lam, Singleton(point), prices).value
        down = tilde_g_subgradient(p - step, lam, Singleton(point), prices).value
        assert (up - down) / (2 * delta) == pytest.approx(out.subgrad[t], abs=1e-6)


def test_price_band_helpers():
    prices = PriceCurve(np.array([0.4, 1.2, 0.8]), np.array([0.2, 0.6, 0.3]))
    lam = np.array([0.5, 0.7, 0.1])
    assert unbounded_slots(lam, prices) == [0, 2]
    assert np.allclose(project_to_band(lam, prices), [0.4, 0.7, 0.3])
    assert unbounded_slots(project_to_band(lam, prices), prices) == []

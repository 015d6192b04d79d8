import numpy as np
import pytest

from greencomp.errors import IndexOutOfRange, InstanceValidationError
from greencomp.model import (
    BatteryParams,
    ChannelEstimate,
    Dimensions,
    PriceCurve,
    evaluate_sinr,
    selection_matrix,
)


def test_price_curve_derives_psi_phi():
    prices = PriceCurve(np.array([0.4, 1.2]), np.array([0.2, 0.6]))
    assert np.allclose(prices.psi, [0.1, 0.3])
    assert np.allclose(prices.phi, [0.3, 0.9])
    assert np.all(prices.phi > prices.psi)


def test_price_curve_rejects_equal_prices():
    with pytest.raises(InstanceValidationError) as err:
        PriceCurve(np.array([0.4]), np.array([0.4]))
    assert "alpha^t > beta^t" in str(err.value)


def test_battery_row_accepted_and_bad_efficiency_rejected():
    BatteryParams(C0=5.0, Cmax=30.0, PbMin=-10.0, PbMax=10.0, varpi=0.95)
    with pytest.raises(InstanceValidationError):
        BatteryParams(C0=5.0, Cmax=30.0, PbMin=-10.0, PbMax=10.0, varpi=1.5)
    with pytest.raises(InstanceValidationError):
        BatteryParams(C0=40.0, Cmax=30.0, PbMin=-10.0, PbMax=10.0, varpi=0.95)


def test_negative_radius_rejected():
    with pytest.raises(InstanceValidationError) as err:
        ChannelEstimate(np.ones(2), epsilon=-0.1, sigma2=1.0, gamma=0.1)
    assert err.value.invariant == "epsilon >= 0"


def test_selection_matrix_examples():
    assert np.array_equal(np.diag(selection_matrix(1, Dimensions(1, 2, 1, 2))), [0, 0, 1, 1])
    assert np.array_equal(selection_matrix(0, Dimensions(1, 1, 1, 3)), np.eye(3))
    assert np.allclose(np.diag(selection_matrix(0, Dimensions(1, 2, 1, 2), xi=2.0)),
                       [0.5, 0.5, 0, 0])


def test_selection_matrices_sum_to_identity():
    dims = Dimensions(T=1, I=3, K=1, M=2)
    xi = 1.7
    total = sum(xi * selection_matrix(i, dims, xi) for i in range(dims.I))
    assert np.allclose(total, np.eye(dims.n))


def test_selection_matrix_index_out_of_range():
    with pytest.raises(IndexOutOfRange):
        selection_matrix(2, Dimensions(1, 2, 1, 2))


def test_evaluate_sinr_examples():
    h = np.array([1.0, 1.0j])
    assert evaluate_sinr(h[None, :], h, 1.0, 0) == pytest.approx(4.0)
    assert evaluate_sinr(np.zeros((1, 2)), h, 1.0, 0) == 0.0
    w = np.array([[2.0, 0.0], [0.0, 3.0]])
    assert evaluate_sinr(w, np.array([1.0, 0.0]), 0.5, 0) == pytest.approx(4.0 / 0.5)


def test_evaluate_sinr_phase_invariant():
    rng = np.random.default_rng(3)
    w = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    rotated = w * np.exp(1j * rng.uniform(0, 2 * np.pi, size=(3, 1)))
    for k in range(3):
        assert evaluate_sinr(rotated, h, 0.7, k) == pytest.approx(evaluate_sinr(w, h, 0.7, k))


def test_instance_helpers(tiny_instance):
    assert tiny_instance.dims.n == 2
    assert tiny_instance.prices_for(1) is tiny_instance.prices
    assert np.array_equal(tiny_instance.selection_diagonals(), np.eye(2))
    nominal = tiny_instance.replace_channels(
        tuple(tuple(ch.with_epsilon(0.0) for ch in row) for row in tiny_instance.channels)
    )
    assert nominal.channel(1, 1).epsilon == 0.0
    assert tiny_instance.channel(1, 1).epsilon == 0.05

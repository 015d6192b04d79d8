import numpy as np
import pytest

from greencomp.evaluation import boundary_perturbations
from greencomp.extraction import extract_slot
from greencomp.ingest import build_instance
from greencomp.linalg import is_psd, min_eigenvalue
from greencomp.model import ChannelEstimate, evaluate_sinr
from greencomp.sdp import (
    SdpMode,
    SdpStatus,
    SlotSubproblem,
    build_gamma,
    build_slot_subproblem,
    solve_slot_sdp,
)
from greencomp.sdp.lmi import hermitian_from_params, hermitian_params


def _single_user(epsilon: float, mode: SdpMode) -> SlotSubproblem:
    return SlotSubproblem(
        t=0,
        weights=np.array([1.0]),
        channels=(ChannelEstimate(np.array([1.0]), epsilon, 1.0, 1.0),),
        selection=np.array([[1.0]]),
        headroom=np.array([10.0]),
        mode=mode,
    )


def test_gamma_of_zero_beamformers():
    ch = ChannelEstimate(np.array([1.0, 1j]), 0.1, 2.0, 0.5)
    G = build_gamma(np.zeros((2, 2, 2)), 0, ch, 0.0).data
    expected = np.zeros((3, 3))
    expected[2, 2] = -2.0
    np.testing.assert_allclose(G, expected)


def test_gamma_tau_shifts_diagonal():
    ch = ChannelEstimate(np.array([1.0, 0.0]), 0.5, 1.0, 1.0)
    G = build_gamma(np.zeros((1, 2, 2)), 0, ch, 2.0).data
    np.testing.assert_allclose(np.diag(G).real, [2.0, 2.0, -1.0 - 2.0 * 0.25])


def test_gamma_rejects_negative_tau():
    ch = ChannelEstimate(np.array([1.0]), 0.1, 1.0, 1.0)
    with pytest.raises(ValueError):
        build_gamma(np.zeros((1, 1, 1)), 0, ch, -1.0)


def test_gamma_psd_iff_worst_case_sinr_met():
    # single user, |h| = 1, eps = 0.5: worst-case gain is 0.25 X
    ch = ChannelEstimate(np.array([1.0]), 0.5, 1.0, 1.0)
    assert is_psd(build_gamma(np.array([[[4.0]]]), 0, ch, 4.0), tol=1e-9)
    assert min_eigenvalue(build_gamma(np.array([[[3.9]]]), 0, ch, 4.0)) < 0.0


def test_hermitian_parametrisation_roundtrip():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    X = A @ A.conj().T
    np.testing.assert_allclose(hermitian_from_params(hermitian_params(X), 3), X, atol=1e-12)


def test_single_user_nonrobust_power():
    sol = solve_slot_sdp(_single_user(0.0, SdpMode.NONROBUST))
    assert sol.status is SdpStatus.OPTIMAL
    assert sol.objective == pytest.approx(1.0, abs=1e-6)
    assert sol.X[0, 0, 0].real == pytest.approx(1.0, abs=1e-6)


def test_single_user_robust_power():
    sol = solve_slot_sdp(_single_user(0.5, SdpMode.ROBUST))
    assert sol.status is SdpStatus.OPTIMAL
    # (|h| - eps)^2 X >= gamma * sigma2
    assert sol.objective == pytest.approx(4.0, abs=1e-5)
    assert sol.tau[0] == pytest.approx(4.0, abs=1e-3)
    assert sol.kkt["min_eig_gamma"] > -1e-6


def test_robust_costs_at_least_nonrobust(tiny_instance):
    w = np.array([0.4, 0.6])
    robust = solve_slot_sdp(build_slot_subproblem(tiny_instance, 0, w, SdpMode.ROBUST))
    nominal = solve_slot_sdp(build_slot_subproblem(tiny_instance, 0, w, SdpMode.NONROBUST))
    assert robust.status is nominal.status is SdpStatus.OPTIMAL
    assert robust.objective >= nominal.objective - 1e-6


@pytest.mark.parametrize("t", [0, 1])
def test_zero_radius_robust_matches_nonrobust(make_document, t):
    instance = build_instance(make_document(epsilon=0.0))
    w = np.array([0.4, 0.6])
    robust = solve_slot_sdp(build_slot_subproblem(instance, t, w, SdpMode.ROBUST))
    nominal = solve_slot_sdp(build_slot_subproblem(instance, t, w, SdpMode.NONROBUST))
    assert robust.status is nominal.status is SdpStatus.OPTIMAL
    assert robust.objective == pytest.approx(nominal.objective, abs=1e-6)


def test_objective_scales_with_weights(tiny_instance):
    base = solve_slot_sdp(build_slot_subproblem(tiny_instance, 1, np.array([0.5, 0.5])))
    doubled = solve_slot_sdp(build_slot_subproblem(tiny_instance, 1, np.array([1.0, 1.0])))
    heavier = solve_slot_sdp(build_slot_subproblem(tiny_instance, 1, np.array([0.5, 1.0])))
    assert doubled.objective == pytest.approx(2.0 * base.objective, rel=1e-5)
    assert heavier.objective >= base.objective - 1e-7


def test_solution_respects_power_caps(tiny_instance):
    sub = build_slot_subproblem(tiny_instance, 0, np.array([0.4, 0.6]))
    sol = solve_slot_sdp(sub)
    power = sol.power(sub.selection)
    assert np.all(power >= -1e-7)
    assert np.all(power <= sub.headroom + 1e-7)
    assert sol.kkt["power_violation"] <= 1e-7
    assert all(min_eigenvalue(Xk) >= -1e-7 for Xk in sol.X)


def test_unreachable_target_is_infeasible(make_document):
    instance = build_instance(make_document(gamma=1e6))
    sub = build_slot_subproblem(instance, 0, np.array([0.4, 0.6]))
    sol = solve_slot_sdp(sub)
    assert sol.status is SdpStatus.INFEASIBLE
    assert sol.culprits
    assert set(sol.culprits) <= {0, 1}


def test_weights_validated(tiny_instance):
    with pytest.raises(ValueError):
        build_slot_subproblem(tiny_instance, 0, np.array([1.0]))
    with pytest.raises(ValueError):
        build_slot_subproblem(tiny_instance, 0, np.array([1.0, np.inf]))


def test_unknown_backend(tiny_instance):
    sub = build_slot_subproblem(tiny_instance, 0, np.array([0.4, 0.6]))
    with pytest.raises(ValueError):
        solve_slot_sdp(sub, backend="sedumi")


def test_beamformers_hold_target_over_uncertainty_ball(tiny_instance):
    t = 0
    sol = solve_slot_sdp(build_slot_subproblem(tiny_instance, t, np.array([0.4, 0.6])))
    ex = extract_slot(sol.X, tiny_instance, t, rng=np.random.default_rng(0))
    rng = np.random.default_rng(11)
    for k in range(tiny_instance.dims.K):
        ch = tiny_instance.channel(k, t)
        for d in boundary_perturbations(rng, 200, tiny_instance.dims.n, ch.epsilon):
            sinr = evaluate_sinr(ex.w, ch.hHat + d, ch.sigma2, k)
            assert sinr >= ch.gamma * (1.0 - 1e-5)


def test_cvxpy_backend_agrees(tiny_instance):
    pytest.importorskip("cvxpy")
    sub = build_slot_subproblem(tiny_instance, 0, np.array([0.4, 0.6]))
    ours = solve_slot_sdp(sub, backend="ipm")
    ref = solve_slot_sdp(sub, backend="cvxpy", strict=False)
    if ref.status is not SdpStatus.OPTIMAL:
        pytest.skip("no SDP-capable cvxpy solver installed")
    assert ours.objective == pytest.approx(ref.objective, rel=1e-4, abs=1e-6)

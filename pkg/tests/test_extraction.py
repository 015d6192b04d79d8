import numpy as np
import pytest

from greencomp.errors import NotRankOne, RankDeficient, RoundingFailed
from greencomp.evaluation import boundary_perturbations
from greencomp.extraction import (
    ExtractionMethod,
    canonical_phase,
    certify_candidate,
    extract_rank_one,
    extract_schedule,
    extract_slot,
    randomized_round,
    rank_one_ratio,
    worst_case_margin,
)
from greencomp.ingest import build_instance
from greencomp.model import ChannelEstimate, Schedule
from greencomp.sdp import SdpStatus, build_slot_subproblem, solve_slot_sdp


def _unit_phase(w):
    j = int(np.argmax(np.abs(w)))
    return abs(w[j].imag) < 1e-12 and w[j].real >= 0.0


def test_canonical_phase_fixes_largest_entry():
    w = np.array([0.3 + 0.4j, -2.0j, 0.1])
    c = canonical_phase(w)
    assert _unit_phase(c)
    np.testing.assert_allclose(np.abs(c), np.abs(w))
    np.testing.assert_allclose(canonical_phase(np.exp(0.7j) * w), c, atol=1e-12)


def test_canonical_phase_of_zero():
    np.testing.assert_array_equal(canonical_phase(np.zeros(2, dtype=complex)), np.zeros(2))


def test_rank_one_recovers_vector():
    w = np.array([1.0 - 0.5j, 0.25 + 2.0j])
    got = extract_rank_one(np.outer(w, w.conj()))
    np.testing.assert_allclose(got, canonical_phase(w), atol=1e-10)
    np.testing.assert_allclose(np.outer(got, got.conj()), np.outer(w, w.conj()), atol=1e-10)


def test_rank_one_ratio_examples():
    assert rank_one_ratio(np.diag([4.0, 1.0])) == pytest.approx(0.25)
    assert rank_one_ratio(np.zeros((2, 2))) == 0.0
    assert rank_one_ratio(np.array([[3.0]])) == 0.0


def test_zero_matrix_is_rank_deficient():
    with pytest.raises(RankDeficient):
        extract_rank_one(np.zeros((2, 2)))


def test_full_rank_is_not_rank_one():
    with pytest.raises(NotRankOne) as exc:
        extract_rank_one(np.diag([2.0, 1.0]))
    assert exc.value.ratio == pytest.approx(0.5)


def test_margin_of_scalar_channel():
    ch = ChannelEstimate(np.array([1.0]), 0.5, 1.0, 1.0)
    assert worst_case_margin(np.array([[2.0]]), ch) == pytest.approx(0.5, rel=1e-8)


def test_margin_without_uncertainty_is_nominal():
    ch = ChannelEstimate(np.array([1.0, 1j]), 0.0, 1.0, 1.0)
    Y = np.array([[1.0, 0.5], [0.5, -2.0]])
    h = ch.hHat
    assert worst_case_margin(Y, ch) == pytest.approx(float(np.real(h.conj() @ Y @ h)))


def test_margin_is_minimum_over_ball():
    rng = np.random.default_rng(2)
    U, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    Y = U @ np.diag([3.0, -0.5]) @ U.conj().T
    ch = ChannelEstimate(np.array([1.0, 0.5j]), 0.3, 1.0, 1.0)
    margin = worst_case_margin(Y, ch)
    d = boundary_perturbations(rng, 20000, 2, ch.epsilon)
    H = ch.hHat[None, :] + d
    sampled = np.real(np.einsum("sa,ab,sb->s", H.conj(), Y, H))
    assert margin <= sampled.min() + 1e-9
    assert sampled.min() - margin <= 1e-2 * (1.0 + abs(margin))


def _spread_slot(instance, scale=0.5):
    n = instance.dims.n
    return np.stack([scale * np.eye(n, dtype=complex) for _ in range(instance.dims.K)])


def test_randomized_round_is_certified(tiny_instance):
    res = randomized_round(_spread_slot(tiny_instance), tiny_instance, 0, n_samples=200,
                           rng=np.random.default_rng(4))
    assert res.method is ExtractionMethod.RANDOMIZED
    assert res.feasibility_scaled
    channels = [tiny_instance.channel(k, 0) for k in range(tiny_instance.dims.K)]
    need = certify_candidate(res.w, channels)
    assert need is not None and need <= 1.0 + 1e-6
    power = tiny_instance.selection_diagonals() @ np.sum(np.abs(res.w) ** 2, axis=0)
    headroom = np.array([b.PgMax - b.Pc for b in tiny_instance.bs])
    assert np.all(power <= headroom * (1.0 + 1e-6))
    assert all(_unit_phase(w) for w in res.w)


def test_rounding_is_seeded(tiny_instance):
    Xs = _spread_slot(tiny_instance)
    a = randomized_round(Xs, tiny_instance, 1, 50, np.random.default_rng(9))
    b = randomized_round(Xs, tiny_instance, 1, 50, np.random.default_rng(9))
    np.testing.assert_array_equal(a.w, b.w)


def test_rounding_fails_when_targets_unreachable(make_document):
    instance = build_instance(make_document(gamma=1e6))
    with pytest.raises(RoundingFailed):
        randomized_round(_spread_slot(instance), instance, 0, 20, np.random.default_rng(0))


def test_extract_slot_prefers_eigenvectors(tiny_instance):
    W = np.array([[1.0, 0.2j], [0.1, -0.8]])
    Xs = np.einsum("ka,kb->kab", W, W.conj())
    res = extract_slot(Xs, tiny_instance, 0)
    assert res.method is ExtractionMethod.RANK_ONE
    assert not res.feasibility_scaled
    np.testing.assert_allclose(res.w, np.stack([canonical_phase(w) for w in W]), atol=1e-10)


def test_extract_slot_falls_back_to_rounding(tiny_instance):
    res = extract_slot(_spread_slot(tiny_instance), tiny_instance, 0, n_samples=100,
                       rng=np.random.default_rng(1))
    assert res.method is ExtractionMethod.RANDOMIZED
    np.testing.assert_allclose(res.ratios, 1.0)


def test_extract_schedule_fills_beamformers(tiny_instance):
    d = tiny_instance.dims
    X = np.stack([_spread_slot(tiny_instance) for _ in range(d.T)], axis=1)
    zeros = np.zeros((d.I, d.T))
    sched = Schedule(zeros, zeros.copy(), zeros.copy(), X, np.zeros((d.K, d.T)))
    result = extract_schedule(sched, tiny_instance, n_samples=50, seed=3)
    assert sched.w.shape == (d.K, d.T, d.n)
    assert result.methods == [ExtractionMethod.RANDOMIZED] * d.T
    assert sched.extraction["methods"] == ["randomized"] * d.T
    assert sched.extraction["feasibility_scaled"] is True

    again = Schedule(zeros, zeros.copy(), zeros.copy(), X, np.zeros((d.K, d.T)))
    extract_schedule(again, tiny_instance, n_samples=50, seed=3)
    np.testing.assert_array_equal(again.w, sched.w)


def test_rank_two_slot_rounds_near_sdp_bound(tiny_instance):
    sol = solve_slot_sdp(build_slot_subproblem(tiny_instance, 0, np.ones(2)))
    assert sol.status is SdpStatus.OPTIMAL
    bound = sol.objective  # unit weights: total transmit power
    spread = []
    for X in sol.X:
        lam, V = np.linalg.eigh(X)
        v = V[:, -1]
        spread.append(X + 0.05 * lam[-1] * (np.eye(2) - np.outer(v, v.conj())))
    Xs = np.stack(spread)
    assert all(rank_one_ratio(X) > 1e-3 for X in Xs)
    for seed in range(20):
        res = randomized_round(Xs, tiny_instance, 0, n_samples=50,
                               rng=np.random.default_rng(seed))
        total = float(np.sum(np.abs(res.w) ** 2))
        assert bound * (1.0 - 1e-4) <= total <= 1.1 * bound, seed

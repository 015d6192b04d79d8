"""Beamformer recovery from lifted slot solutions.

A slot whose lifted matrices are all rank one (to ``Settings.RANK_ONE_TOL``)
yields its principal eigenvectors directly. Otherwise candidates are drawn
from complex Gaussians with the lifted matrices as covariances; each candidate
set is rescaled by one common factor until every worst-case SINR constraint
holds, and the cheapest set that respects the power caps is kept.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import NotRankOne, RankDeficient, RoundingFailed
from .linalg import eigh
from .model import ChannelEstimate, ProblemInstance, Schedule
from .settings import get_settings

logger = logging.getLogger(__name__)

_ZERO_EIG = 1e-12
_CAP_TOL = 1e-7


class ExtractionMethod(enum.Enum):
    RANK_ONE = "rank_one"
    RANDOMIZED = "randomized"


def rank_one_ratio(X: np.ndarray) -> float:
    """``lambda_2 / lambda_1`` of a PSD matrix; 0 for order one or a zero matrix."""
    lam, _ = eigh(np.asarray(X, dtype=complex))
    if lam[-1] <= _ZERO_EIG or lam.size == 1:
        return 0.0
    return float(max(lam[-2], 0.0) / lam[-1])


def canonical_phase(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    j = int(np.argmax(np.abs(w)))
    if abs(w[j]) == 0.0:
        return w
    return w * (np.conj(w[j]) / abs(w[j]))


def extract_rank_one(X: np.ndarray, tol: Optional[float] = None) -> np.ndarray:
    """Scaled principal eigenvector of ``X`` with its largest entry real and nonnegative."""
    tol = get_settings().RANK_ONE_TOL if tol is None else tol
    lam, V = eigh(np.asarray(X, dtype=complex))
    if lam[-1] <= _ZERO_EIG:
        raise RankDeficient(f"largest eigenvalue {lam[-1]:.3e} is not positive")
    ratio = float(max(lam[-2], 0.0) / lam[-1]) if lam.size > 1 else 0.0
    if ratio > tol:
        raise NotRankOne(ratio)
    return canonical_phase(np.sqrt(lam[-1]) * V[:, -1])


def worst_case_margin(Y: np.ndarray, channel: ChannelEstimate) -> float:
    """``min (h + d)^H Y (h + d)`` over ``||d|| <= epsilon``.

    Exact through the S-procedure: in the eigenbasis of ``Y`` the bound at
    multiplier ``tau`` is ``tau * (sum_j d_j |c_j|^2 / (d_j + tau) - eps^2)``,
    concave in ``tau``, and its maximum is the minimum over the ball.
    """
    h = channel.hHat
    nominal = float(np.real(h.conj() @ Y @ h))
    eps2 = channel.epsilon**2
    if eps2 == 0.0:
        return nominal
    d, U = eigh(Y)
    if d[-1] <= 0.0:
        # Y is negative semidefinite; the margin is not positive either way
        return nominal
    c2 = np.abs(U.conj().T @ h) ** 2

    def bound(tau: float) -> float:
        return float(tau * (np.sum(d * c2 / (d + tau)) - eps2))

    lo = max(0.0, -float(d[0]))
    span = max(2.0 * abs(float(d[0])), 2.0 * float(np.sum(c2 * np.maximum(d, 0.0))) / eps2) + 1.0
    res = minimize_scalar(lambda tau: -bound(tau), bounds=(lo + 1e-12 * (1.0 + lo), lo + span),
                          method="bounded", options={"xatol": 1e-12 * (1.0 + span)})
    return -float(res.fun)


def _interference_matrix(W: np.ndarray, k: int, gamma: float) -> np.ndarray:
    outer = np.einsum("ka,kb->kab", W, W.conj())
    return outer[k] / gamma - (outer.sum(axis=0) - outer[k])


@dataclass
class SlotExtraction:
    t: int
    w: np.ndarray  # (K, n)
    method: ExtractionMethod
    ratios: np.ndarray  # (K,)
    feasibility_scaled: bool = False
    scale: float = 1.0
    samples_feasible: int = 0


def certify_candidate(
    W: np.ndarray, channels: Sequence[ChannelEstimate]
) -> Optional[float]:
    """Squared common factor making every worst-case SINR constraint tight or better.

    ``None`` when some user's worst-case margin is not positive, so no scaling helps.
    """
    need = 0.0
    for k, ch in enumerate(channels):
        m = worst_case_margin(_interference_matrix(W, k, ch.gamma), ch)
        if m <= 0.0:
            return None
        need = max(need, ch.sigma2 / m)
    return need


def randomized_round(
    Xs: np.ndarray,
    instance: ProblemInstance,
    slot: int,
    n_samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> SlotExtraction:
    """Gaussian randomisation with common rescaling for one slot.

    The principal-eigenvector set is tried first, then ``n_samples`` draws of
    ``w_k = V_k Lambda_k^(1/2) z``. Raises :class:`RoundingFailed` when no
    candidate can be scaled to feasibility within the power caps.
    """
    n_samples = get_settings().ROUNDING_SAMPLES if n_samples is None else n_samples
    rng = rng if rng is not None else np.random.default_rng(0)
    Xs = np.asarray(Xs, dtype=complex)
    K, n = Xs.shape[0], Xs.shape[1]
    channels = [instance.channel(k, slot) for k in range(K)]
    sel = instance.selection_diagonals()
    headroom = np.array([b.PgMax - b.Pc for b in instance.bs])

    factors: List[np.ndarray] = []
    principal = np.zeros((K, n), dtype=complex)
    ratios = np.zeros(K)
    for k in range(K):
        lam, V = eigh(Xs[k])
        lam = np.maximum(lam, 0.0)
        factors.append(V * np.sqrt(lam)[None, :])
        if lam[-1] > _ZERO_EIG:
            principal[k] = canonical_phase(np.sqrt(lam[-1]) * V[:, -1])
            ratios[k] = lam[-2] / lam[-1] if n > 1 else 0.0

    def candidates():
        yield principal
        for _ in range(n_samples):
            z = (rng.standard_normal((K, n)) + 1j * rng.standard_normal((K, n))) / np.sqrt(2.0)
            yield np.einsum("kab,kb->ka", np.stack(factors), z)

    best: Optional[Tuple[float, np.ndarray, float]] = None
    feasible = 0
    for W in candidates():
        need = certify_candidate(W, channels)
        if need is None:
            continue
        per_bs = need * (sel @ np.sum(np.abs(W) ** 2, axis=0))
        if np.any(per_bs > headroom + _CAP_TOL * (1.0 + headroom)):
            continue
        feasible += 1
        total = float(per_bs.sum())
        if best is None or total < best[0]:
            best = (total, np.sqrt(need) * W, float(np.sqrt(need)))
    if best is None:
        raise RoundingFailed(
            f"slot {slot}: none of {n_samples} candidates scales to feasibility within power caps"
        )
    _, W, scale = best
    W = np.stack([canonical_phase(w) for w in W])
    logger.debug("slot %d rounding: %d/%d feasible candidates, power %.6g", slot, feasible,
                 n_samples + 1, best[0])
    return SlotExtraction(slot, W, ExtractionMethod.RANDOMIZED, ratios, True, scale, feasible)


def extract_slot(
    Xs: np.ndarray,
    instance: ProblemInstance,
    slot: int,
    tol: Optional[float] = None,
    n_samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> SlotExtraction:
    tol = get_settings().RANK_ONE_TOL if tol is None else tol
    Xs = np.asarray(Xs, dtype=complex)
    K, n = Xs.shape[0], Xs.shape[1]
    W = np.zeros((K, n), dtype=complex)
    ratios = np.zeros(K)
    try:
        for k in range(K):
            ratios[k] = rank_one_ratio(Xs[k])
            try:
                W[k] = extract_rank_one(Xs[k], tol)
            except RankDeficient:
                W[k] = 0.0
    except NotRankOne:
        return randomized_round(Xs, instance, slot, n_samples, rng)
    return SlotExtraction(slot, W, ExtractionMethod.RANK_ONE, ratios)


@dataclass
class ExtractionResult:
    w: np.ndarray  # (K, T, n)
    methods: List[ExtractionMethod]  # per slot
    ratios: np.ndarray  # (K, T)
    feasibility_scaled: bool
    slots: List[SlotExtraction] = field(default_factory=list, repr=False)

    def summary(self) -> Dict[str, Any]:
        return {
            "methods": [m.value for m in self.methods],
            "max_ratio": float(self.ratios.max(initial=0.0)),
            "rank_one_share": float(np.mean(self.ratios <= get_settings().RANK_ONE_TOL)),
            "feasibility_scaled": self.feasibility_scaled,
        }


def extract_schedule(
    schedule: Schedule,
    instance: ProblemInstance,
    tol: Optional[float] = None,
    n_samples: Optional[int] = None,
    seed: int = 0,
) -> ExtractionResult:
    """Fill ``schedule.w`` slot by slot; each slot draws from its own seeded stream."""
    K, T = schedule.X.shape[0], schedule.X.shape[1]
    streams = np.random.SeedSequence(seed).spawn(T)
    slots = [
        extract_slot(schedule.X[:, t], instance, t, tol, n_samples,
                     np.random.default_rng(streams[t]))
        for t in range(T)
    ]
    w = np.stack([s.w for s in slots], axis=1)
    result = ExtractionResult(
        w=w,
        methods=[s.method for s in slots],
        ratios=np.stack([s.ratios for s in slots], axis=1),
        feasibility_scaled=any(s.feasibility_scaled for s in slots),
        slots=slots,
    )
    rounded = [s.t for s in slots if s.method is ExtractionMethod.RANDOMIZED]
    if rounded:
        logger.warning("lifted solutions not rank one in slots %s; used randomized rounding",
                       rounded)
    schedule.w = w
    schedule.extraction = result.summary()
    return result

"""Monte-Carlo evaluation of schedules: SINR and cost distributions, price response.

Every table is built from a seeded ``numpy`` generator whose draws are taken in
a fixed order (slot, then user, then BS), so identical configurations yield
identical tables.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .agents.orchestrator import MessageLog, run_distributed
from .coordinator import ConvergenceReport, SolveOptions, solve
from .cost import worst_cost
from .extraction import ExtractionResult, extract_schedule
from .model import PriceCurve, ProblemInstance, Schedule
from .sdp import SdpMode
from .uncertainty import (
    EllipsoidalSet,
    PolyhedralSet,
    Singleton,
    UncertaintySet,
    sample_realization,
)

logger = logging.getLogger(__name__)

_SINR_RTOL = 1e-6
_DOMINANCE_TOL = 1e-9


class EvalMode(enum.Enum):
    ROBUST = "robust"
    NONROBUST = "nonrobust"
    HEURISTIC = "heuristic"


@dataclass(frozen=True)
class EvalConfig:
    n_channel: int = 5000
    n_res: int = 100_000
    kappas: Tuple[float, ...] = (0.01, 0.1, 0.5)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_channel < 1 or self.n_res < 1:
            raise ValueError("realization counts must be at least 1")
        if any(not 0.0 <= k <= 1.0 for k in self.kappas):
            raise ValueError(f"kappa values must lie in [0, 1], got {self.kappas}")


@dataclass(frozen=True)
class CdfTable:
    values: np.ndarray
    probabilities: np.ndarray

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "CdfTable":
        v = np.sort(np.asarray(samples, dtype=float).reshape(-1))
        if v.size == 0:
            raise ValueError("empirical CDF needs at least one sample")
        return cls(v, np.arange(1, v.size + 1) / v.size)

    def __len__(self) -> int:
        return int(self.values.size)

    def at(self, x: float) -> float:
        """Empirical ``P(X <= x)``."""
        return float(np.searchsorted(self.values, x, side="right") / self.values.size)

    def frame(self, **labels) -> pd.DataFrame:
        df = pd.DataFrame({"value": self.values, "probability": self.probabilities})
        for col, val in reversed(list(labels.items())):
            df.insert(0, col, val)
        return df


@dataclass
class SinrReport:
    mode: str
    tables: Dict[int, CdfTable]  # per user, samples over realizations and slots
    violation_rate: float
    per_user_violation: np.ndarray

    def frame(self) -> pd.DataFrame:
        parts = [tab.frame(mode=self.mode, user=k) for k, tab in sorted(self.tables.items())]
        return pd.concat(parts, ignore_index=True)


def boundary_perturbations(
    rng: np.random.Generator, n: int, dim: int, radius: float
) -> np.ndarray:
    """``n`` circularly-symmetric complex Gaussian draws rescaled onto the sphere of ``radius``."""
    d = (rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))) / np.sqrt(2.0)
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    return d * (radius / np.where(norms > 0.0, norms, 1.0))


def sinr_cdf(
    schedule: Schedule,
    instance: ProblemInstance,
    config: Optional[EvalConfig] = None,
    mode: EvalMode = EvalMode.ROBUST,
) -> SinrReport:
    cfg = config or EvalConfig()
    if schedule.w is None:
        raise ValueError("schedule has no extracted beamformers; run extraction first")
    rng = np.random.default_rng(cfg.seed)
    d = instance.dims
    samples = np.zeros((d.K, d.T, cfg.n_channel))
    below = np.zeros((d.K, d.T, cfg.n_channel), dtype=bool)
    for t in range(d.T):
        W = schedule.w[:, t]
        for k in range(d.K):
            ch = instance.channel(k, t)
            H = ch.hHat[None, :] + boundary_perturbations(rng, cfg.n_channel, d.n, ch.epsilon)
            gains = np.abs(H.conj() @ W.T) ** 2
            sig = gains[:, k]
            sinr = sig / (gains.sum(axis=1) - sig + ch.sigma2)
            samples[k, t] = sinr
            below[k, t] = sinr < ch.gamma * (1.0 - _SINR_RTOL)
    tables = {k: CdfTable.from_samples(samples[k]) for k in range(d.K)}
    per_user = below.reshape(d.K, -1).mean(axis=1)
    rate = float(below.mean())
    logger.info("%s schedule: SINR violation rate %.4f over %d draws", mode.value, rate,
                below.size)
    return SinrReport(mode.value, tables, rate, per_user)


def _nominal_channels(instance: ProblemInstance) -> ProblemInstance:
    return instance.replace_channels(
        tuple(tuple(ch.with_epsilon(0.0) for ch in row) for row in instance.channels)
    )


def expected_energy_instance(instance: ProblemInstance) -> ProblemInstance:
    sets: List[UncertaintySet] = [Singleton(b.res.expected()) for b in instance.bs]
    return instance.replace_res(tuple(sets))


@dataclass
class Plan:
    mode: EvalMode
    schedule: Schedule
    report: ConvergenceReport
    extraction: ExtractionResult
    multipliers: np.ndarray  # final lambda, (I, T)
    messages: Optional[MessageLog] = None


def plan_schedule(
    instance: ProblemInstance,
    options: Optional[SolveOptions] = None,
    mode: EvalMode = EvalMode.ROBUST,
    seed: int = 0,
    distributed: bool = False,
) -> Plan:
    """Solve and extract beamformers for one of the three planning schemes.

    ``NONROBUST`` replaces each robust LMI by the nominal SINR constraint and
    certifies beamformers against the estimated channels only. ``HEURISTIC``
    keeps robust beamforming but collapses each RES set to its expected value.
    """
    opts = options or SolveOptions.from_settings()
    planned, certify_on = instance, instance
    if mode is EvalMode.NONROBUST:
        opts = replace(opts, mode=SdpMode.NONROBUST)
        certify_on = _nominal_channels(instance)
    elif mode is EvalMode.HEURISTIC:
        planned = certify_on = expected_energy_instance(instance)
    log: Optional[MessageLog] = None
    if distributed:
        schedule, report, state, log = run_distributed(planned, opts)
    else:
        schedule, report, state = solve(planned, opts)
    extraction = extract_schedule(schedule, certify_on, seed=seed)
    schedule.extraction = {**(schedule.extraction or {}), "mode": mode.value,
                           "objective": report.objective, "status": report.status.value}
    return Plan(mode, schedule, report, extraction, state.lam.copy(), log)


def solve_nonrobust_baseline(
    instance: ProblemInstance, options: Optional[SolveOptions] = None, seed: int = 0
) -> Schedule:
    return plan_schedule(instance, options, EvalMode.NONROBUST, seed).schedule


def solve_heuristic_baseline(
    instance: ProblemInstance, options: Optional[SolveOptions] = None, seed: int = 0
) -> Schedule:
    return plan_schedule(instance, options, EvalMode.HEURISTIC, seed).schedule


def draw_energy(
    uset: UncertaintySet, kappa: float, rng: np.random.Generator, size: int
) -> np.ndarray:
    """(size, T) renewable realisations at reliability level ``kappa``."""
    if isinstance(uset, PolyhedralSet):
        return sample_realization(uset, kappa, rng, size)
    if isinstance(uset, Singleton):
        return np.tile(uset.point, (size, 1))
    if isinstance(uset, EllipsoidalSet):
        T = uset.horizon
        u = rng.standard_normal((size, T))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        u *= rng.random((size, 1)) ** (1.0 / T)
        return uset.center + kappa * u @ np.linalg.cholesky(uset.shape).T
    raise TypeError(f"unsupported uncertainty set {type(uset).__name__}")


@dataclass
class CostReport:
    tables: Dict[float, CdfTable]
    means: Dict[float, float]
    worst_case: float
    dominance_violations: Dict[float, int] = field(default_factory=dict)
    label: str = ""

    def frame(self) -> pd.DataFrame:
        parts = [tab.frame(method=self.label, kappa=kap) for kap, tab in self.tables.items()]
        return pd.concat(parts, ignore_index=True)


def cost_cdf(
    schedule: Schedule,
    instance: ProblemInstance,
    config: Optional[EvalConfig] = None,
    label: str = "robust",
) -> CostReport:
    """Realised transaction cost of ``schedule.P`` over sampled renewables, per kappa.

    A baseline planned on collapsed sets is still charged against the sets of
    ``instance``.
    """
    cfg = config or EvalConfig()
    rng = np.random.default_rng(cfg.seed)
    worst = float(sum(worst_cost(schedule.P[i], b.res, instance.prices_for(i)).value
                      for i, b in enumerate(instance.bs)))
    tables: Dict[float, CdfTable] = {}
    means: Dict[float, float] = {}
    over: Dict[float, int] = {}
    for kap in cfg.kappas:
        total = np.zeros(cfg.n_res)
        for i, b in enumerate(instance.bs):
            E = draw_energy(b.res, kap, rng, cfg.n_res)
            total += _batch_cost(schedule.P[i], E, instance.prices_for(i))
        tables[kap] = CdfTable.from_samples(total)
        means[kap] = float(total.mean())
        over[kap] = int(np.sum(total > worst + _DOMINANCE_TOL * (1.0 + abs(worst))))
        if over[kap]:
            logger.warning("kappa=%g: %d realisations cost more than the worst case %.6g", kap,
                           over[kap], worst)
    return CostReport(tables, means, worst, over, label)


def _batch_cost(p: np.ndarray, E: np.ndarray, prices: PriceCurve) -> np.ndarray:
    d = p[None, :] - E
    return np.sum(prices.alpha * np.maximum(d, 0.0) - prices.beta * np.maximum(-d, 0.0), axis=1)


@dataclass
class PriceProfile:
    total: np.ndarray  # (T,) sum_i P_i^t
    P: np.ndarray
    Pb: np.ndarray
    C: np.ndarray
    argmin_slots: List[int]
    flat_prices: bool

    def frame(self) -> pd.DataFrame:
        I, T = self.P.shape
        rows = [
            {"bs": i, "slot": t, "P": self.P[i, t], "Pb": self.Pb[i, t], "C": self.C[i, t]}
            for i in range(I)
            for t in range(T)
        ]
        rows += [{"bs": "total", "slot": t, "P": self.total[t], "Pb": self.Pb[:, t].sum(),
                  "C": self.C[:, t].sum()} for t in range(T)]
        return pd.DataFrame(rows, columns=["bs", "slot", "P", "Pb", "C"])


def price_response_profile(
    schedule: Schedule, prices: PriceCurve, tol: float = 1e-6
) -> PriceProfile:
    """Aggregate consumption per slot and the slots where it is lowest.

    ``argmin_slots`` holds every slot within ``tol`` of the minimum. With flat
    prices there is no price signal to respond to, which ``flat_prices`` flags.
    """
    total = schedule.P.sum(axis=0)
    low = float(total.min())
    argmin = [int(t) for t in np.flatnonzero(total <= low + tol * (1.0 + abs(low)))]
    flat = bool(np.ptp(prices.alpha) == 0.0 and np.ptp(prices.beta) == 0.0)
    return PriceProfile(total, schedule.P.copy(), schedule.Pb.copy(), schedule.C.copy(),
                        argmin, flat)


def summarize(
    sinr: Sequence[SinrReport], costs: Sequence[CostReport], meta: Optional[dict] = None
) -> dict:
    return {
        "violation_rate": {r.mode: r.violation_rate for r in sinr},
        "mean_cost": {c.label: {str(k): v for k, v in c.means.items()} for c in costs},
        "worst_case_cost": {c.label: c.worst_case for c in costs},
        "dominance_violations": {c.label: {str(k): v for k, v in c.dominance_violations.items()}
                                 for c in costs},
        **(meta or {}),
    }

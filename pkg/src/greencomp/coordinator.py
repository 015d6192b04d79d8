"""Dual subgradient ascent over the coupling constraint with Cesàro primal recovery.

Relaxing ``P = Pc + sum_k tr(B_i X_k) + Pb`` with multipliers ``lambda`` (I x T)
splits one iteration into a beamforming SDP per slot, a battery LP per BS and
a worst-case power-cost minimisation per BS. Multipliers start at the middle
of the price band and, by default, are kept inside it.
"""
from __future__ import annotations

import enum
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .bundle import BundleParams, BundleStatus, minimize_power_cost
from .cost import project_to_band, worst_cost
from .errors import AdmissionControlRequired, NumericalFailure, StepsizeTooAggressive
from .linalg import min_eigenvalue
from .lp import BatteryLp, battery_violation, project_battery, solve_battery_lp, stored_energy
from .model import ChannelEstimate, ProblemInstance, Schedule
from .sdp import (
    SdpMode,
    SdpSolution,
    SdpStatus,
    build_gamma,
    build_slot_subproblem,
    solve_slot_sdp,
)
from .sdp.sdpa import dump_slot
from .settings import get_settings

logger = logging.getLogger(__name__)

_MAX_HALVINGS = 5
_WEAK_DUALITY_TOL = 1e-6


@dataclass(frozen=True)
class Constant:
    mu: float

    def __post_init__(self) -> None:
        if not self.mu > 0.0:
            raise ValueError(f"stepsize must be positive, got {self.mu}")

    def __call__(self, j: int) -> float:
        return self.mu


@dataclass(frozen=True)
class Diminishing:
    """``mu(j) = a / (1 + j)``: not summable, vanishing."""

    a: float

    def __post_init__(self) -> None:
        if not self.a > 0.0:
            raise ValueError(f"stepsize scale must be positive, got {self.a}")

    def __call__(self, j: int) -> float:
        return self.a / (1.0 + j)


Stepsize = Union[Constant, Diminishing]


def stepsize_from_settings(kind: Optional[str] = None) -> Stepsize:
    s = get_settings()
    kind = kind or s.STEPSIZE
    if kind == "constant":
        return Constant(s.STEP_MU)
    if kind == "diminishing":
        return Diminishing(s.STEP_A)
    raise ValueError(f"unknown stepsize schedule {kind!r}")


class RunStatus(enum.Enum):
    CONVERGED_GAP = "converged_gap"
    CONVERGED_RESIDUAL = "converged_residual"
    ITERATION_CAP = "iteration_cap"


@dataclass(frozen=True)
class SolveOptions:
    stepsize: Stepsize
    max_iter: int
    tol_gap: float
    tol_g: float
    project_multipliers: bool
    threads: int
    backend: str
    bundle: BundleParams
    mode: SdpMode = SdpMode.ROBUST
    dump_sdpa: Optional[Path] = None

    @classmethod
    def from_settings(cls, **overrides) -> "SolveOptions":
        s = get_settings()
        base = cls(
            stepsize=stepsize_from_settings(),
            max_iter=s.DUAL_MAX_ITER,
            tol_gap=s.TOL_GAP,
            tol_g=s.TOL_G,
            project_multipliers=s.PROJECT_MULTIPLIERS,
            threads=s.THREADS,
            backend=s.SDP_BACKEND,
            bundle=BundleParams.from_settings(),
        )
        return replace(base, **overrides)


@dataclass
class DualState:
    lam: np.ndarray  # (I, T)
    stepsize: Stepsize
    j: int = 0
    mu_sum: float = 0.0
    best_dual: float = -np.inf
    prev_lam: Optional[np.ndarray] = None
    prev_g: Optional[np.ndarray] = None
    prev_mu: float = 0.0

    @classmethod
    def initial(cls, instance: ProblemInstance, stepsize: Stepsize) -> "DualState":
        lam = np.stack([instance.prices_for(i).phi for i in range(instance.dims.I)])
        return cls(lam=lam.astype(float), stepsize=stepsize)


@dataclass
class PrimalIterate:
    X: np.ndarray  # (K, T, n, n)
    tau: np.ndarray  # (K, T)
    Pb: np.ndarray  # (I, T)
    C: np.ndarray  # (I, T)
    P: np.ndarray  # (I, T)


@dataclass
class AveragedPrimal(PrimalIterate):
    mu_sum: float = 0.0
    count: int = 0


_AVERAGED = tuple(f.name for f in fields(PrimalIterate))


def cesaro_update(avg: Optional[AveragedPrimal], Z: PrimalIterate, mu: float) -> AveragedPrimal:
    """``Zbar^m = (mu_m / S_m) Z^m + (S_{m-1} / S_m) Zbar^{m-1}`` with ``S_m = sum mu``."""
    if not mu > 0.0:
        raise ValueError(f"averaging weight must be positive, got {mu}")
    if avg is None or avg.count == 0:
        return AveragedPrimal(**{f: np.array(getattr(Z, f), copy=True) for f in _AVERAGED},
                              mu_sum=mu, count=1)
    total = avg.mu_sum + mu
    a, b = mu / total, avg.mu_sum / total
    merged = {f: a * getattr(Z, f) + b * getattr(avg, f) for f in _AVERAGED}
    return AveragedPrimal(**merged, mu_sum=total, count=avg.count + 1)


@dataclass
class BsOutcome:
    """Everything BS ``i`` returns to the controller for one multiplier row."""

    i: int
    Pb: np.ndarray
    C: np.ndarray
    P: np.ndarray
    battery_value: float
    power_value: float
    status: BundleStatus
    unbounded_slots: List[int] = field(default_factory=list)
    bundle_iterations: int = 0
    seconds_lp: float = 0.0
    seconds_bundle: float = 0.0


BsExchange = Callable[[int, np.ndarray, Optional[np.ndarray]], List[BsOutcome]]


def solve_base_station(
    i: int,
    lam_i: np.ndarray,
    instance: ProblemInstance,
    bundle: Optional[BundleParams] = None,
    p0: Optional[np.ndarray] = None,
) -> BsOutcome:
    bs = instance.bs[i]
    start = time.perf_counter()
    bat = solve_battery_lp(BatteryLp(lam_i, bs.battery))
    mid = time.perf_counter()
    pw = minimize_power_cost(lam_i, bs, instance.prices_for(i), bundle, p0)
    end = time.perf_counter()
    return BsOutcome(i=i, Pb=bat.Pb, C=bat.C, P=pw.p, battery_value=bat.objective,
                     power_value=pw.value, status=pw.status, unbounded_slots=pw.unbounded_slots,
                     bundle_iterations=pw.iterations, seconds_lp=mid - start,
                     seconds_bundle=end - mid)


def bundle_trace(
    instance: ProblemInstance, lam: np.ndarray, bundle: Optional[BundleParams] = None
) -> pd.DataFrame:
    """Bundle iterations of every BS power subproblem at the multipliers ``lam``."""
    parts = []
    for i, bs in enumerate(instance.bs):
        res = minimize_power_cost(lam[i], bs, instance.prices_for(i), bundle)
        df = res.trace_frame()
        df.insert(0, "bs", i)
        parts.append(df)
    return pd.concat(parts, ignore_index=True)


@dataclass
class IterationRecord:
    j: int
    mu: float
    dual_value: float
    best_dual: float
    primal_value: float
    gap: float
    rel_gap: float
    residual_norm: float
    band_residual_norm: float
    subgrad_norm: float
    weak_duality_breach: bool
    seconds_sdp: float
    seconds_lp: float
    seconds_bundle: float


@dataclass
class ConvergenceReport:
    records: List[IterationRecord] = field(default_factory=list)
    status: RunStatus = RunStatus.ITERATION_CAP
    stop_rule: str = ""
    projection_shift: float = 0.0
    raw_P: Optional[np.ndarray] = None
    seconds_total: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def objective(self) -> float:
        return self.records[-1].primal_value if self.records else float("nan")

    @property
    def rel_gap(self) -> float:
        return self.records[-1].rel_gap if self.records else float("nan")

    @property
    def weak_duality_breaches(self) -> int:
        return sum(r.weak_duality_breach for r in self.records)

    def frame(self, timings: bool = False) -> pd.DataFrame:
        cols = [f.name for f in fields(IterationRecord)
                if timings or not f.name.startswith("seconds_")]
        return pd.DataFrame([[getattr(r, c) for c in cols] for r in self.records], columns=cols)

    def timings(self) -> Dict[str, float]:
        df = self.frame(timings=True)
        sdp = float(df["seconds_sdp"].sum()) if len(df) else 0.0
        lp = float(df["seconds_lp"].sum()) if len(df) else 0.0
        bundle = float(df["seconds_bundle"].sum()) if len(df) else 0.0
        return {
            "sdp": sdp,
            "lp": lp,
            "bundle": bundle,
            "coordinator": max(self.seconds_total - sdp - lp - bundle, 0.0),
            "total": self.seconds_total,
        }


@dataclass
class StepContext:
    instance: ProblemInstance
    options: SolveOptions
    exchange: Optional[BsExchange] = None
    pool: Optional[ThreadPoolExecutor] = None
    warm: Optional[np.ndarray] = None
    cache: Dict[Tuple[int, bytes], SdpSolution] = field(default_factory=dict)

    def base_stations(self, j: int, lam: np.ndarray) -> List[BsOutcome]:
        if self.exchange is not None:
            return self.exchange(j, lam, self.warm)
        return [
            solve_base_station(i, lam[i], self.instance, self.options.bundle,
                               None if self.warm is None else self.warm[i])
            for i in range(self.instance.dims.I)
        ]


def solve_slots(lam: np.ndarray, ctx: StepContext, j: int = 0) -> List[SdpSolution]:
    """Per-slot beamforming SDPs at ``lam``; a slot whose weights did not move is reused."""
    inst, opts = ctx.instance, ctx.options

    def one(t: int) -> SdpSolution:
        hit = ctx.cache.get((t, lam[:, t].tobytes()))
        if hit is not None:
            return hit
        sub = build_slot_subproblem(inst, t, lam[:, t], opts.mode)
        if opts.dump_sdpa is not None:
            dump_slot(sub, opts.dump_sdpa, j)
        return solve_slot_sdp(sub, opts.backend)

    T = inst.dims.T
    sols = list(ctx.pool.map(one, range(T))) if ctx.pool is not None else [one(t) for t in range(T)]
    ctx.cache = {(t, lam[:, t].tobytes()): s for t, s in enumerate(sols)}
    for sol in sols:
        if sol.status is SdpStatus.INFEASIBLE:
            cert = sol.kkt.get("certificate")
            raise AdmissionControlRequired(
                sol.t, sol.culprits, "" if cert is None else f"ray residual {cert:.2e}"
            )
    return sols


def coupling_residual(instance: ProblemInstance, Z: PrimalIterate) -> np.ndarray:
    """``Pc + sum_k tr(B_i X_k) + Pb - P`` on the (I, T) grid."""
    sched = Schedule(Z.P, Z.Pb, Z.C, Z.X, Z.tau)
    pc = np.array([b.Pc for b in instance.bs])[:, None]
    return pc + sched.transmit_power(instance) + Z.Pb - Z.P


def feasible_power(instance: ProblemInstance, avg: PrimalIterate, tol: float = 1e-9):
    """Coupling-consistent ``P`` from averaged beamformers and the projected charge profile."""
    Pb = np.stack([project_battery(b.battery, avg.Pb[i], tol) for i, b in enumerate(instance.bs)])
    sched = Schedule(avg.P, Pb, avg.C, avg.X, avg.tau)
    pc = np.array([b.Pc for b in instance.bs])[:, None]
    return pc + sched.transmit_power(instance) + Pb, Pb


def primal_objective(instance: ProblemInstance, P: np.ndarray) -> float:
    return float(sum(worst_cost(P[i], b.res, instance.prices_for(i)).value
                     for i, b in enumerate(instance.bs)))


def band_residual(
    instance: ProblemInstance, g: np.ndarray, lam: np.ndarray, tol: float = 1e-12
) -> np.ndarray:
    """Part of the coupling residual ``g`` the price band does not absorb at ``lam``.

    A multiplier resting on alpha absorbs a positive residual and one resting on
    beta a negative one, since the projected update cannot move them. What is
    left measures stationarity of the band-constrained dual.
    """
    r = np.array(g, dtype=float, copy=True)
    for i in range(instance.dims.I):
        prices = instance.prices_for(i)
        at_alpha = lam[i] >= prices.alpha - tol * (1.0 + np.abs(prices.alpha))
        at_beta = lam[i] <= prices.beta + tol * (1.0 + np.abs(prices.beta))
        r[i] = np.where(at_alpha, np.minimum(r[i], 0.0), r[i])
        r[i] = np.where(at_beta, np.maximum(r[i], 0.0), r[i])
    return r


def _project(lam: np.ndarray, instance: ProblemInstance) -> np.ndarray:
    return np.stack([project_to_band(lam[i], instance.prices_for(i))
                     for i in range(instance.dims.I)])


def dual_step(
    state: DualState, avg: Optional[AveragedPrimal], ctx: StepContext
) -> Tuple[DualState, AveragedPrimal, IterationRecord]:
    """One multiplier update: solve all subproblems at ``lambda(j)``, average, move ``lambda``."""
    inst, opts = ctx.instance, ctx.options
    lam = state.lam
    outcomes = ctx.base_stations(state.j, lam)
    halvings = 0
    while any(o.status is BundleStatus.UNBOUNDED for o in outcomes):
        bad = next(o for o in outcomes if o.status is BundleStatus.UNBOUNDED)
        if state.prev_lam is None or state.prev_g is None or halvings >= _MAX_HALVINGS:
            raise StepsizeTooAggressive(bad.i, bad.unbounded_slots)
        halvings += 1
        lam = state.prev_lam + state.prev_mu / 2**halvings * state.prev_g
        logger.warning("iteration %d: BS %d unbounded in slots %s; halving step (%d)", state.j,
                       bad.i, bad.unbounded_slots, halvings)
        outcomes = ctx.base_stations(state.j, lam)

    start = time.perf_counter()
    sols = solve_slots(lam, ctx, state.j)
    seconds_sdp = time.perf_counter() - start

    X = np.stack([s.X for s in sols], axis=1)
    tau = np.stack([s.tau for s in sols], axis=1)
    Z = PrimalIterate(
        X=X,
        tau=tau,
        Pb=np.stack([o.Pb for o in outcomes]),
        C=np.stack([o.C for o in outcomes]),
        P=np.stack([o.P for o in outcomes]),
    )
    ctx.warm = Z.P.copy()
    pc = np.array([b.Pc for b in inst.bs])
    dual_value = (
        sum(s.objective for s in sols)
        + sum(o.battery_value + o.power_value for o in outcomes)
        + float(pc @ lam.sum(axis=1))
    )
    g = coupling_residual(inst, Z)

    mu = state.stepsize(state.j)
    avg = cesaro_update(avg, Z, mu)
    P_feas, _ = feasible_power(inst, avg)
    primal = primal_objective(inst, P_feas)
    best = max(state.best_dual, dual_value)
    breach = dual_value > primal + _WEAK_DUALITY_TOL * (1.0 + abs(primal))
    if breach:
        logger.warning("iteration %d: dual value %.10g exceeds primal %.10g", state.j,
                       dual_value, primal)
    gap = primal - best

    new_lam = lam + mu * g
    if opts.project_multipliers:
        new_lam = _project(new_lam, inst)
    g_avg = coupling_residual(inst, avg)
    g_band = band_residual(inst, g_avg, new_lam) if opts.project_multipliers else g_avg
    record = IterationRecord(
        j=state.j,
        mu=mu,
        dual_value=dual_value,
        best_dual=best,
        primal_value=primal,
        gap=gap,
        rel_gap=gap / max(1.0, abs(primal)),
        residual_norm=float(np.linalg.norm(g_avg)),
        band_residual_norm=float(np.linalg.norm(g_band)),
        subgrad_norm=float(np.linalg.norm(g)),
        weak_duality_breach=bool(breach),
        seconds_sdp=seconds_sdp,
        seconds_lp=sum(o.seconds_lp for o in outcomes),
        seconds_bundle=sum(o.seconds_bundle for o in outcomes),
    )
    new_state = DualState(lam=new_lam, stepsize=state.stepsize, j=state.j + 1,
                          mu_sum=state.mu_sum + mu, best_dual=best, prev_lam=lam, prev_g=g,
                          prev_mu=mu)
    logger.debug("dual it=%d D=%.10g primal=%.10g gap=%.3e |g|=%.3e |g(avg)|=%.3e", state.j,
                 dual_value, primal, record.rel_gap, record.subgrad_norm, record.residual_norm)
    return new_state, avg, record


def _stop(record: IterationRecord, opts: SolveOptions) -> Optional[RunStatus]:
    if record.rel_gap <= opts.tol_gap:
        return RunStatus.CONVERGED_GAP
    if record.band_residual_norm <= opts.tol_g:
        return RunStatus.CONVERGED_RESIDUAL
    return None


def solve(
    instance: ProblemInstance,
    options: Optional[SolveOptions] = None,
    exchange: Optional[BsExchange] = None,
    on_iteration: Optional[Callable[[IterationRecord], None]] = None,
) -> Tuple[Schedule, ConvergenceReport, DualState]:
    """Run the decomposition until the gap or the averaged residual is small enough.

    Hitting ``max_iter`` is not an error: the report then carries
    ``RunStatus.ITERATION_CAP`` and the schedule is built from the last averages.
    """
    opts = options or SolveOptions.from_settings()
    state = DualState.initial(instance, opts.stepsize)
    report = ConvergenceReport()
    avg: Optional[AveragedPrimal] = None
    started = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=opts.threads) if opts.threads > 1 else None
    ctx = StepContext(instance, opts, exchange=exchange, pool=pool)
    logger.info("dual decomposition: I=%d K=%d T=%d n=%d mode=%s backend=%s",
                instance.dims.I, instance.dims.K, instance.dims.T, instance.dims.n,
                opts.mode.value, opts.backend)
    try:
        for _ in range(opts.max_iter):
            state, avg, record = dual_step(state, avg, ctx)
            report.records.append(record)
            if on_iteration is not None:
                on_iteration(record)
            status = _stop(record, opts)
            if status is not None:
                report.status = status
                break
    finally:
        if pool is not None:
            pool.shutdown()
    if avg is None:
        raise NumericalFailure("no dual iteration was run (max_iter < 1)")

    if report.status is RunStatus.CONVERGED_GAP:
        report.stop_rule = f"relative gap <= {opts.tol_gap:g}"
    elif report.status is RunStatus.CONVERGED_RESIDUAL:
        report.stop_rule = f"averaged coupling residual <= {opts.tol_g:g}"
    else:
        report.stop_rule = f"iteration cap {opts.max_iter}"
        logger.warning("dual decomposition stopped at the iteration cap (%d); rel gap %.3e",
                       opts.max_iter, report.rel_gap)

    P, Pb = feasible_power(instance, avg)
    report.projection_shift = float(np.max(np.abs(Pb - avg.Pb)))
    if report.projection_shift > 1e-9:
        logger.warning("averaged charge profile projected onto the battery set (shift %.3e)",
                       report.projection_shift)
    C = np.stack([stored_energy(b.battery, Pb[i]) for i, b in enumerate(instance.bs)])
    report.raw_P = avg.P.copy()
    report.seconds_total = time.perf_counter() - started
    schedule = Schedule(P=P, Pb=Pb, C=C, X=avg.X, tau=avg.tau)
    logger.info("dual decomposition %s after %d iterations: objective %.8g, rel gap %.3e",
                report.status.value, report.iterations, report.objective, report.rel_gap)
    return schedule, report, state


def _nominal_margin(Xs: np.ndarray, k: int, ch: ChannelEstimate) -> float:
    Y = Xs[k] / ch.gamma - (Xs.sum(axis=0) - Xs[k])
    return float(np.real(ch.hHat.conj() @ Y @ ch.hHat)) - ch.sigma2


def schedule_residuals(
    instance: ProblemInstance, schedule: Schedule, mode: SdpMode = SdpMode.ROBUST
) -> Dict[str, float]:
    """Largest violation of each constraint family of the relaxed problem."""
    pc = np.array([b.Pc for b in instance.bs])[:, None]
    tx = schedule.transmit_power(instance)
    headroom = np.array([b.PgMax - b.Pc for b in instance.bs])[:, None]
    K, T = schedule.X.shape[:2]
    psd = min(min_eigenvalue(schedule.X[k, t]) for k in range(K) for t in range(T))
    if mode is SdpMode.ROBUST:
        gamma = min(
            min_eigenvalue(build_gamma(schedule.X[:, t], k, instance.channel(k, t),
                                       max(float(schedule.tau[k, t]), 0.0)))
            for k in range(K)
            for t in range(T)
        )
    else:
        gamma = min(_nominal_margin(schedule.X[:, t], k, instance.channel(k, t))
                    for k in range(K) for t in range(T))
    return {
        "coupling": float(np.max(np.abs(pc + tx + schedule.Pb - schedule.P))),
        "power_cap": float(np.max(np.maximum(tx - headroom, -tx), initial=0.0)),
        "battery": max(battery_violation(b.battery, schedule.Pb[i])
                       for i, b in enumerate(instance.bs)),
        "dynamics": float(np.max(np.abs(
            np.stack([stored_energy(b.battery, schedule.Pb[i]) for i, b in enumerate(instance.bs)])
            - schedule.C))),
        "psd": max(-psd, 0.0),
        "gamma": max(-gamma, 0.0),
    }


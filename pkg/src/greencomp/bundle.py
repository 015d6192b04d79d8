"""Proximal bundle method for the per-BS power subproblem.

Minimises ``G(p) - lambda'p`` (convex, piecewise linear for polyhedral RES
sets) from an oracle returning value and one subgradient. The direction
subproblem is solved through its dual, a small QP over the probability simplex.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from .cost import tilde_g_subgradient, unbounded_slots
from .model import BsParams, PriceCurve
from .settings import get_settings

logger = logging.getLogger(__name__)

Oracle = Callable[[np.ndarray], Tuple[float, np.ndarray]]

_QP_TOL = 1e-12
_STEP_TOL = 1e-9
_DIVERGED = 1e12


class BundleStatus(enum.Enum):
    CONVERGED = "converged"
    ITERATION_CAP = "iteration_cap"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Cut:
    point: np.ndarray
    value: float
    subgrad: np.ndarray

    def at(self, p: np.ndarray) -> float:
        return float(self.value + self.subgrad @ (np.asarray(p) - self.point))


@dataclass(frozen=True)
class BundleParams:
    theta: float
    rho0: float
    rho_min: float
    rho_max: float
    max_iter: int
    max_cuts: int
    tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.max_cuts < 2:
            raise ValueError(f"max_cuts must be at least 2, got {self.max_cuts}")

    @classmethod
    def from_settings(cls) -> "BundleParams":
        s = get_settings()
        return cls(
            theta=s.BUNDLE_THETA,
            rho0=s.BUNDLE_RHO0,
            rho_min=s.BUNDLE_RHO_MIN,
            rho_max=s.BUNDLE_RHO_MAX,
            max_iter=s.BUNDLE_MAX_ITER,
            max_cuts=s.BUNDLE_MAX_CUTS,
        )


@dataclass
class BundleState:
    cuts: List[Cut]
    center: np.ndarray
    center_value: float
    rho: float
    params: BundleParams
    eta: float = 0.0
    ages: List[int] = field(default_factory=list)

    def model(self, p: np.ndarray) -> float:
        return max(c.at(p) for c in self.cuts)


@dataclass
class QpSolution:
    p: np.ndarray
    eta: float
    xi: np.ndarray
    model_value: float
    kkt_residual: float


def _simplex_qp(Q: np.ndarray, a: np.ndarray, max_iter: int = 500) -> Tuple[np.ndarray, float]:
    """Primal active-set method for ``min 0.5 x'Qx - a'x`` on the probability simplex.

    Returns the minimiser and the KKT residual.
    """
    n = a.size
    ridge = 1e-12 * max(1.0, float(np.max(np.diag(Q))))
    Q = Q + ridge * np.eye(n)
    start = int(np.argmin(0.5 * np.diag(Q) - a))
    xi = np.zeros(n)
    xi[start] = 1.0
    free = [start]
    nu = 0.0
    for _ in range(max_iter):
        F = np.array(sorted(free))
        kkt = np.zeros((F.size + 1, F.size + 1))
        kkt[:-1, :-1] = Q[np.ix_(F, F)]
        kkt[:-1, -1] = 1.0
        kkt[-1, :-1] = 1.0
        rhs = np.concatenate([a[F], [1.0]])
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        z, nu = sol[:-1], float(sol[-1])
        if np.all(z >= -_QP_TOL):
            xi[:] = 0.0
            xi[F] = np.maximum(z, 0.0)
            xi /= xi.sum()
            mu = Q @ xi - a + nu
            outside = np.setdiff1d(np.arange(n), F)
            if outside.size == 0 or mu[outside].min() >= -(1e-10 * (1.0 + abs(nu)) + 2.0 * ridge):
                break
            free.append(int(outside[np.argmin(mu[outside])]))
            continue
        # blocked step toward the equality-constrained minimiser
        cur = xi[F]
        d = z - cur
        neg = d < -_QP_TOL
        ratios = np.where(neg, cur / np.where(neg, -d, 1.0), np.inf)
        step = float(min(1.0, ratios.min()))
        cur = cur + step * d
        xi[F] = np.maximum(cur, 0.0)
        free = [int(j) for j, v in zip(F, cur) if v > _QP_TOL]
        if not free:
            free = [int(F[np.argmax(cur)])]
        xi[np.setdiff1d(np.arange(n), free)] = 0.0
        xi /= xi.sum()
    mu = Q @ xi - a + nu
    resid = max(
        float(np.max(np.abs(mu[xi > 0.0]), initial=0.0)),
        float(max(0.0, -mu.min())),
        abs(float(xi.sum()) - 1.0),
    )
    return xi, resid


def solve_proximal_qp(state: BundleState) -> QpSolution:
    """Direction subproblem ``min model(p) + rho/2 |p - y|^2`` through its simplex dual."""
    y, rho = state.center, state.rho
    G = np.stack([c.subgrad for c in state.cuts], axis=1)  # (T, n_cuts)
    a = np.array([c.at(y) for c in state.cuts])
    Q = G.T @ G / rho
    xi, resid = _simplex_qp(Q, a)
    p = y - G @ xi / rho
    model_value = state.model(p)
    eta = state.center_value - (model_value + 0.5 * rho * float((p - y) @ (p - y)))
    state.eta = max(eta, 0.0)
    return QpSolution(p=p, eta=state.eta, xi=xi, model_value=model_value, kkt_residual=resid)


def update_weight(state: BundleState, serious_step: bool) -> float:
    prm = state.params
    if serious_step:
        state.rho = max(state.rho / 10.0, prm.rho_min)
    else:
        state.rho = min(10.0 * state.rho, prm.rho_max)
    return state.rho


def aggregate_cut(cuts: List[Cut], xi: np.ndarray, at: np.ndarray) -> Cut:
    """``xi``-weighted combination of ``cuts`` anchored at ``at``; a minorant of the model."""
    active = [n for n, w in enumerate(xi) if w > 0.0]
    value = sum(float(xi[n]) * cuts[n].at(at) for n in active)
    subgrad = np.sum([xi[n] * cuts[n].subgrad for n in active], axis=0)
    return Cut(np.asarray(at, dtype=float).copy(), float(value), subgrad)


def _add_cut(state: BundleState, cut: Cut, qp: QpSolution) -> None:
    xi = qp.xi
    for n, weight in enumerate(xi):
        state.ages[n] = 0 if weight > 0.0 else state.ages[n] + 1
    state.cuts.append(cut)
    state.ages.append(0)
    excess = len(state.cuts) - state.params.max_cuts
    if excess <= 0:
        return
    # oldest inactive cuts leave first; the newest cut always stays
    inactive = sorted((n for n, w in enumerate(xi) if w <= 0.0),
                      key=lambda n: (-state.ages[n], n))
    aggregate: Optional[Cut] = None
    if len(inactive) >= excess:
        drop = set(inactive[:excess])
    else:
        active = [n for n, w in enumerate(xi) if w > 0.0]
        aggregate = aggregate_cut(state.cuts, xi, qp.p)
        drop = set(active) | set(inactive[: max(0, excess + 1 - len(active))])
        logger.debug("bundle: folded %d active cuts into one aggregate", len(active))
    keep = [n for n in range(len(state.cuts)) if n not in drop]
    state.cuts = [state.cuts[n] for n in keep]
    state.ages = [state.ages[n] for n in keep]
    if aggregate is not None:
        state.cuts.insert(0, aggregate)
        state.ages.insert(0, 0)


@dataclass
class BundleStep:
    iteration: int
    value: float
    eta: float
    rho: float
    step: str
    cuts: int


@dataclass
class BundleResult:
    p: np.ndarray
    value: float
    status: BundleStatus
    iterations: int
    trace: List[BundleStep] = field(default_factory=list)
    unbounded_slots: List[int] = field(default_factory=list)

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame([s.__dict__ for s in self.trace],
                            columns=["iteration", "value", "eta", "rho", "step", "cuts"])


def bundle_minimize(
    oracle: Oracle, p0: np.ndarray, params: Optional[BundleParams] = None
) -> BundleResult:
    prm = params or BundleParams.from_settings()
    y = np.asarray(p0, dtype=float).copy()
    fy, gy = oracle(y)
    state = BundleState(cuts=[Cut(y.copy(), fy, np.asarray(gy, dtype=float))], center=y,
                        center_value=fy, rho=prm.rho0, params=prm, ages=[0])
    trace: List[BundleStep] = []
    status = BundleStatus.ITERATION_CAP
    it = 0
    for it in range(1, prm.max_iter + 1):
        qp = solve_proximal_qp(state)
        if qp.eta <= prm.tol * (1.0 + abs(state.center_value)) or np.linalg.norm(
            qp.p - state.center
        ) <= _STEP_TOL:
            status = BundleStatus.CONVERGED
            trace.append(
                BundleStep(it, state.center_value, qp.eta, state.rho, "stop", len(state.cuts))
            )
            break
        fp, gp = oracle(qp.p)
        serious = state.center_value - fp >= prm.theta * qp.eta
        if serious:
            state.center = qp.p.copy()
            state.center_value = fp
        update_weight(state, serious)
        _add_cut(state, Cut(qp.p.copy(), fp, np.asarray(gp, dtype=float)), qp)
        trace.append(
            BundleStep(it, state.center_value, qp.eta, state.rho, "serious" if serious else "null",
                       len(state.cuts))
        )
        logger.debug("bundle it=%d f=%.10g eta=%.3e rho=%.3g %s", it, state.center_value,
                     qp.eta, state.rho, "serious" if serious else "null")
        if np.max(np.abs(state.center)) > _DIVERGED:
            status = BundleStatus.UNBOUNDED
            break
    if status is BundleStatus.ITERATION_CAP:
        logger.warning("bundle stopped at the iteration cap (%d); returning best center",
                       prm.max_iter)
    return BundleResult(p=state.center.copy(), value=state.center_value, status=status,
                        iterations=it, trace=trace)


def power_oracle(lam: np.ndarray, bs: BsParams, prices: PriceCurve) -> Oracle:
    def oracle(p: np.ndarray) -> Tuple[float, np.ndarray]:
        ev = tilde_g_subgradient(p, lam, bs.res, prices)
        assert ev.subgrad is not None
        return ev.value, ev.subgrad

    return oracle


def minimize_power_cost(
    lam: np.ndarray,
    bs: BsParams,
    prices: PriceCurve,
    params: Optional[BundleParams] = None,
    p0: Optional[np.ndarray] = None,
) -> BundleResult:
    """Per-BS power subproblem ``min_p G(p) - lambda'p``.

    Reports ``UNBOUNDED`` without iterating when some multiplier lies outside
    its price band, since the objective then falls along a ray.
    """
    lam = np.asarray(lam, dtype=float)
    bad = unbounded_slots(lam, prices)
    if bad:
        return BundleResult(p=np.full(lam.size, np.nan), value=-np.inf,
                            status=BundleStatus.UNBOUNDED, iterations=0, unbounded_slots=bad)
    if p0 is None:
        p0 = np.full(lam.size, 0.5 * (bs.Pc + bs.PgMax))
    return bundle_minimize(power_oracle(lam, bs, prices), p0, params)

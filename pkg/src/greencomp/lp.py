"""Dense bounded-variable simplex and the per-BS battery subproblem.

The simplex works on ``min c'x  s.t.  A x = b,  lo <= x <= hi`` after turning
inequality rows into equalities with nonnegative slacks. Nonbasic variables sit
at one of their bounds (or at zero when free); entering and leaving variables
follow Bland's rule so equal-cost ties resolve the same way on every run.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, minimize

from .errors import InfeasibleLp, NumericalFailure, UnboundedLp
from .model import BatteryParams

logger = logging.getLogger(__name__)

_PIVOT_TOL = 1e-11
_COST_TOL = 1e-11
_FEAS_TOL = 1e-9


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpResult:
    status: LpStatus
    x: np.ndarray
    objective: float
    duals: np.ndarray  # equality rows first, then inequality rows
    reduced_costs: np.ndarray
    basis: Tuple[int, ...]
    iterations: int
    dual_objective: float = float("nan")


@dataclass
class _Tableau:
    A: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    x: np.ndarray
    basis: list
    iterations: int = 0

    def nonbasic(self) -> np.ndarray:
        mask = np.ones(self.A.shape[1], dtype=bool)
        mask[self.basis] = False
        return np.flatnonzero(mask)

    def refresh(self) -> np.ndarray:
        B = self.A[:, self.basis]
        nb = self.nonbasic()
        rhs = self.b - self.A[:, nb] @ self.x[nb]
        try:
            self.x[self.basis] = np.linalg.solve(B, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"singular simplex basis: {exc}") from exc
        return B


def _iterate(tab: _Tableau, cost: np.ndarray, max_iter: int) -> LpStatus:
    """Primal simplex iterations from a feasible basis until optimal or unbounded."""
    n = tab.A.shape[1]
    while True:
        if tab.iterations >= max_iter:
            raise NumericalFailure(f"simplex exceeded {max_iter} pivots")
        B = tab.refresh()
        pi = np.linalg.solve(B.T, cost[tab.basis])
        d = cost - tab.A.T @ pi
        entering, direction = -1, 0
        for j in tab.nonbasic():
            free_up = tab.x[j] < tab.hi[j] - _FEAS_TOL
            free_down = tab.x[j] > tab.lo[j] + _FEAS_TOL
            if d[j] < -_COST_TOL and free_up:
                entering, direction = int(j), 1
                break
            if d[j] > _COST_TOL and free_down:
                entering, direction = int(j), -1
                break
        if entering < 0:
            return LpStatus.OPTIMAL

        alpha = np.linalg.solve(B, tab.A[:, entering]) * direction
        step = tab.hi[entering] - tab.lo[entering]
        leave_pos, leave_to = -1, 0.0
        for pos in sorted(range(len(tab.basis)), key=lambda p: tab.basis[p]):
            var = tab.basis[pos]
            a = alpha[pos]
            if a > _PIVOT_TOL and np.isfinite(tab.lo[var]):
                ratio, bound = (tab.x[var] - tab.lo[var]) / a, tab.lo[var]
            elif a < -_PIVOT_TOL and np.isfinite(tab.hi[var]):
                ratio, bound = (tab.hi[var] - tab.x[var]) / -a, tab.hi[var]
            else:
                continue
            ratio = max(ratio, 0.0)
            if ratio < step - _PIVOT_TOL:
                step, leave_pos, leave_to = ratio, pos, bound
        if not np.isfinite(step):
            return LpStatus.UNBOUNDED

        tab.x[entering] += direction * step
        tab.iterations += 1
        if leave_pos < 0:
            # bound flip; basis unchanged
            continue
        leaving = tab.basis[leave_pos]
        tab.x[leaving] = leave_to
        tab.basis[leave_pos] = entering
        if tab.iterations % 50 == 0:
            logger.debug("simplex pivot %d, n=%d", tab.iterations, n)


def _start_value(lo: float, hi: float) -> float:
    if np.isfinite(lo):
        return lo
    if np.isfinite(hi):
        return hi
    return 0.0


def dense_simplex(
    c: np.ndarray,
    A_ub: Optional[np.ndarray] = None,
    b_ub: Optional[np.ndarray] = None,
    A_eq: Optional[np.ndarray] = None,
    b_eq: Optional[np.ndarray] = None,
    bounds: Optional[Sequence[Tuple[Optional[float], Optional[float]]]] = None,
    max_iter: int = 10_000,
    raise_on_failure: bool = False,
) -> LpResult:
    """Two-phase bounded-variable simplex.

    ``bounds`` follows the scipy convention: one ``(lo, hi)`` pair per variable,
    ``None`` for an infinite side; the default is ``(0, None)``. Duals are
    returned for the equality rows followed by the inequality rows, with the
    sign convention ``c = A'duals + reduced_costs``.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    if bounds is None:
        bounds = [(0.0, None)] * n
    if len(bounds) != n:
        raise ValueError(f"{len(bounds)} bounds for {n} variables")
    lo = np.array([-np.inf if b[0] is None else float(b[0]) for b in bounds])
    hi = np.array([np.inf if b[1] is None else float(b[1]) for b in bounds])
    if np.any(lo > hi):
        raise InfeasibleLp("a variable has lower bound above its upper bound")

    m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
    m = m_eq + m_ub
    # columns: structural | slacks | artificials
    A = np.zeros((m, n + m_ub + m))
    A[:m_eq, :n] = A_eq
    A[m_eq:, :n] = A_ub
    A[m_eq:, n : n + m_ub] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub])
    lo_all = np.concatenate([lo, np.zeros(m_ub), np.zeros(m)])
    hi_all = np.concatenate([hi, np.full(m_ub, np.inf), np.full(m, np.inf)])

    x = np.zeros(A.shape[1])
    for j in range(n + m_ub):
        x[j] = _start_value(lo_all[j], hi_all[j])
    resid = b - A[:, : n + m_ub] @ x[: n + m_ub]
    art = n + m_ub + np.arange(m)
    A[np.arange(m), art] = np.where(resid >= 0.0, 1.0, -1.0)
    x[art] = np.abs(resid)
    tab = _Tableau(A, b, lo_all, hi_all, x, [int(a) for a in art])

    phase1 = np.zeros(A.shape[1])
    phase1[art] = 1.0
    _iterate(tab, phase1, max_iter)
    infeas = float(tab.x[art].sum())
    if infeas > _FEAS_TOL * (1.0 + float(np.abs(b).max(initial=0.0))):
        if raise_on_failure:
            raise InfeasibleLp(f"phase one ended with infeasibility {infeas:.3e}")
        return _result(tab, c, n, m, LpStatus.INFEASIBLE)

    # artificials stay in the basis only on redundant rows; pin them to zero
    tab.hi[art] = 0.0
    tab.x[art] = 0.0
    cost = np.concatenate([c, np.zeros(m_ub + m)])
    status = _iterate(tab, cost, max_iter)
    if status is LpStatus.UNBOUNDED and raise_on_failure:
        raise UnboundedLp("objective decreases without bound")
    return _result(tab, cost, n, m, status)


def _result(tab: _Tableau, cost: np.ndarray, n: int, m: int, status: LpStatus) -> LpResult:
    cost = np.concatenate([cost, np.zeros(tab.A.shape[1] - cost.size)])
    B = tab.refresh()
    pi = np.linalg.solve(B.T, cost[tab.basis])
    d = cost - tab.A.T @ pi
    x = tab.x.copy()
    nb = tab.nonbasic()
    dual_obj = float(pi @ tab.b + d[nb] @ x[nb])
    return LpResult(
        status=status,
        x=x[:n],
        objective=float(cost[:n] @ x[:n]),
        duals=pi[:m],
        reduced_costs=d[:n],
        basis=tuple(tab.basis),
        iterations=tab.iterations,
        dual_objective=dual_obj,
    )


@dataclass(frozen=True)
class BatteryLp:
    lam: np.ndarray
    params: BatteryParams

    @property
    def horizon(self) -> int:
        return int(np.asarray(self.lam).size)


@dataclass
class BatterySolution:
    Pb: np.ndarray
    C: np.ndarray
    objective: float
    lp: LpResult = field(repr=False)


def battery_rows(params: BatteryParams, T: int) -> Tuple[np.ndarray, np.ndarray]:
    """Inequality rows ``A Pb <= b`` for stored energy and discharge limits.

    Stored energy after slot t is ``C0 + sum_{s<=t} Pb^s``; the discharge row
    is ``-Pb^t <= varpi * C^{t-1}``.
    """
    L = np.tril(np.ones((T, T)))
    strict = np.tril(np.ones((T, T)), k=-1)
    A = np.vstack([L, -L, -np.eye(T) - params.varpi * strict])
    b = np.concatenate(
        [
            np.full(T, params.Cmax - params.C0),
            np.full(T, params.C0),
            np.full(T, params.varpi * params.C0),
        ]
    )
    return A, b


def battery_bounds(params: BatteryParams, T: int) -> list:
    return [(params.PbMin, params.PbMax)] * T


def stored_energy(params: BatteryParams, Pb: np.ndarray) -> np.ndarray:
    return params.C0 + np.cumsum(np.asarray(Pb, dtype=float), axis=-1)


def battery_violation(params: BatteryParams, Pb: np.ndarray) -> float:
    Pb = np.asarray(Pb, dtype=float)
    A, b = battery_rows(params, Pb.size)
    rows = float(np.max(A @ Pb - b, initial=0.0))
    box = float(np.max(np.concatenate([params.PbMin - Pb, Pb - params.PbMax]), initial=0.0))
    return max(rows, box, 0.0)


def solve_battery_lp(prob: BatteryLp) -> BatterySolution:
    """``min lambda'Pb`` over the battery set, preferring the smallest ``sum |Pb|`` among optima."""
    lam = np.asarray(prob.lam, dtype=float).reshape(-1)
    T = lam.size
    A, b = battery_rows(prob.params, T)
    first = dense_simplex(lam, A_ub=A, b_ub=b, bounds=battery_bounds(prob.params, T),
                          raise_on_failure=True)
    opt = first.objective

    # Pb = u - v with u, v >= 0; minimise sum(u + v) on the optimal face
    cap = opt + 1e-9 * (1.0 + abs(opt))
    A2 = np.vstack([np.hstack([A, -A]), np.concatenate([lam, -lam])[None, :]])
    b2 = np.concatenate([b, [cap]])
    bounds2 = [(0.0, prob.params.PbMax)] * T + [(0.0, -prob.params.PbMin)] * T
    second = dense_simplex(np.ones(2 * T), A_ub=A2, b_ub=b2, bounds=bounds2)
    if second.status is LpStatus.OPTIMAL:
        Pb = second.x[:T] - second.x[T:]
    else:
        logger.warning("battery tie-break LP ended %s; keeping first vertex", second.status.value)
        Pb = first.x
    return BatterySolution(Pb=Pb, C=stored_energy(prob.params, Pb), objective=float(lam @ Pb),
                           lp=first)


def project_battery(params: BatteryParams, Pb: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Euclidean projection of a charge profile onto the battery set."""
    Pb = np.asarray(Pb, dtype=float).reshape(-1)
    if battery_violation(params, Pb) <= tol:
        return Pb.copy()
    T = Pb.size
    A, b = battery_rows(params, T)
    res = minimize(
        lambda z: 0.5 * float((z - Pb) @ (z - Pb)),
        np.clip(Pb, params.PbMin, params.PbMax),
        jac=lambda z: z - Pb,
        method="SLSQP",
        bounds=Bounds(np.full(T, params.PbMin), np.full(T, params.PbMax)),
        constraints=[LinearConstraint(A, -np.inf, b)],
        options={"ftol": 1e-14, "maxiter": 500},
    )
    if not res.success:
        logger.warning("battery projection did not converge: %s", res.message)
    return np.asarray(res.x, dtype=float)

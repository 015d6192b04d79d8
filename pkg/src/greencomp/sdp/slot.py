from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..errors import NumericalFailure
from ..linalg import min_eigenvalue
from ..settings import get_settings
from .ipm import ConicStatus, ipm_solve
from .lmi import SdpMode, SlotSubproblem, build_gamma

logger = logging.getLogger(__name__)


class SdpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SdpSolution:
    t: int
    status: SdpStatus
    X: np.ndarray  # (K, n, n)
    tau: np.ndarray  # (K,)
    objective: float
    kkt: Dict[str, float] = field(default_factory=dict)
    culprits: List[int] = field(default_factory=list)
    iterations: int = 0
    seconds: float = 0.0

    def power(self, selection: np.ndarray) -> np.ndarray:
        """Per-BS ``sum_k tr(B_i X_k)``."""
        diag = np.real(np.einsum("kjj->j", self.X))
        return selection @ diag


def _audit(sub: SlotSubproblem, X: np.ndarray, tau: np.ndarray) -> Dict[str, float]:
    min_x = min(min_eigenvalue(Xk) for Xk in X)
    if sub.mode is SdpMode.ROBUST:
        min_g = min(
            min_eigenvalue(build_gamma(X, k, ch, max(float(tau[k]), 0.0)))
            for k, ch in enumerate(sub.channels)
        )
    else:
        min_g = min(
            float(np.real(ch.hHat.conj() @ (X[k] / ch.gamma - (X.sum(0) - X[k])) @ ch.hHat))
            - ch.sigma2
            for k, ch in enumerate(sub.channels)
        )
    power = sub.selection @ np.real(np.einsum("kjj->j", X))
    over = float(np.max(np.concatenate([-power, power - sub.headroom]), initial=0.0))
    return {"min_eig_X": min_x, "min_eig_gamma": min_g, "power_violation": max(over, 0.0)}


def _solve_ipm(sub: SlotSubproblem) -> SdpSolution:
    prob = sub.to_conic()
    sol = ipm_solve(prob)
    if sol.status is ConicStatus.OPTIMAL:
        X, tau = sub.unpack(sol.y)
        X = 0.5 * (X + np.conj(np.transpose(X, (0, 2, 1))))
        kkt = {"pres": sol.pres, "dres": sol.dres, "gap": sol.gap}
        comp = sum(float(np.vdot(a, b)) for a, b in zip(sol.X, sol.S)) + float(
            sol.x_lin @ sol.s_lin
        )
        kkt["complementarity"] = comp / max(prob.nu(), 1)
        kkt.update(_audit(sub, X, tau))
        return SdpSolution(sub.t, SdpStatus.OPTIMAL, X, tau, float(sub.objective() @ sol.y),
                           kkt, iterations=sol.iterations)
    if sol.status is ConicStatus.DUAL_INFEASIBLE:
        # the ray weights on each user's QoS block point at the conflicting users
        weight = np.zeros(sub.K)
        blocks = sub.lmi_blocks()
        for blk, Xr in zip(blocks, sol.X):
            if blk.name.startswith("Gamma"):
                weight[blk.user] += float(np.trace(Xr))
        names = list(sub.linear_rows().names)
        for j, name in enumerate(names):
            if name.startswith("sinr["):
                weight[int(name[5:-1])] += float(sol.x_lin[j])
        top = float(weight.max(initial=0.0))
        culprits = [int(k) for k in np.flatnonzero(weight >= 1e-3 * top)] if top > 0 else []
        n = sub.n
        return SdpSolution(sub.t, SdpStatus.INFEASIBLE, np.zeros((sub.K, n, n), complex),
                           np.zeros(sub.K), np.inf, {"certificate": sol.certificate or 0.0},
                           culprits, iterations=sol.iterations)
    n = sub.n
    return SdpSolution(sub.t, SdpStatus.NUMERICAL_FAILURE, np.zeros((sub.K, n, n), complex),
                       np.zeros(sub.K), np.nan,
                       {"pres": sol.pres, "dres": sol.dres, "gap": sol.gap},
                       iterations=sol.iterations)


def _solve_cvxpy(sub: SlotSubproblem) -> SdpSolution:
    import cvxpy as cp

    n, K = sub.n, sub.K
    X = [cp.Variable((n, n), hermitian=True) for _ in range(K)]
    cons = [Xk >> 0 for Xk in X]
    tau = cp.Variable(K, nonneg=True) if sub.mode is SdpMode.ROBUST else None
    for k, ch in enumerate(sub.channels):
        Y = X[k] / ch.gamma - sum(X[l] for l in range(K) if l != k)
        h = ch.hHat.reshape(-1, 1)
        quad = cp.real(h.conj().T @ Y @ h)
        if tau is None:
            cons.append(quad - ch.sigma2 >= 0)
            continue
        top = cp.hstack([Y + tau[k] * np.eye(n), Y @ h])
        bottom = cp.hstack([h.conj().T @ Y, cp.reshape(quad - ch.sigma2 - tau[k] * ch.epsilon**2,
                                                        (1, 1))])
        lmi = cp.vstack([top, bottom])
        cons.append(0.5 * (lmi + lmi.H) >> 0)
    power = [
        cp.real(sum(cp.trace(np.diag(sub.selection[i]) @ X[k]) for k in range(K)))
        for i in range(sub.selection.shape[0])
    ]
    for i, p in enumerate(power):
        cons += [p >= 0, p <= float(sub.headroom[i])]
    obj = cp.Minimize(sum(float(sub.weights[i]) * power[i] for i in range(len(power))))
    prob = cp.Problem(obj, cons)
    try:
        prob.solve()
    except cp.error.SolverError as exc:
        logger.warning("cvxpy backend failed on slot %d: %s", sub.t, exc)
        return SdpSolution(sub.t, SdpStatus.NUMERICAL_FAILURE, np.zeros((K, n, n), complex),
                           np.zeros(K), np.nan)
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        return SdpSolution(sub.t, SdpStatus.INFEASIBLE, np.zeros((K, n, n), complex),
                           np.zeros(K), np.inf, culprits=list(range(K)))
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return SdpSolution(sub.t, SdpStatus.NUMERICAL_FAILURE, np.zeros((K, n, n), complex),
                           np.zeros(K), np.nan)
    Xv = np.stack([np.asarray(Xk.value, dtype=complex) for Xk in X])
    tv = np.asarray(tau.value, dtype=float) if tau is not None else np.zeros(K)
    kkt = _audit(sub, Xv, np.maximum(tv, 0.0))
    return SdpSolution(sub.t, SdpStatus.OPTIMAL, Xv, tv, float(prob.value), kkt)


def solve_slot_sdp(
    sub: SlotSubproblem, backend: Optional[str] = None, strict: bool = True
) -> SdpSolution:
    """Solve one slot's beamforming subproblem.

    With ``strict`` a numerical failure raises; infeasibility is always
    returned as a status for the caller to turn into admission control.
    """
    backend = backend or get_settings().SDP_BACKEND
    start = time.perf_counter()
    if backend == "cvxpy":
        sol = _solve_cvxpy(sub)
    elif backend == "ipm":
        sol = _solve_ipm(sub)
    else:
        raise ValueError(f"unknown SDP backend {backend!r}")
    sol.seconds = time.perf_counter() - start
    logger.debug("slot %d %s: objective=%.8g in %d iterations (%.3fs)", sub.t,
                 sol.status.value, sol.objective, sol.iterations, sol.seconds)
    if strict and sol.status is SdpStatus.NUMERICAL_FAILURE:
        raise NumericalFailure(f"slot {sub.t}: SDP solve failed ({sol.kkt})")
    return sol

"""Primal-dual interior-point solver for real symmetric cones plus a nonnegative orthant.

Problem pair, with ``y`` the free variables of the caller::

    (P)  min <c, x>   s.t.  A x = b,         x in K
    (D)  max  b'y     s.t.  A'y + s = c,     s in K

``K`` is a product of PSD blocks and one nonnegative orthant. The iteration runs
on the simplified homogeneous self-dual embedding, so an infeasible (D) shows up
as an improving ray of (P) instead of a stalled solve. Search directions are
HKM with Mehrotra predictor-corrector.

A block's coefficient matrices are stored once per *basis* and reused by every
term that shares it with a scalar factor; the Schur complement is assembled
from basis-pair products, which keeps it cheap when many variables act on a
block through the same linear map.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from ..settings import get_settings

logger = logging.getLogger(__name__)

_STEP_FRACTION = 0.99


class ConicStatus(enum.Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"  # (P) has no point; ray of (D)
    DUAL_INFEASIBLE = "dual_infeasible"  # (D) has no point; ray of (P)
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class BlockTerm:
    """``scale * sum_j y[index[j]] * bases[basis][j]`` enters ``A'y`` on this block."""

    basis: int
    index: np.ndarray
    scale: float = 1.0


@dataclass
class PsdBlock:
    C: np.ndarray
    bases: List[np.ndarray]
    terms: List[BlockTerm]
    name: str = ""
    _groups: List[Tuple[int, np.ndarray, np.ndarray]] = field(
        init=False, repr=False, default_factory=list
    )

    def __post_init__(self) -> None:
        self.C = np.asarray(self.C, dtype=float)
        d = self.C.shape[0]
        by_basis: Dict[int, List[BlockTerm]] = {}
        for t in self.terms:
            base = self.bases[t.basis]
            if base.ndim != 3 or base.shape[1:] != (d, d):
                raise ValueError(f"block {self.name!r}: basis {t.basis} has shape {base.shape}")
            if np.asarray(t.index).size != base.shape[0]:
                raise ValueError(f"block {self.name!r}: term index does not match basis size")
            by_basis.setdefault(t.basis, []).append(t)
        self._groups = [
            (
                a,
                np.concatenate([np.asarray(t.index, dtype=int) for t in ts]),
                np.array([t.scale for t in ts], dtype=float),
            )
            for a, ts in sorted(by_basis.items())
        ]

    @property
    def order(self) -> int:
        return int(self.C.shape[0])

    def measure(self, V: np.ndarray, out: np.ndarray) -> None:
        """``out += A V`` restricted to this block."""
        v = V.reshape(-1)
        for a, idx, scales in self._groups:
            base = self.bases[a]
            vals = base.reshape(base.shape[0], -1) @ v
            np.add.at(out, idx, np.kron(scales, vals))

    def assemble(self, y: np.ndarray) -> np.ndarray:
        """``sum_j y_j A_j`` restricted to this block."""
        d = self.order
        out = np.zeros((d, d))
        for a, idx, scales in self._groups:
            base = self.bases[a]
            coef = (scales[:, None] * y[idx].reshape(scales.size, base.shape[0])).sum(axis=0)
            out += np.tensordot(coef, base, axes=1)
        return out

    def schur_into(self, M: np.ndarray, X: np.ndarray, Sinv: np.ndarray) -> None:
        """``M_ij += <A_i, X A_j S^-1>`` over the variables touching this block."""
        prods = {}
        for a, _, _ in self._groups:
            base = self.bases[a]
            prods[a] = (X[None, :, :] @ base @ Sinv[None, :, :]).reshape(base.shape[0], -1)
        for a, ia, sa in self._groups:
            flat_a = self.bases[a].reshape(self.bases[a].shape[0], -1)
            for b, ib, sb in self._groups:
                H = flat_a @ prods[b].T
                np.add.at(M, (ia[:, None], ib[None, :]), np.kron(np.outer(sa, sb), H))


@dataclass
class LinearCone:
    """Nonnegative orthant ``s = c - G y >= 0``."""

    c: np.ndarray
    G: np.ndarray
    names: Sequence[str] = ()

    @property
    def size(self) -> int:
        return int(np.asarray(self.c).size)


@dataclass
class ConicProblem:
    b: np.ndarray
    blocks: List[PsdBlock]
    linear: Optional[LinearCone] = None

    @property
    def m(self) -> int:
        return int(self.b.size)

    def nu(self) -> int:
        return sum(blk.order for blk in self.blocks) + (self.linear.size if self.linear else 0)


@dataclass
class ConicSolution:
    status: ConicStatus
    y: np.ndarray
    X: List[np.ndarray]
    S: List[np.ndarray]
    x_lin: np.ndarray
    s_lin: np.ndarray
    primal_objective: float
    dual_objective: float
    pres: float
    dres: float
    gap: float
    iterations: int
    certificate: Optional[float] = None


# -- cone helpers -----------------------------------------------------------------


def _sym(Z: np.ndarray) -> np.ndarray:
    return 0.5 * (Z + Z.T)


def _inner(U: Sequence[np.ndarray], V: Sequence[np.ndarray]) -> float:
    return float(sum(np.vdot(u, v) for u, v in zip(U, V)))


def _max_step_psd(X: np.ndarray, dX: np.ndarray) -> float:
    L = np.linalg.cholesky(X)
    T = sla.solve_triangular(L, dX, lower=True)
    T = sla.solve_triangular(L, T.T, lower=True)
    lam = float(np.linalg.eigvalsh(_sym(T))[0])
    return np.inf if lam >= 0.0 else -1.0 / lam


def _max_step_lin(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0.0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


class _Operator:
    """``A`` and ``A'`` over all cones of a problem."""

    def __init__(self, prob: ConicProblem) -> None:
        self.prob = prob
        self.lin = prob.linear
        self.G = (
            np.asarray(self.lin.G, dtype=float) if self.lin is not None else np.zeros((0, prob.m))
        )
        self.c_lin = (
            np.asarray(self.lin.c, dtype=float) if self.lin is not None else np.zeros(0)
        )

    def measure(self, Xs: Sequence[np.ndarray], xl: np.ndarray) -> np.ndarray:
        out = np.zeros(self.prob.m)
        for blk, X in zip(self.prob.blocks, Xs):
            blk.measure(X, out)
        out += self.G.T @ xl
        return out

    def adjoint(self, y: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        return [blk.assemble(y) for blk in self.prob.blocks], self.G @ y

    def objective(self, Xs: Sequence[np.ndarray], xl: np.ndarray) -> float:
        return _inner([blk.C for blk in self.prob.blocks], Xs) + float(self.c_lin @ xl)


def _factor(M: np.ndarray):
    try:
        return ("cho", sla.cho_factor(M, lower=True, check_finite=False))
    except (np.linalg.LinAlgError, ValueError):
        reg = M + 1e-12 * max(1.0, float(np.max(np.abs(np.diag(M))))) * np.eye(M.shape[0])
        try:
            return ("cho", sla.cho_factor(reg, lower=True, check_finite=False))
        except (np.linalg.LinAlgError, ValueError):
            return ("lu", sla.lu_factor(M, check_finite=False))


def _solve(fac, rhs: np.ndarray) -> np.ndarray:
    kind, data = fac
    if kind == "cho":
        return sla.cho_solve(data, rhs, check_finite=False)
    return sla.lu_solve(data, rhs, check_finite=False)


def ipm_solve(
    prob: ConicProblem,
    max_iter: Optional[int] = None,
    tol: Optional[float] = None,
    infeas_tol: Optional[float] = None,
) -> ConicSolution:
    s = get_settings()
    max_iter = s.IPM_MAX_ITER if max_iter is None else max_iter
    tol = s.IPM_TOL if tol is None else tol
    infeas_tol = s.IPM_INFEAS_TOL if infeas_tol is None else infeas_tol

    op = _Operator(prob)
    b = np.asarray(prob.b, dtype=float)
    Cs = [blk.C for blk in prob.blocks]
    cl = op.c_lin
    nl = cl.size
    nu = prob.nu()

    X = [np.eye(blk.order) for blk in prob.blocks]
    S = [np.eye(blk.order) for blk in prob.blocks]
    xl = np.ones(nl)
    sl = np.ones(nl)
    y = np.zeros(prob.m)
    tau, kappa = 1.0, 1.0

    norm_b = 1.0 + float(np.linalg.norm(b))
    norm_c = 1.0 + float(np.sqrt(sum(np.sum(C * C) for C in Cs) + cl @ cl))
    status = ConicStatus.ITERATION_LIMIT
    pres = dres = gap = np.inf
    cert: Optional[float] = None
    it = 0

    for it in range(max_iter + 1):
        Ax = op.measure(X, xl)
        ATy, Gy = op.adjoint(y)
        rp = b * tau - Ax
        rd = [C * tau - a - S_ for C, a, S_ in zip(Cs, ATy, S)]
        rdl = cl * tau - Gy - sl
        cx = op.objective(X, xl)
        by = float(b @ y)
        rg = kappa + cx - by
        mu = (_inner(X, S) + float(xl @ sl) + tau * kappa) / (nu + 1)

        pres = float(np.linalg.norm(rp)) / tau / norm_b
        dres = float(np.sqrt(sum(np.sum(r * r) for r in rd) + rdl @ rdl)) / tau / norm_c
        gap = abs(cx - by) / tau / (1.0 + abs(cx) / tau + abs(by) / tau)
        logger.debug("ipm it=%d pres=%.2e dres=%.2e gap=%.2e tau=%.2e kappa=%.2e mu=%.2e",
                     it, pres, dres, gap, tau, kappa, mu)
        if pres <= tol and dres <= tol and gap <= tol:
            status = ConicStatus.OPTIMAL
            break
        if by > 0.0 and tau < kappa:
            ray = float(np.sqrt(sum(np.sum((a + S_) ** 2) for a, S_ in zip(ATy, S))
                                + np.sum((Gy + sl) ** 2))) / by
            if ray <= infeas_tol:
                status, cert = ConicStatus.PRIMAL_INFEASIBLE, ray
                break
        if cx < 0.0 and tau < kappa:
            ray = float(np.linalg.norm(Ax)) / -cx
            if ray <= infeas_tol:
                status, cert = ConicStatus.DUAL_INFEASIBLE, ray
                break
        if it == max_iter:
            break

        try:
            Sinv = [sla.cho_solve(sla.cho_factor(S_, lower=True), np.eye(S_.shape[0])) for S_ in S]
        except np.linalg.LinAlgError:
            status = ConicStatus.NUMERICAL_FAILURE
            break
        Sinv = [_sym(Si) for Si in Sinv]
        M = np.zeros((prob.m, prob.m))
        for blk, X_, Si in zip(prob.blocks, X, Sinv):
            blk.schur_into(M, X_, Si)
        if nl:
            M += op.G.T @ ((xl / sl)[:, None] * op.G)
        M = _sym(M)
        fac = _factor(M)

        def D(V: Sequence[np.ndarray], vl: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
            return [_sym(X_ @ V_ @ Si) for X_, V_, Si in zip(X, V, Sinv)], xl * vl / sl

        Dc, Dcl = D(Cs, cl)
        w = op.measure(Dc, Dcl)
        cDc = _inner(Cs, Dc) + float(cl @ Dcl)
        u = _solve(fac, w + b)
        Drd, Drdl = D(rd, rdl)
        ADrd = op.measure(Drd, Drdl)
        cDrd = _inner(Cs, Drd) + float(cl @ Drdl)
        den = cDc + float((b - w) @ u) + kappa / tau

        def direction(eta: float, smu: float, corr=None):
            if corr is None:
                Rc = [smu * Si - X_ for Si, X_ in zip(Sinv, X)]
                Rcl = (smu - xl * sl) / sl
                Rtk = (smu - tau * kappa) / tau
            else:
                dXa, dSa, dxla, dsla, dta, dka = corr
                Rc = [smu * Si - X_ - _sym(a @ s_ @ Si)
                      for Si, X_, a, s_ in zip(Sinv, X, dXa, dSa)]
                Rcl = (smu - xl * sl - dxla * dsla) / sl
                Rtk = (smu - tau * kappa - dta * dka) / tau
            rhs1 = eta * rp - op.measure(Rc, Rcl) + eta * ADrd
            v = _solve(fac, rhs1)
            num = (eta * rg + _inner(Cs, Rc) + float(cl @ Rcl) - eta * cDrd + Rtk
                   + float((w - b) @ v))
            dtau = num / den
            dy = v + dtau * u
            ATdy, Gdy = op.adjoint(dy)
            dS = [eta * r - a + C * dtau for r, a, C in zip(rd, ATdy, Cs)]
            dsl = eta * rdl - Gdy + cl * dtau
            dX = [R - _sym(X_ @ d @ Si) for R, X_, d, Si in zip(Rc, X, dS, Sinv)]
            dxl = Rcl - xl * dsl / sl
            dkappa = Rtk - kappa / tau * dtau
            return dX, dS, dxl, dsl, dy, dtau, dkappa

        def max_step(dX, dS, dxl, dsl, dtau, dkappa) -> float:
            steps = [1.0 / _STEP_FRACTION]
            steps += [_max_step_psd(X_, d) for X_, d in zip(X, dX)]
            steps += [_max_step_psd(S_, d) for S_, d in zip(S, dS)]
            steps += [_max_step_lin(xl, dxl), _max_step_lin(sl, dsl)]
            steps += [_max_step_lin(np.array([tau, kappa]), np.array([dtau, dkappa]))]
            return min(steps)

        try:
            aff = direction(1.0, 0.0)
            dXa, dSa, dxla, dsla, _, dta, dka = aff
            a_aff = min(1.0, max_step(dXa, dSa, dxla, dsla, dta, dka))
            sigma = (1.0 - a_aff) ** 3
            dX, dS, dxl, dsl, dy, dtau, dkappa = direction(
                1.0 - sigma, sigma * mu, (dXa, dSa, dxla, dsla, dta, dka)
            )
            alpha = min(1.0, _STEP_FRACTION * max_step(dX, dS, dxl, dsl, dtau, dkappa))
        except np.linalg.LinAlgError:
            status = ConicStatus.NUMERICAL_FAILURE
            break
        if not np.isfinite(alpha) or alpha < 1e-12:
            status = ConicStatus.NUMERICAL_FAILURE
            break

        X = [_sym(X_ + alpha * d) for X_, d in zip(X, dX)]
        S = [_sym(S_ + alpha * d) for S_, d in zip(S, dS)]
        xl = xl + alpha * dxl
        sl = sl + alpha * dsl
        y = y + alpha * dy
        tau += alpha * dtau
        kappa += alpha * dkappa

    if status is ConicStatus.OPTIMAL or status in (
        ConicStatus.ITERATION_LIMIT,
        ConicStatus.NUMERICAL_FAILURE,
    ):
        scale = 1.0 / tau
    else:
        scale = 1.0
    sol = ConicSolution(
        status=status,
        y=y * scale,
        X=[X_ * scale for X_ in X],
        S=[S_ * scale for S_ in S],
        x_lin=xl * scale,
        s_lin=sl * scale,
        primal_objective=op.objective(X, xl) * scale,
        dual_objective=float(b @ y) * scale,
        pres=pres,
        dres=dres,
        gap=gap,
        iterations=it,
        certificate=cert,
    )
    logger.debug("ipm finished: %s after %d iterations", status.value, it)
    return sol

"""Renewable-energy uncertainty sets and the worst-case energy oracle.

The worst case of ``sum_t psi|p-e| + phi(p-e)`` over a set is found by
enumerating sign patterns s in {+1,-1}^T: for a fixed pattern the objective is
linear in e and is maximised exactly (greedy fill for box+sum polytopes, closed
form for ellipsoids). The polyhedral objective is separable across
sub-horizons, so patterns are enumerated per sub-horizon.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from .errors import EmptyUncertaintySet, SignPatternCapExceeded
from .settings import get_settings

logger = logging.getLogger(__name__)

_FEAS_TOL = 1e-9


class PriceBand(Protocol):
    psi: np.ndarray
    phi: np.ndarray


@dataclass(frozen=True)
class SubHorizon:
    slots: Tuple[int, ...]
    e_min: Optional[float] = None
    e_max: Optional[float] = None

    @property
    def lo(self) -> float:
        return -np.inf if self.e_min is None else float(self.e_min)

    @property
    def hi(self) -> float:
        return np.inf if self.e_max is None else float(self.e_max)


@dataclass(frozen=True)
class PolyhedralSet:
    """Box ``lower <= e <= upper`` plus sum bounds on each sub-horizon."""

    lower: np.ndarray
    upper: np.ndarray
    subhorizons: Tuple[SubHorizon, ...] = field(default=())

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise EmptyUncertaintySet("lower and upper bounds differ in length")
        if np.any(lo > hi):
            bad = [int(t) for t in np.flatnonzero(lo > hi)]
            raise EmptyUncertaintySet(f"lower bound exceeds upper bound in slots {bad}")
        subs = tuple(self.subhorizons) or (SubHorizon(tuple(range(lo.size))),)
        covered = sorted(t for s in subs for t in s.slots)
        if covered != list(range(lo.size)):
            raise EmptyUncertaintySet("sub-horizons must partition the slots 0..T-1")
        for s in subs:
            idx = list(s.slots)
            if s.lo > s.hi:
                raise EmptyUncertaintySet(f"sub-horizon {idx}: E_min exceeds E_max")
            if lo[idx].sum() > s.hi + _FEAS_TOL or hi[idx].sum() < s.lo - _FEAS_TOL:
                raise EmptyUncertaintySet(f"sub-horizon {idx}: sum bounds miss the box")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "subhorizons", subs)

    @property
    def horizon(self) -> int:
        return int(self.lower.size)

    def contains(self, e: np.ndarray, tol: float = _FEAS_TOL) -> bool:
        e = np.asarray(e, dtype=float)
        if np.any(e < self.lower - tol) or np.any(e > self.upper + tol):
            return False
        for s in self.subhorizons:
            total = e[list(s.slots)].sum()
            if total < s.lo - tol or total > s.hi + tol:
                return False
        return True

    def expected(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class EllipsoidalSet:
    """``{center + v : v' shape^{-1} v <= 1}``."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.center, dtype=float).reshape(-1)
        s = np.asarray(self.shape, dtype=float)
        if s.shape != (c.size, c.size):
            raise EmptyUncertaintySet(f"shape matrix must be {c.size}x{c.size}, got {s.shape}")
        if np.max(np.abs(s - s.T)) > 1e-12 * max(1.0, float(np.max(np.abs(s)))):
            raise EmptyUncertaintySet("shape matrix must be symmetric")
        try:
            np.linalg.cholesky(s)
        except np.linalg.LinAlgError as exc:
            raise EmptyUncertaintySet("shape matrix must be positive definite") from exc
        c.setflags(write=False)
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", s)

    @property
    def horizon(self) -> int:
        return int(self.center.size)

    def contains(self, e: np.ndarray, tol: float = _FEAS_TOL) -> bool:
        v = np.asarray(e, dtype=float) - self.center
        return float(v @ np.linalg.solve(self.shape, v)) <= 1.0 + tol

    def expected(self) -> np.ndarray:
        return self.center.copy()


@dataclass(frozen=True)
class Singleton:
    """Degenerate one-point set; used by the expected-renewables baseline."""

    point: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.point, dtype=float).reshape(-1)
        p.setflags(write=False)
        object.__setattr__(self, "point", p)

    @property
    def horizon(self) -> int:
        return int(self.point.size)

    def contains(self, e: np.ndarray, tol: float = _FEAS_TOL) -> bool:
        return bool(np.all(np.abs(np.asarray(e, dtype=float) - self.point) <= tol))

    def expected(self) -> np.ndarray:
        return self.point.copy()


UncertaintySet = Union[PolyhedralSet, EllipsoidalSet, Singleton]


def cost_terms(p: np.ndarray, e: np.ndarray, psi: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Per-slot ``psi|p-e| + phi(p-e)``; broadcasts over leading axes of ``e``."""
    d = p - e
    return psi * np.abs(d) + phi * d


def _sign_patterns(length: int) -> np.ndarray:
    bits = (np.arange(2**length)[:, None] >> np.arange(length)) & 1
    return 1.0 - 2.0 * bits


def _greedy_rows(
    c: np.ndarray, lo: np.ndarray, hi: np.ndarray, s_min: float, s_max: float
) -> np.ndarray:
    """Maximise each row of ``c`` over ``{lo <= e <= hi, s_min <= sum(e) <= s_max}``.

    Starts from the best box corner and repairs the sum by moving the cheapest
    coordinates first. Ties are ordered so that the result is the
    lexicographically smallest maximiser.
    """
    rows, n = c.shape
    base = np.where(c > 0.0, hi, lo)
    base = np.broadcast_to(base, (rows, n)).copy()
    total = base.sum(axis=1)
    idx = np.broadcast_to(np.arange(n), (rows, n))

    over = total - s_max
    if np.any(over > 0.0):
        # lower the coordinates with the smallest gain first, earliest index first
        avail = base - lo
        order = np.lexsort((idx, c), axis=-1)
        a_sorted = np.take_along_axis(avail, order, axis=-1)
        need = np.maximum(over, 0.0)[:, None]
        before = np.cumsum(a_sorted, axis=-1) - a_sorted
        take = np.clip(need - before, 0.0, a_sorted)
        delta = np.zeros_like(base)
        np.put_along_axis(delta, order, take, axis=-1)
        base -= delta

    short = s_min - total
    if np.any(short > 0.0):
        # raise the coordinates with the smallest loss first, latest index first
        avail = hi - base
        order = np.lexsort((-idx, -c), axis=-1)
        a_sorted = np.take_along_axis(avail, order, axis=-1)
        need = np.maximum(short, 0.0)[:, None]
        before = np.cumsum(a_sorted, axis=-1) - a_sorted
        take = np.clip(need - before, 0.0, a_sorted)
        delta = np.zeros_like(base)
        np.put_along_axis(delta, order, take, axis=-1)
        base += delta
    return base


def greedy_box_sum_lp(
    c: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    subhorizons: Sequence[SubHorizon] = (),
    sense: str = "max",
) -> np.ndarray:
    """Exact LP over a box with per-sub-horizon sum bounds; returns an optimal vertex."""
    c = np.asarray(c, dtype=float).reshape(-1)
    if sense not in ("max", "min"):
        raise ValueError(f"sense must be 'max' or 'min', got {sense!r}")
    if sense == "min":
        c = -c
    box = PolyhedralSet(lower, upper, tuple(subhorizons))
    e = np.empty(box.horizon)
    for s in box.subhorizons:
        idx = list(s.slots)
        e[idx] = _greedy_rows(c[idx][None, :], box.lower[idx], box.upper[idx], s.lo, s.hi)[0]
    return e


def _ellipsoid_rows(c: np.ndarray, ell: EllipsoidalSet) -> np.ndarray:
    sc = c @ ell.shape
    radius = np.sqrt(np.maximum(np.einsum("ij,ij->i", sc, c), 0.0))
    step = np.divide(sc, radius[:, None], out=np.zeros_like(sc), where=radius[:, None] > 0.0)
    return ell.center[None, :] + step


def _pick(rows: np.ndarray, values: np.ndarray) -> int:
    best = float(values.max())
    tol = 1e-12 * (1.0 + abs(best))
    cand = np.flatnonzero(values >= best - tol)
    if cand.size == 1:
        return int(cand[0])
    keys = rows[cand]
    order = np.lexsort(keys.T[::-1])
    return int(cand[order[0]])


def sign_pattern_maximize(
    uset: UncertaintySet, p: np.ndarray, prices: PriceBand, cap: Optional[int] = None
) -> Tuple[np.ndarray, float]:
    """Worst-case energy vector and worst-case cost by sign-pattern enumeration."""
    p = np.asarray(p, dtype=float).reshape(-1)
    psi = np.asarray(prices.psi, dtype=float)
    phi = np.asarray(prices.phi, dtype=float)
    if cap is None:
        cap = get_settings().SIGN_PATTERN_CAP
    if p.size != uset.horizon:
        raise ValueError(f"power vector has {p.size} slots, set has {uset.horizon}")

    if isinstance(uset, Singleton):
        e = uset.point.copy()
    elif isinstance(uset, PolyhedralSet):
        e = np.empty(p.size)
        for s in uset.subhorizons:
            idx = list(s.slots)
            if len(idx) > cap:
                raise SignPatternCapExceeded(len(idx), cap)
            signs = _sign_patterns(len(idx))
            c = -(signs * psi[idx] + phi[idx])
            rows = _greedy_rows(c, uset.lower[idx], uset.upper[idx], s.lo, s.hi)
            vals = cost_terms(p[idx], rows, psi[idx], phi[idx]).sum(axis=1)
            e[idx] = rows[_pick(rows, vals)]
    elif isinstance(uset, EllipsoidalSet):
        if p.size > cap:
            raise SignPatternCapExceeded(p.size, cap)
        signs = _sign_patterns(p.size)
        c = -(signs * psi + phi)
        rows = _ellipsoid_rows(c, uset)
        vals = cost_terms(p, rows, psi, phi).sum(axis=1)
        e = rows[_pick(rows, vals)]
    else:
        raise EmptyUncertaintySet(f"unsupported uncertainty set {type(uset).__name__}")
    value = float(cost_terms(p, e, psi, phi).sum())
    return e, value


def worst_case_energy(
    uset: UncertaintySet, p: np.ndarray, prices: PriceBand
) -> Tuple[np.ndarray, float]:
    return sign_pattern_maximize(uset, p, prices)


def sample_realization(
    uset: PolyhedralSet,
    kappa: float,
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> np.ndarray:
    """``lower + kappa * U * (upper - lower)`` with U uniform on [0, 1] per slot.

    Sum bounds are not enforced. With ``size`` the result has shape (size, T).
    """
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
    shape = (uset.horizon,) if size is None else (size, uset.horizon)
    u = np.asarray(rng.random(shape), dtype=float)
    return uset.lower + kappa * u * (uset.upper - uset.lower)

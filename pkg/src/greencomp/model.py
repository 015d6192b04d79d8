"""Domain types of a CoMP cluster schedule and the two elementary operations on them.

Indices are 0-based throughout (BS ``i``, user ``k``, slot ``t``). Slot length is
normalised to one, so energy and power are the same numbers. The amplifier
efficiency is folded into the selection matrices once, when the instance is
built, and never applied again.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .errors import IndexOutOfRange, InstanceValidationError
from .uncertainty import UncertaintySet


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dimensions:
    T: int
    I: int  # noqa: E741
    K: int
    M: int

    def __post_init__(self) -> None:
        for name in ("T", "I", "K", "M"):
            if int(getattr(self, name)) < 1:
                raise InstanceValidationError(f"{name} >= 1", f"{name}={getattr(self, name)}")

    @property
    def n(self) -> int:
        """Length of a stacked beamformer, M*I."""
        return self.M * self.I


@dataclass(frozen=True)
class PriceCurve:
    alpha: np.ndarray
    beta: np.ndarray
    psi: np.ndarray = field(init=False)
    phi: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        a = np.asarray(self.alpha, dtype=float).reshape(-1)
        b = np.asarray(self.beta, dtype=float).reshape(-1)
        if a.shape != b.shape:
            raise InstanceValidationError("len(alpha) == len(beta)", f"{a.size} vs {b.size}")
        if np.any(b < 0.0):
            slots = [int(t) for t in np.flatnonzero(b < 0.0)]
            raise InstanceValidationError("beta^t >= 0", f"slots {slots}")
        if np.any(a <= b):
            slots = [int(t) for t in np.flatnonzero(a <= b)]
            raise InstanceValidationError("alpha^t > beta^t", f"slots {slots}")
        object.__setattr__(self, "alpha", _frozen(a))
        object.__setattr__(self, "beta", _frozen(b))
        object.__setattr__(self, "psi", _frozen(0.5 * (a - b)))
        object.__setattr__(self, "phi", _frozen(0.5 * (a + b)))

    @property
    def horizon(self) -> int:
        return int(self.alpha.size)

    def scaled(self, factor: float) -> "PriceCurve":
        return PriceCurve(self.alpha * factor, self.beta * factor)


@dataclass(frozen=True)
class BatteryParams:
    C0: float
    Cmax: float
    PbMin: float
    PbMax: float
    varpi: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.C0 <= self.Cmax:
            raise InstanceValidationError("0 <= C0 <= Cmax", f"C0={self.C0}, Cmax={self.Cmax}")
        if not self.PbMin < 0.0 < self.PbMax:
            raise InstanceValidationError(
                "PbMin < 0 < PbMax", f"PbMin={self.PbMin}, PbMax={self.PbMax}"
            )
        if not 0.0 < self.varpi <= 1.0:
            raise InstanceValidationError("0 < varpi <= 1", f"varpi={self.varpi}")


@dataclass(frozen=True)
class BsParams:
    battery: BatteryParams
    Pc: float
    PgMax: float
    xi: float
    res: UncertaintySet
    prices: Optional[PriceCurve] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.Pc <= self.PgMax:
            raise InstanceValidationError("0 < Pc <= PgMax", f"Pc={self.Pc}, PgMax={self.PgMax}")
        if not self.xi > 0.0:
            raise InstanceValidationError("xi > 0", f"xi={self.xi}")


@dataclass(frozen=True)
class ChannelEstimate:
    hHat: np.ndarray
    epsilon: float
    sigma2: float
    gamma: float

    def __post_init__(self) -> None:
        if not self.epsilon >= 0.0:
            raise InstanceValidationError("epsilon >= 0", f"epsilon={self.epsilon}")
        if not self.sigma2 > 0.0:
            raise InstanceValidationError("sigma2 > 0", f"sigma2={self.sigma2}")
        if not self.gamma > 0.0:
            raise InstanceValidationError("gamma > 0", f"gamma={self.gamma}")
        object.__setattr__(self, "hHat", _frozen(np.asarray(self.hHat, dtype=complex).reshape(-1)))

    def with_epsilon(self, epsilon: float) -> "ChannelEstimate":
        return ChannelEstimate(self.hHat, epsilon, self.sigma2, self.gamma)


@dataclass(frozen=True)
class ProblemInstance:
    dims: Dimensions
    prices: PriceCurve
    bs: Tuple[BsParams, ...]
    channels: Tuple[Tuple[ChannelEstimate, ...], ...]  # [k][t]
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        d = self.dims
        if self.prices.horizon != d.T:
            raise InstanceValidationError("len(prices) == T", f"{self.prices.horizon} vs T={d.T}")
        if len(self.bs) != d.I:
            raise InstanceValidationError("one BS block per BS", f"{len(self.bs)} vs I={d.I}")
        for i, b in enumerate(self.bs):
            if b.res.horizon != d.T:
                raise InstanceValidationError("RES set spans T slots", f"BS {i}")
            if b.prices is not None and b.prices.horizon != d.T:
                raise InstanceValidationError("len(prices) == T", f"BS {i} override")
        if len(self.channels) != d.K or any(len(row) != d.T for row in self.channels):
            raise InstanceValidationError("one channel block per (k, t)", f"K={d.K}, T={d.T}")
        for k, row in enumerate(self.channels):
            for t, ch in enumerate(row):
                if ch.hHat.size != d.n:
                    raise InstanceValidationError(
                        "len(hHat) == M*I", f"user {k}, slot {t}: {ch.hHat.size} vs {d.n}"
                    )

    def prices_for(self, i: int) -> PriceCurve:
        own = self.bs[i].prices
        return own if own is not None else self.prices

    def selection(self, i: int) -> np.ndarray:
        return selection_matrix(i, self.dims, self.bs[i].xi)

    def selection_diagonals(self) -> np.ndarray:
        """(I, n) array; row i is the diagonal of B_i (already scaled by 1/xi_i)."""
        return np.stack([np.diag(self.selection(i)).real for i in range(self.dims.I)])

    def channel(self, k: int, t: int) -> ChannelEstimate:
        return self.channels[k][t]

    def replace_res(self, sets: Tuple[UncertaintySet, ...]) -> "ProblemInstance":
        bs = tuple(
            BsParams(b.battery, b.Pc, b.PgMax, b.xi, s, b.prices) for b, s in zip(self.bs, sets)
        )
        return ProblemInstance(self.dims, self.prices, bs, self.channels, dict(self.meta))

    def replace_channels(
        self, channels: Tuple[Tuple[ChannelEstimate, ...], ...]
    ) -> "ProblemInstance":
        return ProblemInstance(self.dims, self.prices, self.bs, channels, dict(self.meta))


@dataclass
class Schedule:
    """Per-slot, per-BS energy decisions plus lifted and extracted beamformers."""

    P: np.ndarray  # (I, T)
    Pb: np.ndarray  # (I, T)
    C: np.ndarray  # (I, T), C[:, t] is the stored energy after slot t
    X: np.ndarray  # (K, T, n, n) complex
    tau: np.ndarray  # (K, T)
    w: Optional[np.ndarray] = None  # (K, T, n) complex
    extraction: Optional[Dict[str, Any]] = None

    @property
    def horizon(self) -> int:
        return int(self.P.shape[1])

    def transmit_power(self, instance: ProblemInstance) -> np.ndarray:
        """(I, T) array of sum_k tr(B_i X_k^t)."""
        diag = np.real(np.einsum("ktjj->tj", self.X))
        return instance.selection_diagonals() @ diag.T

    def beamformer_power(self, instance: ProblemInstance) -> np.ndarray:
        """(I, T) array of sum_k w^H B_i w from the extracted vectors."""
        if self.w is None:
            raise ValueError("schedule has no extracted beamformers")
        mag = np.sum(np.abs(self.w) ** 2, axis=0)  # (T, n)
        return instance.selection_diagonals() @ mag.T


def selection_matrix(i: int, dims: Dimensions, xi: float = 1.0) -> np.ndarray:
    """Diagonal 0/1 matrix picking BS ``i``'s antennas, scaled by ``1/xi``."""
    if not 0 <= i < dims.I:
        raise IndexOutOfRange(f"BS index {i} outside 0..{dims.I - 1}")
    if not xi > 0.0:
        raise InstanceValidationError("xi > 0", f"xi={xi}")
    diag = np.zeros(dims.n)
    diag[i * dims.M : (i + 1) * dims.M] = 1.0 / xi
    return np.diag(diag)


def evaluate_sinr(w: np.ndarray, h: np.ndarray, sigma2: float, k: int) -> float:
    """SINR of user ``k`` under channel ``h`` for the beamformer rows of ``w`` (K, n)."""
    w = np.atleast_2d(np.asarray(w, dtype=complex))
    gains = np.abs(w.conj() @ np.asarray(h, dtype=complex)) ** 2
    signal = gains[k]
    interference = gains.sum() - signal
    return float(signal / (interference + sigma2))

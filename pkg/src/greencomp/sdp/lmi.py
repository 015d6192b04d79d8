"""S-procedure LMIs and the per-slot beamforming subproblem.

Each lifted matrix ``X_k`` is parametrised by ``n*n`` reals: its diagonal, then
the real parts of the strict upper triangle, then the imaginary parts. The
slot variables are those blocks for every user followed by one ``tau_k`` per
user in robust mode.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..linalg import HermitianMatrix, real_embed
from ..model import ChannelEstimate, ProblemInstance
from .ipm import BlockTerm, ConicProblem, LinearCone, PsdBlock


class SdpMode(enum.Enum):
    ROBUST = "robust"
    NONROBUST = "nonrobust"


@lru_cache(maxsize=None)
def hermitian_basis(n: int) -> np.ndarray:
    """``(n*n, n, n)`` complex basis; ``X = sum_j v_j E_j`` for real ``v``."""
    iu, ju = np.triu_indices(n, k=1)
    E = np.zeros((n * n, n, n), dtype=complex)
    E[np.arange(n), np.arange(n), np.arange(n)] = 1.0
    off = np.arange(iu.size)
    E[n + off, iu, ju] = 1.0
    E[n + off, ju, iu] = 1.0
    E[n + iu.size + off, iu, ju] = 1j
    E[n + iu.size + off, ju, iu] = -1j
    E.setflags(write=False)
    return E


def hermitian_params(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    n = X.shape[-1]
    iu, ju = np.triu_indices(n, k=1)
    return np.concatenate(
        [np.real(np.diagonal(X, axis1=-2, axis2=-1)), X[..., iu, ju].real, X[..., iu, ju].imag],
        axis=-1,
    )


def hermitian_from_params(v: np.ndarray, n: int) -> np.ndarray:
    return np.tensordot(np.asarray(v, dtype=float), hermitian_basis(n), axes=1)


def gamma_lift(h_hat: np.ndarray) -> np.ndarray:
    """``E = [I, h]``, so that ``E^H Y E = [[Y, Yh], [h^H Y, h^H Y h]]``."""
    h = np.asarray(h_hat, dtype=complex).reshape(-1, 1)
    return np.hstack([np.eye(h.shape[0]), h])


def build_gamma(
    Xs: Sequence[np.ndarray], k: int, channel: ChannelEstimate, tau_k: float
) -> HermitianMatrix:
    """S-procedure matrix of user ``k``; PSD iff the SINR target holds over the whole ball."""
    if tau_k < 0.0:
        raise ValueError(f"tau must be nonnegative, got {tau_k}")
    Xs = np.asarray(Xs, dtype=complex)
    Y = Xs[k] / channel.gamma - (Xs.sum(axis=0) - Xs[k])
    E = gamma_lift(channel.hHat)
    n = E.shape[0]
    G = E.conj().T @ Y @ E
    G[:n, :n] += tau_k * np.eye(n)
    G[n, n] += -channel.sigma2 - tau_k * channel.epsilon**2
    return HermitianMatrix(0.5 * (G + G.conj().T))


@dataclass
class LmiBlock:
    """Affine Hermitian map ``constant + sum_terms scale * sum_j v[index_j] basis_j``."""

    name: str
    user: int
    constant: np.ndarray
    terms: List[Tuple[np.ndarray, np.ndarray, float]] = field(default_factory=list)

    @property
    def order(self) -> int:
        return int(self.constant.shape[0])

    def evaluate(self, v: np.ndarray) -> HermitianMatrix:
        out = np.array(self.constant, dtype=complex)
        for index, basis, scale in self.terms:
            out = out + scale * np.tensordot(v[index], basis, axes=1)
        return HermitianMatrix(0.5 * (out + out.conj().T))

    def to_cone(self) -> PsdBlock:
        bases: List[np.ndarray] = []
        terms: List[BlockTerm] = []
        seen: dict = {}
        for index, basis, scale in self.terms:
            key = id(basis)
            if key not in seen:
                seen[key] = len(bases)
                bases.append(real_embed(basis))
            terms.append(BlockTerm(seen[key], np.asarray(index, dtype=int), -scale))
        return PsdBlock(C=real_embed(self.constant), bases=bases, terms=terms, name=self.name)


@dataclass
class SlotSubproblem:
    t: int
    weights: np.ndarray  # lambda_i^t, length I
    channels: Tuple[ChannelEstimate, ...]  # one per user
    selection: np.ndarray  # (I, n) diagonals of B_i
    headroom: np.ndarray  # PgMax - Pc per BS
    mode: SdpMode = SdpMode.ROBUST

    @property
    def K(self) -> int:
        return len(self.channels)

    @property
    def n(self) -> int:
        return int(self.selection.shape[1])

    @property
    def n_vars(self) -> int:
        return self.K * self.n**2 + (self.K if self.mode is SdpMode.ROBUST else 0)

    def x_index(self, k: int) -> np.ndarray:
        p = self.n**2
        return np.arange(k * p, (k + 1) * p)

    def tau_index(self, k: int) -> int:
        return self.K * self.n**2 + k

    def power_coefficients(self) -> np.ndarray:
        """(I, n*n) map from one user's parameters to ``tr(B_i X)``."""
        coef = np.zeros((self.selection.shape[0], self.n**2))
        coef[:, : self.n] = self.selection
        return coef

    def objective(self) -> np.ndarray:
        per_user = np.asarray(self.weights, dtype=float) @ self.power_coefficients()
        f = np.zeros(self.n_vars)
        f[: self.K * self.n**2] = np.tile(per_user, self.K)
        return f

    def lmi_blocks(self) -> List[LmiBlock]:
        n, K = self.n, self.K
        E = hermitian_basis(n)
        blocks = [
            LmiBlock(f"X[{k}]", k, np.zeros((n, n), dtype=complex), [(self.x_index(k), E, 1.0)])
            for k in range(K)
        ]
        if self.mode is not SdpMode.ROBUST:
            return blocks
        for k, ch in enumerate(self.channels):
            lift = gamma_lift(ch.hHat)
            lifted = np.einsum("ai,jab,bc->jic", lift.conj(), E, lift)
            tau_basis = np.diag(np.concatenate([np.ones(n), [-ch.epsilon**2]])).astype(complex)
            const = np.zeros((n + 1, n + 1), dtype=complex)
            const[n, n] = -ch.sigma2
            terms = [
                (self.x_index(l), lifted, 1.0 / ch.gamma if l == k else -1.0) for l in range(K)
            ]
            terms.append((np.array([self.tau_index(k)]), tau_basis[None, :, :], 1.0))
            blocks.append(LmiBlock(f"Gamma[{k}]", k, const, terms))
        return blocks

    def linear_rows(self) -> LinearCone:
        """Rows ``c - G v >= 0``: power range per BS, tau >= 0, nominal SINR (non-robust)."""
        K = self.K
        coef = self.power_coefficients()
        rows_c: List[float] = []
        rows_G: List[np.ndarray] = []
        names: List[str] = []
        for i in range(coef.shape[0]):
            g = np.zeros(self.n_vars)
            for k in range(K):
                g[self.x_index(k)] = coef[i]
            rows_c += [0.0, float(self.headroom[i])]
            rows_G += [-g, g]
            names += [f"power_lo[{i}]", f"power_hi[{i}]"]
        if self.mode is SdpMode.ROBUST:
            for k in range(K):
                g = np.zeros(self.n_vars)
                g[self.tau_index(k)] = -1.0
                rows_c.append(0.0)
                rows_G.append(g)
                names.append(f"tau[{k}]")
        else:
            quad = np.real(
                np.einsum("ka,jab,kb->kj", np.stack([c.hHat.conj() for c in self.channels]),
                          hermitian_basis(self.n), np.stack([c.hHat for c in self.channels]))
            )
            for k, ch in enumerate(self.channels):
                g = np.zeros(self.n_vars)
                for l in range(K):
                    g[self.x_index(l)] = -quad[k] * (1.0 / ch.gamma if l == k else -1.0)
                rows_c.append(-ch.sigma2)
                rows_G.append(g)
                names.append(f"sinr[{k}]")
        return LinearCone(np.array(rows_c), np.vstack(rows_G), names)

    def to_conic(self) -> ConicProblem:
        blocks = [blk.to_cone() for blk in self.lmi_blocks()]
        return ConicProblem(b=-self.objective(), blocks=blocks, linear=self.linear_rows())

    def unpack(self, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        v = np.asarray(v, dtype=float)
        p = self.n**2
        X = hermitian_from_params(v[: self.K * p].reshape(self.K, p), self.n)
        tau = v[self.K * p :] if self.mode is SdpMode.ROBUST else np.zeros(self.K)
        return X, tau

    def pack(self, X: np.ndarray, tau: Optional[np.ndarray] = None) -> np.ndarray:
        v = hermitian_params(np.asarray(X)).reshape(-1)
        if self.mode is SdpMode.ROBUST:
            v = np.concatenate([v, np.zeros(self.K) if tau is None else np.asarray(tau, float)])
        return v


def build_slot_subproblem(
    instance: ProblemInstance,
    t: int,
    weights: np.ndarray,
    mode: SdpMode = SdpMode.ROBUST,
) -> SlotSubproblem:
    d = instance.dims
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != d.I:
        raise ValueError(f"slot weights need one entry per BS ({d.I}), got {w.size}")
    if not np.all(np.isfinite(w)):
        raise ValueError("slot weights must be finite")
    return SlotSubproblem(
        t=t,
        weights=w,
        channels=tuple(instance.channel(k, t) for k in range(d.K)),
        selection=instance.selection_diagonals(),
        headroom=np.array([b.PgMax - b.Pc for b in instance.bs]),
        mode=mode,
    )

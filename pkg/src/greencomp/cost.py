from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .model import PriceCurve
from .uncertainty import UncertaintySet, cost_terms, worst_case_energy


@dataclass(frozen=True)
class CostEval:
    """Worst-case cost of one BS at a power profile.

    ``value`` is ``G(p)`` from :func:`worst_cost`; :func:`tilde_g_subgradient`
    returns ``G(p) - lambda'p`` there instead, together with its subgradient.
    """

    value: float
    e_star: np.ndarray
    subgrad: Optional[np.ndarray] = None


def transaction_cost(p: np.ndarray, e: np.ndarray, prices: PriceCurve) -> float:
    """``sum_t alpha[p-e]^+ - beta[p-e]^-`` for one realisation ``e``."""
    d = np.asarray(p, dtype=float) - np.asarray(e, dtype=float)
    return float(np.sum(prices.alpha * np.maximum(d, 0.0) - prices.beta * np.maximum(-d, 0.0)))


def transaction_cost_split(p: np.ndarray, e: np.ndarray, prices: PriceCurve) -> float:
    """Same cost in the ``psi|p-e| + phi(p-e)`` form."""
    return float(cost_terms(np.asarray(p, dtype=float), np.asarray(e, dtype=float),
                            prices.psi, prices.phi).sum())


def worst_cost(p: np.ndarray, uset: UncertaintySet, prices: PriceCurve) -> CostEval:
    e_star, value = worst_case_energy(uset, np.asarray(p, dtype=float), prices)
    return CostEval(value=value, e_star=e_star)


def tilde_g_subgradient(
    p: np.ndarray, lam: np.ndarray, uset: UncertaintySet, prices: PriceCurve
) -> CostEval:
    """Value and subgradient of ``G(p) - lambda'p``; at ``p == e*`` the buy side is taken."""
    p = np.asarray(p, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != p.shape:
        raise ValueError(f"lambda has shape {lam.shape}, power profile {p.shape}")
    base = worst_cost(p, uset, prices)
    g = np.where(p >= base.e_star, prices.alpha - lam, prices.beta - lam)
    return CostEval(value=base.value - float(lam @ p), e_star=base.e_star, subgrad=g)


def unbounded_slots(lam: np.ndarray, prices: PriceCurve, tol: float = 1e-12) -> List[int]:
    """Slots where ``G(p) - lambda'p`` decreases without bound along a ray.

    Along ``p^t -> +inf`` the slope is ``alpha - lambda``, along ``p^t -> -inf``
    it is ``lambda - beta``; both must be nonnegative.
    """
    lam = np.asarray(lam, dtype=float)
    bad = (lam > prices.alpha + tol) | (lam < prices.beta - tol)
    return [int(t) for t in np.flatnonzero(bad)]


def project_to_band(lam: np.ndarray, prices: PriceCurve) -> np.ndarray:
    return np.clip(np.asarray(lam, dtype=float), prices.beta, prices.alpha)

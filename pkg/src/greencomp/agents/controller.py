from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

from ..bundle import BundleStatus
from ..coordinator import BsOutcome
from .messages import BsReport, PriceBroadcast


def broadcast(
    iteration: int, lam: np.ndarray, warm: Optional[np.ndarray] = None
) -> List[PriceBroadcast]:
    """One multiplier row per BS; the previous power profile rides along as a warm start."""
    return [
        PriceBroadcast(iteration=iteration, bs=i, lam=lam[i].tolist(),
                       warm=None if warm is None else warm[i].tolist())
        for i in range(lam.shape[0])
    ]


def collect(reports: Sequence[BsReport], n_bs: int) -> List[BsOutcome]:
    by_bs = {r.bs: r for r in reports}
    missing = [i for i in range(n_bs) if i not in by_bs]
    if missing:
        raise RuntimeError(f"no report from base stations {missing}")
    return [
        BsOutcome(
            i=i,
            Pb=np.array(r.Pb, dtype=float),
            C=np.array(r.C, dtype=float),
            P=np.array(r.P, dtype=float),
            battery_value=r.battery_value,
            power_value=r.power_value,
            status=BundleStatus(r.status),
            unbounded_slots=list(r.unbounded_slots),
            bundle_iterations=r.bundle_iterations,
            seconds_lp=r.seconds_lp,
            seconds_bundle=r.seconds_bundle,
        )
        for i, r in sorted(by_bs.items())
    ]

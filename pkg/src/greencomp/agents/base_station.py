from __future__ import annotations

from typing import Optional

import numpy as np

from ..bundle import BundleParams
from ..coordinator import BsOutcome, solve_base_station
from ..model import ProblemInstance
from .messages import BsReport, PriceBroadcast


def to_report(iteration: int, out: BsOutcome) -> BsReport:
    return BsReport(
        iteration=iteration,
        bs=out.i,
        Pb=out.Pb.tolist(),
        C=out.C.tolist(),
        P=out.P.tolist(),
        battery_value=out.battery_value,
        power_value=out.power_value,
        status=out.status.value,
        unbounded_slots=out.unbounded_slots,
        bundle_iterations=out.bundle_iterations,
        seconds_lp=out.seconds_lp,
        seconds_bundle=out.seconds_bundle,
    )


def run(
    msg: PriceBroadcast, instance: ProblemInstance, bundle: Optional[BundleParams] = None
) -> BsReport:
    """Local battery LP and power subproblem of one BS at the broadcast multipliers."""
    warm = None if msg.warm is None else np.array(msg.warm, dtype=float)
    out = solve_base_station(msg.bs, np.array(msg.lam, dtype=float), instance, bundle, warm)
    return to_report(msg.iteration, out)

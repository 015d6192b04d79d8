from .ipm import ConicProblem, ConicSolution, ConicStatus, LinearCone, PsdBlock, ipm_solve
from .lmi import LmiBlock, SdpMode, SlotSubproblem, build_gamma, build_slot_subproblem
from .slot import SdpSolution, SdpStatus, solve_slot_sdp

__all__ = [
    "ConicProblem",
    "ConicSolution",
    "ConicStatus",
    "LinearCone",
    "LmiBlock",
    "PsdBlock",
    "SdpMode",
    "SdpSolution",
    "SdpStatus",
    "SlotSubproblem",
    "build_gamma",
    "build_slot_subproblem",
    "ipm_solve",
    "solve_slot_sdp",
]

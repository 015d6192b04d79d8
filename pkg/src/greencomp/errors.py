from __future__ import annotations

from typing import Sequence


class GreencompError(Exception):
    """Root of every error raised by the package."""


class InstanceValidationError(GreencompError, ValueError):
    def __init__(self, invariant: str, detail: str = "") -> None:
        self.invariant = invariant
        self.detail = detail
        msg = f"invariant violated: {invariant}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class IndexOutOfRange(GreencompError, IndexError):
    pass


class EighError(GreencompError, ArithmeticError):
    pass


class EmptyUncertaintySet(GreencompError, ValueError):
    pass


class SignPatternCapExceeded(GreencompError, ValueError):
    def __init__(self, length: int, cap: int) -> None:
        self.length = length
        self.cap = cap
        super().__init__(
            f"sub-horizon of {length} slots needs 2^{length} sign patterns; cap is {cap}"
        )


class InfeasibleLp(GreencompError):
    pass


class UnboundedLp(GreencompError):
    pass


class NumericalFailure(GreencompError):
    pass


class AdmissionControlRequired(GreencompError):
    """The robust beamforming subproblem of a slot has no feasible point."""

    def __init__(self, slot: int, users: Sequence[int], detail: str = "") -> None:
        self.slot = slot
        self.users = list(users)
        who = ", ".join(str(k) for k in self.users) or "unknown"
        msg = f"slot {slot}: SINR targets unattainable (users {who}); drop users or relax targets"
        if detail:
            msg += f" [{detail}]"
        super().__init__(msg)


class StepsizeTooAggressive(GreencompError):
    def __init__(self, bs: int, slots: Sequence[int]) -> None:
        self.bs = bs
        self.slots = list(slots)
        super().__init__(
            f"BS {bs}: multipliers left the price band in slots {self.slots}; "
            "power subproblem is unbounded"
        )


class RankDeficient(GreencompError):
    pass


class NotRankOne(GreencompError):
    def __init__(self, ratio: float) -> None:
        self.ratio = ratio
        super().__init__(f"lifted matrix is not rank one (lambda2/lambda1 = {ratio:.3e})")


class RoundingFailed(GreencompError):
    pass


class ArtifactMissing(GreencompError, FileNotFoundError):
    pass

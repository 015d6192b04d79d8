from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from ..coordinator import BsOutcome, ConvergenceReport, DualState, SolveOptions, solve
from ..model import ProblemInstance, Schedule
from . import base_station, controller
from .messages import BsReport, Envelope, PriceBroadcast, decode, encode

logger = logging.getLogger(__name__)

CONTROLLER = "controller"


def _bs_name(i: int) -> str:
    return f"bs{i}"


@dataclass
class MessageLog:
    """Serialized backhaul traffic in send order."""

    lines: List[str] = field(default_factory=list)

    def append(self, env: Envelope) -> str:
        line = encode(env)
        self.lines.append(line)
        return line

    def records(self) -> List[Envelope]:
        return [decode(line) for line in self.lines]

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text("".join(line + "\n" for line in self.lines), encoding="utf-8")
        return path


def exchange_messages(
    iteration: int,
    lam: np.ndarray,
    instance: ProblemInstance,
    options: SolveOptions,
    log: MessageLog,
    warm: Optional[np.ndarray] = None,
) -> Tuple[List[BsOutcome], List[Envelope]]:
    """Send ``lambda(j)`` down to every BS and bring the local decisions back up.

    Both directions go through the JSON wire form; the receiving side only sees
    the decoded copy.
    """
    sent: List[Envelope] = []
    replies: List[BsReport] = []
    for msg in controller.broadcast(iteration, lam, warm):
        down = Envelope(seq=len(log.lines), iteration=iteration, sender=CONTROLLER,
                        recipient=_bs_name(msg.bs), direction="downlink", body=msg)
        inbox = decode(log.append(down)).body
        sent.append(down)
        assert isinstance(inbox, PriceBroadcast)
        report = base_station.run(inbox, instance, options.bundle)
        up = Envelope(seq=len(log.lines), iteration=iteration, sender=_bs_name(msg.bs),
                      recipient=CONTROLLER, direction="uplink", body=report)
        received = decode(log.append(up)).body
        sent.append(up)
        assert isinstance(received, BsReport)
        replies.append(received)
    logger.debug("iteration %d: %d messages exchanged", iteration, len(sent))
    return controller.collect(replies, instance.dims.I), sent


def run_distributed(
    instance: ProblemInstance, options: Optional[SolveOptions] = None
) -> Tuple[Schedule, ConvergenceReport, DualState, MessageLog]:
    opts = options or SolveOptions.from_settings()
    log = MessageLog()

    def exchange(j: int, lam: np.ndarray, warm: Optional[np.ndarray]) -> List[BsOutcome]:
        outcomes, _ = exchange_messages(j, lam, instance, opts, log, warm)
        return outcomes

    schedule, report, state = solve(instance, opts, exchange=exchange)
    logger.info("distributed run logged %d messages", len(log.lines))
    return schedule, report, state, log

"""Backhaul messages between the central controller and the base stations.

Every message travels as one JSON line; floats use the shortest round-trip
form, so a decoded payload is bit-identical to the encoded one.
"""
from __future__ import annotations

from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field


class _Msg(BaseModel):
    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="constants")


class PriceBroadcast(_Msg):
    kind: Literal["prices"] = "prices"
    iteration: int
    bs: int
    lam: List[float]
    warm: Optional[List[float]] = None


class BsReport(_Msg):
    kind: Literal["report"] = "report"
    iteration: int
    bs: int
    Pb: List[float]
    C: List[float]
    P: List[float]
    battery_value: float
    power_value: float
    status: str
    unbounded_slots: List[int] = Field(default_factory=list)
    bundle_iterations: int = 0
    seconds_lp: float = 0.0
    seconds_bundle: float = 0.0


Body = Annotated[Union[PriceBroadcast, BsReport], Field(discriminator="kind")]


class Envelope(_Msg):
    seq: int
    iteration: int
    sender: str
    recipient: str
    direction: Literal["downlink", "uplink"]
    body: Body


def encode(env: Envelope) -> str:
    return env.model_dump_json()


def decode(line: str) -> Envelope:
    return Envelope.model_validate_json(line)

"""Instance documents: JSON -> validated pydantic models -> numeric ProblemInstance.

Complex channel vectors are stored as interleaved ``[re0, im0, re1, im1, ...]``
arrays. Prices take either an explicit ``beta`` or a selling ratio ``r`` with
``beta = r * alpha``.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import EmptyUncertaintySet, InstanceValidationError
from .model import (
    BatteryParams,
    BsParams,
    ChannelEstimate,
    Dimensions,
    PriceCurve,
    ProblemInstance,
)
from .uncertainty import EllipsoidalSet, PolyhedralSet, Singleton, SubHorizon, UncertaintySet

logger = logging.getLogger(__name__)


class _Doc(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class DimensionsDoc(_Doc):
    T: int
    I: int  # noqa: E741
    K: int
    M: int


class PricesDoc(_Doc):
    alpha: List[float]
    beta: Optional[List[float]] = None
    r: Optional[float] = None

    @model_validator(mode="after")
    def _one_selling_rule(self) -> "PricesDoc":
        if (self.beta is None) == (self.r is None):
            raise ValueError("give exactly one of 'beta' or 'r'")
        if self.r is not None and not 0.0 <= self.r < 1.0:
            raise ValueError("selling ratio r must lie in [0, 1)")
        return self

    def selling(self) -> List[float]:
        if self.beta is not None:
            return list(self.beta)
        assert self.r is not None
        return [self.r * a for a in self.alpha]


class BatteryDoc(_Doc):
    C0: float
    Cmax: float
    PbMin: float
    PbMax: float
    varpi: float


class SubHorizonDoc(_Doc):
    slots: List[int]
    e_min: Optional[float] = None
    e_max: Optional[float] = None


class PolyhedralDoc(_Doc):
    kind: Literal["polyhedral"]
    lower: List[float]
    upper: List[float]
    subhorizons: List[SubHorizonDoc] = Field(default_factory=list)


class EllipsoidalDoc(_Doc):
    kind: Literal["ellipsoidal"]
    center: List[float]
    shape: List[List[float]]


class SingletonDoc(_Doc):
    kind: Literal["singleton"]
    point: List[float]


ResDoc = Union[PolyhedralDoc, EllipsoidalDoc, SingletonDoc]


class BaseStationDoc(_Doc):
    battery: BatteryDoc
    Pc: float
    PgMax: float
    xi: float = 1.0
    res: ResDoc = Field(discriminator="kind")
    prices: Optional[PricesDoc] = None


class ChannelDoc(_Doc):
    user: int
    slot: int
    h: List[float]
    epsilon: float
    sigma2: float = 1.0
    gamma: float

    @model_validator(mode="after")
    def _interleaved(self) -> "ChannelDoc":
        if len(self.h) % 2:
            raise ValueError("h must hold interleaved real/imag pairs")
        return self

    def vector(self) -> np.ndarray:
        a = np.asarray(self.h, dtype=float)
        return a[0::2] + 1j * a[1::2]


class InstanceDocument(_Doc):
    dimensions: DimensionsDoc
    prices: PricesDoc
    base_stations: List[BaseStationDoc]
    channels: List[ChannelDoc]
    solver: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    meta: Dict[str, Any] = Field(default_factory=dict)


def interleave(h: np.ndarray) -> List[float]:
    """Complex vector -> ``[re0, im0, re1, im1, ...]``."""
    h = np.asarray(h, dtype=complex).reshape(-1)
    out = np.empty(2 * h.size)
    out[0::2] = h.real
    out[1::2] = h.imag
    return out.tolist()


def _res_from_doc(doc: ResDoc) -> UncertaintySet:
    if isinstance(doc, PolyhedralDoc):
        subs = tuple(SubHorizon(tuple(s.slots), s.e_min, s.e_max) for s in doc.subhorizons)
        return PolyhedralSet(np.asarray(doc.lower), np.asarray(doc.upper), subs)
    if isinstance(doc, EllipsoidalDoc):
        return EllipsoidalSet(np.asarray(doc.center), np.asarray(doc.shape))
    return Singleton(np.asarray(doc.point))


def _prices_from_doc(doc: PricesDoc) -> PriceCurve:
    return PriceCurve(np.asarray(doc.alpha), np.asarray(doc.selling()))


def _first_error(exc: ValidationError) -> str:
    err = exc.errors()[0]
    where = ".".join(str(p) for p in err.get("loc", ()))
    return f"{where}: {err.get('msg', 'invalid')}" if where else str(err.get("msg", "invalid"))


def parse_document(raw: Union[Mapping[str, Any], str, Path]) -> InstanceDocument:
    """Schema-level validation only; numeric invariants are checked by :func:`build_instance`."""
    if isinstance(raw, Path) or (isinstance(raw, str) and not raw.lstrip().startswith("{")):
        raw = json.loads(Path(raw).read_text(encoding="utf-8"))
    elif isinstance(raw, str):
        raw = json.loads(raw)
    try:
        return InstanceDocument.model_validate(raw)
    except ValidationError as exc:
        raise InstanceValidationError("config schema", _first_error(exc)) from exc


def build_instance(raw: Union[Mapping[str, Any], str, Path, InstanceDocument]) -> ProblemInstance:
    doc = raw if isinstance(raw, InstanceDocument) else parse_document(raw)
    dims = Dimensions(doc.dimensions.T, doc.dimensions.I, doc.dimensions.K, doc.dimensions.M)
    prices = _prices_from_doc(doc.prices)

    bs: List[BsParams] = []
    for i, b in enumerate(doc.base_stations):
        battery = BatteryParams(
            b.battery.C0, b.battery.Cmax, b.battery.PbMin, b.battery.PbMax, b.battery.varpi
        )
        try:
            res = _res_from_doc(b.res)
        except EmptyUncertaintySet as exc:
            raise InstanceValidationError("RES set nonempty", f"BS {i}: {exc}") from exc
        own = _prices_from_doc(b.prices) if b.prices is not None else None
        bs.append(BsParams(battery, b.Pc, b.PgMax, b.xi, res, own))

    grid: List[List[Optional[ChannelEstimate]]] = [[None] * dims.T for _ in range(dims.K)]
    for ch in doc.channels:
        if not (0 <= ch.user < dims.K and 0 <= ch.slot < dims.T):
            raise InstanceValidationError(
                "channel index within dims", f"user {ch.user}, slot {ch.slot}"
            )
        if grid[ch.user][ch.slot] is not None:
            raise InstanceValidationError(
                "one channel block per (k, t)", f"duplicate user {ch.user}, slot {ch.slot}"
            )
        grid[ch.user][ch.slot] = ChannelEstimate(ch.vector(), ch.epsilon, ch.sigma2, ch.gamma)
    missing = [(k, t) for k in range(dims.K) for t in range(dims.T) if grid[k][t] is None]
    if missing:
        raise InstanceValidationError("one channel block per (k, t)", f"missing {missing[:5]}")

    channels = tuple(tuple(row) for row in grid)  # type: ignore[arg-type]
    meta = dict(doc.meta)
    if doc.seed is not None:
        meta.setdefault("seed", doc.seed)
    if doc.prices.r is not None:
        meta.setdefault("r", doc.prices.r)
    instance = ProblemInstance(dims, prices, tuple(bs), channels, meta)
    logger.debug("built instance T=%d I=%d K=%d M=%d", dims.T, dims.I, dims.K, dims.M)
    return instance


def dump_instance(
    instance: ProblemInstance, solver: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """Inverse of :func:`build_instance` (the selling side is written as explicit ``beta``)."""
    d = instance.dims

    def res_doc(s: UncertaintySet) -> Dict[str, Any]:
        if isinstance(s, PolyhedralSet):
            return {
                "kind": "polyhedral",
                "lower": s.lower.tolist(),
                "upper": s.upper.tolist(),
                "subhorizons": [
                    {"slots": list(h.slots), "e_min": h.e_min, "e_max": h.e_max}
                    for h in s.subhorizons
                ],
            }
        if isinstance(s, EllipsoidalSet):
            return {"kind": "ellipsoidal", "center": s.center.tolist(), "shape": s.shape.tolist()}
        return {"kind": "singleton", "point": s.point.tolist()}

    def price_doc(p: PriceCurve) -> Dict[str, Any]:
        return {"alpha": p.alpha.tolist(), "beta": p.beta.tolist()}

    stations = []
    for b in instance.bs:
        entry: Dict[str, Any] = {
            "battery": {
                "C0": b.battery.C0,
                "Cmax": b.battery.Cmax,
                "PbMin": b.battery.PbMin,
                "PbMax": b.battery.PbMax,
                "varpi": b.battery.varpi,
            },
            "Pc": b.Pc,
            "PgMax": b.PgMax,
            "xi": b.xi,
            "res": res_doc(b.res),
        }
        if b.prices is not None:
            entry["prices"] = price_doc(b.prices)
        stations.append(entry)

    channels = [
        {
            "user": k,
            "slot": t,
            "h": interleave(ch.hHat),
            "epsilon": ch.epsilon,
            "sigma2": ch.sigma2,
            "gamma": ch.gamma,
        }
        for k, row in enumerate(instance.channels)
        for t, ch in enumerate(row)
    ]
    out: Dict[str, Any] = {
        "dimensions": {"T": d.T, "I": d.I, "K": d.K, "M": d.M},
        "prices": price_doc(instance.prices),
        "base_stations": stations,
        "channels": channels,
        "solver": dict(solver or {}),
        "meta": {k: v for k, v in instance.meta.items() if k != "seed"},
    }
    if "seed" in instance.meta:
        out["seed"] = instance.meta["seed"]
    return out

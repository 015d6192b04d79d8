"""Artifact directory: schedule tables, lifted matrices, reports and the run manifest.

CSV schemas
  schedule_P.csv / schedule_Pb.csv / schedule_C.csv   bs, slot, value
  convergence.csv        one row per dual iteration (see ``IterationRecord``)
  bundle_trace.csv       bs, iteration, value, eta, rho, step, cuts at the final multipliers
  sinr_cdf.csv           mode, user, value, probability
  cost_cdf.csv           method, kappa, value, probability
  price_profile.csv      bs, slot, P, Pb, C (``bs == "total"`` rows aggregate)
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import ArtifactMissing
from .ingest import interleave
from .model import Schedule
from .settings import Settings, get_settings

logger = logging.getLogger(__name__)

SCHEDULE_TABLES = {"P": "schedule_P.csv", "Pb": "schedule_Pb.csv", "C": "schedule_C.csv"}
LIFTED = "lifted.npz"
BEAMFORMERS = "beamformers.json"
MANIFEST = "manifest.json"

_PACKAGES = ("greencomp", "numpy", "scipy", "pandas", "pydantic", "pydantic-settings", "cvxpy")


def long_frame(values: np.ndarray) -> pd.DataFrame:
    I, T = values.shape  # noqa: E741
    return pd.DataFrame(
        {
            "bs": np.repeat(np.arange(I), T),
            "slot": np.tile(np.arange(T), I),
            "value": np.asarray(values, dtype=float).reshape(-1),
        }
    )


def wide_array(df: pd.DataFrame) -> np.ndarray:
    table = df.pivot(index="bs", columns="slot", values="value").sort_index().sort_index(axis=1)
    return table.to_numpy(dtype=float)


def file_sha256(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def package_versions(names: Sequence[str] = _PACKAGES) -> Dict[str, Optional[str]]:
    out: Dict[str, Optional[str]] = {}
    for name in names:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = None
    return out


@dataclass
class ArtifactStore:
    root: Path
    written: List[str] = field(default_factory=list)

    @classmethod
    def from_settings(cls, root: Optional[Union[str, Path]] = None) -> "ArtifactStore":
        return cls(Path(root if root is not None else get_settings().OUTPUT_DIR))

    def path(self, name: str) -> Path:
        return self.root / name

    def _record(self, name: str) -> Path:
        if name not in self.written:
            self.written.append(name)
        return self.path(name)

    def _target(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        return self._record(name)

    def write_frame(self, name: str, df: pd.DataFrame) -> Path:
        path = self._target(name)
        df.to_csv(path, index=False)
        logger.debug("wrote %s (%d rows)", path, len(df))
        return path

    def write_json(self, name: str, obj: Any) -> Path:
        path = self._target(name)
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def write_lines(self, name: str, lines: Sequence[str]) -> Path:
        path = self._target(name)
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        return path

    def write_schedule(self, schedule: Schedule) -> List[Path]:
        paths = [self.write_frame(name, long_frame(getattr(schedule, attr)))
                 for attr, name in SCHEDULE_TABLES.items()]
        lifted = self._target(LIFTED)
        np.savez(lifted, X=schedule.X, tau=schedule.tau)
        paths.append(lifted)
        if schedule.w is not None:
            K, T = schedule.w.shape[:2]
            paths.append(self.write_json(BEAMFORMERS, {
                "K": K,
                "T": T,
                "extraction": schedule.extraction or {},
                "beamformers": [
                    {"user": k, "slot": t, "w": interleave(schedule.w[k, t])}
                    for k in range(K)
                    for t in range(T)
                ],
            }))
        return paths

    def _require(self, name: str) -> Path:
        path = self.path(name)
        if not path.is_file():
            raise ArtifactMissing(f"{path} not found; run `greencomp solve` first")
        return path

    def read_schedule(self, require_beamformers: bool = True) -> Schedule:
        arrays = {attr: wide_array(pd.read_csv(self._require(name)))
                  for attr, name in SCHEDULE_TABLES.items()}
        with np.load(self._require(LIFTED)) as data:
            X, tau = data["X"], data["tau"]
        w = None
        extraction = None
        if require_beamformers or self.path(BEAMFORMERS).is_file():
            doc = json.loads(self._require(BEAMFORMERS).read_text(encoding="utf-8"))
            n = X.shape[-1]
            w = np.zeros((doc["K"], doc["T"], n), dtype=complex)
            for entry in doc["beamformers"]:
                a = np.asarray(entry["w"], dtype=float)
                w[entry["user"], entry["slot"]] = a[0::2] + 1j * a[1::2]
            extraction = doc.get("extraction") or None
        return Schedule(arrays["P"], arrays["Pb"], arrays["C"], X, tau, w, extraction)

    def write_manifest(
        self,
        command: str,
        argv: Sequence[str],
        settings: Settings,
        config_path: Optional[Union[str, Path]] = None,
        seed: Optional[int] = None,
        extra: Optional[Mapping[str, Any]] = None,
    ) -> Path:
        """Merge this run into ``manifest.json``; every file written so far is listed."""
        path = self.path(MANIFEST)
        doc: Dict[str, Any] = {"runs": {}, "outputs": []}
        if path.is_file():
            doc = json.loads(path.read_text(encoding="utf-8"))
        config: Dict[str, Any] = {}
        if config_path is not None:
            config = {"path": str(config_path), "sha256": file_sha256(config_path)}
        doc.setdefault("runs", {})[command] = {
            "command": list(argv),
            "config": config,
            "seed": seed,
            "settings": settings.model_dump(),
            "outputs": list(self.written) + [MANIFEST],
            **dict(extra or {}),
        }
        doc["versions"] = package_versions()
        doc["outputs"] = sorted(set(doc.get("outputs", [])) | set(self.written) | {MANIFEST})
        self.write_json(MANIFEST, doc)
        logger.info("manifest %s lists %d outputs", path, len(doc["outputs"]))
        return path

"""Complex Hermitian helpers shared by the conic core, extraction and the checks.

Every PSD decision in the package goes through :func:`is_psd` so that one
tolerance (``Settings.PSD_TOL``) governs all of them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import EighError
from .settings import get_settings

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class HermitianMatrix:
    """Dense complex Hermitian matrix, symmetrised on construction."""

    data: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.data, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"Hermitian matrix must be square and non-empty, got {a.shape}")
        scale = max(1.0, float(np.max(np.abs(a))))
        if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL * scale:
            raise ValueError("matrix is not Hermitian to 1e-12")
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def order(self) -> int:
        return int(self.data.shape[0])

    @classmethod
    def outer(cls, w: np.ndarray) -> "HermitianMatrix":
        w = np.asarray(w, dtype=complex).reshape(-1)
        return cls(np.outer(w, w.conj()))

    def __add__(self, other: "HermitianMatrix") -> "HermitianMatrix":
        return HermitianMatrix(self.data + other.data)


MatrixLike = Union[HermitianMatrix, np.ndarray]


def _as_array(a: MatrixLike) -> np.ndarray:
    if isinstance(a, HermitianMatrix):
        return a.data
    return np.asarray(a)


def eigh(a: MatrixLike) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix."""
    arr = _as_array(a)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise EighError(f"eigh needs a non-empty square matrix, got shape {arr.shape}")
    try:
        w, v = np.linalg.eigh(arr)
    except np.linalg.LinAlgError as exc:
        raise EighError(f"eigendecomposition did not converge: {exc}") from exc
    return w, v


def real_embed(a: MatrixLike) -> np.ndarray:
    """``[[Re, -Im], [Im, Re]]``; a ring homomorphism that preserves the spectrum.

    Leading axes are treated as a batch.
    """
    arr = _as_array(a)
    re, im = arr.real, arr.imag
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def real_unembed(s: np.ndarray) -> np.ndarray:
    """Inverse of :func:`real_embed` for matrices that carry the embedding structure.

    Averages the two copies so that unstructured symmetric inputs map to the
    nearest embedded matrix.
    """
    n = s.shape[0] // 2
    re = 0.5 * (s[:n, :n] + s[n:, n:])
    im = 0.5 * (s[n:, :n] - s[:n, n:])
    return re + 1j * im


def min_eigenvalue(a: MatrixLike) -> float:
    arr = _as_array(a)
    try:
        return float(np.linalg.eigvalsh(arr)[0])
    except np.linalg.LinAlgError as exc:
        raise EighError(f"eigenvalues did not converge: {exc}") from exc


def is_psd(a: MatrixLike, tol: float | None = None) -> bool:
    if tol is None:
        tol = get_settings().PSD_TOL
    return min_eigenvalue(a) >= -tol

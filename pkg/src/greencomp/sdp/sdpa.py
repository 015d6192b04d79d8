"""SDPA sparse (``.dat-s``) export of a conic problem for external cross-checks.

SDPA reads ``min c'x  s.t.  sum_i F_i x_i - F_0 >= 0``. With our dual form
``max b'y  s.t.  C - sum_j y_j A_j >= 0`` that is ``x = y``, ``c = -b``,
``F_i = -A_i`` and ``F_0 = -C``; the orthant becomes one diagonal block.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, List, TextIO, Tuple, Union

import numpy as np

from .ipm import ConicProblem
from .lmi import SlotSubproblem

_ZERO = 1e-15


def _entries(mat: np.ndarray) -> List[Tuple[int, int, float]]:
    iu, ju = np.triu_indices(mat.shape[0])
    vals = mat[iu, ju]
    keep = np.abs(vals) > _ZERO
    return [(int(i) + 1, int(j) + 1, float(v)) for i, j, v in zip(iu[keep], ju[keep], vals[keep])]


def write_sdpa(prob: ConicProblem, out: TextIO, comment: str = "") -> None:
    m = prob.m
    blocks = list(prob.blocks)
    has_lin = prob.linear is not None and prob.linear.size > 0
    struct = [str(blk.order) for blk in blocks]
    if has_lin:
        assert prob.linear is not None
        struct.append(str(-prob.linear.size))

    if comment:
        out.write(f'"{comment}"\n')
    out.write(f"{m}\n{len(struct)}\n{' '.join(struct)}\n")
    out.write(" ".join(repr(float(-v)) for v in prob.b) + "\n")

    for bno, blk in enumerate(blocks, start=1):
        for i, j, v in _entries(-blk.C):
            out.write(f"0 {bno} {i} {j} {v!r}\n")
        per_var: Dict[int, np.ndarray] = {}
        for a, idx, scales in blk._groups:
            base = blk.bases[a]
            p = base.shape[0]
            for t, s in enumerate(scales):
                for j in range(p):
                    var = int(idx[t * p + j])
                    per_var[var] = per_var.get(var, 0.0) + s * base[j]
        for var in sorted(per_var):
            for i, j, v in _entries(-per_var[var]):
                out.write(f"{var + 1} {bno} {i} {j} {v!r}\n")

    if has_lin:
        assert prob.linear is not None
        bno = len(blocks) + 1
        c = np.asarray(prob.linear.c, dtype=float)
        G = np.asarray(prob.linear.G, dtype=float)
        for r in np.flatnonzero(np.abs(c) > _ZERO):
            out.write(f"0 {bno} {r + 1} {r + 1} {float(-c[r])!r}\n")
        for var in range(m):
            for r in np.flatnonzero(np.abs(G[:, var]) > _ZERO):
                out.write(f"{var + 1} {bno} {r + 1} {r + 1} {float(-G[r, var])!r}\n")


def dump_slot(sub: SlotSubproblem, directory: Union[str, Path], iteration: int = 0) -> Path:
    path = Path(directory) / f"iter{iteration:04d}_slot{sub.t:02d}.dat-s"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        write_sdpa(sub.to_conic(), fh, comment=f"slot {sub.t} {sub.mode.value} K={sub.K} n={sub.n}")
    return path

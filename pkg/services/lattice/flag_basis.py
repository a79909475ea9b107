# services/lattice/flag_basis.py

"""
Normalized bases O w u adapted to the flag {V_l}_{l in eta(P)}.

z = O w is orthonormal and eigenspace-adapted: column i lies in the eigenspace of
alpha_{w(i)} and is chosen by Gram-Schmidt against the projections of the flag
onto that eigenspace. u = z^T v where the columns of v for the block ending at
jump l are Y_l A^{-1}, Y_l a basis of V_l and A the top l x l block of z^T Y_l.
"""

import logging
from typing import Any, Dict, List, Optional, Union

import mpmath

from services.errors import ComputationError, DimensionError, PrecisionError
from services.lattice.lattice_types import (
    FlagBasis,
    Lattice,
    LatticeSnapshot,
    MinimaResult,
    RationalSubspace,
    ToleranceConfig,
    as_snapshot,
)
from services.lattice.numeric import to_mpf
from services.lattice.regions import orientation_for
from services.weyl.weyl_types import DiagonalFlow, Orientation, ParabolicSubgroup

# -------------------- Logging --------------------
logger = logging.getLogger("lattice.flag_basis")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

LatticeLike = Union[Lattice, LatticeSnapshot]
Vector = List[Any]


def _real_basis(snap: LatticeSnapshot, V: RationalSubspace) -> List[Vector]:
    """Generators of V in a_t coordinates, as columns."""
    cols = snap.real_columns()
    d = snap.d
    return [[mpmath.fsum(to_mpf(cols[k][i]) * g[k] for k in range(d) if g[k]) for i in range(d)]
            for g in V.generators]


def _dot(a: Vector, b: Vector):
    return mpmath.fsum(x * y for x, y in zip(a, b))


def _adapted_frame(Ys: List[List[Vector]], P: ParabolicSubgroup, w: Orientation,
                   flow: DiagonalFlow, pivot_floor) -> List[Vector]:
    d = P.d
    unit = [[mpmath.mpf(int(i == j)) for i in range(d)] for j in range(d)]
    z: List[Vector] = []
    for k, blk in enumerate(P.blocks):
        Y = Ys[k] if k < len(Ys) else unit
        for i in blk:
            beta = flow.alpha[w.rep[i]]
            coords = {c for c in range(d) if flow.alpha[c] == beta}
            best, best_norm = None, mpmath.mpf(-1)
            for y in Y:
                cand = [y[c] if c in coords else mpmath.mpf(0) for c in range(d)]
                for prev in z:
                    s = _dot(prev, cand)
                    cand = [a - s * b for a, b in zip(cand, prev)]
                n = mpmath.sqrt(_dot(cand, cand))
                if n > best_norm:
                    best, best_norm = cand, n
            if best is None or best_norm <= pivot_floor:
                raise PrecisionError(f"flag has no component in the eigenspace of {beta} at position {i + 1}")
            z.append([c / best_norm for c in best])
    return z


def flag_basis(x: LatticeLike, P: ParabolicSubgroup, flow: DiagonalFlow, cfg: ToleranceConfig,
               minima: Optional[MinimaResult] = None) -> FlagBasis:
    if P.d != flow.d:
        raise DimensionError(f"parabolic has d={P.d}, flow has d={flow.d}")
    snap = as_snapshot(x, flow, cfg.precision)
    if snap.flow != flow:
        snap = LatticeSnapshot(base=snap.base, flow=flow, t=snap.t, precision=cfg.precision)
    subspaces: Dict[int, RationalSubspace] = {}
    w, notes = orientation_for(snap, flow, cfg, P, minima=minima, subspaces=subspaces)
    if w is None:
        raise ComputationError(f"no orientation with respect to {P.name}: {'; '.join(notes)}")

    d = P.d
    bits = max(snap.bits, cfg.precision) + 32
    with mpmath.workprec(bits):
        pivot_floor = mpmath.ldexp(1, -(cfg.precision // 2))
        Ys = [_real_basis(snap, subspaces[l]) for l in P.jumps]
        z = _adapted_frame(Ys, P, w, flow, pivot_floor)
        if mpmath.det(mpmath.matrix([[z[j][i] for j in range(d)] for i in range(d)])) < 0:
            z[d - 1] = [-c for c in z[d - 1]]

        v: List[Vector] = [None] * d  # type: ignore[list-item]
        for k, blk in enumerate(P.blocks):
            if k == len(Ys):
                for i in blk:
                    v[i] = list(z[i])
                continue
            l = P.jumps[k]
            Y = Ys[k]
            A = mpmath.matrix([[_dot(z[a], Y[b]) for b in range(l)] for a in range(l)])
            det_A = mpmath.det(A)
            if abs(det_A) <= pivot_floor * max(mpmath.mnorm(A, 1) ** l, 1):
                raise PrecisionError(f"near-degenerate pivot for V_{l}: det {mpmath.nstr(det_A, 5)}")
            A_inv = mpmath.inverse(A)
            for i in blk:
                v[i] = [mpmath.fsum(Y[b][r] * A_inv[b, i] for b in range(l)) for r in range(d)]
        u = [[_dot(z[i], v[j]) for j in range(d)] for i in range(d)]
        # O e_{w(i)} = z_i
        O_cols: List[Vector] = [None] * d  # type: ignore[list-item]
        for i in range(d):
            O_cols[w.rep[i]] = z[i]
        O = [[O_cols[j][i] for j in range(d)] for i in range(d)]
        wmat = [[int(w.rep[j] == i) for j in range(d)] for i in range(d)]
        columns = [[v[j][i] for j in range(d)] for i in range(d)]
        deviation = max(abs(u[i][j] - (i == j)) for i in range(d) for j in range(d))
        result = FlagBasis(parabolic=P, orientation=w, O=O, w=wmat, u=u, columns=columns)
    logger.info(f"flag basis for {w.label()} at t={snap.t}: |u - I| = {float(deviation):.3g}")
    return result

# services/coder/partition.py

"""
The final/temporary induction over levels delta^(r^m) and the orientation refinement.

Cells are the intervals between consecutive breakpoints of the scan; every
E_m is constant on a cell, so the induction runs on cell index ranges.
"""

import logging
import math
from math import factorial
from typing import Dict, List, Optional, Tuple

from services.coder.coder_types import CodedPartition, PartitionPiece, RefinedPiece, ThresholdScan
from services.errors import ComputationError, UniquenessError
from services.lattice.grassmann import WeightProfile, grassmann_intervals, resolve_eps0, weight_profile
from services.lattice.lattice_types import Lattice, RationalSubspace, ToleranceConfig
from services.lattice.regions import nested_flags
from services.lattice.subspaces import unique_small_subspace
from services.lattice.trajectory import TrajectoryEvaluator
from services.weyl.weyl_types import DiagonalFlow, Multiset, Orientation, ParabolicSubgroup

# -------------------- Logging --------------------
logger = logging.getLogger("coder.partition")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

Span = Tuple[int, int]  # cell index range [first, last)


def _split(labels: List[Tuple[int, ...]], first: int, last: int) -> List[Tuple[Span, Tuple[int, ...]]]:
    """Maximal runs of equal labels inside [first, last)."""
    out: List[Tuple[Span, Tuple[int, ...]]] = []
    a = first
    for c in range(first + 1, last + 1):
        if c == last or labels[c] != labels[a]:
            out.append(((a, c), labels[a]))
            a = c
    return out


def build_partition(scan: ThresholdScan, flow: DiagonalFlow, cfg: ToleranceConfig) -> CodedPartition:
    """
    J_0 = F_delta with no finals. At step m+1 each temporary U with label E_U is
    finalized on [a_U, b_U], the first and last cells of U with E_{m+1} = E_U,
    with deg = m+1 and Par = P(E_U); what remains of U is re-cut by E_{m+1}.
    """
    d = flow.d
    N = scan.N
    pts = scan.breakpoints
    cells = list(zip(pts, pts[1:]))
    E = [[lvl.significant(a, N) for a, _ in cells] for lvl in scan.levels]

    temps = _split(E[0], 0, len(cells))
    finals: List[Tuple[Span, int, Tuple[int, ...]]] = []
    for m in range(d):
        nxt = E[m + 1]
        new_temps: List[Tuple[Span, Tuple[int, ...]]] = []
        for (first, last), label in temps:
            hits = [c for c in range(first, last) if nxt[c] == label]
            if hits:
                a_U, b_U = hits[0], hits[-1] + 1
                finals.append(((a_U, b_U), m + 1, label))
                if first < a_U:
                    new_temps.extend(_split(nxt, first, a_U))
                if b_U < last:
                    new_temps.extend(_split(nxt, b_U, last))
            else:
                new_temps.extend(_split(nxt, first, last))
        temps = new_temps
        if not temps:
            break
    if temps:
        raise ComputationError(f"{len(temps)} temporary intervals survived {d} induction steps")

    finals.sort(key=lambda f: f[0][0])
    pieces = [
        PartitionPiece(start=cells[a][0], end=cells[b - 1][1], deg=deg, par=ParabolicSubgroup(d=d, jumps=label))
        for (a, b), deg, label in finals
    ]
    logger.info(f"partition built: {len(cells)} cells, {len(pieces)} intervals, "
                f"max deg {max(p.deg for p in pieces)}")
    return CodedPartition(flow=flow, N=N, delta=cfg.delta, delta_prime=cfg.delta_prime, r=cfg.r, pieces=pieces)


# ---- Orientation refinement ----

def _flag_at(profiles: Dict[int, WeightProfile], jumps: Tuple[int, ...], t: float,
             log_eps_sq: float) -> Optional[List[Multiset]]:
    flags = []
    for l in jumps:
        E = profiles[l].dominant(t, log_eps_sq)
        if E is None:
            return None
        flags.append(E)
    return flags if nested_flags(flags) else None


def _refine_piece(k: int, piece: PartitionPiece, ev: TrajectoryEvaluator, flow: DiagonalFlow,
                  cfg: ToleranceConfig) -> List[RefinedPiece]:
    P = piece.par
    if P.is_G:
        return [RefinedPiece(start=piece.start, end=piece.end, parent=k, par=P, weyl=Orientation.trivial(flow))]

    mid = 0.5 * (piece.start + piece.end)
    snap = ev.snapshot(mid)
    minima = ev.minima(mid)
    subspaces: Dict[int, RationalSubspace] = {}
    try:
        for l in P.jumps:
            subspaces[l] = unique_small_subspace(snap, l, cfg, minima=minima)
    except UniquenessError as e:
        logger.warning(f"interval [{piece.start:.6g}, {piece.end:.6g}) left unoriented: {e}")
        return [RefinedPiece(start=piece.start, end=piece.end, parent=k, par=P, notes=[str(e)])]

    profiles = {l: weight_profile(V, flow) for l, V in subspaces.items()}
    window = (piece.start, piece.end)
    edges = {piece.start, piece.end}
    for l, V in subspaces.items():
        for iv in grassmann_intervals(V, flow, cfg, window, profile=profiles[l]).intervals:
            edges.update((iv.start, iv.end))
    edges = sorted(e for e in edges if piece.start <= e <= piece.end)

    log_eps_sq = 2.0 * math.log(resolve_eps0(flow, cfg))
    out: List[RefinedPiece] = []
    for a, b in zip(edges, edges[1:]):
        flags = _flag_at(profiles, P.jumps, a, log_eps_sq)
        w = Orientation.from_multiset_flag(flow, P, flags) if flags is not None else None
        if out and (out[-1].weyl.rep if out[-1].weyl else None) == (w.rep if w else None):
            out[-1].end = b
        else:
            out.append(RefinedPiece(start=a, end=b, parent=k, par=P, weyl=w))
    return out


def refine_orientations(partition: CodedPartition, x: Lattice, flow: DiagonalFlow, cfg: ToleranceConfig,
                        evaluator: Optional[TrajectoryEvaluator] = None) -> CodedPartition:
    """Splits each U in J by the dominance intervals of its flag {V_l}_{l in eta(Par(U))}."""
    ev = evaluator or TrajectoryEvaluator(x, flow, cfg)
    refined: List[RefinedPiece] = []
    limit = 2 * factorial(flow.d) + 1
    for k, piece in enumerate(partition.pieces):
        sub = _refine_piece(k, piece, ev, flow, cfg)
        if len(sub) > limit:
            logger.warning(f"interval {k} split into {len(sub)} pieces, above {limit}")
        refined.extend(sub)
    logger.info(f"orientation refinement: {len(partition.pieces)} -> {len(refined)} intervals")
    return partition.model_copy(update={"refined": refined})

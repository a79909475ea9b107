# services/coder/coding.py

import logging
from collections import Counter
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from services.coder.coder_types import CodedPartition, Coding, Occupancy
from services.coder.partition import build_partition, refine_orientations
from services.coder.thresholds import threshold_intervals
from services.lattice.lattice_types import Classification, Lattice, ToleranceConfig
from services.lattice.trajectory import TrajectoryEvaluator
from services.weyl.parabolic import contains, restrict
from services.weyl.weyl_types import DiagonalFlow, Orientation, ParabolicSubgroup

# -------------------- Logging --------------------
logger = logging.getLogger("coder.coding")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)


def coding_from_partition(partition: CodedPartition) -> Coding:
    """C(n) = (Par(U_n), Weyl(U_n)) with U_n the J' piece containing n (half-open, last piece closed)."""
    if not partition.refined:
        raise ValueError("partition has no orientation refinement")
    N = partition.N
    values = []
    for n in range(-N, N + 1):
        piece = partition.refined[partition.piece_at(float(n))]
        values.append((piece.par, piece.weyl))
    return Coding(flow=partition.flow, N=N, values=values)


def coding(x: Lattice, flow: DiagonalFlow, cfg: ToleranceConfig, N: int,
           evaluator: Optional[TrajectoryEvaluator] = None) -> Coding:
    ev = evaluator or TrajectoryEvaluator(x, flow, cfg)
    scan = threshold_intervals(x, flow, cfg, N, evaluator=ev)
    partition = refine_orientations(build_partition(scan, flow, cfg), x, flow, cfg, evaluator=ev)
    out = coding_from_partition(partition)
    logger.info(f"coding over [-{N}, {N}]: {len(out.runs())} runs")
    return out


def reverse_coding(code: Coding) -> Coding:
    """
    The coding of x under -alpha: n -> C(-n), with each orientation re-expressed
    for the reversed flow (the same coordinate flag, negated exponents).
    """
    flow = code.flow
    neg = flow.scaled(-1)
    values: List[Tuple[ParabolicSubgroup, Optional[Orientation]]] = []
    for n in range(-code.N, code.N + 1):
        P, w = code(-n)
        if w is not None:
            w = Orientation.from_multiset_flag(neg, P, [tuple(-a for a in E) for E in w.multiset_flag])
        values.append((P, w))
    return Coding(flow=neg, N=code.N, values=values)


def pointwise_classifications(ev: TrajectoryEvaluator, N: int) -> List[Classification]:
    """classify(a_n x) for n = -N..N."""
    return [ev.classify(float(n)) for n in range(-N, N + 1)]


def pointwise_consistency(code: Coding, classifications: List[Classification]) -> List[Dict[str, Any]]:
    """
    Integer times where Q subset Par(U_n) subset P fails, or where an oriented
    classification disagrees with Weyl(U_n) after restriction to Par(U_n).
    """
    flow = code.flow
    bad: List[Dict[str, Any]] = []
    for cls in classifications:
        n = int(round(cls.t))
        par, weyl = code(n)
        if not (contains(par, cls.Q) and contains(cls.P, par)):
            bad.append({"n": n, "reason": f"Par {par.name} not between Q={cls.Q.name} and P={cls.P.name}"})
            continue
        if cls.orientation is None:
            continue
        expected = restrict(flow, cls.orientation, par)
        if weyl is None or weyl.rep != expected.rep:
            found = weyl.label() if weyl else "none"
            bad.append({"n": n, "reason": f"Weyl {found} differs from {expected.label()}"})
    if bad:
        logger.warning(f"{len(bad)} integer times disagree with pointwise classification")
    return bad


def continuous_occupancy(partition: CodedPartition) -> Occupancy:
    """Lebesgue length of J' per (Par, Weyl)."""
    lengths: Dict[Any, float] = {}
    for piece in partition.refined:
        lengths[piece.key] = lengths.get(piece.key, 0.0) + (piece.end - piece.start)
    return Occupancy(lengths=lengths, total=float(2 * partition.N))


def discrete_occupancy(code: Coding) -> Occupancy:
    counts = code.counts()
    return Occupancy(lengths={k: float(v) for k, v in counts.items()}, total=float(2 * code.N + 1))


def region_counts(classifications: List[Classification]) -> Counter:
    """|T^x_{N_{delta,delta'}(P,Q,[w]_Q)}| per region key."""
    return Counter(c.region_key for c in classifications)


def time_series(classifications: List[Classification]) -> pd.DataFrame:
    """Rows (t, lambda_i, eta_i, region) at integer times."""
    rows = []
    for c in classifications:
        row: Dict[str, Any] = {"t": c.t}
        for i, v in enumerate(c.minima, start=1):
            row[f"lambda_{i}"] = v
        for i, v in enumerate(c.eta, start=1):
            row[f"eta_{i}"] = v
        row["P"] = c.P.name
        row["Q"] = c.Q.name
        row["orientation"] = c.orientation.label() if c.orientation else ""
        rows.append(row)
    return pd.DataFrame(rows)

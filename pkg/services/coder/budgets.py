# services/coder/budgets.py

import json
import logging
import math
import os
from collections import Counter
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from services.coder.coder_types import (
    BudgetReport,
    CodedPartition,
    Coding,
    EmpiricalBound,
    RegionCount,
)
from services.coder.coding import continuous_occupancy, pointwise_classifications, region_counts
from services.errors import ConfigError
from services.lattice.lattice_types import Classification, Lattice, ToleranceConfig
from services.lattice.regions import err, height
from services.lattice.trajectory import TrajectoryEvaluator
from services.weyl.parabolic import (
    entropy,
    enumerate_parabolics,
    h_phi,
    intermediate_parabolics,
    project,
    restrict,
    weyl_double_cosets,
)
from services.weyl.weyl_types import DiagonalFlow, LinearFunctional, Orientation, ParabolicSubgroup

# -------------------- Logging --------------------
logger = logging.getLogger("coder.budgets")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

PINNED_CONSTANTS_PATH = Path(__file__).resolve().parents[2] / "evaluation" / "pinned_constants.json"

Chi = Union[Callable[[ParabolicSubgroup, Orientation], Any], Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], Any]]


def _read_constants(path: Optional[Union[str, Path]]) -> Dict[str, Any]:
    path = Path(path or os.getenv("CUSPLAB_CONSTANTS", PINNED_CONSTANTS_PATH))
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def load_pinned_constants(path: Optional[Union[str, Path]] = None) -> Dict[str, float]:
    """Budget ceilings K_count, K_err, K_height, K_unoriented; CUSPLAB_CONSTANTS overrides the path."""
    return {k: float(v) for k, v in _read_constants(path)["budgets"].items()}


def load_covol_envelope(path: Optional[Union[str, Path]] = None) -> float:
    """Ceiling on the covol_evolution_check deviation over a coded cusp interval."""
    data = _read_constants(path)
    if "covol_envelope" not in data:
        raise ConfigError("no covol_envelope in the pinned constants")
    return float(data["covol_envelope"])


# ---- Budgets ----

def _scale(cfg: ToleranceConfig, d: int) -> float:
    return cfg.r ** (d - 1) * abs(cfg.log_delta)


def verify_budgets(partition: CodedPartition, code: Coding, x: Lattice, flow: DiagonalFlow,
                   cfg: ToleranceConfig, constants: Optional[Dict[str, float]] = None,
                   evaluator: Optional[TrajectoryEvaluator] = None) -> BudgetReport:
    """
    (i) |J'| r^(d-1) |log delta| / N
    (ii) sum over U in J of err at both ends of U, over r N
    (iii) || sum |C^-1(P,[w])| pi_P(alpha^w) + height(a_N x) - height(a_-N x) || / (r N)
    (iv) sum_P |C^-1(P, none)| r^(d-1) |log delta| / N
    """
    ev = evaluator or TrajectoryEvaluator(x, flow, cfg)
    d = flow.d
    N = partition.N
    rN = cfg.r * N
    scale = _scale(cfg, d)

    ratio_count = len(partition.refined) * scale / N

    err_sum = 0.0
    for piece in partition.pieces:
        err_sum += err(ev.minima(piece.start), piece.par) + err(ev.minima(piece.end), piece.par)
    ratio_err = err_sum / rN

    counts = code.counts()
    projected = [Fraction(0)] * d
    unoriented = 0
    for (jumps, rep), count in counts.items():
        if rep is None:
            unoriented += count
            continue
        P = ParabolicSubgroup(d=d, jumps=jumps)
        w = Orientation.from_permutation(flow, P, rep)
        projected = [a + count * b for a, b in zip(projected, project(flow, P, w))]
    drift = np.array(height(ev.minima(float(N)))) - np.array(height(ev.minima(float(-N))))
    projected_f = np.array([float(v) for v in projected])
    ratio_height = float(np.linalg.norm(projected_f + drift)) / rN

    continuous = np.zeros(d)
    for (jumps, rep), length in continuous_occupancy(partition).lengths.items():
        if rep is None:
            continue
        P = ParabolicSubgroup(d=d, jumps=jumps)
        continuous += length * np.array([float(v) for v in project(flow, P, Orientation.from_permutation(flow, P, rep))])
    continuous_ratio = float(np.linalg.norm(continuous + drift)) / rN

    ratio_unoriented = unoriented * scale / N

    small_n = N <= 2 * abs(cfg.log_delta)
    if small_n:
        logger.warning(f"N={N} is within 2|log delta| = {2 * abs(cfg.log_delta):.4g}; budgets are not asymptotic")
    clipped = any(not p.par.is_G and (p.start == -N or p.end == N) for p in partition.pieces)

    report = BudgetReport(
        N=N,
        pieces=len(partition.refined),
        ratio_count=ratio_count,
        ratio_err=ratio_err,
        ratio_height=ratio_height,
        ratio_unoriented=ratio_unoriented,
        projected_sum=[float(v) for v in projected],
        height_drift=[float(v) for v in drift],
        projected_sum_norm=float(np.linalg.norm(projected_f)),
        height_drift_norm=float(np.linalg.norm(drift)),
        continuous_ratio_height=continuous_ratio,
        small_n=small_n,
        window_clipped=clipped,
    )
    if constants:
        report.constants = dict(constants)
        report.passed = {k: v <= constants[k] for k, v in report.ratios.items() if k in constants}
    logger.info("budgets: " + ", ".join(f"{k}={v:.4g}" for k, v in report.ratios.items()))
    return report


# ---- chi aggregation ----

def _chi_value(chi: Chi, H: ParabolicSubgroup, w: Orientation) -> Any:
    if callable(chi):
        return chi(H, w)
    return chi[(H.jumps, w.rep)]


def all_orientations(flow: DiagonalFlow) -> List[Orientation]:
    """Union over standard parabolics P of W_{P,a}."""
    return [w for P in enumerate_parabolics(flow.d) for w in weyl_double_cosets(flow, P)]


def entropy_chi(flow: DiagonalFlow) -> Callable[[ParabolicSubgroup, Orientation], Fraction]:
    return lambda H, w: entropy(flow, H, w)


def chi_aggregate_sides(code: Coding, occupancy: Counter, chi: Chi) -> Tuple[Any, Any]:
    """
    (sum over C of chi([tau]_H), sum over regions of |T| max_{Q<=H<=P} chi([w]_H)),
    with orientation-less times charged at max chi on both sides.
    """
    flow = code.flow
    d = flow.d
    top = max(_chi_value(chi, w.parabolic, w) for w in all_orientations(flow))
    if top < 0:
        raise ConfigError(f"chi must have a nonnegative maximum, got {top}")

    lhs = 0 * top
    for (jumps, rep), count in code.counts().items():
        if rep is None:
            lhs += count * top
            continue
        H = ParabolicSubgroup(d=d, jumps=jumps)
        lhs += count * _chi_value(chi, H, Orientation.from_permutation(flow, H, rep))

    rhs = 0 * top
    for (p_jumps, q_jumps, rep), count in occupancy.items():
        if rep is None:
            rhs += count * top
            continue
        P = ParabolicSubgroup(d=d, jumps=p_jumps)
        Q = ParabolicSubgroup(d=d, jumps=q_jumps)
        w = Orientation.from_permutation(flow, Q, rep)
        rhs += count * max(_chi_value(chi, H, restrict(flow, w, H)) for H in intermediate_parabolics(Q, P))
    return lhs, rhs


def chi_aggregate_check(code: Coding, occupancy: Counter, chi: Chi) -> bool:
    lhs, rhs = chi_aggregate_sides(code, occupancy, chi)
    holds = lhs <= rhs
    if not holds:
        logger.warning(f"chi aggregation fails: {lhs} > {rhs}")
    return holds


# ---- Empirical bound ----

def error_terms(flow: DiagonalFlow, cfg: ToleranceConfig, phi: LinearFunctional) -> Dict[str, float]:
    """f(delta, r, phi) = log(s)/s + ||phi|| r with s = r^(d-1)|log delta|, and 1/|log delta'|."""
    s = _scale(cfg, flow.d)
    return {
        "f": math.log(s) / s + phi.norm() * cfg.r,
        "inv_log_delta_prime": 1.0 / abs(cfg.log_delta_prime),
    }


def empirical_bound_from_counts(occupancy: Counter, flow: DiagonalFlow, cfg: ToleranceConfig,
                                phi: LinearFunctional) -> EmpiricalBound:
    d = flow.d
    total = sum(occupancy.values())
    top = max(h_phi(flow, w.parabolic, w, phi) for w in all_orientations(flow))
    value = Fraction(0)
    unoriented = Fraction(0)
    regions: List[RegionCount] = []
    for (p_jumps, q_jumps, rep), count in sorted(occupancy.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2] or ())):
        P = ParabolicSubgroup(d=d, jumps=p_jumps)
        Q = ParabolicSubgroup(d=d, jumps=q_jumps)
        freq = Fraction(count, total)
        if rep is None:
            unoriented += freq
            value += freq * top
            regions.append(RegionCount(P=P, Q=Q, count=count, frequency=freq))
            continue
        w = Orientation.from_permutation(flow, Q, rep)
        best = max(h_phi(flow, H, restrict(flow, w, H), phi) for H in intermediate_parabolics(Q, P))
        value += freq * best
        regions.append(RegionCount(P=P, Q=Q, orientation=w, count=count, frequency=freq, value=best))
    return EmpiricalBound(value=value, regions=regions, unoriented_frequency=unoriented, max_h_phi=top,
                          error_terms=error_terms(flow, cfg, phi))


def empirical_bound(x: Lattice, flow: DiagonalFlow, cfg: ToleranceConfig, phi: LinearFunctional, N: int,
                    evaluator: Optional[TrajectoryEvaluator] = None,
                    classifications: Optional[List[Classification]] = None) -> EmpiricalBound:
    """Occupancy-weighted max-form bound over a_n x, n = -N..N."""
    if classifications is None:
        classifications = pointwise_classifications(evaluator or TrajectoryEvaluator(x, flow, cfg), N)
    bound = empirical_bound_from_counts(region_counts(classifications), flow, cfg, phi)
    logger.info(f"empirical bound over {len(classifications)} times: {float(bound.value):.6g}")
    return bound

# services/bounds/engine.py

"""
Entropy upper bounds corrected by a linear functional phi.

Every bound here is a max over finitely many rows (P, [w]_P) of
h(P, a^w) - phi(pi_P(alpha^w)); optimize_phi minimizes that max over phi
with an exact LP.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple, Union

from services.bounds.bound_types import BoundReport, BoundRow, LPSolution, MeasureVector
from services.bounds.closed_forms import closed_form_hinf, closed_forms
from services.bounds.simplex import solve_equality_lp
from services.errors import ComputationError, DimensionError
from services.weyl.parabolic import (
    enumerate_parabolics,
    entropy,
    h_phi,
    intermediate_parabolics,
    project,
    restrict,
    weyl_double_cosets,
)
from services.weyl.weyl_types import DiagonalFlow, LinearFunctional, Orientation, ParabolicSubgroup

# -------------------- Logging --------------------
logger = logging.getLogger("bounds.engine")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

Scope = Union[str, ParabolicSubgroup]


@dataclass(frozen=True)
class _Row:
    P: ParabolicSubgroup
    w: Orientation
    h: Fraction
    v: Tuple[Fraction, ...]


def _rows(flow: DiagonalFlow, scope: Scope) -> List[_Row]:
    if isinstance(scope, ParabolicSubgroup):
        if scope.d != flow.d:
            raise DimensionError(f"parabolic has d={scope.d}, flow has d={flow.d}")
        parabolics = [scope]
    elif scope == "cusp":
        parabolics = [P for P in enumerate_parabolics(flow.d) if not P.is_G]
    elif scope == "all":
        parabolics = enumerate_parabolics(flow.d)
    else:
        raise ValueError(f"unknown scope {scope!r}")
    out: List[_Row] = []
    for P in parabolics:
        for w in weyl_double_cosets(flow, P):
            out.append(_Row(P=P, w=w, h=entropy(flow, P, w), v=project(flow, P, w)))
    return out


def _check_phi(flow: DiagonalFlow, phi: LinearFunctional) -> None:
    if flow.d < 2:
        raise DimensionError(f"dimension must be >= 2, got {flow.d}")
    if phi.d != flow.d:
        raise DimensionError(f"phi has d={phi.d}, flow has d={flow.d}")


def _max_over(rows: List[_Row], phi: LinearFunctional) -> Fraction:
    if not rows:
        return Fraction(0)
    return max(r.h - phi(r.v) for r in rows)


def bound_cusp(flow: DiagonalFlow, phi: LinearFunctional) -> Fraction:
    """max over P != G and [w]_P of (h - phi)([w]_P)."""
    _check_phi(flow, phi)
    return _max_over(_rows(flow, "cusp"), phi)


def bound_at_P(flow: DiagonalFlow, phi: LinearFunctional, P: ParabolicSubgroup) -> Fraction:
    _check_phi(flow, phi)
    return _max_over(_rows(flow, P), phi)


def bound_weighted(flow: DiagonalFlow, phi: LinearFunctional, mu: MeasureVector) -> float:
    """
    sum mu(V_{P,[w]}) * (h - phi)([w]_P); residual mass is charged at the global max.
    """
    _check_phi(flow, phi)
    total = 0.0
    for w, mass in mu.entries:
        if w.parabolic.d != flow.d:
            raise DimensionError(f"measure entry {w.label()} has d={w.parabolic.d}, flow has d={flow.d}")
        total += mass * float(h_phi(flow, w.parabolic, w, phi))
    if mu.residual > 0:
        total += mu.residual * float(_max_over(_rows(flow, "all"), phi))
    return total


def optimize_phi(flow: DiagonalFlow, scope: Scope = "cusp") -> LPSolution:
    """
    min over sum-zero phi of max_j (h_j - phi(v_j)), solved through its dual
        max sum y_j h_j   s.t.  y >= 0, sum y_j = 1, sum y_j v_j = 0
    with the optimal phi read off the simplex multipliers and re-verified exactly.
    """
    if flow.d < 2:
        raise DimensionError(f"dimension must be >= 2, got {flow.d}")
    rows = _rows(flow, scope)
    d = flow.d
    A = [[Fraction(1)] * len(rows)]
    for i in range(d - 1):
        A.append([r.v[i] for r in rows])
    b = [Fraction(1)] + [Fraction(0)] * (d - 1)
    result = solve_equality_lp(A, b, [r.h for r in rows])

    phi = LinearFunctional(d=d, coeffs=list(result.duals[1:]) + [Fraction(0)])
    achieved = _max_over(rows, phi)
    if achieved != result.value:
        raise ComputationError(
            f"LP certificate mismatch: dual optimum {result.value}, recovered phi attains {achieved}"
        )
    scope_name = scope.name if isinstance(scope, ParabolicSubgroup) else str(scope)
    logger.info(f"LP over {len(rows)} rows ({scope_name}) solved in {result.pivots} pivots: value {result.value}")
    return LPSolution(phi=phi, value=result.value, scope=scope_name, pivots=result.pivots, rows=len(rows))


# ---- Partition labels ----

RegionKey = Tuple[Tuple[int, ...], Tuple[int, ...], Tuple[int, ...]]


@dataclass(frozen=True)
class PartitionLabel:
    H: ParabolicSubgroup
    orientation: Orientation
    value: Fraction


def best_intermediate(flow: DiagonalFlow, phi: LinearFunctional, P: ParabolicSubgroup,
                      w_Q: Orientation) -> PartitionLabel:
    """
    argmax over Q <= H <= P of (h - phi)([w]_H).
    Ties go to the lexicographically smallest jump set, so G beats every proper subgroup.
    """
    candidates = sorted(intermediate_parabolics(w_Q.parabolic, P), key=lambda H: H.jumps)
    best: Optional[PartitionLabel] = None
    for H in candidates:
        w_H = restrict(flow, w_Q, H)
        value = h_phi(flow, H, w_H, phi)
        if best is None or value > best.value:
            best = PartitionLabel(H=H, orientation=w_H, value=value)
    return best


def assemble_partition_labels(flow: DiagonalFlow, phi: LinearFunctional,
                              delta_params: Optional[Dict[str, Any]] = None) -> Dict[RegionKey, PartitionLabel]:
    """
    Label every region (P, Q, [w]_Q) with Q <= P by the H that carries the largest (h - phi).
    delta_params are carried for provenance only; the labels do not depend on them.
    """
    _check_phi(flow, phi)
    parabolics = enumerate_parabolics(flow.d)
    labels: Dict[RegionKey, PartitionLabel] = {}
    for P in parabolics:
        for Q in parabolics:
            if not set(P.jumps) <= set(Q.jumps):
                continue
            for w_Q in weyl_double_cosets(flow, Q):
                labels[(P.jumps, Q.jumps, w_Q.rep)] = best_intermediate(flow, phi, P, w_Q)
    if delta_params:
        logger.debug(f"partition labels assembled for thresholds {delta_params}")
    return labels


# ---- Reports ----

def build_report(flow: DiagonalFlow, phi: Optional[LinearFunctional] = None, scope: Scope = "cusp",
                 optimize: bool = False, with_closed_forms: bool = False) -> BoundReport:
    phi = phi or LinearFunctional.zero(flow.d)
    _check_phi(flow, phi)
    all_rows = _rows(flow, "all")
    table = [
        BoundRow(parabolic=r.P, orientation=r.w, entropy=r.h, projection=r.v, h_minus_phi=r.h - phi(r.v))
        for r in all_rows
    ]
    hb_P: Dict[Tuple[int, ...], Fraction] = {}
    for row in table:
        key = row.parabolic.jumps
        hb_P[key] = max(hb_P.get(key, row.h_minus_phi), row.h_minus_phi)
    cusp_rows = [r for r in all_rows if not r.P.is_G]
    zero = LinearFunctional.zero(flow.d)

    lp = optimize_phi(flow, scope) if optimize else None
    forms = closed_forms(flow) if with_closed_forms else None
    agreement = None
    if lp is not None and forms is not None and lp.scope == "cusp":
        agreement = lp.value == forms.hinf == forms.hinf_Pk[1]
        if not agreement:
            logger.warning(f"LP value {lp.value} disagrees with closed forms {forms.hinf}, {forms.hinf_Pk[1]}")
    elif lp is None and forms is not None:
        agreement = forms.hinf == forms.hinf_Pk[1] and closed_form_hinf(flow) == forms.hinf

    return BoundReport(
        flow=flow,
        phi=phi,
        rows=table,
        hb_cusp=_max_over(cusp_rows, phi),
        hb_P=hb_P,
        baseline_cusp=_max_over(cusp_rows, zero),
        lp=lp,
        closed_forms=forms,
        agreement=agreement,
        options={
            "scope": scope.name if isinstance(scope, ParabolicSubgroup) else str(scope),
            "optimize": optimize,
            "closed_forms": with_closed_forms,
        },
    )

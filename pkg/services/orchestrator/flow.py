# services/orchestrator/flow.py

"""
LangGraph pipeline for one coding run:
scan → partition → refine → code → classify → budgets → bound

Every node reads the shared TrajectoryEvaluator, so minima computed by the
scan are reused by refinement, classification and the budget checks.
"""

import logging
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, TypedDict

from langgraph.graph import END, StateGraph

from services.bounds.engine import optimize_phi
from services.coder.budgets import (
    chi_aggregate_sides,
    empirical_bound,
    entropy_chi,
    load_pinned_constants,
    verify_budgets,
)
from services.coder.coder_types import BudgetReport, CodedPartition, Coding, EmpiricalBound, ThresholdScan
from services.coder.coding import (
    coding_from_partition,
    pointwise_classifications,
    pointwise_consistency,
    region_counts,
)
from services.coder.partition import build_partition, refine_orientations
from services.coder.thresholds import threshold_intervals
from services.lattice.lattice_types import Classification, Lattice, ToleranceConfig
from services.lattice.trajectory import TrajectoryEvaluator
from services.weyl.weyl_types import DiagonalFlow, LinearFunctional, fraction_str

# -------------------- Logging --------------------
logger = logging.getLogger("orchestrator.flow")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)


class PipelineState(TypedDict, total=False):
    # Inputs
    lattice: Lattice
    flow: DiagonalFlow
    cfg: ToleranceConfig
    N: int
    phi: Optional[LinearFunctional]
    constants: Optional[Dict[str, float]]

    # Shared trajectory cache
    evaluator: TrajectoryEvaluator

    # Results carried through the pipeline
    scan: ThresholdScan
    partition: CodedPartition
    coding: Coding
    classifications: List[Classification]
    consistency: List[Dict[str, Any]]
    budgets: BudgetReport
    empirical: EmpiricalBound
    chi: Dict[str, Any]


def _now_iso() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def _n_scan(state: PipelineState) -> PipelineState:
    state["evaluator"] = TrajectoryEvaluator(state["lattice"], state["flow"], state["cfg"])
    state["scan"] = threshold_intervals(state["lattice"], state["flow"], state["cfg"], state["N"],
                                        evaluator=state["evaluator"])
    return state


def _n_partition(state: PipelineState) -> PipelineState:
    state["partition"] = build_partition(state["scan"], state["flow"], state["cfg"])
    return state


def _n_refine(state: PipelineState) -> PipelineState:
    state["partition"] = refine_orientations(state["partition"], state["lattice"], state["flow"], state["cfg"],
                                             evaluator=state["evaluator"])
    return state


def _n_code(state: PipelineState) -> PipelineState:
    state["coding"] = coding_from_partition(state["partition"])
    logger.info(f"coding: {len(state['coding'].runs())} runs over [-{state['N']}, {state['N']}]")
    return state


def _n_classify(state: PipelineState) -> PipelineState:
    state["classifications"] = pointwise_classifications(state["evaluator"], state["N"])
    state["consistency"] = pointwise_consistency(state["coding"], state["classifications"])
    return state


def _n_budgets(state: PipelineState) -> PipelineState:
    state["budgets"] = verify_budgets(state["partition"], state["coding"], state["lattice"], state["flow"],
                                      state["cfg"], constants=state.get("constants"),
                                      evaluator=state["evaluator"])
    return state


def _n_bound(state: PipelineState) -> PipelineState:
    flow = state["flow"]
    phi = state.get("phi") or optimize_phi(flow).phi
    state["phi"] = phi
    state["empirical"] = empirical_bound(state["lattice"], flow, state["cfg"], phi, state["N"],
                                         evaluator=state["evaluator"],
                                         classifications=state["classifications"])
    lhs, rhs = chi_aggregate_sides(state["coding"], region_counts(state["classifications"]), entropy_chi(flow))
    state["chi"] = {"lhs": fraction_str(lhs), "rhs": fraction_str(rhs), "holds": lhs <= rhs}
    if lhs > rhs:
        logger.warning(f"entropy aggregation fails on this run: {lhs} > {rhs}")
    return state


def _build_graph():
    g = StateGraph(PipelineState)

    g.add_node("scan", _n_scan)
    g.add_node("partition", _n_partition)
    g.add_node("refine", _n_refine)
    g.add_node("code", _n_code)
    g.add_node("classify", _n_classify)
    g.add_node("budgets", _n_budgets)
    g.add_node("bound", _n_bound)

    g.set_entry_point("scan")
    g.add_edge("scan", "partition")
    g.add_edge("partition", "refine")
    g.add_edge("refine", "code")
    g.add_edge("code", "classify")
    g.add_edge("classify", "budgets")
    g.add_edge("budgets", "bound")
    g.add_edge("bound", END)

    return g.compile()


_graph = _build_graph()


def run_coding_pipeline(x: Lattice, flow: DiagonalFlow, cfg: ToleranceConfig, N: int,
                        phi: Optional[LinearFunctional] = None,
                        constants: Optional[Dict[str, float]] = None) -> Dict[str, Any]:
    """
    Runs the compiled graph on a_t x, t in [-N, N]. Budget pass flags use the
    pinned constants unless `constants` is given.
    """
    initial: PipelineState = {
        "lattice": x,
        "flow": flow,
        "cfg": cfg,
        "N": int(N),
        "phi": phi,
        "constants": constants if constants is not None else load_pinned_constants(),
    }

    final_state = _graph.invoke(initial)
    ev: TrajectoryEvaluator = final_state["evaluator"]

    return {
        "scan": final_state["scan"],
        "partition": final_state["partition"],
        "coding": final_state["coding"],
        "classifications": final_state["classifications"],
        "consistency": final_state["consistency"],
        "budgets": final_state["budgets"],
        "empirical": final_state["empirical"],
        "chi": final_state["chi"],
        "phi": final_state["phi"],
        # Optional debugging fields
        "debug": {
            "samples": final_state["scan"].samples,
            "minimaEvaluations": ev.evaluations,
            "intervals": len(final_state["partition"].pieces),
            "refinedIntervals": len(final_state["partition"].refined),
            "runAt": _now_iso(),
        },
    }


def coding_document(result: Dict[str, Any], x: Lattice, flow: DiagonalFlow, cfg: ToleranceConfig) -> Dict[str, Any]:
    """The coding JSON: flow, lattice, parameters, runs, J and J', consistency findings."""
    partition: CodedPartition = result["partition"]
    return {
        "flow": flow.to_json(),
        "lattice": x.to_json(),
        "N": partition.N,
        "tolerance": {
            "delta": cfg.delta,
            "delta_prime": cfg.delta_prime,
            "r": cfg.r,
            "eta0": cfg.eta0,
            "precision": cfg.precision,
        },
        "coding": result["coding"].to_json(),
        "partition": partition.to_json(),
        "min_length_ratio": result["scan"].min_length_ratio,
        "consistency": result["consistency"],
    }


def budget_document(result: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "budgets": result["budgets"].to_json(),
        "empirical_bound": result["empirical"].to_json(),
        "phi": result["phi"].to_json(),
        "chi_entropy": result["chi"],
    }

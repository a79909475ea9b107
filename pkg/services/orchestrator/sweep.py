# services/orchestrator/sweep.py

import logging
import math
import time
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd

from services.errors import CuspLabError
from services.orchestrator.config import RunConfig, SweepGrid, configure_logging, default_workers
from services.orchestrator.flow import run_coding_pipeline
from services.orchestrator.report_io import lattice_from_spec, spec_label
from services.weyl.weyl_types import DiagonalFlow, fraction_str

# -------------------- Logging --------------------
logger = logging.getLogger("orchestrator.sweep")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

SORT_COLUMNS = ["flow", "lattice", "log_delta"]


def build_jobs(cfg: RunConfig, constants: Optional[Dict[str, float]] = None) -> List[Dict[str, Any]]:
    """Plain-dict jobs (picklable) for every (flow, lattice, delta) of the grid."""
    grid: SweepGrid = cfg.sweep
    tolerance = cfg.tolerance.model_dump()
    jobs = []
    for flow in grid.flows:
        for spec in grid.lattices:
            for delta in grid.deltas:
                N = grid.N or int(math.ceil(grid.N_factor * abs(math.log(delta))))
                jobs.append({
                    "job": len(jobs),
                    "alpha": [fraction_str(a) for a in flow.alpha],
                    "lattice": spec,
                    "delta": delta,
                    "N": N,
                    "tolerance": tolerance,
                    "phi": [fraction_str(c) for c in cfg.phi.coeffs] if cfg.phi is not None else None,
                    "constants": constants,
                })
    return jobs


def run_job(job: Dict[str, Any]) -> Dict[str, Any]:
    """One sweep row; failures become status rows, except the capacity guard, which propagates."""
    flow = DiagonalFlow.of(job["alpha"])
    row: Dict[str, Any] = {
        "job": job["job"],
        "flow": ",".join(job["alpha"]),
        "lattice": spec_label(job["lattice"]),
        "delta": job["delta"],
        "log_delta": math.log(job["delta"]),
        "N": job["N"],
    }
    started = time.perf_counter()
    try:
        cfg = RunConfig(flow=flow, tolerance=job["tolerance"], phi=job["phi"])
        tol = cfg.tolerance_config(delta=job["delta"])
        row.update({"delta_prime": tol.delta_prime, "r": tol.r})
        x = lattice_from_spec(job["lattice"], flow.d, precision=tol.precision)
        result = run_coding_pipeline(x, flow, tol, job["N"], phi=cfg.phi, constants=job["constants"])
        budgets = result["budgets"]
        for name, value in budgets.ratios.items():
            row[f"ratio_{name}"] = value
            if name in budgets.passed:
                row[f"pass_{name}"] = budgets.passed[name]
        row.update({
            "pieces": budgets.pieces,
            "small_n": budgets.small_n,
            "window_clipped": budgets.window_clipped,
            "empirical_bound": float(result["empirical"].value),
            "empirical_bound_exact": fraction_str(result["empirical"].value),
            "unoriented_frequency": float(result["empirical"].unoriented_frequency),
            "chi_holds": result["chi"]["holds"],
            "inconsistent_times": len(result["consistency"]),
            "status": "ok",
            "error": "",
        })
    except CuspLabError as e:
        if e.exit_code == 3:
            logger.error(f"job {job['job']} hit the capacity guard: {e}")
            raise
        row.update({"status": type(e).__name__, "error": str(e)})
    except Exception as e:
        logger.error(f"job {job['job']} failed unexpectedly: {e}")
        row.update({"status": "error", "error": f"{type(e).__name__}: {e}"})
    row["seconds"] = round(time.perf_counter() - started, 3)
    return row


def _init_worker(level: str) -> None:
    configure_logging(level)


def run_sweep(cfg: RunConfig, constants: Optional[Dict[str, float]] = None,
              workers: Optional[int] = None) -> Tuple[pd.DataFrame, List[Dict[str, Any]]]:
    """
    Runs the grid over a worker pool and returns the aggregated frame plus the
    failed rows. Rows are in job order; with cfg.sorted they are sorted by
    (flow, lattice, log_delta).
    """
    jobs = build_jobs(cfg, constants)
    workers = min(workers or default_workers(cfg), len(jobs))
    logger.info(f"sweep: {len(jobs)} jobs on {workers} workers")
    level = logging.getLevelName(logger.getEffectiveLevel())
    if workers <= 1:
        rows = [run_job(job) for job in jobs]
    else:
        with Pool(processes=workers, initializer=_init_worker, initargs=(level,)) as pool:
            rows = pool.map(run_job, jobs)

    df = pd.DataFrame(rows)
    if cfg.sorted:
        df = df.sort_values(SORT_COLUMNS, kind="mergesort").reset_index(drop=True)
    df = df.drop(columns=["seconds"]) if cfg.no_meta else df
    failures = [r for r in rows if r["status"] != "ok"]
    if failures:
        logger.warning(f"{len(failures)} of {len(rows)} jobs failed: "
                       + ", ".join(f"#{r['job']} {r['status']}" for r in failures))
    else:
        logger.info(f"sweep finished: {len(rows)} jobs ok")
    return df, failures

# services/orchestrator/cli.py

"""
Command-line front end.

    python -m services.orchestrator.cli bound --flow 1/2,-1/2 --phi psi:1/2
    python -m services.orchestrator.cli classify --flow 1/2,1/2,-1 --witness '{1}' 8
    python -m services.orchestrator.cli code --flow 1/2,-1/2 --N 100 --delta 'exp(-16)' --delta-prime 'exp(-7)'
    python -m services.orchestrator.cli sweep --config evaluation/configs/sweep_z2.yaml

Exit codes: 0 success, 1 computation error, 2 config error, 3 capacity guard.
"""

import argparse
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from services.bounds.closed_forms import closed_form_hinf_Pk
from services.bounds.engine import assemble_partition_labels, build_report, optimize_phi
from services.coder.budgets import load_pinned_constants
from services.coder.coding import time_series
from services.errors import ConfigError, CuspLabError
from services.lattice.lattice_types import Lattice
from services.lattice.regions import classify
from services.lattice.witness import cusp_witness
from services.orchestrator.config import RunConfig, configure_logging, load_run_config
from services.orchestrator.flow import budget_document, coding_document, run_coding_pipeline
from services.orchestrator.report_io import (
    bound_rows_frame,
    lattice_from_spec,
    read_lattice_rows,
    spec_label,
    write_csv,
    write_json,
    write_meta,
)
from services.orchestrator.sweep import run_sweep
from services.weyl.weyl_types import ParabolicSubgroup, fraction_str

# -------------------- Logging --------------------
logger = logging.getLogger("orchestrator.cli")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)


# ---- Commands ----

def _scope(cfg: RunConfig) -> Any:
    return cfg.parabolic_subgroup() if cfg.scope == "P" else cfg.scope


def cmd_bound(cfg: RunConfig) -> int:
    report = build_report(cfg.flow, cfg.phi, scope=_scope(cfg), optimize=cfg.optimize,
                          with_closed_forms=cfg.closed_forms)
    out = Path(cfg.out_dir)
    write_json(out / "bound.json", report.to_json())
    write_csv(out / "bound.csv", bound_rows_frame(report), no_meta=cfg.no_meta)
    print(f"hb_cusp = {fraction_str(report.hb_cusp)}")
    if report.lp is not None:
        print(f"LP value = {fraction_str(report.lp.value)}")
    if report.agreement is not None:
        print(f"closed forms agree: {report.agreement}")
    return 0


def cmd_optimize(cfg: RunConfig) -> int:
    flow = cfg.flow
    lp = optimize_phi(flow, _scope(cfg))
    doc: Dict[str, Any] = {
        "flow": flow.to_json(),
        "scope": lp.scope,
        "value": fraction_str(lp.value),
        "phi_star": lp.phi.to_json(),
        "pivots": lp.pivots,
        "rows": lp.rows,
    }
    if cfg.k is not None:
        value, m_k = closed_form_hinf_Pk(flow, cfg.k)
        doc["closed_form_Pk"] = {"k": cfg.k, "value": fraction_str(value), "m_k": m_k}
    labels = assemble_partition_labels(flow, lp.phi)
    doc["labels"] = [
        {
            "P": list(P),
            "Q": list(Q),
            "w": [k + 1 for k in w],
            "H": list(label.H.jumps),
            "value": fraction_str(label.value),
        }
        for (P, Q, w), label in sorted(labels.items())
    ]
    write_json(Path(cfg.out_dir) / "optimize.json", doc)
    print(f"min over phi = {fraction_str(lp.value)} at phi = ({', '.join(fraction_str(c) for c in lp.phi.coeffs)})")
    return 0


def _classify_inputs(cfg: RunConfig) -> List[Any]:
    inputs: List[Any] = []
    if cfg.witness is not None:
        P = ParabolicSubgroup(d=cfg.d, jumps=cfg.witness.jumps)
        label = spec_label({"witness": list(cfg.witness.jumps), "n": cfg.witness.n})
        inputs.append((label, cusp_witness(P, cfg.witness.n, precision=cfg.tolerance.precision)))
    for spec in cfg.lattices:
        if isinstance(spec, str) and spec != "identity":
            inputs.extend(read_lattice_rows(spec))
        else:
            try:
                inputs.append((spec_label(spec), lattice_from_spec(spec, cfg.d, cfg.tolerance.precision)))
            except (ValidationError, ValueError) as e:
                inputs.append((spec_label(spec), str(e)))
    if not inputs:
        raise ConfigError("classify needs --lattice FILE or --witness P n")
    return inputs


def cmd_classify(cfg: RunConfig) -> int:
    tol = cfg.tolerance_config()
    rows: List[Dict[str, Any]] = []
    failures = 0
    for label, item in _classify_inputs(cfg):
        if isinstance(item, Lattice) and item.d != cfg.d:
            item = f"lattice has d={item.d}, flow has d={cfg.d}"
        if not isinstance(item, Lattice):
            rows.append({"source": label, "error": item})
            failures += 1
            continue
        try:
            row = classify(item, cfg.flow, tol).to_json()
        except CuspLabError as e:
            if e.exit_code == 3:
                raise
            rows.append({"source": label, "error": str(e)})
            failures += 1
            continue
        row["source"] = label
        rows.append(row)
    write_json(Path(cfg.out_dir) / "classification.json", {"flow": cfg.flow.to_json(), "rows": rows})
    flat = [
        {
            "source": r["source"],
            "P": " ".join(str(j) for j in r.get("P", [])) if "P" in r else "",
            "Q": " ".join(str(j) for j in r.get("Q", [])) if "Q" in r else "",
            "orientation": " ".join(str(k) for k in r["orientation"]["rep"]) if r.get("orientation") else "",
            "error": r.get("error", ""),
        }
        for r in rows
    ]
    write_csv(Path(cfg.out_dir) / "classification.csv", flat, no_meta=cfg.no_meta)
    for r in rows:
        if "error" in r:
            print(f"{r['source']}: error: {r['error']}")
        else:
            print(f"{r['source']}: P={r['P']} Q={r['Q']} orientation={r['orientation']}")
    if failures == len(rows):
        logger.error("every classification row failed")
        return 1
    return 0


def cmd_code(cfg: RunConfig) -> int:
    tol = cfg.tolerance_config()
    if cfg.witness is not None:
        x = cusp_witness(ParabolicSubgroup(d=cfg.d, jumps=cfg.witness.jumps), cfg.witness.n, precision=tol.precision)
    elif cfg.lattices:
        if len(cfg.lattices) > 1:
            raise ConfigError(f"code takes one lattice, got {len(cfg.lattices)}")
        x = lattice_from_spec(cfg.lattices[0], cfg.d, precision=tol.precision)
    else:
        x = Lattice.identity(cfg.d)
    N = cfg.N or int(math.ceil(10 * abs(tol.log_delta)))
    constants = load_pinned_constants(cfg.constants)

    result = run_coding_pipeline(x, cfg.flow, tol, N, phi=cfg.phi, constants=constants)
    out = Path(cfg.out_dir)
    write_json(out / "coding.json", coding_document(result, x, cfg.flow, tol))
    write_json(out / "budgets.json", budget_document(result))
    write_csv(out / "time_series.csv", time_series(result["classifications"]), no_meta=cfg.no_meta)
    write_meta(out, result["debug"], cfg.no_meta)

    for run in result["coding"].runs():
        w = run.w.label() if run.w else "none"
        print(f"[{run.start}, {run.end}] {run.P.name} {w}")
    ratios = ", ".join(f"{k}={v:.4g}" for k, v in result["budgets"].ratios.items())
    print(f"budget ratios: {ratios}")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    if cfg.sweep is None or cfg.sweep.size() == 0:
        raise ConfigError("sweep grid is empty: give flows, deltas and lattices")
    constants = load_pinned_constants(cfg.constants)
    df, failures = run_sweep(cfg, constants=constants)
    out = Path(cfg.out_dir)
    write_csv(out / "sweep.csv", df, no_meta=cfg.no_meta)
    write_json(out / "sweep_summary.json", {
        "jobs": len(df),
        "ok": int((df["status"] == "ok").sum()),
        "failures": [{"job": r["job"], "status": r["status"], "error": r["error"]} for r in failures],
    })
    print(f"{len(df) - len(failures)} of {len(df)} jobs ok")
    return 1 if len(failures) == len(df) else 0


def cmd_witness(cfg: RunConfig, d: Optional[int]) -> int:
    if cfg.witness is None:
        raise ConfigError("witness needs --P and --n")
    dim = d or (cfg.flow.d if cfg.flow is not None else None)
    if dim is None:
        raise ConfigError("witness needs --d or --flow")
    x = cusp_witness(ParabolicSubgroup(d=dim, jumps=cfg.witness.jumps), cfg.witness.n,
                     precision=cfg.tolerance.precision)
    write_json(Path(cfg.out_dir) / "witness.json", x.to_json())
    print(f"witness for {ParabolicSubgroup(d=dim, jumps=cfg.witness.jumps).name}, n={cfg.witness.n}: "
          f"{'exact' if x.exact else 'real'} diagonal basis")
    return 0


# ---- Parser ----

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="YAML or JSON run config; flags override its keys.")
    p.add_argument("--flow", default=None, help="Exponents alpha_1..alpha_d, e.g. '1/2,-1/2'.")
    p.add_argument("--out-dir", default=None, help="Output directory (default: out).")
    p.add_argument("--no-meta", action="store_true", default=None, help="Omit timestamps and timings.")
    p.add_argument("--log-level", default=None, help="Overrides CUSPLAB_LOG_LEVEL.")


def _add_tolerance(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", default=None, help="delta, a float or 'exp(x)'.")
    p.add_argument("--delta-prime", default=None, help="delta'; default exp(-|log delta|^(1/2)).")
    p.add_argument("--r", type=float, default=None, help="Level ratio; default (|log delta'|/|log delta|)^(1/(d+2)).")
    p.add_argument("--eta0", type=float, default=None)
    p.add_argument("--eps0", type=float, default=None)
    p.add_argument("--precision", type=int, default=None, help="Working bits; CUSPLAB_PRECISION wins.")
    p.add_argument("--max-vectors", type=int, default=None)
    p.add_argument("--relaxed", action="store_true", default=False,
                   help="Allow delta = delta' and drop the delta' > delta^(1/2) check.")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cusplab", description="Entropy bounds for diagonal flows on unimodular lattices.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="Bound table, hb_cusp and optional LP / closed forms.")
    _add_common(p)
    p.add_argument("--phi", default=None, help="Coefficients of phi, e.g. '1/2,-1/2', or root weights 'psi:1/2'.")
    p.add_argument("--optimize", action="store_true", default=None)
    p.add_argument("--closed-forms", action="store_true", default=None)
    p.add_argument("--scope", default=None, choices=["cusp", "all", "P"])
    p.add_argument("--P", dest="parabolic", default=None, help="Jump set for --scope P, e.g. '{1}'.")

    p = sub.add_parser("optimize", help="Minimize the cusp bound over phi.")
    _add_common(p)
    p.add_argument("--scope", default=None, choices=["cusp", "all", "P"])
    p.add_argument("--P", dest="parabolic", default=None)
    p.add_argument("--k", type=int, default=None, help="Also report the closed form along P_k.")

    p = sub.add_parser("classify", help="Cusp region and orientation of lattices.")
    _add_common(p)
    _add_tolerance(p)
    p.add_argument("--lattice", action="append", default=None, help="Lattice JSON file (one object or a list).")
    p.add_argument("--witness", nargs=2, metavar=("P", "N"), default=None, help="Classify the cusp witness for P at n.")

    p = sub.add_parser("code", help="Coding of a_n x over [-N, N] with budget checks.")
    _add_common(p)
    _add_tolerance(p)
    p.add_argument("--lattice", action="append", default=None)
    p.add_argument("--witness", nargs=2, metavar=("P", "N"), default=None)
    p.add_argument("--N", type=int, default=None, help="Window half-length; default ceil(10 |log delta|).")
    p.add_argument("--phi", default=None, help="phi for the empirical bound; default is the LP optimum.")
    p.add_argument("--constants", default=None, help="Pinned budget constants JSON.")

    p = sub.add_parser("sweep", help="Parallel (flow, lattice, delta) grid.")
    _add_common(p)
    _add_tolerance(p)
    p.add_argument("--flows", nargs="*", default=None)
    p.add_argument("--deltas", nargs="*", default=None)
    p.add_argument("--lattices", nargs="*", default=None)
    p.add_argument("--n-factor", type=float, default=None)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--phi", default=None)
    p.add_argument("--constants", default=None)
    p.add_argument("--workers", type=int, default=None, help="Pool size; CUSPLAB_WORKERS, else CPU count.")
    p.add_argument("--sorted", action="store_true", default=None)

    p = sub.add_parser("witness", help="Write the cusp witness lattice for P and n.")
    _add_common(p)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--P", dest="parabolic", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--precision", type=int, default=None)

    return ap


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Flag values as a RunConfig mapping; unset flags are None and never override the file."""
    get = lambda name: getattr(args, name, None)  # noqa: E731
    tolerance = {
        "delta": get("delta"),
        "delta_prime": get("delta_prime"),
        "r": get("r"),
        "eta0": get("eta0"),
        "eps0": get("eps0"),
        "precision": get("precision"),
        "max_vectors": get("max_vectors"),
        "strict": False if get("relaxed") else None,
    }
    out: Dict[str, Any] = {
        "command": args.command,
        "flow": get("flow"),
        "phi": get("phi"),
        "N": get("N"),
        "k": get("k"),
        "scope": get("scope"),
        "optimize": get("optimize"),
        "closed_forms": get("closed_forms"),
        "lattices": get("lattice"),
        "constants": get("constants"),
        "out_dir": get("out_dir"),
        "no_meta": get("no_meta"),
        "sorted": get("sorted"),
        "workers": get("workers"),
        "tolerance": {k: v for k, v in tolerance.items() if v is not None},
    }
    if args.command == "witness":
        out["witness"] = {"jumps": args.parabolic, "n": args.n}
    else:
        out["parabolic"] = get("parabolic")
        if get("witness"):
            jumps, n = args.witness
            out["witness"] = {"jumps": jumps, "n": n}
    if args.command == "sweep":
        grid = {
            "flows": get("flows"),
            "deltas": get("deltas"),
            "lattices": get("lattices"),
            "N_factor": get("n_factor"),
            "N": get("N"),
        }
        out["sweep"] = {k: v for k, v in grid.items() if v is not None}
        out["N"] = None
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        configure_logging(args.log_level)
        cfg = load_run_config(_overrides(args), path=args.config)
        if args.command in ("bound", "optimize", "classify", "code") and cfg.flow is None:
            raise ConfigError(f"{args.command} needs --flow")
        if args.command == "sweep" and not cfg.sweep:
            raise ConfigError("sweep grid is empty: give flows, deltas and lattices")
        if args.command == "bound":
            return cmd_bound(cfg)
        if args.command == "optimize":
            return cmd_optimize(cfg)
        if args.command == "classify":
            return cmd_classify(cfg)
        if args.command == "code":
            return cmd_code(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_witness(cfg, getattr(args, "d", None))
    except CuspLabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"ConfigError: {e}")
        return ConfigError.exit_code


if __name__ == "__main__":
    raise SystemExit(main())

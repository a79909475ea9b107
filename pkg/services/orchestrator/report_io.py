# services/orchestrator/report_io.py

"""
File formats.

JSON is written with indent=2 and sorted keys, rationals as "p/q" strings, so
identical inputs give byte-identical files. Timestamps never enter JSON
reports; they go to run_meta.json and to the CSV `generated_at` column, both
of which --no-meta suppresses. Schemas for every format are in
evaluation/schemas/.
"""

import json
import logging
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
from pydantic import ValidationError

from services.bounds.bound_types import BoundReport, BoundRow, ClosedForms, LPSolution
from services.errors import ConfigError
from services.lattice.lattice_types import DEFAULT_PRECISION, Lattice
from services.lattice.witness import cusp_witness
from services.orchestrator.config import parse_jumps
from services.weyl.weyl_types import (
    DiagonalFlow,
    LinearFunctional,
    Orientation,
    ParabolicSubgroup,
    to_fraction,
)

# -------------------- Logging --------------------
logger = logging.getLogger("orchestrator.report_io")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

PathLike = Union[str, Path]


def _now_iso() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


# ---- Writers ----

def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: PathLike, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    logger.info(f"wrote {path}")
    return path


def write_csv(path: PathLike, rows: Union[pd.DataFrame, Sequence[Dict[str, Any]]], no_meta: bool = True,
              sort_by: Optional[List[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = rows.copy() if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    if sort_by:
        df = df.sort_values(sort_by, kind="mergesort").reset_index(drop=True)
    if not no_meta:
        df["generated_at"] = _now_iso()
    df.to_csv(path, index=False)
    logger.info(f"wrote {path} ({len(df)} rows)")
    return path


def write_meta(out_dir: PathLike, debug: Dict[str, Any], no_meta: bool) -> Optional[Path]:
    if no_meta:
        return None
    return write_json(Path(out_dir) / "run_meta.json", {**debug, "writtenAt": _now_iso()})


def read_json(path: PathLike) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: {e.msg}") from e


# ---- Lattices ----

def lattice_from_spec(spec: Any, d: int, precision: int = DEFAULT_PRECISION) -> Lattice:
    """
    "identity"; {"witness": jumps, "n": n}; an inline {"d", "basis"} object;
    or a path to a JSON file holding one lattice.
    """
    if isinstance(spec, Lattice):
        return spec
    if spec == "identity":
        return Lattice.identity(d)
    if isinstance(spec, dict) and "witness" in spec:
        P = ParabolicSubgroup(d=d, jumps=parse_jumps(spec["witness"]))
        return cusp_witness(P, int(spec["n"]), precision=precision)
    if isinstance(spec, dict):
        lattice = Lattice.from_json(spec)
    else:
        obj = read_json(spec)
        if isinstance(obj, list):
            if len(obj) != 1:
                raise ConfigError(f"{spec} holds {len(obj)} lattices, expected one")
            obj = obj[0]
        lattice = Lattice.from_json(obj)
    if lattice.d != d:
        raise ConfigError(f"lattice {spec_label(spec)} has d={lattice.d}, flow has d={d}")
    return lattice


def spec_label(spec: Any) -> str:
    if isinstance(spec, dict) and "witness" in spec:
        jumps = spec["witness"]
        jumps = jumps if isinstance(jumps, str) else "{" + ",".join(str(j) for j in jumps) + "}"
        return f"witness{jumps}n{spec['n']}"
    if isinstance(spec, dict):
        return "inline"
    return str(spec)


def read_lattice_rows(path: PathLike) -> List[Tuple[str, Union[Lattice, str]]]:
    """
    (label, Lattice) for every entry of a lattice file, or (label, error message)
    for entries that fail validation; a file may hold one object or a list.
    """
    obj = read_json(path)
    entries = obj if isinstance(obj, list) else [obj]
    rows: List[Tuple[str, Union[Lattice, str]]] = []
    for k, entry in enumerate(entries):
        label = f"{path}#{k}" if isinstance(obj, list) else str(path)
        try:
            rows.append((label, Lattice.from_json(entry)))
        except ValidationError as e:
            rows.append((label, "; ".join(err["msg"] for err in e.errors())))
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as e:
            rows.append((label, f"malformed lattice: {e}"))
    return rows


# ---- Bound reports ----

def _fractions(values: Sequence[str]) -> Tuple[Fraction, ...]:
    return tuple(to_fraction(v) for v in values)


def _hb_key(key: str) -> Tuple[int, ...]:
    return () if key == "G" else tuple(int(j) for j in key.split(","))


def bound_report_from_json(obj: Dict[str, Any]) -> BoundReport:
    flow = DiagonalFlow(**obj["flow"])
    phi = LinearFunctional(**obj["phi"])
    rows = []
    for row in obj["rows"]:
        P = ParabolicSubgroup(d=flow.d, jumps=row["P"])
        rows.append(BoundRow(
            parabolic=P,
            orientation=Orientation.from_permutation(flow, P, [k - 1 for k in row["w"]]),
            entropy=to_fraction(row["entropy"]),
            projection=_fractions(row["projection"]),
            h_minus_phi=to_fraction(row["h_minus_phi"]),
        ))
    lp = None
    if "lp" in obj:
        lp = LPSolution(
            phi=LinearFunctional.of(obj["lp"]["phi_star"]),
            value=to_fraction(obj["lp"]["value"]),
            scope=obj["lp"]["scope"],
            pivots=int(obj["lp"]["pivots"]),
            rows=int(obj["lp"].get("rows", 0)),
        )
    forms = None
    if "closed_forms" in obj:
        cf = obj["closed_forms"]
        forms = ClosedForms(
            hinf=to_fraction(cf["hinf"]),
            hinf_Pk={int(k): to_fraction(v) for k, v in cf["hinf_Pk"].items()},
            m_k={int(k): int(v) for k, v in cf["m_k"].items()},
            b_bound=to_fraction(cf["B_bound"]),
            b_sharp=bool(cf["B_sharp"]),
        )
    return BoundReport(
        flow=flow,
        phi=phi,
        rows=rows,
        hb_cusp=to_fraction(obj["hb_cusp"]),
        hb_P={_hb_key(k): to_fraction(v) for k, v in obj["hb_P"].items()},
        baseline_cusp=to_fraction(obj["baseline_cusp"]),
        lp=lp,
        closed_forms=forms,
        agreement=obj.get("agreement"),
        options=obj.get("options", {}),
    )


def bound_rows_frame(report: BoundReport) -> pd.DataFrame:
    """One CSV row per (P, [w]_P), exact values as strings next to floats."""
    rows = []
    for r in report.rows:
        j = r.to_json()
        rows.append({
            "P": r.parabolic.name,
            "w": " ".join(str(k) for k in j["w"]),
            "entropy": j["entropy"],
            "h_minus_phi": j["h_minus_phi"],
            "h_minus_phi_float": float(r.h_minus_phi),
            "cusp": not r.parabolic.is_G,
        })
    return pd.DataFrame(rows)

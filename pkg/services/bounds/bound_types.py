# services/bounds/bound_types.py

from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from services.weyl.weyl_types import (
    DiagonalFlow,
    LinearFunctional,
    Orientation,
    ParabolicSubgroup,
    fraction_str,
)

MASS_TOLERANCE = 1e-12


class _Model(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)


# ---- Bound tables ----

class BoundRow(_Model):
    parabolic: ParabolicSubgroup
    orientation: Orientation
    entropy: Fraction
    projection: Tuple[Fraction, ...]
    h_minus_phi: Fraction

    def to_json(self) -> Dict[str, Any]:
        return {
            "P": list(self.parabolic.jumps),
            "w": [k + 1 for k in self.orientation.rep],
            "entropy": fraction_str(self.entropy),
            "projection": [fraction_str(v) for v in self.projection],
            "h_minus_phi": fraction_str(self.h_minus_phi),
        }


class LPSolution(_Model):
    phi: LinearFunctional
    value: Fraction
    scope: str
    pivots: int = 0
    rows: int = 0


class ClosedForms(_Model):
    """Closed-form values for h_inf and its refinements along P_k and B."""
    hinf: Fraction
    hinf_Pk: Dict[int, Fraction] = Field(default_factory=dict)
    m_k: Dict[int, int] = Field(default_factory=dict)
    b_bound: Fraction
    b_sharp: bool

    def to_json(self) -> Dict[str, Any]:
        return {
            "hinf": fraction_str(self.hinf),
            "hinf_Pk": {str(k): fraction_str(v) for k, v in sorted(self.hinf_Pk.items())},
            "m_k": {str(k): v for k, v in sorted(self.m_k.items())},
            "B_bound": fraction_str(self.b_bound),
            "B_sharp": self.b_sharp,
        }


class BoundReport(_Model):
    """
    Per-(P,[w]_P) table plus the aggregate bounds.
    hb_cusp is the max of h_minus_phi over rows with P != G.
    """
    flow: DiagonalFlow
    phi: LinearFunctional
    rows: List[BoundRow]
    hb_cusp: Fraction
    hb_P: Dict[Tuple[int, ...], Fraction]
    baseline_cusp: Fraction = Field(description="hb_cusp at phi = 0.")
    lp: Optional[LPSolution] = None
    closed_forms: Optional[ClosedForms] = None
    agreement: Optional[bool] = None
    options: Dict[str, Any] = Field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "flow": self.flow.to_json(),
            "phi": self.phi.to_json(),
            "rows": [r.to_json() for r in self.rows],
            "hb_cusp": fraction_str(self.hb_cusp),
            "hb_cusp_decimal": f"{float(self.hb_cusp):.12g}",
            "hb_P": {",".join(str(j) for j in k) or "G": fraction_str(v) for k, v in sorted(self.hb_P.items())},
            "baseline_cusp": fraction_str(self.baseline_cusp),
            "options": self.options,
        }
        if self.lp is not None:
            out["lp"] = {
                "scope": self.lp.scope,
                "value": fraction_str(self.lp.value),
                "value_decimal": f"{float(self.lp.value):.12g}",
                "phi_star": [fraction_str(c) for c in self.lp.phi.coeffs],
                "phi_star_decimal": [f"{float(c):.12g}" for c in self.lp.phi.coeffs],
                "pivots": self.lp.pivots,
                "rows": self.lp.rows,
            }
        if self.closed_forms is not None:
            out["closed_forms"] = self.closed_forms.to_json()
        if self.agreement is not None:
            out["agreement"] = self.agreement
        return out


# ---- Measures ----

class MeasureVector(_Model):
    """
    Masses mu(V_{P,[w]}) of the oriented regions plus residual un-oriented mass.
    """
    entries: List[Tuple[Orientation, float]] = Field(default_factory=list)
    residual: float = Field(default=0.0)

    @model_validator(mode="after")
    def _check(self) -> "MeasureVector":
        if self.residual < 0:
            raise ValueError(f"negative residual mass {self.residual}")
        total = self.residual
        for w, m in self.entries:
            if m < 0:
                raise ValueError(f"negative mass {m} on {w.label()}")
            total += m
        if abs(total - 1.0) > MASS_TOLERANCE:
            raise ValueError(f"masses sum to {total!r}, expected 1")
        return self

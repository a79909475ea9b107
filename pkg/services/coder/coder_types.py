# services/coder/coder_types.py

from collections import Counter
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from services.weyl.weyl_types import DiagonalFlow, Orientation, ParabolicSubgroup, fraction_str

CodeKey = Tuple[Tuple[int, ...], Optional[Tuple[int, ...]]]


class _Model(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)


# ---- Threshold scan ----

class TimeInterval(_Model):
    """[start, end) inside [-N, N]; an edge flagged clipped is the window boundary, not a crossing."""
    start: float
    end: float
    clipped_start: bool = False
    clipped_end: bool = False

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def clipped(self) -> bool:
        return self.clipped_start or self.clipped_end

    def contains(self, t: float, closed_end: bool = False) -> bool:
        return self.start <= t < self.end or (closed_end and t == self.end)

    def to_json(self) -> Dict[str, Any]:
        return {"start": self.start, "end": self.end, "clipped": [self.clipped_start, self.clipped_end]}


class ThresholdIntervals(_Model):
    """T_{L,l} for one level L = delta^(r^m): per l, the delta'-components on which eta_l dips below L."""
    m: int
    log_level: float
    intervals: Dict[int, List[TimeInterval]] = Field(default_factory=dict)

    def significant(self, t: float, N: float) -> Tuple[int, ...]:
        """E_L(t) = {l : t in some T_{L,l}}."""
        return tuple(sorted(l for l, ivs in self.intervals.items()
                            if any(iv.contains(t, closed_end=iv.end == N) for iv in ivs)))

    def to_json(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "log_level": self.log_level,
            "intervals": {str(l): [iv.to_json() for iv in ivs] for l, ivs in sorted(self.intervals.items())},
        }


class ThresholdScan(_Model):
    N: int
    log_delta_prime: float
    levels: List[ThresholdIntervals]
    components: Dict[int, List[TimeInterval]] = Field(default_factory=dict)
    samples: int = 0
    min_length_ratio: Optional[float] = None

    @property
    def breakpoints(self) -> List[float]:
        pts = {float(-self.N), float(self.N)}
        for ivs in self.components.values():
            for iv in ivs:
                pts.add(iv.start)
                pts.add(iv.end)
        return sorted(pts)


# ---- Partition ----

class PartitionPiece(_Model):
    start: float
    end: float
    deg: int = Field(ge=1)
    par: ParabolicSubgroup

    def to_json(self) -> Dict[str, Any]:
        return {"start": self.start, "end": self.end, "deg": self.deg, "Par": list(self.par.jumps)}


class RefinedPiece(_Model):
    start: float
    end: float
    parent: int
    par: ParabolicSubgroup
    weyl: Optional[Orientation] = None
    notes: List[str] = Field(default_factory=list)

    @property
    def key(self) -> CodeKey:
        return self.par.jumps, (self.weyl.rep if self.weyl else None)

    def to_json(self) -> Dict[str, Any]:
        return {
            "start": self.start,
            "end": self.end,
            "parent": self.parent,
            "Par": list(self.par.jumps),
            "w": [k + 1 for k in self.weyl.rep] if self.weyl else None,
        }


class CodedPartition(_Model):
    flow: DiagonalFlow
    N: int
    delta: float
    delta_prime: float
    r: float
    pieces: List[PartitionPiece]
    refined: List[RefinedPiece] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> "CodedPartition":
        for seq in (self.pieces, self.refined):
            if not seq:
                continue
            if seq[0].start != -self.N or seq[-1].end != self.N:
                raise ValueError(f"pieces cover [{seq[0].start}, {seq[-1].end}], expected [{-self.N}, {self.N}]")
            for a, b in zip(seq, seq[1:]):
                if a.end != b.start:
                    raise ValueError(f"pieces are not contiguous at {a.end} / {b.start}")
        return self

    def piece_at(self, t: float, refined: bool = True) -> int:
        seq = self.refined if refined else self.pieces
        for k, p in enumerate(seq):
            if p.start <= t < p.end:
                return k
        if t == self.N:
            return len(seq) - 1
        raise ValueError(f"time {t} outside [{-self.N}, {self.N}]")

    def to_json(self) -> Dict[str, Any]:
        return {
            "N": self.N,
            "params": {"delta": self.delta, "delta_prime": self.delta_prime, "r": self.r},
            "J": [p.to_json() for p in self.pieces],
            "J_prime": [p.to_json() for p in self.refined],
        }


# ---- Coding ----

class CodingRun(_Model):
    start: int
    end: int
    P: ParabolicSubgroup
    w: Optional[Orientation] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "start": self.start,
            "end": self.end,
            "P": list(self.P.jumps),
            "w": [k + 1 for k in self.w.rep] if self.w else None,
        }


class Coding(_Model):
    """C(n) = (Par(U_n), Weyl(U_n)) for n in -N..N; values[k] is C(k - N)."""
    flow: DiagonalFlow
    N: int
    values: List[Tuple[ParabolicSubgroup, Optional[Orientation]]]

    @model_validator(mode="after")
    def _check(self) -> "Coding":
        if len(self.values) != 2 * self.N + 1:
            raise ValueError(f"coding has {len(self.values)} values, expected {2 * self.N + 1}")
        return self

    def __call__(self, n: int) -> Tuple[ParabolicSubgroup, Optional[Orientation]]:
        if not -self.N <= n <= self.N:
            raise ValueError(f"n={n} outside [{-self.N}, {self.N}]")
        return self.values[n + self.N]

    def key(self, n: int) -> CodeKey:
        P, w = self(n)
        return P.jumps, (w.rep if w else None)

    def counts(self) -> Counter:
        """|C^{-1}(P, [w])| per key."""
        return Counter(self.key(n) for n in range(-self.N, self.N + 1))

    def runs(self) -> List[CodingRun]:
        out: List[CodingRun] = []
        for n in range(-self.N, self.N + 1):
            P, w = self(n)
            if out and self.key(n) == self.key(out[-1].end):
                out[-1].end = n
            else:
                out.append(CodingRun(start=n, end=n, P=P, w=w))
        return out

    def to_json(self) -> List[Dict[str, Any]]:
        return [r.to_json() for r in self.runs()]

    @classmethod
    def from_json(cls, rows: List[Dict[str, Any]], flow: DiagonalFlow) -> "Coding":
        if not rows:
            raise ValueError("empty coding")
        N = -int(rows[0]["start"])
        values: List[Tuple[ParabolicSubgroup, Optional[Orientation]]] = []
        for row in rows:
            P = ParabolicSubgroup(d=flow.d, jumps=row["P"])
            w = Orientation.from_permutation(flow, P, [k - 1 for k in row["w"]]) if row["w"] is not None else None
            values.extend([(P, w)] * (int(row["end"]) - int(row["start"]) + 1))
        return cls(flow=flow, N=N, values=values)


# ---- Reports ----

class BudgetReport(_Model):
    N: int
    pieces: int
    ratio_count: float = Field(description="(i) |J'| r^(d-1) |log delta| / N")
    ratio_err: float = Field(description="(ii) endpoint err sum / (r N)")
    ratio_height: float = Field(description="(iii) projected-height telescoping residual / (r N)")
    ratio_unoriented: float = Field(description="(iv) orientation-less count r^(d-1) |log delta| / N")
    projected_sum: List[float]
    height_drift: List[float]
    projected_sum_norm: float
    height_drift_norm: float
    continuous_ratio_height: float
    small_n: bool = False
    window_clipped: bool = False
    constants: Dict[str, float] = Field(default_factory=dict)
    passed: Dict[str, bool] = Field(default_factory=dict)

    @property
    def ratios(self) -> Dict[str, float]:
        return {
            "count": self.ratio_count,
            "err": self.ratio_err,
            "height": self.ratio_height,
            "unoriented": self.ratio_unoriented,
        }

    def to_json(self) -> Dict[str, Any]:
        return {
            "N": self.N,
            "pieces": self.pieces,
            "ratios": self.ratios,
            "continuous_ratio_height": self.continuous_ratio_height,
            "projected_sum": self.projected_sum,
            "height_drift": self.height_drift,
            "small_n": self.small_n,
            "window_clipped": self.window_clipped,
            "constants": self.constants,
            "passed": self.passed,
        }


class Occupancy(_Model):
    """Time spent per coding key; lengths are Lebesgue measure for J' and integer counts for C."""
    lengths: Dict[CodeKey, float] = Field(default_factory=dict)
    total: float = 0.0

    def to_json(self) -> List[Dict[str, Any]]:
        return [{"P": list(P), "w": [k + 1 for k in w] if w else None, "length": v}
                for (P, w), v in sorted(self.lengths.items(), key=lambda kv: (kv[0][0], kv[0][1] or ()))]


class RegionCount(_Model):
    P: ParabolicSubgroup
    Q: ParabolicSubgroup
    orientation: Optional[Orientation] = None
    count: int
    frequency: Fraction
    value: Optional[Fraction] = None


class EmpiricalBound(_Model):
    value: Fraction
    regions: List[RegionCount]
    unoriented_frequency: Fraction
    max_h_phi: Fraction
    error_terms: Dict[str, float] = Field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return {
            "value": fraction_str(self.value),
            "value_float": float(self.value),
            "unoriented_frequency": fraction_str(self.unoriented_frequency),
            "max_h_phi": fraction_str(self.max_h_phi),
            "regions": [
                {
                    "P": list(rc.P.jumps),
                    "Q": list(rc.Q.jumps),
                    "w": [k + 1 for k in rc.orientation.rep] if rc.orientation else None,
                    "count": rc.count,
                    "frequency": fraction_str(rc.frequency),
                    "value": fraction_str(rc.value) if rc.value is not None else None,
                }
                for rc in self.regions
            ],
            "error_terms": self.error_terms,
        }

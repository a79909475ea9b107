# services/lattice/lattice_types.py

import math
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import mpmath
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from services.lattice.numeric import (
    Matrix,
    Scalar,
    determinant,
    precision_context,
    to_mpf,
    working_bits,
)
from services.weyl.weyl_types import (
    DiagonalFlow,
    FrozenModel,
    Orientation,
    ParabolicSubgroup,
    fraction_str,
    to_fraction,
)

DEFAULT_PRECISION = 128
DEFAULT_MAX_VECTORS = 200000


# ---- Lattices ----

class Lattice(FrozenModel):
    """
    Unimodular lattice g Z^d stored by its basis columns.

    Exact lattices hold Fractions; generated witnesses with irrational entries hold
    mpf values at `precision` bits and set exact=False.
    """
    d: int = Field(ge=2)
    columns: Tuple[Tuple[Any, ...], ...] = Field(description="Basis vectors (columns of g).")
    exact: bool = True
    precision: int = Field(default=DEFAULT_PRECISION, ge=53)
    det_sign: int = 1

    @field_validator("columns", mode="before")
    @classmethod
    def _coerce_columns(cls, v: Any) -> Tuple[Tuple[Any, ...], ...]:
        out = []
        for col in v:
            out.append(tuple(c if isinstance(c, mpmath.mpf) else to_fraction(c) for c in col))
        return tuple(out)

    @model_validator(mode="after")
    def _check(self) -> "Lattice":
        if len(self.columns) != self.d or any(len(c) != self.d for c in self.columns):
            raise ValueError(f"basis must be {self.d}x{self.d}")
        has_real = any(isinstance(v, mpmath.mpf) for c in self.columns for v in c)
        if has_real and self.exact:
            object.__setattr__(self, "exact", False)
        if not self.exact:
            with mpmath.workprec(self.precision + 32):
                cols = tuple(tuple(to_mpf(v) for v in col) for col in self.columns)
            object.__setattr__(self, "columns", cols)
        with precision_context(0 if self.exact else self.precision):
            det = determinant(self.matrix())
            if det == 0:
                raise ValueError("basis columns are linearly dependent")
            if self.exact:
                if abs(det) != 1:
                    raise ValueError(f"basis determinant is {fraction_str(det)}, expected +-1")
            elif abs(abs(det) - 1) > mpmath.ldexp(1, -(self.precision - 20)):
                raise ValueError(f"basis determinant {mpmath.nstr(det, 20)} is not +-1 at working precision")
        object.__setattr__(self, "det_sign", 1 if det > 0 else -1)
        return self

    @classmethod
    def identity(cls, d: int) -> "Lattice":
        return cls(d=d, columns=[[int(i == j) for i in range(d)] for j in range(d)])

    @classmethod
    def diagonal(cls, entries: List[Any], exact: bool = True, precision: int = DEFAULT_PRECISION) -> "Lattice":
        d = len(entries)
        cols = [[entries[j] if i == j else Fraction(0) for i in range(d)] for j in range(d)]
        return cls(d=d, columns=cols, exact=exact, precision=precision)

    @classmethod
    def from_json(cls, obj: Dict[str, Any]) -> "Lattice":
        if obj.get("exact", True):
            return cls(d=int(obj["d"]), columns=obj["basis"])
        precision = int(obj.get("precision", DEFAULT_PRECISION))
        with mpmath.workprec(precision + 32):
            cols = [[mpmath.mpf(v) for v in col] for col in obj["basis"]]
        return cls(d=int(obj["d"]), columns=cols, exact=False, precision=precision)

    def matrix(self) -> Matrix:
        """Rows of g (entry [i][j] is coordinate i of basis column j)."""
        return [[self.columns[j][i] for j in range(self.d)] for i in range(self.d)]

    def gram(self) -> Matrix:
        cols = self.columns
        return [[sum((a * b for a, b in zip(cols[i], cols[j])), 0 * cols[i][0]) for j in range(self.d)]
                for i in range(self.d)]

    def vector(self, coeffs: List[int]) -> List[Scalar]:
        return [sum((c * self.columns[j][i] for j, c in enumerate(coeffs) if c), 0 * self.columns[0][i])
                for i in range(self.d)]

    def to_json(self) -> Dict[str, Any]:
        if self.exact:
            basis = [[fraction_str(v) for v in col] for col in self.columns]
        else:
            digits = int(self.precision * 0.30103) + 2
            basis = [[mpmath.nstr(v, digits) for v in col] for col in self.columns]
            return {"d": self.d, "basis": basis, "exact": False, "precision": self.precision}
        return {"d": self.d, "basis": basis, "exact": True}


class LatticeSnapshot(FrozenModel):
    """a_t x: the base lattice pushed by the flow for time t; geometry is read off its Gram matrix."""
    base: Lattice
    flow: DiagonalFlow
    t: float = 0.0
    precision: int = Field(default=DEFAULT_PRECISION, ge=53)

    @model_validator(mode="after")
    def _check(self) -> "LatticeSnapshot":
        if self.base.d != self.flow.d:
            raise ValueError(f"lattice has d={self.base.d}, flow has d={self.flow.d}")
        return self

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def bits(self) -> int:
        if self.t == 0 and self.base.exact:
            return 0
        bits = working_bits(self.precision, float(self.flow.spread), self.t)
        return bits if self.base.exact else max(bits, self.base.precision + 32)

    @cached_property
    def _gram(self) -> Matrix:
        if self.bits == 0:
            return self.base.gram()
        with mpmath.workprec(self.bits):
            weights = [mpmath.exp(2 * to_mpf(a) * mpmath.mpf(self.t)) for a in self.flow.alpha]
            cols = [[to_mpf(v) for v in col] for col in self.base.columns]
            d = self.d
            return [[mpmath.fsum(weights[k] * cols[i][k] * cols[j][k] for k in range(d)) for j in range(d)]
                    for i in range(d)]

    def gram(self) -> Matrix:
        return self._gram

    def real_columns(self) -> Matrix:
        """Columns of a_t g at working precision."""
        if self.bits == 0:
            return [list(c) for c in self.base.columns]
        with mpmath.workprec(self.bits):
            scale = [mpmath.exp(to_mpf(a) * mpmath.mpf(self.t)) for a in self.flow.alpha]
            return [[scale[i] * to_mpf(col[i]) for i in range(self.d)] for col in self.base.columns]


def as_snapshot(x: Any, flow: Optional[DiagonalFlow] = None, precision: int = DEFAULT_PRECISION) -> "LatticeSnapshot":
    if isinstance(x, LatticeSnapshot):
        return x
    if flow is None:
        flow = DiagonalFlow(d=x.d, alpha=[0] * x.d)
    return LatticeSnapshot(base=x, flow=flow, t=0.0, precision=precision)


def geometry_of(x: Any) -> Tuple[Matrix, int]:
    """(Gram matrix, working bits) for a Lattice or LatticeSnapshot; bits = 0 means exact."""
    if isinstance(x, LatticeSnapshot):
        return x.gram(), x.bits
    if isinstance(x, Lattice):
        if x.exact:
            return x.gram(), 0
        bits = x.precision + 32
        with mpmath.workprec(bits):
            return x.gram(), bits
    raise TypeError(f"expected Lattice or LatticeSnapshot, got {type(x).__name__}")


def base_lattice(x: Any) -> Lattice:
    return x.base if isinstance(x, LatticeSnapshot) else x


def time_of(x: Any) -> float:
    return x.t if isinstance(x, LatticeSnapshot) else 0.0


# ---- Subspaces ----

class RationalSubspace(FrozenModel):
    """
    x-rational subspace V given by integer coefficient vectors (w.r.t. the lattice basis)
    forming a Z-basis of x ∩ V. Coefficients do not change under the flow.
    """
    lattice: Lattice
    generators: Tuple[Tuple[int, ...], ...]

    @field_validator("generators", mode="before")
    @classmethod
    def _coerce(cls, v: Any) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(int(c) for c in g) for g in v)

    @model_validator(mode="after")
    def _check(self) -> "RationalSubspace":
        if not self.generators:
            raise ValueError("subspace needs at least one generator")
        if any(len(g) != self.lattice.d for g in self.generators):
            raise ValueError(f"generators must have length {self.lattice.d}")
        return self

    @property
    def d(self) -> int:
        return self.lattice.d

    @property
    def dim(self) -> int:
        return len(self.generators)

    def real_vectors(self) -> Matrix:
        return [self.lattice.vector(list(g)) for g in self.generators]

    def to_json(self) -> Dict[str, Any]:
        return {"dim": self.dim, "generators": [list(g) for g in self.generators]}


# ---- Tolerances ----

class ToleranceConfig(BaseModel):
    """
    Region thresholds and numeric tolerances.

    strict=False relaxes the ordering to delta <= delta_prime < eta0 and drops
    the delta_prime > delta^(1/2) requirement; it exists for worked examples only.
    """
    model_config = ConfigDict(frozen=True)

    eta0: float = Field(default=0.25, gt=0, lt=1)
    eps0: Optional[float] = Field(default=None, gt=0, lt=1)
    delta: float = Field(gt=0, lt=1)
    delta_prime: float = Field(gt=0, lt=1)
    r: float = Field(default=0.9, gt=0, le=1)
    root_tol: float = Field(default=1e-9, gt=0)
    precision: int = Field(default=DEFAULT_PRECISION, ge=53)
    max_vectors: int = Field(default=DEFAULT_MAX_VECTORS, ge=1)
    strict: bool = True

    @model_validator(mode="after")
    def _check(self) -> "ToleranceConfig":
        if self.strict:
            if not self.delta < self.delta_prime < self.eta0:
                raise ValueError(
                    f"need 0 < delta < delta_prime < eta0 < 1, got {self.delta}, {self.delta_prime}, {self.eta0}"
                )
            if not self.delta_prime > math.sqrt(self.delta):
                raise ValueError(f"need delta_prime > delta^(1/2) = {math.sqrt(self.delta):.6g}, got {self.delta_prime}")
            if self.r >= 1:
                raise ValueError(f"r must be < 1, got {self.r}")
        elif not self.delta <= self.delta_prime < self.eta0:
            raise ValueError(f"need delta <= delta_prime < eta0, got {self.delta}, {self.delta_prime}, {self.eta0}")
        return self

    @classmethod
    def schedule(cls, delta: float, d: int, **overrides: Any) -> "ToleranceConfig":
        """delta' = exp(-|log delta|^(1/2)), r = (|log delta'| / |log delta|)^(1/(d+2))."""
        log_d = abs(math.log(delta))
        log_dp = math.sqrt(log_d)
        values: Dict[str, Any] = {
            "delta": delta,
            "delta_prime": math.exp(-log_dp),
            "r": (log_dp / log_d) ** (1.0 / (d + 2)),
        }
        values.update(overrides)
        return cls(**values)

    @property
    def log_delta(self) -> float:
        return math.log(self.delta)

    @property
    def log_delta_prime(self) -> float:
        return math.log(self.delta_prime)

    def r_interval(self, d: int) -> Tuple[float, float]:
        return (self.log_delta_prime / self.log_delta) ** (1.0 / (d + 1)), 1.0

    def check_dimension(self, d: int) -> None:
        """Admissibility of r for dimension d; raises ValueError."""
        if not self.strict:
            return
        lo, _ = self.r_interval(d)
        if not lo < self.r < 1:
            raise ValueError(f"r={self.r} outside ({lo:.6g}, 1) for d={d}")

    def log_levels(self, d: int) -> List[float]:
        """log(delta^(r^m)) for m = 0..d."""
        return [self.log_delta * self.r ** m for m in range(d + 1)]


# ---- Results ----

class MinimaResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    minima_sq: List[Any] = Field(description="lambda_i^2, exact Fractions for exact lattices.")
    vectors: List[Tuple[int, ...]] = Field(description="Coefficient vectors attaining the minima.")
    reduced: List[List[int]] = Field(default_factory=list, description="LLL basis (columns), reused as a warm start.")
    bits: int = 0

    @property
    def d(self) -> int:
        return len(self.minima_sq)

    @property
    def minima(self) -> List[Any]:
        with precision_context(self.bits or 64):
            return [mpmath.sqrt(to_mpf(v)) for v in self.minima_sq]

    def log_minima(self) -> List[float]:
        with precision_context(self.bits or 64):
            return [float(mpmath.log(to_mpf(v)) / 2) for v in self.minima_sq]

    def eta(self, i: int) -> Any:
        """eta_i = lambda_i / lambda_{i+1}, 1-based i."""
        if not 1 <= i <= self.d - 1:
            raise ValueError(f"eta index {i} outside 1..{self.d - 1}")
        with precision_context(self.bits or 64):
            return mpmath.sqrt(to_mpf(self.minima_sq[i - 1] / self.minima_sq[i]))

    def log_eta(self) -> List[float]:
        logs = self.log_minima()
        return [logs[i] - logs[i + 1] for i in range(self.d - 1)]

    def eta_below(self, i: int, level: float) -> bool:
        """eta_i < level; exact for exact minima, in log scale otherwise."""
        if all(isinstance(v, Fraction) for v in self.minima_sq):
            return self.minima_sq[i - 1] / self.minima_sq[i] < Fraction(level) ** 2
        return self.log_eta()[i - 1] < math.log(level)


class Classification(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    t: float = 0.0
    P: ParabolicSubgroup
    Q: ParabolicSubgroup
    orientation: Optional[Orientation] = None
    minima: List[float]
    eta: List[float]
    log_eta: List[float]
    height: List[float]
    subspaces: Dict[int, RationalSubspace] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)

    @property
    def region_key(self) -> Tuple[Tuple[int, ...], Tuple[int, ...], Optional[Tuple[int, ...]]]:
        return self.P.jumps, self.Q.jumps, (self.orientation.rep if self.orientation else None)

    @property
    def compact(self) -> bool:
        return self.P.is_G and self.Q.is_G

    def to_json(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "P": list(self.P.jumps),
            "Q": list(self.Q.jumps),
            "orientation": self.orientation.to_json() if self.orientation else None,
            "eta": [float(f"{v:.12g}") for v in self.eta],
            "minima": [float(f"{v:.12g}") for v in self.minima],
            "height": [float(f"{v:.12g}") for v in self.height],
            "subspaces": {str(l): V.to_json() for l, V in sorted(self.subspaces.items())},
        }


class FlagBasis(BaseModel):
    """O w u with O in K ∩ C_G(a), w a permutation matrix and u lower block unipotent."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    parabolic: ParabolicSubgroup
    orientation: Orientation
    O: List[List[Any]]
    w: List[List[int]]
    u: List[List[Any]]
    columns: List[List[Any]]

    def to_json(self) -> Dict[str, Any]:
        as_float = lambda M: [[float(v) for v in row] for row in M]  # noqa: E731
        return {
            "P": list(self.parabolic.jumps),
            "w": [k + 1 for k in self.orientation.rep],
            "O": as_float(self.O),
            "u": as_float(self.u),
            "columns": as_float(self.columns),
        }

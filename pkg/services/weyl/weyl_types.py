# services/weyl/weyl_types.py

from fractions import Fraction
from math import sqrt
from typing import Any, Dict, Iterable, List, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ---- Rational coercion ----

def to_fraction(value: Any) -> Fraction:
    """
    Accepts Fraction, int, "p/q" / "p" strings and finite floats (converted exactly).
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if not text:
            raise ValueError("empty rational")
        return Fraction(text)
    raise ValueError(f"not a rational: {value!r}")


def fraction_str(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}" if value.denominator != 1 else str(value.numerator)


class FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


# ---- Flow ----

class DiagonalFlow(FrozenModel):
    """
    Generator alpha = diag(alpha_1..alpha_d) of the flow a_t = exp(t alpha); trace zero, exact.
    """
    d: int = Field(ge=2, description="Ambient dimension.")
    alpha: Tuple[Fraction, ...] = Field(description="Diagonal exponents, natural-log units per unit time.")

    @field_validator("alpha", mode="before")
    @classmethod
    def _coerce_alpha(cls, v: Any) -> Tuple[Fraction, ...]:
        if isinstance(v, str):
            v = [p for p in v.split(",")]
        return tuple(to_fraction(a) for a in v)

    @model_validator(mode="after")
    def _check(self) -> "DiagonalFlow":
        if len(self.alpha) != self.d:
            raise ValueError(f"alpha has {len(self.alpha)} entries, expected d={self.d}")
        if sum(self.alpha) != 0:
            raise ValueError(f"alpha must have trace zero, got sum {fraction_str(sum(self.alpha))}")
        return self

    @classmethod
    def of(cls, alpha: Iterable[Any]) -> "DiagonalFlow":
        values = tuple(to_fraction(a) for a in alpha)
        return cls(d=len(values), alpha=values)

    @property
    def spread(self) -> Fraction:
        return max(self.alpha) - min(self.alpha)

    @property
    def max_abs(self) -> Fraction:
        return max(abs(a) for a in self.alpha)

    @property
    def positive_part(self) -> Fraction:
        return sum((a for a in self.alpha if a > 0), Fraction(0))

    def scaled(self, c: Fraction) -> "DiagonalFlow":
        return DiagonalFlow(d=self.d, alpha=tuple(c * a for a in self.alpha))

    def permuted(self, perm: Sequence[int]) -> "DiagonalFlow":
        return DiagonalFlow(d=self.d, alpha=tuple(self.alpha[p] for p in perm))

    def to_json(self) -> Dict[str, Any]:
        return {"d": self.d, "alpha": [fraction_str(a) for a in self.alpha]}


# ---- Parabolics ----

class ParabolicSubgroup(FrozenModel):
    """
    Standard parabolic P encoded by its jump set eta(P) of partial block sums.
    jumps = () is G, jumps = (1..d-1) is the Borel subgroup B.
    """
    d: int = Field(ge=2)
    jumps: Tuple[int, ...] = Field(default=())

    @field_validator("jumps", mode="before")
    @classmethod
    def _coerce_jumps(cls, v: Any) -> Tuple[int, ...]:
        return tuple(sorted(int(j) for j in v))

    @model_validator(mode="after")
    def _check(self) -> "ParabolicSubgroup":
        if len(set(self.jumps)) != len(self.jumps):
            raise ValueError(f"repeated jumps {self.jumps}")
        for j in self.jumps:
            if not 1 <= j <= self.d - 1:
                raise ValueError(f"jump {j} outside 1..{self.d - 1}")
        return self

    @classmethod
    def G(cls, d: int) -> "ParabolicSubgroup":
        return cls(d=d, jumps=())

    @classmethod
    def B(cls, d: int) -> "ParabolicSubgroup":
        return cls(d=d, jumps=tuple(range(1, d)))

    @property
    def is_G(self) -> bool:
        return not self.jumps

    @property
    def is_B(self) -> bool:
        return len(self.jumps) == self.d - 1

    @property
    def bounds(self) -> List[int]:
        return [0, *self.jumps, self.d]

    @property
    def block_sizes(self) -> List[int]:
        b = self.bounds
        return [b[k + 1] - b[k] for k in range(len(b) - 1)]

    @property
    def blocks(self) -> List[range]:
        b = self.bounds
        return [range(b[k], b[k + 1]) for k in range(len(b) - 1)]

    @property
    def block_of(self) -> List[int]:
        out: List[int] = []
        for k, size in enumerate(self.block_sizes):
            out.extend([k] * size)
        return out

    @property
    def name(self) -> str:
        if self.is_G:
            return "G"
        if self.is_B:
            return "B"
        return "P{" + ",".join(str(j) for j in self.jumps) + "}"

    def __str__(self) -> str:
        return self.name


# ---- Orientations ----

Multiset = Tuple[Fraction, ...]


def as_multiset(values: Iterable[Fraction]) -> Multiset:
    return tuple(sorted(values))


class Orientation(FrozenModel):
    """
    Double coset [w]_P in Stab_W(a) \\ W / W(T,P).

    rep is 0-based internally (rep[i] is the eigen-index placed at position i); JSON is 1-based.
    multiset_flag[k] is the exponent multiset {alpha_rep(1..l)} for the k-th jump l of P.
    """
    parabolic: ParabolicSubgroup
    rep: Tuple[int, ...]
    multiset_flag: Tuple[Multiset, ...]

    @model_validator(mode="after")
    def _check(self) -> "Orientation":
        if sorted(self.rep) != list(range(self.parabolic.d)):
            raise ValueError(f"rep {self.rep} is not a permutation of 0..{self.parabolic.d - 1}")
        if len(self.multiset_flag) != len(self.parabolic.jumps):
            raise ValueError("multiset_flag length differs from the jump count")
        return self

    @classmethod
    def from_permutation(cls, flow: DiagonalFlow, P: ParabolicSubgroup, perm: Sequence[int]) -> "Orientation":
        if flow.d != P.d or len(perm) != P.d:
            raise ValueError(f"dimension mismatch: flow d={flow.d}, P d={P.d}, perm length {len(perm)}")
        flag = tuple(as_multiset(flow.alpha[perm[i]] for i in range(l)) for l in P.jumps)
        return cls(parabolic=P, rep=_canonical_rep(flow, P, flag), multiset_flag=flag)

    @classmethod
    def from_multiset_flag(cls, flow: DiagonalFlow, P: ParabolicSubgroup,
                           flag: Sequence[Sequence[Fraction]]) -> "Orientation":
        flag_t = tuple(as_multiset(E) for E in flag)
        if len(flag_t) != len(P.jumps):
            raise ValueError(f"flag has {len(flag_t)} entries, P has {len(P.jumps)} jumps")
        for l, E in zip(P.jumps, flag_t):
            if len(E) != l:
                raise ValueError(f"multiset {E} does not have size {l}")
        return cls(parabolic=P, rep=_canonical_rep(flow, P, flag_t), multiset_flag=flag_t)

    @classmethod
    def trivial(cls, flow: DiagonalFlow) -> "Orientation":
        return cls.from_permutation(flow, ParabolicSubgroup.G(flow.d), list(range(flow.d)))

    def permuted_alpha(self, flow: DiagonalFlow) -> Tuple[Fraction, ...]:
        return tuple(flow.alpha[k] for k in self.rep)

    def to_json(self) -> Dict[str, Any]:
        return {"jumps": list(self.parabolic.jumps), "rep": [k + 1 for k in self.rep]}

    def label(self) -> str:
        return f"{self.parabolic.name}[" + ",".join(str(k + 1) for k in self.rep) + "]"


def _canonical_rep(flow: DiagonalFlow, P: ParabolicSubgroup,
                   flag: Tuple[Multiset, ...]) -> Tuple[int, ...]:
    # per-block multisets from consecutive flag differences
    needs: List[List[Fraction]] = []
    previous: List[Fraction] = []
    for E in list(flag) + [as_multiset(flow.alpha)]:
        remaining = list(E)
        for v in previous:
            try:
                remaining.remove(v)
            except ValueError:
                raise ValueError(f"multiset flag {flag} is not increasing under inclusion") from None
        needs.append(remaining)
        previous = list(E)

    used = [False] * flow.d
    rep: List[int] = []
    for block_need in needs:
        pending = list(block_need)
        for _ in range(len(block_need)):
            for k in range(flow.d):
                if not used[k] and flow.alpha[k] in pending:
                    used[k] = True
                    pending.remove(flow.alpha[k])
                    rep.append(k)
                    break
            else:
                raise ValueError(f"multiset flag {flag} is not drawable from alpha")
    return tuple(rep)


# ---- Linear functionals ----

class LinearFunctional(FrozenModel):
    """
    phi in Lie(A)^*, phi(H) = sum c_i H_ii on trace-zero diagonals.
    coeffs are canonicalized to sum zero.
    """
    d: int = Field(ge=2)
    coeffs: Tuple[Fraction, ...]

    @field_validator("coeffs", mode="before")
    @classmethod
    def _coerce(cls, v: Any) -> Tuple[Fraction, ...]:
        if isinstance(v, str):
            v = v.split(",")
        values = [to_fraction(c) for c in v]
        if not values:
            return ()
        mean = sum(values, Fraction(0)) / len(values)
        return tuple(c - mean for c in values)

    @model_validator(mode="after")
    def _check(self) -> "LinearFunctional":
        if len(self.coeffs) != self.d:
            raise ValueError(f"phi has {len(self.coeffs)} coefficients, expected d={self.d}")
        return self

    @classmethod
    def of(cls, coeffs: Iterable[Any]) -> "LinearFunctional":
        values = [to_fraction(c) for c in coeffs]
        return cls(d=len(values), coeffs=values)

    @classmethod
    def zero(cls, d: int) -> "LinearFunctional":
        return cls(d=d, coeffs=[0] * d)

    @classmethod
    def from_roots(cls, d: int, weights: Dict[int, Any]) -> "LinearFunctional":
        """sum_i weights[i] * psi_i with psi_i(H) = H_ii - H_{i+1,i+1}, i in 1..d-1."""
        coeffs = [Fraction(0)] * d
        for i, c in weights.items():
            if not 1 <= i <= d - 1:
                raise ValueError(f"simple root index {i} outside 1..{d - 1}")
            c = to_fraction(c)
            coeffs[i - 1] += c
            coeffs[i] -= c
        return cls(d=d, coeffs=coeffs)

    def __call__(self, vector: Sequence[Fraction]) -> Fraction:
        if len(vector) != self.d:
            raise ValueError(f"vector length {len(vector)} differs from d={self.d}")
        return sum((c * v for c, v in zip(self.coeffs, vector)), Fraction(0))

    def norm(self) -> float:
        return sqrt(float(sum(c * c for c in self.coeffs)))

    def to_json(self) -> Dict[str, Any]:
        return {"d": self.d, "coeffs": [fraction_str(c) for c in self.coeffs]}

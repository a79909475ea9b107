# services/lattice/numeric.py

"""
Scalar plumbing shared by the exact (Fraction) and high-precision (mpmath) paths.

Lattice routines only use + - * / and comparisons on their scalars, so the
same code runs on Fraction Gram matrices at t = 0 and on mpf Gram matrices for
evolved snapshots. Precision is a context (mpmath.workprec), entered by the
callers that build mpf data.
"""

import math
from contextlib import nullcontext
from fractions import Fraction
from typing import Callable, ContextManager, List, Sequence, Tuple, Union

import mpmath

Scalar = Union[Fraction, "mpmath.mpf"]
Matrix = List[List[Scalar]]

LOG2_E = 1.4426950408889634


def is_exact(value: Scalar) -> bool:
    return isinstance(value, (Fraction, int))


def matrix_is_exact(M: Sequence[Sequence[Scalar]]) -> bool:
    return all(is_exact(v) for row in M for v in row)


def round_nearest(value: Scalar) -> int:
    if isinstance(value, (Fraction, int)):
        return math.floor(Fraction(value) + Fraction(1, 2))
    return int(mpmath.floor(value + mpmath.mpf(0.5)))


def to_mpf(value: Scalar) -> "mpmath.mpf":
    if isinstance(value, Fraction):
        return mpmath.mpf(value.numerator) / value.denominator
    return mpmath.mpf(value)


def sqrt(value: Scalar) -> "mpmath.mpf":
    return mpmath.sqrt(to_mpf(value))


def log(value: Scalar) -> "mpmath.mpf":
    return mpmath.log(to_mpf(value))


def working_bits(precision: int, spread: float, t: float) -> int:
    """Bits needed to keep `precision` bits after exp(2 t spread) of dynamic range."""
    return int(precision + math.ceil(2.0 * spread * abs(t) * LOG2_E) + 32)


def precision_context(bits: int) -> ContextManager:
    return mpmath.workprec(bits) if bits else nullcontext()


def envelope(bits: int) -> Scalar:
    """Relative error envelope used to pad radii and certify comparisons."""
    if not bits:
        return Fraction(0)
    return mpmath.ldexp(mpmath.mpf(1), -(bits - 16))


# ---- exact / generic linear algebra ----

def determinant(M: Sequence[Sequence[Scalar]]) -> Scalar:
    """Gaussian elimination with largest pivots; exact for int/Fraction input."""
    n = len(M)
    if n == 0:
        return Fraction(1)
    exact = matrix_is_exact(M)
    A = [[Fraction(v) if exact else v for v in row] for row in M]
    det: Scalar = Fraction(1) if exact else mpmath.mpf(1)
    for col in range(n):
        piv = None
        best = None
        for r in range(col, n):
            if A[r][col] != 0 and (best is None or abs(A[r][col]) > best):
                piv, best = r, abs(A[r][col])
        if piv is None:
            return det * 0
        if piv != col:
            A[col], A[piv] = A[piv], A[col]
            det = -det
        p = A[col][col]
        det = det * p
        for r in range(col + 1, n):
            if A[r][col] != 0:
                f = A[r][col] / p
                A[r] = [a - f * b for a, b in zip(A[r], A[col])]
    return det


def mat_mul(A: Sequence[Sequence[Scalar]], B: Sequence[Sequence[Scalar]]) -> Matrix:
    cols = list(zip(*B))
    return [[sum((a * b for a, b in zip(row, col)), 0 * row[0]) for col in cols] for row in A]


def transpose(A: Sequence[Sequence[Scalar]]) -> Matrix:
    return [list(r) for r in zip(*A)]


def congruence(G: Sequence[Sequence[Scalar]], U: Sequence[Sequence[int]]) -> Matrix:
    """U^T G U for an integer change of basis U (columns = new basis vectors)."""
    return mat_mul(transpose(U), mat_mul(G, U))


def quad_form(G: Sequence[Sequence[Scalar]], x: Sequence[int]) -> Scalar:
    n = len(x)
    total = 0 * G[0][0]
    for i in range(n):
        if x[i] == 0:
            continue
        row = G[i]
        total += x[i] * sum((row[j] * x[j] for j in range(n) if x[j] != 0), 0 * row[0])
    return total


def integer_inverse(U: Sequence[Sequence[int]]) -> List[List[int]]:
    """Inverse of a unimodular integer matrix."""
    n = len(U)
    aug = [[Fraction(U[i][j]) for j in range(n)] + [Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    out = [[aug[i][n + j] for j in range(n)] for i in range(n)]
    if any(v.denominator != 1 for row in out for v in row):
        raise ValueError("matrix is not unimodular")
    return [[int(v) for v in row] for row in out]


# ---- crossings ----

def bracket_crossing(pred: Callable[[float], bool], lo: float, hi: float, tol: float) -> Tuple[float, float]:
    """
    Shrinks [lo, hi] with pred(lo) != pred(hi) to width <= tol by bisection.

    Integers met inside the bracket are evaluated directly and the bracket is
    moved past them, so no integer lies strictly inside the returned bracket.
    """
    p_lo = pred(lo)
    if p_lo == pred(hi):
        raise ValueError(f"no sign change on [{lo}, {hi}]")
    while True:
        inner = math.floor(lo) + 1
        if inner < hi:
            if pred(float(inner)) == p_lo:
                lo = float(inner)
            else:
                hi = float(inner)
            continue
        if hi - lo <= tol:
            return lo, hi
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return lo, hi
        if pred(mid) == p_lo:
            lo = mid
        else:
            hi = mid

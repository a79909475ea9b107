# services/bounds/simplex.py

"""
Exact two-phase simplex over Fractions with Bland's rule.

Solves   maximize c.y   subject to   A y = b,  y >= 0,  b >= 0
and returns the primal optimum together with simplex multipliers pi
(pi A >= c at optimum, pi.b = optimum). Rows found redundant in phase 1
get multiplier 0.
"""

import logging
from fractions import Fraction
from typing import List, Optional, Sequence

from pydantic import BaseModel, ConfigDict

from services.errors import ComputationError, UnboundedProgramError

# -------------------- Logging --------------------
logger = logging.getLogger("bounds.simplex")
if not logger.handlers:
    _h = logging.StreamHandler()
    _h.setFormatter(logging.Formatter("[%(asctime)s] %(levelname)s: %(message)s"))
    logger.addHandler(_h)
logger.setLevel(logging.INFO)

Matrix = List[List[Fraction]]


class SimplexResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    value: Fraction
    y: List[Fraction]
    duals: List[Fraction]
    pivots: int
    redundant_rows: List[int]


def _pivot(T: Matrix, basis: List[int], row: int, col: int) -> None:
    pivot = T[row][col]
    T[row] = [v / pivot for v in T[row]]
    for i in range(len(T)):
        if i != row and T[i][col] != 0:
            factor = T[i][col]
            T[i] = [a - factor * b for a, b in zip(T[i], T[row])]
    basis[row] = col


def _iterate(T: Matrix, basis: List[int], cost: Sequence[Fraction], allowed: int, max_pivots: int) -> int:
    """Runs Bland-rule pivots until optimal; allowed = number of columns that may enter."""
    rhs = len(T[0]) - 1
    pivots = 0
    while True:
        entering = None
        for j in range(allowed):
            if j in basis:
                continue
            reduced = cost[j] - sum((cost[basis[i]] * T[i][j] for i in range(len(T))), Fraction(0))
            if reduced > 0:
                entering = j
                break
        if entering is None:
            return pivots

        leaving = None
        best_ratio: Optional[Fraction] = None
        for i in range(len(T)):
            if T[i][entering] > 0:
                ratio = T[i][rhs] / T[i][entering]
                if best_ratio is None or ratio < best_ratio or (ratio == best_ratio and basis[i] < basis[leaving]):
                    best_ratio, leaving = ratio, i
        if leaving is None:
            raise UnboundedProgramError(f"objective unbounded along column {entering}")

        _pivot(T, basis, leaving, entering)
        pivots += 1
        if pivots > max_pivots:
            raise ComputationError(f"simplex exceeded {max_pivots} pivots")


def _solve_square(M: Matrix, rhs: List[Fraction]) -> List[Fraction]:
    n = len(M)
    aug = [list(M[i]) + [rhs[i]] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise ComputationError("singular basis while recovering multipliers")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [aug[i][n] for i in range(n)]


def _independent_rows(M: Matrix) -> List[int]:
    """Indices of a maximal set of linearly independent rows, greedy in order."""
    echelon: List[List[Fraction]] = []
    pivots: List[int] = []
    chosen: List[int] = []
    for idx, row in enumerate(M):
        r = list(row)
        for e, p in zip(echelon, pivots):
            if r[p] != 0:
                f = r[p] / e[p]
                r = [a - f * b for a, b in zip(r, e)]
        lead = next((j for j, v in enumerate(r) if v != 0), None)
        if lead is not None:
            echelon.append(r)
            pivots.append(lead)
            chosen.append(idx)
    return chosen


def solve_equality_lp(A: Sequence[Sequence[Fraction]], b: Sequence[Fraction],
                      c: Sequence[Fraction], max_pivots: int = 100000) -> SimplexResult:
    m, n = len(A), len(c)
    if any(len(row) != n for row in A) or len(b) != m:
        raise ComputationError("inconsistent LP dimensions")
    if any(v < 0 for v in b):
        raise ComputationError("right-hand side must be nonnegative")

    T: Matrix = []
    for i in range(m):
        art = [Fraction(0)] * m
        art[i] = Fraction(1)
        T.append([Fraction(v) for v in A[i]] + art + [Fraction(b[i])])
    basis = list(range(n, n + m))

    # phase 1: maximize -sum(artificials)
    phase1_cost = [Fraction(0)] * n + [Fraction(-1)] * m
    pivots = _iterate(T, basis, phase1_cost, n + m, max_pivots)
    infeasibility = sum((T[i][-1] for i in range(m) if basis[i] >= n), Fraction(0))
    if infeasibility > 0:
        raise UnboundedProgramError("dual program infeasible: primal objective is unbounded below")

    # drive zero-level artificials out of the basis, dropping redundant rows
    redundant: List[int] = []
    for i in range(m):
        if basis[i] < n:
            continue
        col = next((j for j in range(n) if T[i][j] != 0 and j not in basis), None)
        if col is None:
            redundant.append(i)
        else:
            _pivot(T, basis, i, col)
            pivots += 1
    if redundant:
        kept = [i for i in range(m) if i not in redundant]
        T = [T[i] for i in kept]
        basis = [basis[i] for i in kept]
        logger.info(f"dropped {len(redundant)} redundant LP rows")

    cost = [Fraction(v) for v in c] + [Fraction(0)] * m
    pivots += _iterate(T, basis, cost, n, max_pivots)

    y = [Fraction(0)] * n
    for i, j in enumerate(basis):
        if j < n:
            y[j] = T[i][-1]
    value = sum((c[j] * y[j] for j in range(n)), Fraction(0))

    # multipliers: B^T pi = c_B on a row subset that is independent on the basis columns
    rows = _independent_rows([[Fraction(A[i][j]) for j in basis] for i in range(m)])
    B_T = [[Fraction(A[i][j]) for i in rows] for j in basis]
    pi_rows = _solve_square(B_T, [cost[j] for j in basis])
    duals = [Fraction(0)] * m
    for r, i in enumerate(rows):
        duals[i] = pi_rows[r]

    logger.debug(f"simplex finished: value={value}, pivots={pivots}")
    return SimplexResult(value=value, y=y, duals=duals, pivots=pivots, redundant_rows=redundant)
